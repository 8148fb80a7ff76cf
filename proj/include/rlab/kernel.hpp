#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "rlab/net.hpp"

namespace rlab::kernel {

enum class Centering { kNone, kMeanCentered, kScalarShifted };

std::string to_string(Centering c);

// Train-by-clean similarity block.  Rows and cols may reference different
// example sets; `centering` records which transform the values carry.
struct GramMatrix {
  Eigen::MatrixXd values;
  std::vector<int> row_ids;
  std::vector<int> col_ids;
  Centering centering = Centering::kNone;
  double shift = 0.0;  // mu for kScalarShifted
  std::string snapshot_id;

  bool square() const { return values.rows() == values.cols(); }
};

// Tangent-feature Gram J(theta; X_rows)^T J(theta; X_cols).  Row features
// are computed in blocks so n up to a few thousand stays in memory.
GramMatrix ntk_gram(const net::NetParams& params, const Eigen::MatrixXd& X_rows,
                    const Eigen::MatrixXd& X_cols);

// Plain feature Gram; rows of F are per-example feature vectors.
GramMatrix gram_from_features(const Eigen::MatrixXd& F_rows, const Eigen::MatrixXd& F_cols);

// Mean-centered Gram <f_i - mu, f_j - mu> with mu the column-set feature
// mean; one matrix product after centering.
GramMatrix mean_centered_gram(const Eigen::MatrixXd& F_rows, const Eigen::MatrixXd& F_cols);

struct CenteringSpec {
  Centering mode = Centering::kMeanCentered;
  std::optional<double> mu;             // kScalarShifted: shift; estimated when absent
  const GramMatrix* col_gram = nullptr; // kMeanCentered: col x col Gram of the same snapshot
};

// Re-centers an uncentered Gram.  Mean-centering from Gram values alone
// needs the col-by-col block:
//   Kc(i,j) = K(i,j) - rowmean_i(K) - colmean_j(Kvv) + grandmean(Kvv).
GramMatrix center_gram(const GramMatrix& g, const CenteringSpec& spec);

// Midpoint of within-class and cross-class entry means; the scalar-shift
// estimator (the shift constant itself is only postulated to exist).
double estimate_shift(const GramMatrix& g, const std::vector<int>& labels_rows,
                      const std::vector<int>& labels_cols);

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::int64_t within = 0;
  std::int64_t cross = 0;
};

struct KernelStats {
  // Spectral stats of square Grams only (absent otherwise).
  std::optional<double> lambda_min;
  std::optional<double> lambda_max;
  // Sign-separation margin against the clean-label pattern (same class
  // strictly positive, cross class strictly negative); 0 if any pair
  // violates the pattern.
  double gamma_hat = 0.0;
  double sign_agreement = 0.0;  // fraction of pairs with the expected sign
  double shift_estimate = 0.0;
  std::vector<HistogramBin> histogram;
};

// labels are latent clean classes; pairs are "within" when row and col
// classes agree.  Spectral stats use a dense symmetric eigensolver and are
// limited to n <= 2000.
KernelStats kernel_stats(const GramMatrix& g, const std::vector<int>& labels_rows,
                         const std::vector<int>& labels_cols, int histogram_bins = 40);

// CSV with columns bin_lo,bin_hi,count,pair_type (within|cross).
void write_histogram_csv(const KernelStats& stats, const std::string& path);

}  // namespace rlab::kernel
