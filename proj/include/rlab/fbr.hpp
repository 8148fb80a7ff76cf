#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

#include "rlab/data.hpp"
#include "rlab/net.hpp"
#include "rlab/trace.hpp"

namespace rlab::fbr {

enum class FeatureMap { kPenultimate, kTangent };

FeatureMap feature_map_from_string(const std::string& name);
std::string to_string(FeatureMap f);

struct FbrConfig {
  double alpha = 1e-3;         // weight step size
  double lambda_plus = 1.0;    // same-label coefficient
  double lambda_minus = 0.0;   // cross-label coefficient (default 1/(C-1) is a good start)
  FeatureMap feature_map = FeatureMap::kPenultimate;
  int batch_size = 128;
  int epochs = 10;
  double eta = 1e-2;           // classifier step size
  net::LossKind loss = net::LossKind::kSquared;
  double anneal_rate = 1.0;    // per-epoch multiplicative decay of lambda_minus
  std::uint64_t shuffle_seed = 0;
  double divergence_factor = 10.0;

  void validate() const;
};

// Arithmetic mean of the clean-subset feature rows.
Eigen::RowVectorXd clean_mean(const Eigen::MatrixXd& clean_features);

// |B| x m Gram of mean-centered features: K_ij = <phi(x_i)-mu, phi(x_j^v)-mu>.
Eigen::MatrixXd centered_gram_batch(const Eigen::MatrixXd& batch_features,
                                    const Eigen::MatrixXd& clean_features,
                                    const Eigen::RowVectorXd& mu);

struct RowShiftRecord {
  Eigen::VectorXd class_means;  // s_{i,c}
  int top1 = 0;
  int top2 = 0;
  Eigen::VectorXd shifted;  // K~ row: K - s_{i,top2}
  Eigen::VectorXd masked;   // K_bar row (filled by label_mask/process_row)
  double direction = 0.0;   // d~_i (filled by process_row)
};

// Class-mean similarities, top-1/top-2 classes (lowest index wins ties) and
// the shifted row.  Post: class-mean of K~ is 0 on top2 and <= 0 on every
// other non-top1 class.  Throws if a class is absent from the clean labels.
RowShiftRecord row_shift(const Eigen::VectorXd& gram_row, const std::vector<int>& clean_labels,
                         int num_classes);

// K_bar_j = (lambda_plus 1{y_i = y_j^v} - lambda_minus 1{y_i != y_j^v}) K~_j.
Eigen::VectorXd label_mask(const Eigen::VectorXd& shifted_row, int y_i,
                           const std::vector<int>& clean_labels, double lambda_plus,
                           double lambda_minus);

// Row-sum direction d~_i.  Positive when the sample's observed label matches
// its dominant feature class; the weight update moves w_i by +alpha*d~_i.
double fbr_direction(const Eigen::VectorXd& masked_row);

// row_shift + label_mask + fbr_direction in one pass.
RowShiftRecord process_row(const Eigen::VectorXd& gram_row, const std::vector<int>& clean_labels,
                           int num_classes, int y_i, double lambda_plus, double lambda_minus);

struct FbrRunResult {
  trace::RunTrace trace;
  net::NetParams final_params;
};

// Algorithm loop: clean-set mean recomputed per epoch; per mini-batch the
// centered Gram against the full clean subset, weight updates for batch
// members, then one weighted SGD step using the batch's pre-update weights.
// The backbone must have output_dim == num_classes.
FbrRunResult fbr_train(const FbrConfig& cfg, const data::ExampleSet& train,
                       const data::ExampleSet& clean, const net::NetConfig& net_cfg);

}  // namespace rlab::fbr
