#include "rlab/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "rlab/common.hpp"

namespace rlab::kernel {

namespace {

constexpr int kEigenMaxDim = 2000;
constexpr int kRowBlock = 256;

std::vector<int> iota_ids(int n) {
  std::vector<int> ids(n);
  for (int i = 0; i < n; ++i) ids[i] = i;
  return ids;
}

}  // namespace

std::string to_string(Centering c) {
  switch (c) {
    case Centering::kNone:
      return "none";
    case Centering::kMeanCentered:
      return "mean_centered";
    case Centering::kScalarShifted:
      return "scalar_shifted";
  }
  return "?";
}

GramMatrix ntk_gram(const net::NetParams& params, const Eigen::MatrixXd& X_rows,
                    const Eigen::MatrixXd& X_cols) {
  const int nr = static_cast<int>(X_rows.rows());
  const int nc = static_cast<int>(X_cols.rows());
  GramMatrix g;
  g.values.resize(nr, nc);
  g.row_ids = iota_ids(nr);
  g.col_ids = iota_ids(nc);
  g.snapshot_id = net::snapshot_tag(params);

  const Eigen::MatrixXd Jc = net::jacobian(params, X_cols).values;  // p x nc
  for (int r0 = 0; r0 < nr; r0 += kRowBlock) {
    const int len = std::min(kRowBlock, nr - r0);
    const Eigen::MatrixXd Jr = net::jacobian(params, X_rows.middleRows(r0, len)).values;
    g.values.middleRows(r0, len).noalias() = Jr.transpose() * Jc;
  }
  return g;
}

GramMatrix gram_from_features(const Eigen::MatrixXd& F_rows, const Eigen::MatrixXd& F_cols) {
  if (F_rows.cols() != F_cols.cols()) {
    throw ConfigError("gram_from_features: feature dimension mismatch");
  }
  GramMatrix g;
  g.values.noalias() = F_rows * F_cols.transpose();
  g.row_ids = iota_ids(static_cast<int>(F_rows.rows()));
  g.col_ids = iota_ids(static_cast<int>(F_cols.rows()));
  return g;
}

GramMatrix mean_centered_gram(const Eigen::MatrixXd& F_rows, const Eigen::MatrixXd& F_cols) {
  if (F_cols.rows() == 0) throw ConfigError("mean_centered_gram: empty column set");
  if (F_rows.cols() != F_cols.cols()) {
    throw ConfigError("mean_centered_gram: feature dimension mismatch");
  }
  const Eigen::RowVectorXd mu = F_cols.colwise().mean();
  GramMatrix g = gram_from_features(F_rows.rowwise() - mu, F_cols.rowwise() - mu);
  g.centering = Centering::kMeanCentered;
  return g;
}

GramMatrix center_gram(const GramMatrix& g, const CenteringSpec& spec) {
  if (g.centering != Centering::kNone) {
    throw ConfigError("center_gram expects an uncentered Gram");
  }
  GramMatrix out = g;
  switch (spec.mode) {
    case Centering::kNone:
      return out;
    case Centering::kScalarShifted: {
      if (!spec.mu) throw ConfigError("center_gram: scalar shift requires mu");
      out.values.array() -= *spec.mu;
      out.centering = Centering::kScalarShifted;
      out.shift = *spec.mu;
      return out;
    }
    case Centering::kMeanCentered: {
      if (spec.col_gram == nullptr) {
        throw ConfigError("center_gram: mean centering from Gram values needs the col x col Gram");
      }
      const Eigen::MatrixXd& Kvv = spec.col_gram->values;
      if (Kvv.rows() != Kvv.cols() || Kvv.rows() != g.values.cols()) {
        throw ConfigError("center_gram: col Gram has wrong shape");
      }
      if (Kvv.cols() == 0) throw ConfigError("center_gram: empty column set");
      const double grand = Kvv.mean();
      const Eigen::VectorXd row_means = g.values.rowwise().mean();
      const Eigen::RowVectorXd col_means = Kvv.colwise().mean();
      out.values = g.values;
      out.values.colwise() -= row_means;
      out.values.rowwise() -= col_means;
      out.values.array() += grand;
      out.centering = Centering::kMeanCentered;
      return out;
    }
  }
  return out;
}

double estimate_shift(const GramMatrix& g, const std::vector<int>& labels_rows,
                      const std::vector<int>& labels_cols) {
  if (static_cast<int>(labels_rows.size()) != g.values.rows() ||
      static_cast<int>(labels_cols.size()) != g.values.cols()) {
    throw ConfigError("estimate_shift: label length mismatch");
  }
  double within_sum = 0.0, cross_sum = 0.0;
  std::int64_t within_n = 0, cross_n = 0;
  for (int i = 0; i < g.values.rows(); ++i) {
    for (int j = 0; j < g.values.cols(); ++j) {
      if (labels_rows[i] == labels_cols[j]) {
        within_sum += g.values(i, j);
        ++within_n;
      } else {
        cross_sum += g.values(i, j);
        ++cross_n;
      }
    }
  }
  if (within_n == 0 || cross_n == 0) {
    throw ConfigError("estimate_shift: needs both within- and cross-class pairs");
  }
  return 0.5 * (within_sum / within_n + cross_sum / cross_n);
}

KernelStats kernel_stats(const GramMatrix& g, const std::vector<int>& labels_rows,
                         const std::vector<int>& labels_cols, int histogram_bins) {
  if (static_cast<int>(labels_rows.size()) != g.values.rows() ||
      static_cast<int>(labels_cols.size()) != g.values.cols()) {
    throw ConfigError("kernel_stats: label length mismatch");
  }
  KernelStats s;

  if (g.square()) {
    if (g.values.rows() > kEigenMaxDim) {
      std::ostringstream msg;
      msg << "kernel_stats: spectral stats limited to " << kEigenMaxDim << " x " << kEigenMaxDim
          << " Grams (got " << g.values.rows() << ")";
      throw ConfigError(msg.str());
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(
        0.5 * (g.values + g.values.transpose()), Eigen::EigenvaluesOnly);
    s.lambda_min = solver.eigenvalues().minCoeff();
    s.lambda_max = solver.eigenvalues().maxCoeff();
  }

  double margin = std::numeric_limits<double>::infinity();
  bool violated = false;
  std::int64_t agree = 0;
  const std::int64_t total =
      static_cast<std::int64_t>(g.values.rows()) * g.values.cols();
  for (int i = 0; i < g.values.rows(); ++i) {
    for (int j = 0; j < g.values.cols(); ++j) {
      const double v = g.values(i, j);
      const bool within = labels_rows[i] == labels_cols[j];
      const bool ok = within ? v > 0.0 : v < 0.0;
      if (ok) {
        ++agree;
        margin = std::min(margin, std::abs(v));
      } else {
        violated = true;
      }
    }
  }
  s.gamma_hat = violated || total == 0 ? 0.0 : margin;
  s.sign_agreement = total == 0 ? 0.0 : static_cast<double>(agree) / static_cast<double>(total);

  try {
    s.shift_estimate = estimate_shift(g, labels_rows, labels_cols);
  } catch (const ConfigError&) {
    s.shift_estimate = 0.0;  // single-class Gram: no cross pairs to average
  }

  if (histogram_bins > 0 && total > 0) {
    const double lo = g.values.minCoeff();
    const double hi = g.values.maxCoeff();
    const double span = hi > lo ? hi - lo : 1.0;
    s.histogram.resize(histogram_bins);
    for (int b = 0; b < histogram_bins; ++b) {
      s.histogram[b].lo = lo + span * b / histogram_bins;
      s.histogram[b].hi = lo + span * (b + 1) / histogram_bins;
    }
    for (int i = 0; i < g.values.rows(); ++i) {
      for (int j = 0; j < g.values.cols(); ++j) {
        int b = static_cast<int>((g.values(i, j) - lo) / span * histogram_bins);
        b = std::clamp(b, 0, histogram_bins - 1);
        if (labels_rows[i] == labels_cols[j]) {
          ++s.histogram[b].within;
        } else {
          ++s.histogram[b].cross;
        }
      }
    }
  }
  return s;
}

void write_histogram_csv(const KernelStats& stats, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open histogram file: " + path);
  out << "bin_lo,bin_hi,count,pair_type\n";
  for (const auto& bin : stats.histogram) {
    out << format_double(bin.lo) << "," << format_double(bin.hi) << "," << bin.within
        << ",within\n";
    out << format_double(bin.lo) << "," << format_double(bin.hi) << "," << bin.cross << ",cross\n";
  }
  if (!out) throw IoError("failed writing histogram file: " + path);
}

}  // namespace rlab::kernel
