#include "rlab/fbr.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace rlab::fbr {

FeatureMap feature_map_from_string(const std::string& name) {
  if (name == "penultimate") return FeatureMap::kPenultimate;
  if (name == "tangent") return FeatureMap::kTangent;
  throw ConfigError("unknown feature map '" + name + "' (expected penultimate or tangent)");
}

std::string to_string(FeatureMap f) {
  return f == FeatureMap::kPenultimate ? "penultimate" : "tangent";
}

void FbrConfig::validate() const {
  if (lambda_plus < 0.0 || lambda_minus < 0.0) {
    throw ConfigError("label-signed coefficients must be nonnegative");
  }
  if (batch_size < 1) throw ConfigError("fbr batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("fbr epochs must be >= 0");
  if (eta <= 0.0) throw ConfigError("fbr eta must be > 0");
  if (anneal_rate <= 0.0 || anneal_rate > 1.0) {
    throw ConfigError("fbr anneal_rate must lie in (0, 1]");
  }
}

Eigen::RowVectorXd clean_mean(const Eigen::MatrixXd& clean_features) {
  if (clean_features.rows() == 0) throw ConfigError("clean_mean: empty clean set");
  return clean_features.colwise().mean();
}

Eigen::MatrixXd centered_gram_batch(const Eigen::MatrixXd& batch_features,
                                    const Eigen::MatrixXd& clean_features,
                                    const Eigen::RowVectorXd& mu) {
  if (batch_features.cols() != clean_features.cols() || mu.size() != batch_features.cols()) {
    throw ConfigError("centered_gram_batch: feature dimension mismatch");
  }
  return (batch_features.rowwise() - mu) * (clean_features.rowwise() - mu).transpose();
}

RowShiftRecord row_shift(const Eigen::VectorXd& gram_row, const std::vector<int>& clean_labels,
                         int num_classes) {
  if (static_cast<int>(clean_labels.size()) != gram_row.size()) {
    throw ConfigError("row_shift: label count does not match row length");
  }
  if (num_classes < 2) throw ConfigError("row_shift: need at least 2 classes");

  RowShiftRecord rec;
  rec.class_means = Eigen::VectorXd::Zero(num_classes);
  Eigen::VectorXi counts = Eigen::VectorXi::Zero(num_classes);
  for (int j = 0; j < gram_row.size(); ++j) {
    const int c = clean_labels[j];
    if (c < 0 || c >= num_classes) throw ConfigError("row_shift: clean label out of range");
    rec.class_means(c) += gram_row(j);
    counts(c) += 1;
  }
  for (int c = 0; c < num_classes; ++c) {
    if (counts(c) == 0) {
      throw ConfigError("row_shift: class " + std::to_string(c) + " absent from the clean subset");
    }
    rec.class_means(c) /= counts(c);
  }

  // Lowest class index wins ties.
  rec.top1 = 0;
  for (int c = 1; c < num_classes; ++c) {
    if (rec.class_means(c) > rec.class_means(rec.top1)) rec.top1 = c;
  }
  rec.top2 = rec.top1 == 0 ? 1 : 0;
  for (int c = 0; c < num_classes; ++c) {
    if (c == rec.top1) continue;
    if (rec.class_means(c) > rec.class_means(rec.top2)) rec.top2 = c;
  }

  rec.shifted = gram_row.array() - rec.class_means(rec.top2);
  return rec;
}

Eigen::VectorXd label_mask(const Eigen::VectorXd& shifted_row, int y_i,
                           const std::vector<int>& clean_labels, double lambda_plus,
                           double lambda_minus) {
  if (static_cast<int>(clean_labels.size()) != shifted_row.size()) {
    throw ConfigError("label_mask: label count does not match row length");
  }
  Eigen::VectorXd out(shifted_row.size());
  for (int j = 0; j < shifted_row.size(); ++j) {
    const double coef = clean_labels[j] == y_i ? lambda_plus : -lambda_minus;
    out(j) = coef * shifted_row(j);
  }
  return out;
}

double fbr_direction(const Eigen::VectorXd& masked_row) { return masked_row.sum(); }

RowShiftRecord process_row(const Eigen::VectorXd& gram_row, const std::vector<int>& clean_labels,
                           int num_classes, int y_i, double lambda_plus, double lambda_minus) {
  RowShiftRecord rec = row_shift(gram_row, clean_labels, num_classes);
  rec.masked = label_mask(rec.shifted, y_i, clean_labels, lambda_plus, lambda_minus);
  rec.direction = fbr_direction(rec.masked);
  return rec;
}

namespace {

Eigen::MatrixXd features_of(FeatureMap map, const net::NetParams& params,
                            const Eigen::MatrixXd& X) {
  return map == FeatureMap::kPenultimate ? net::penultimate_features(params, X)
                                         : net::tangent_features(params, X);
}

// Per-sample max-abs residual against one-hot targets.
Eigen::VectorXd multiclass_residual(const net::NetParams& params, const Eigen::MatrixXd& X,
                                    const std::vector<int>& y) {
  Eigen::MatrixXd R = net::forward(params, X);
  for (int i = 0; i < R.rows(); ++i) R(i, y[i]) -= 1.0;
  return R.cwiseAbs().rowwise().maxCoeff();
}

}  // namespace

FbrRunResult fbr_train(const FbrConfig& cfg, const data::ExampleSet& train,
                       const data::ExampleSet& clean, const net::NetConfig& net_cfg) {
  cfg.validate();
  net_cfg.validate();
  const int C = train.num_classes;
  if (net_cfg.output_dim != C) {
    throw ConfigError("fbr_train: backbone output_dim must equal the class count");
  }
  if (clean.size() == 0) throw ConfigError("fbr_train: clean subset is empty");

  std::vector<int> counts(C, 0);
  for (int c : clean.y_observed) {
    if (c < 0 || c >= C) throw ConfigError("fbr_train: clean label out of range");
    ++counts[c];
  }
  for (int c = 0; c < C; ++c) {
    if (counts[c] == 0) {
      throw ConfigError("fbr_train: class " + std::to_string(c) + " missing from clean subset");
    }
    if (counts[c] != counts[0]) {
      throw ConfigError("fbr_train: clean subset must be class balanced");
    }
  }

  const int n = train.size();
  net::NetParams params = net::init_network(net_cfg);

  FbrRunResult out;
  out.trace.sample_ids = train.ids;
  out.trace.noise_mask = std::vector<bool>(train.noise_mask.begin(), train.noise_mask.end());
  out.trace.clean_subset_size = clean.size();

  Eigen::VectorXd w = Eigen::VectorXd::Constant(n, 0.5);
  Eigen::VectorXd direction = Eigen::VectorXd::Zero(n);
  double lambda_minus = cfg.lambda_minus;

  const double u0_inf = 1.0;  // zero net against one-hot targets
  const double guard = cfg.divergence_factor * u0_inf;

  auto record = [&](int epoch) -> bool {
    trace::EpochRecord e;
    e.epoch = epoch;
    e.weights = w;
    e.residual = multiclass_residual(params, train.X, train.y_observed);
    const Eigen::VectorXd val_res = multiclass_residual(params, clean.X, clean.y_observed);
    e.val_inf = val_res.lpNorm<Eigen::Infinity>();
    e.val_mean_abs = val_res.sum() / clean.size();
    e.direction = direction;
    trace::weight_separation(e.weights, out.trace.noise_mask, &e.mean_clean_weight,
                             &e.mean_noisy_weight, &e.weight_auc);
    const bool ok = e.residual.lpNorm<Eigen::Infinity>() <= guard;
    out.trace.epochs.push_back(std::move(e));
    return ok;
  };

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (int t = 0; t < cfg.epochs; ++t) {
    if (!record(t)) {
      out.trace.diverged = true;
      break;
    }

    const Eigen::MatrixXd clean_feats = features_of(cfg.feature_map, params, clean.X);
    const Eigen::RowVectorXd mu = clean_mean(clean_feats);
    const Eigen::MatrixXd clean_centered = clean_feats.rowwise() - mu;

    std::mt19937_64 rng(derive_seed(cfg.shuffle_seed, static_cast<std::uint64_t>(t) + 1));
    std::shuffle(order.begin(), order.end(), rng);

    for (int b0 = 0; b0 < n; b0 += cfg.batch_size) {
      const int blen = std::min(cfg.batch_size, n - b0);
      Eigen::MatrixXd Xb(blen, train.dim());
      std::vector<int> yb(blen);
      for (int k = 0; k < blen; ++k) {
        Xb.row(k) = train.X.row(order[b0 + k]);
        yb[k] = train.y_observed[order[b0 + k]];
      }
      const Eigen::MatrixXd batch_feats = features_of(cfg.feature_map, params, Xb);
      const Eigen::MatrixXd Kb = (batch_feats.rowwise() - mu) * clean_centered.transpose();

      Eigen::VectorXd w_before(blen);
      for (int k = 0; k < blen; ++k) {
        const int i = order[b0 + k];
        const RowShiftRecord rec =
            process_row(Kb.row(k), clean.y_observed, C, yb[k], cfg.lambda_plus, lambda_minus);
        direction(i) = rec.direction;
        w_before(k) = w(i);
        // The row sum is the upweighting direction: positive for samples
        // whose observed label matches the dominant feature class.
        w(i) = std::clamp(w(i) + cfg.alpha * rec.direction, 0.0, 1.0);
      }

      // Classifier step uses the batch's pre-update weights (Algorithm
      // listing order), averaged over the batch.
      params = net::weighted_sgd_step_multiclass(
          params, Xb, yb, w_before / static_cast<double>(blen), cfg.eta, cfg.loss);
    }
    lambda_minus *= cfg.anneal_rate;
  }

  if (!out.trace.diverged) {
    if (!record(cfg.epochs)) out.trace.diverged = true;
  }
  out.final_params = std::move(params);
  return out;
}

}  // namespace rlab::fbr
