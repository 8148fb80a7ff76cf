#include "rlab/meta.hpp"

#include <cmath>
#include <sstream>

#include "rlab/kernel.hpp"

namespace rlab::meta {

Backend backend_from_string(const std::string& name) {
  if (name == "exact") return Backend::kExact;
  if (name == "first_order") return Backend::kFirstOrder;
  if (name == "ntk_frozen") return Backend::kNtkFrozen;
  throw ConfigError("unknown hypergradient backend '" + name +
                    "' (expected exact, first_order or ntk_frozen)");
}

std::string to_string(Backend b) {
  switch (b) {
    case Backend::kExact:
      return "exact";
    case Backend::kFirstOrder:
      return "first_order";
    case Backend::kNtkFrozen:
      return "ntk_frozen";
  }
  return "?";
}

void MetaConfig::validate() const {
  if (eta <= 0.0) throw ConfigError("meta eta must be > 0");
  if (beta <= 0.0) throw ConfigError("meta beta must be > 0");
  if (epochs < 0) throw ConfigError("meta epochs must be >= 0");
  if (divergence_factor <= 1.0) throw ConfigError("divergence factor must exceed 1");
}

net::NetParams pseudo_update(const net::NetParams& params, const Eigen::MatrixXd& X,
                             const Eigen::VectorXd& y, const Eigen::VectorXd& w, double eta) {
  return net::weighted_sgd_step(params, X, y, w, eta);
}

namespace {

// J^v(at) u^v(at) as a parameter-shaped vector: the gradient of the summed
// clean-subset squared loss.
net::NetParams val_pullback(const net::NetParams& at, const Eigen::MatrixXd& Xv,
                            const Eigen::VectorXd& yv) {
  return net::weighted_loss_grad(at, Xv, yv, Eigen::VectorXd::Ones(Xv.rows()));
}

Eigen::VectorXd backend_exact(const net::NetParams& params, const Eigen::MatrixXd& X,
                              const Eigen::VectorXd& u, const Eigen::VectorXd& y,
                              const Eigen::MatrixXd& Xv, const Eigen::VectorXd& yv,
                              const Eigen::VectorXd& w, double eta) {
  const net::NetParams theta_hat = pseudo_update(params, X, y, w, eta);
  const net::NetParams v = val_pullback(theta_hat, Xv, yv);
  const Eigen::VectorXd inner = net::jvp(params, X, v).col(0);
  return (-eta) * u.cwiseProduct(inner);
}

Eigen::VectorXd backend_first_order(const net::NetParams& params, const Eigen::MatrixXd& X,
                                    const Eigen::VectorXd& u, const Eigen::MatrixXd& Xv,
                                    const Eigen::VectorXd& yv, double eta) {
  const net::NetParams v = val_pullback(params, Xv, yv);
  const Eigen::VectorXd inner = net::jvp(params, X, v).col(0);
  return (-eta) * u.cwiseProduct(inner);
}

Eigen::VectorXd backend_ntk(const Eigen::VectorXd& u, const Eigen::VectorXd& uv,
                            const Eigen::MatrixXd& frozen_gram, double eta) {
  return (-eta) * u.cwiseProduct(frozen_gram * uv);
}

}  // namespace

HypergradResult hypergrad(const net::NetParams& params, const Eigen::MatrixXd& X,
                          const Eigen::VectorXd& y, const Eigen::MatrixXd& Xv,
                          const Eigen::VectorXd& yv, const Eigen::VectorXd& w, double eta,
                          Backend backend, const Eigen::MatrixXd* frozen_gram,
                          bool want_diagnostics) {
  if (Xv.rows() == 0) throw ConfigError("hypergrad: clean split is empty");
  const bool need_ntk = want_diagnostics || backend == Backend::kNtkFrozen;
  if (need_ntk && frozen_gram == nullptr) {
    throw ConfigError("hypergrad backend unavailable: ntk_frozen requires the cached init Gram");
  }

  const Eigen::VectorXd u = net::forward_scalar(params, X) - y;
  const Eigen::VectorXd uv = net::forward_scalar(params, Xv) - yv;

  HypergradResult res;
  if (want_diagnostics) {
    HypergradDiagnostics d;
    d.g_exact = backend_exact(params, X, u, y, Xv, yv, w, eta);
    d.g_first_order = backend_first_order(params, X, u, Xv, yv, eta);
    d.g_ntk = backend_ntk(u, uv, *frozen_gram, eta);
    d.e1_norm = (d.g_exact - d.g_first_order).lpNorm<Eigen::Infinity>();
    d.e2_norm = (d.g_first_order - d.g_ntk).lpNorm<Eigen::Infinity>();
    switch (backend) {
      case Backend::kExact:
        res.g = d.g_exact;
        break;
      case Backend::kFirstOrder:
        res.g = d.g_first_order;
        break;
      case Backend::kNtkFrozen:
        res.g = d.g_ntk;
        break;
    }
    res.diagnostics = std::move(d);
    return res;
  }

  switch (backend) {
    case Backend::kExact:
      res.g = backend_exact(params, X, u, y, Xv, yv, w, eta);
      break;
    case Backend::kFirstOrder:
      res.g = backend_first_order(params, X, u, Xv, yv, eta);
      break;
    case Backend::kNtkFrozen:
      res.g = backend_ntk(u, uv, *frozen_gram, eta);
      break;
  }
  return res;
}

Eigen::VectorXd weight_step(const Eigen::VectorXd& w, const Eigen::VectorXd& g, double alpha) {
  return (w - alpha * g).cwiseMax(0.0).cwiseMin(1.0);
}

double val_objective(const net::NetParams& params, const Eigen::MatrixXd& X,
                     const Eigen::VectorXd& y, const Eigen::MatrixXd& Xv,
                     const Eigen::VectorXd& yv, const Eigen::VectorXd& w, double eta) {
  const net::NetParams theta_hat = pseudo_update(params, X, y, w, eta);
  const Eigen::VectorXd uv = net::forward_scalar(theta_hat, Xv) - yv;
  return 0.5 * uv.squaredNorm();
}

Eigen::VectorXd fd_hypergrad_coords(const net::NetParams& params, const Eigen::MatrixXd& X,
                                    const Eigen::VectorXd& y, const Eigen::MatrixXd& Xv,
                                    const Eigen::VectorXd& yv, const Eigen::VectorXd& w,
                                    double eta, const std::vector<int>& coords, double h) {
  Eigen::VectorXd out(coords.size());
  Eigen::VectorXd probe = w;
  for (std::size_t k = 0; k < coords.size(); ++k) {
    const int i = coords[k];
    const double w0 = probe(i);
    probe(i) = w0 + h;
    const double up = val_objective(params, X, y, Xv, yv, probe, eta);
    probe(i) = w0 - h;
    const double dn = val_objective(params, X, y, Xv, yv, probe, eta);
    probe(i) = w0;
    out(k) = (up - dn) / (2.0 * h);
  }
  return out;
}

Eigen::VectorXd fd_hypergrad(const net::NetParams& params, const Eigen::MatrixXd& X,
                             const Eigen::VectorXd& y, const Eigen::MatrixXd& Xv,
                             const Eigen::VectorXd& yv, const Eigen::VectorXd& w, double eta,
                             double h) {
  std::vector<int> coords(w.size());
  for (int i = 0; i < w.size(); ++i) coords[i] = i;
  return fd_hypergrad_coords(params, X, y, Xv, yv, w, eta, coords, h);
}

MetaRunResult meta_train(const MetaConfig& cfg, const data::ExampleSet& train,
                         const data::ExampleSet& clean, const net::NetConfig& net_cfg) {
  cfg.validate();
  net_cfg.validate();
  if (net_cfg.output_dim != 1) throw ConfigError("meta_train uses the scalar-output theory path");
  if (clean.size() == 0) throw ConfigError("meta_train: clean subset is empty");

  const Eigen::MatrixXd& X = train.X;
  const Eigen::MatrixXd& Xv = clean.X;
  const Eigen::VectorXd y = train.pm1_observed();
  const Eigen::VectorXd yv = clean.pm1_observed();
  const int n = train.size();

  net::NetParams params = net::init_network(net_cfg);

  const kernel::GramMatrix k0 = kernel::ntk_gram(params, X, Xv);

  MetaRunResult out;
  out.trace.sample_ids = train.ids;
  out.trace.noise_mask = std::vector<bool>(train.noise_mask.begin(), train.noise_mask.end());
  out.trace.clean_subset_size = clean.size();

  if (cfg.measure_kernel) {
    const kernel::GramMatrix kvv = kernel::ntk_gram(params, Xv, Xv);
    kernel::CenteringSpec spec;
    spec.mode = kernel::Centering::kMeanCentered;
    spec.col_gram = &kvv;
    const kernel::GramMatrix centered = kernel::center_gram(k0, spec);
    const kernel::KernelStats stats =
        kernel::kernel_stats(centered, train.y_clean, clean.y_clean, 0);
    out.trace.gamma_hat = stats.gamma_hat;
  }

  Eigen::VectorXd w = Eigen::VectorXd::Constant(n, 0.5);
  const double u0_inf = y.lpNorm<Eigen::Infinity>();  // u(theta_0) = -y exactly
  const double guard = cfg.divergence_factor * u0_inf;

  auto record = [&](int epoch) -> bool {
    trace::EpochRecord e;
    e.epoch = epoch;
    e.weights = w;
    e.residual = net::forward_scalar(params, X) - y;
    e.val_residual = net::forward_scalar(params, Xv) - yv;
    e.val_inf = e.val_residual.lpNorm<Eigen::Infinity>();
    e.val_mean_abs = std::abs(e.val_residual.sum()) / clean.size();
    const bool diverged = e.residual.lpNorm<Eigen::Infinity>() > guard;
    if (!diverged) {
      HypergradResult hg = hypergrad(params, X, y, Xv, yv, w, cfg.eta, cfg.backend, &k0.values,
                                     cfg.diagnostics);
      if (hg.diagnostics) {
        e.e1_norm = hg.diagnostics->e1_norm;
        e.e2_norm = hg.diagnostics->e2_norm;
      }
      e.direction = hg.g;
    }
    trace::weight_separation(e.weights, out.trace.noise_mask, &e.mean_clean_weight,
                             &e.mean_noisy_weight, &e.weight_auc);
    out.trace.epochs.push_back(std::move(e));
    return !diverged;
  };

  for (int t = 0; t < cfg.epochs; ++t) {
    if (!record(t)) {
      out.trace.diverged = true;
      break;
    }
    const Eigen::VectorXd& g = out.trace.epochs.back().direction;
    w = weight_step(w, g, cfg.alpha());
    params = net::weighted_sgd_step(params, X, y, w, cfg.eta);
  }
  if (!out.trace.diverged) {
    if (!record(cfg.epochs)) out.trace.diverged = true;
  }

  out.final_params = std::move(params);
  return out;
}

}  // namespace rlab::meta
