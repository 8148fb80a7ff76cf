#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>

#include "rlab/data.hpp"
#include "rlab/net.hpp"
#include "rlab/trace.hpp"

namespace rlab::meta {

// exact: full chain rule through the pseudo update (clean-side terms at
//        theta_hat).
// first_order: clean-side terms frozen at theta_t.
// ntk_frozen: first order with the initialization-time Gram in place of
//        J(theta_t)^T Jv(theta_t).
enum class Backend { kExact, kFirstOrder, kNtkFrozen };

Backend backend_from_string(const std::string& name);
std::string to_string(Backend b);

struct MetaConfig {
  double eta = 1e-3;  // classifier step size
  double beta = 1e-3; // coupling constant; reweighting step alpha = beta/eta
  Backend backend = Backend::kExact;
  int epochs = 100;
  bool diagnostics = true;      // compute all three backends per epoch
  bool measure_kernel = true;   // mean-centered init-NTK margin into the trace
  double divergence_factor = 10.0;

  double alpha() const { return beta / eta; }
  void validate() const;
};

// theta_t - eta * grad_theta sum_i w_i l_i(theta_t); never commits.
net::NetParams pseudo_update(const net::NetParams& params, const Eigen::MatrixXd& X,
                             const Eigen::VectorXd& y, const Eigen::VectorXd& w, double eta);

struct HypergradDiagnostics {
  Eigen::VectorXd g_exact;
  Eigen::VectorXd g_first_order;
  Eigen::VectorXd g_ntk;
  double e1_norm = 0.0;  // ||g_exact - g_first_order||_inf
  double e2_norm = 0.0;  // ||g_first_order - g_ntk||_inf
};

struct HypergradResult {
  Eigen::VectorXd g;
  std::optional<HypergradDiagnostics> diagnostics;
};

// Gradient of sum_j l_j^v(pseudo_update(w)) with respect to w, by the
// selected backend.  `frozen_gram` is the cached init-time K^(0)(X, X_clean)
// and is required by kNtkFrozen (and by diagnostics).
HypergradResult hypergrad(const net::NetParams& params, const Eigen::MatrixXd& X,
                          const Eigen::VectorXd& y, const Eigen::MatrixXd& Xv,
                          const Eigen::VectorXd& yv, const Eigen::VectorXd& w, double eta,
                          Backend backend, const Eigen::MatrixXd* frozen_gram,
                          bool want_diagnostics);

// w - alpha*g, clipped elementwise into [0,1].
Eigen::VectorXd weight_step(const Eigen::VectorXd& w, const Eigen::VectorXd& g, double alpha);

// Validation objective as a function of the weights:
// Phi(w) = sum_j l_j^v(pseudo_update(w)).
double val_objective(const net::NetParams& params, const Eigen::MatrixXd& X,
                     const Eigen::VectorXd& y, const Eigen::MatrixXd& Xv,
                     const Eigen::VectorXd& yv, const Eigen::VectorXd& w, double eta);

// Central finite differences of Phi along the listed weight coordinates;
// the independent oracle for the exact backend.
Eigen::VectorXd fd_hypergrad_coords(const net::NetParams& params, const Eigen::MatrixXd& X,
                                    const Eigen::VectorXd& y, const Eigen::MatrixXd& Xv,
                                    const Eigen::VectorXd& yv, const Eigen::VectorXd& w,
                                    double eta, const std::vector<int>& coords, double h);

Eigen::VectorXd fd_hypergrad(const net::NetParams& params, const Eigen::MatrixXd& X,
                             const Eigen::VectorXd& y, const Eigen::MatrixXd& Xv,
                             const Eigen::VectorXd& yv, const Eigen::VectorXd& w, double eta,
                             double h);

struct MetaRunResult {
  trace::RunTrace trace;
  net::NetParams final_params;
};

// Full-batch bilevel loop; per epoch: hypergrad at (theta_t, w_t) ->
// weight_step -> classifier step with w_{t+1}.  Weights start at 1/2.
// Trace row t holds (w_t, u(theta_t), u^v(theta_t)) plus the e1/e2 norms of
// the hypergradient evaluated there, so a T-epoch run yields T+1 rows.
MetaRunResult meta_train(const MetaConfig& cfg, const data::ExampleSet& train,
                         const data::ExampleSet& clean, const net::NetConfig& net_cfg);

}  // namespace rlab::meta
