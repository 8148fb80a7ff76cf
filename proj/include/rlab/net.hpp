#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "rlab/common.hpp"

namespace rlab::net {

// Smooth activations only: sigma and sigma' must both be Lipschitz, so the
// enum has no ReLU entry and config parsing rejects it by name.
enum class Activation { kTanh, kSoftplus, kErf };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation a);

struct NetConfig {
  int depth = 1;          // L: number of hidden layers (0 = plain affine map)
  int input_dim = 2;      // d_0
  int hidden_width = 32;  // d_1 = ... = d_L
  int output_dim = 1;     // d_{L+1}
  Activation activation = Activation::kTanh;
  std::uint64_t seed = 0;

  // Throws ConfigError on non-positive widths/dims or negative depth.
  void validate() const;

  int num_layers() const { return depth + 1; }  // matrices A^0 .. A^L
  int layer_in(int l) const;                    // d_l
  int layer_out(int l) const;                   // d_{l+1}
  std::int64_t param_count() const;
};

// All weights and biases. Flat indexing (used by the finite-difference
// oracles) runs layer 0..L, within a layer A^l in row-major order then b^l.
struct NetParams {
  NetConfig config;
  std::vector<Eigen::MatrixXd> weights;  // A^l: d_{l+1} x d_l
  std::vector<Eigen::VectorXd> biases;   // b^l: d_{l+1}

  std::int64_t param_count() const { return config.param_count(); }
  double get_flat(std::int64_t idx) const;
  void add_flat(std::int64_t idx, double delta);
  Eigen::VectorXd flatten() const;

  // this += scale * other (same shapes).
  void axpy(double scale, const NetParams& other);
  bool all_finite() const;
  void set_zero();
};

// Zero-prediction initialization: layers 0..L-1 i.i.d. standard normal,
// layer L identically zero, so the initial output is exactly 0 everywhere.
NetParams init_network(const NetConfig& cfg);

// Content hash of the parameter values; tags Jacobian/Gram blocks with the
// theta snapshot they were computed at.
std::string snapshot_tag(const NetParams& params);

// Test helper: every layer (including the last) i.i.d. standard normal.
NetParams random_params(const NetConfig& cfg, std::uint64_t seed);

// Batch activations; examples are rows throughout.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> post;  // x^l (n x d_l), post[0] = X
  std::vector<Eigen::MatrixXd> pre;   // h^{l+1} (n x d_{l+1})
  const Eigen::MatrixXd& output() const { return pre.back(); }
};

ForwardCache forward_cached(const NetParams& params, const Eigen::MatrixXd& X);

// Pre-activation scaling 1/sqrt(d_l) at every layer; no output activation.
Eigen::MatrixXd forward(const NetParams& params, const Eigen::MatrixXd& X);

// Scalar-output convenience (output_dim must be 1).
Eigen::VectorXd forward_scalar(const NetParams& params, const Eigen::MatrixXd& X);

// Per-example parameter gradients, scalar-output networks.
struct JacobianBlock {
  Eigen::MatrixXd values;  // p x k, column j = grad_theta f(x_j)
  std::vector<int> example_ids;
  std::string snapshot_id;
};

JacobianBlock jacobian(const NetParams& params, const Eigen::MatrixXd& X);

// Penultimate-layer activations x^L (n x d_L); the FBR feature map default.
Eigen::MatrixXd penultimate_features(const NetParams& params, const Eigen::MatrixXd& X);

// Flattened per-example, per-output parameter gradients (n x p*output_dim);
// reduces to jacobian().transpose() for scalar outputs.
Eigen::MatrixXd tangent_features(const NetParams& params, const Eigen::MatrixXd& X);

// Directional derivative of the outputs along `dir` in parameter space,
// evaluated for every row of X in one tangent forward pass.  Equals
// J(theta)^T vec(dir) column-for-column but never materializes J.
Eigen::MatrixXd jvp(const NetParams& params, const Eigen::MatrixXd& X, const NetParams& dir);

enum class LossKind { kSquared, kSoftmaxCrossEntropy };

// grad_theta sum_i w_i * l_i for the scalar squared loss
// l_i = 1/2 (f(x_i) - y_i)^2.
NetParams weighted_loss_grad(const NetParams& params, const Eigen::MatrixXd& X,
                             const Eigen::VectorXd& y, const Eigen::VectorXd& w);

// Multiclass variant: per-class squared loss against one-hot targets, or
// softmax cross-entropy.
NetParams weighted_loss_grad_multiclass(const NetParams& params, const Eigen::MatrixXd& X,
                                        const std::vector<int>& y_class,
                                        const Eigen::VectorXd& w, LossKind loss);

// theta - eta * grad_theta sum_i w_i l_i; bitwise identity when w == 0.
// Throws NumericError (with norms in the message) on non-finite gradients.
NetParams weighted_sgd_step(const NetParams& params, const Eigen::MatrixXd& X,
                            const Eigen::VectorXd& y, const Eigen::VectorXd& w, double eta);

NetParams weighted_sgd_step_multiclass(const NetParams& params, const Eigen::MatrixXd& X,
                                       const std::vector<int>& y_class, const Eigen::VectorXd& w,
                                       double eta, LossKind loss);

}  // namespace rlab::net
