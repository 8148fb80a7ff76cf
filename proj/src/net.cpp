#include "rlab/net.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace rlab::net {

namespace {

double act_eval(Activation a, double x) {
  switch (a) {
    case Activation::kTanh:
      return std::tanh(x);
    case Activation::kSoftplus:
      return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    case Activation::kErf:
      return std::erf(x);
  }
  return 0.0;
}

double act_deriv(Activation a, double x) {
  switch (a) {
    case Activation::kTanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::kSoftplus:
      return 1.0 / (1.0 + std::exp(-x));
    case Activation::kErf:
      return 2.0 / std::sqrt(M_PI) * std::exp(-x * x);
  }
  return 0.0;
}

Eigen::MatrixXd apply_act(Activation a, const Eigen::MatrixXd& H) {
  return H.unaryExpr([a](double v) { return act_eval(a, v); });
}

Eigen::MatrixXd apply_act_deriv(Activation a, const Eigen::MatrixXd& H) {
  return H.unaryExpr([a](double v) { return act_deriv(a, v); });
}

}  // namespace

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "softplus") return Activation::kSoftplus;
  if (name == "erf") return Activation::kErf;
  if (name == "relu") {
    throw ConfigError("activation 'relu' rejected: a Lipschitz derivative is required "
                      "(use tanh, softplus or erf)");
  }
  throw ConfigError("unknown activation '" + name + "' (expected tanh, softplus or erf)");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kTanh:
      return "tanh";
    case Activation::kSoftplus:
      return "softplus";
    case Activation::kErf:
      return "erf";
  }
  return "?";
}

void NetConfig::validate() const {
  if (depth < 0) throw ConfigError("net depth must be >= 0");
  if (input_dim < 1) throw ConfigError("net input_dim must be >= 1");
  if (output_dim < 1) throw ConfigError("net output_dim must be >= 1");
  if (depth > 0 && hidden_width < 1) throw ConfigError("net hidden_width must be >= 1");
}

int NetConfig::layer_in(int l) const {
  return l == 0 ? input_dim : hidden_width;
}

int NetConfig::layer_out(int l) const {
  return l == depth ? output_dim : hidden_width;
}

std::int64_t NetConfig::param_count() const {
  std::int64_t p = 0;
  for (int l = 0; l <= depth; ++l) {
    p += static_cast<std::int64_t>(layer_out(l)) * layer_in(l) + layer_out(l);
  }
  return p;
}

double NetParams::get_flat(std::int64_t idx) const {
  for (size_t l = 0; l < weights.size(); ++l) {
    const std::int64_t wn = weights[l].size();
    if (idx < wn) {
      const int cols = static_cast<int>(weights[l].cols());
      return weights[l](static_cast<int>(idx / cols), static_cast<int>(idx % cols));
    }
    idx -= wn;
    const std::int64_t bn = biases[l].size();
    if (idx < bn) return biases[l](static_cast<int>(idx));
    idx -= bn;
  }
  throw NumericError("flat parameter index out of range");
}

void NetParams::add_flat(std::int64_t idx, double delta) {
  for (size_t l = 0; l < weights.size(); ++l) {
    const std::int64_t wn = weights[l].size();
    if (idx < wn) {
      const int cols = static_cast<int>(weights[l].cols());
      weights[l](static_cast<int>(idx / cols), static_cast<int>(idx % cols)) += delta;
      return;
    }
    idx -= wn;
    const std::int64_t bn = biases[l].size();
    if (idx < bn) {
      biases[l](static_cast<int>(idx)) += delta;
      return;
    }
    idx -= bn;
  }
  throw NumericError("flat parameter index out of range");
}

Eigen::VectorXd NetParams::flatten() const {
  Eigen::VectorXd out(param_count());
  std::int64_t at = 0;
  for (size_t l = 0; l < weights.size(); ++l) {
    const auto& A = weights[l];
    for (int r = 0; r < A.rows(); ++r)
      for (int c = 0; c < A.cols(); ++c) out(at++) = A(r, c);
    for (int i = 0; i < biases[l].size(); ++i) out(at++) = biases[l](i);
  }
  return out;
}

void NetParams::axpy(double scale, const NetParams& other) {
  for (size_t l = 0; l < weights.size(); ++l) {
    weights[l] += scale * other.weights[l];
    biases[l] += scale * other.biases[l];
  }
}

bool NetParams::all_finite() const {
  for (size_t l = 0; l < weights.size(); ++l) {
    if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
  }
  return true;
}

void NetParams::set_zero() {
  for (size_t l = 0; l < weights.size(); ++l) {
    weights[l].setZero();
    biases[l].setZero();
  }
}

namespace {

NetParams make_shaped(const NetConfig& cfg) {
  cfg.validate();
  NetParams p;
  p.config = cfg;
  p.weights.resize(cfg.num_layers());
  p.biases.resize(cfg.num_layers());
  for (int l = 0; l <= cfg.depth; ++l) {
    p.weights[l].resize(cfg.layer_out(l), cfg.layer_in(l));
    p.biases[l].resize(cfg.layer_out(l));
  }
  return p;
}

void fill_gaussian(Eigen::MatrixXd& A, Eigen::VectorXd& b, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int r = 0; r < A.rows(); ++r)
    for (int c = 0; c < A.cols(); ++c) A(r, c) = gauss(rng);
  for (int i = 0; i < b.size(); ++i) b(i) = gauss(rng);
}

}  // namespace

NetParams init_network(const NetConfig& cfg) {
  NetParams p = make_shaped(cfg);
  std::mt19937_64 rng(cfg.seed);
  for (int l = 0; l < cfg.depth; ++l) fill_gaussian(p.weights[l], p.biases[l], rng);
  p.weights[cfg.depth].setZero();
  p.biases[cfg.depth].setZero();
  return p;
}

NetParams random_params(const NetConfig& cfg, std::uint64_t seed) {
  NetParams p = make_shaped(cfg);
  std::mt19937_64 rng(seed);
  for (int l = 0; l <= cfg.depth; ++l) fill_gaussian(p.weights[l], p.biases[l], rng);
  return p;
}

std::string snapshot_tag(const NetParams& params) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const double* data, std::int64_t count) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(data);
    for (std::int64_t i = 0; i < count * static_cast<std::int64_t>(sizeof(double)); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  for (size_t l = 0; l < params.weights.size(); ++l) {
    mix(params.weights[l].data(), params.weights[l].size());
    mix(params.biases[l].data(), params.biases[l].size());
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "theta-%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ForwardCache forward_cached(const NetParams& params, const Eigen::MatrixXd& X) {
  const NetConfig& cfg = params.config;
  if (X.cols() != cfg.input_dim) {
    std::ostringstream msg;
    msg << "forward: input dimension mismatch (got " << X.cols() << ", net expects "
        << cfg.input_dim << ")";
    throw ConfigError(msg.str());
  }
  ForwardCache fc;
  fc.post.resize(cfg.depth + 1);
  fc.pre.resize(cfg.num_layers());
  fc.post[0] = X;
  for (int l = 0; l <= cfg.depth; ++l) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.layer_in(l)));
    fc.pre[l] = scale * (fc.post[l] * params.weights[l].transpose());
    fc.pre[l].rowwise() += params.biases[l].transpose();
    if (l < cfg.depth) fc.post[l + 1] = apply_act(cfg.activation, fc.pre[l]);
  }
  return fc;
}

Eigen::MatrixXd forward(const NetParams& params, const Eigen::MatrixXd& X) {
  return forward_cached(params, X).output();
}

Eigen::VectorXd forward_scalar(const NetParams& params, const Eigen::MatrixXd& X) {
  if (params.config.output_dim != 1) throw ConfigError("forward_scalar requires output_dim == 1");
  return forward(params, X).col(0);
}

Eigen::MatrixXd penultimate_features(const NetParams& params, const Eigen::MatrixXd& X) {
  if (params.config.depth == 0) return X;
  const ForwardCache fc = forward_cached(params, X);
  return fc.post.back();
}

namespace {

// Shared backward pass.  `seed` (n x d_out) holds d(objective)/d(output);
// writes grad_theta(objective) into `grad`.  When `per_example` is non-null
// it instead writes one flattened gradient per example row (seed must then
// select a single output component per call).
void backward_accumulate(const NetParams& params, const ForwardCache& fc,
                         const Eigen::MatrixXd& seed, NetParams* grad) {
  const NetConfig& cfg = params.config;
  Eigen::MatrixXd S = seed;  // n x d_{l+1}, running adjoint of pre[l]
  for (int l = cfg.depth; l >= 0; --l) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.layer_in(l)));
    grad->weights[l].noalias() = scale * (S.transpose() * fc.post[l]);
    grad->biases[l].noalias() = S.colwise().sum().transpose();
    if (l > 0) {
      Eigen::MatrixXd back = scale * (S * params.weights[l]);
      S = back.cwiseProduct(apply_act_deriv(cfg.activation, fc.pre[l - 1]));
    }
  }
}

}  // namespace

JacobianBlock jacobian(const NetParams& params, const Eigen::MatrixXd& X) {
  const NetConfig& cfg = params.config;
  if (cfg.output_dim != 1) throw ConfigError("jacobian requires output_dim == 1");
  if (X.rows() == 0) throw ConfigError("jacobian: empty batch");
  const ForwardCache fc = forward_cached(params, X);
  const int n = static_cast<int>(X.rows());
  const std::int64_t p = cfg.param_count();

  JacobianBlock jb;
  jb.values.resize(p, n);
  jb.example_ids.resize(n);
  jb.snapshot_id = snapshot_tag(params);

  // Column-at-a-time backward with unit seed; layer blocks are written in
  // flat order (A^l row-major, then b^l).
  std::vector<Eigen::MatrixXd> adj(cfg.num_layers());
  for (int j = 0; j < n; ++j) {
    jb.example_ids[j] = j;
    std::int64_t at = 0;
    // Walk down storing the adjoints, then emit in forward order.
    std::vector<Eigen::RowVectorXd> deltas(cfg.num_layers());
    deltas[cfg.depth] = Eigen::RowVectorXd::Ones(1);
    for (int l = cfg.depth; l > 0; --l) {
      const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.layer_in(l)));
      Eigen::RowVectorXd back = scale * (deltas[l] * params.weights[l]);
      deltas[l - 1] =
          back.cwiseProduct(apply_act_deriv(cfg.activation, fc.pre[l - 1].row(j)));
    }
    for (int l = 0; l <= cfg.depth; ++l) {
      const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.layer_in(l)));
      const int dout = cfg.layer_out(l);
      const int din = cfg.layer_in(l);
      for (int r = 0; r < dout; ++r) {
        const double dr = scale * deltas[l](r);
        for (int c = 0; c < din; ++c) jb.values(at++, j) = dr * fc.post[l](j, c);
      }
      for (int r = 0; r < dout; ++r) jb.values(at++, j) = deltas[l](r);
    }
  }
  return jb;
}

Eigen::MatrixXd tangent_features(const NetParams& params, const Eigen::MatrixXd& X) {
  const NetConfig& cfg = params.config;
  if (cfg.output_dim == 1) return jacobian(params, X).values.transpose();
  const ForwardCache fc = forward_cached(params, X);
  const int n = static_cast<int>(X.rows());
  const std::int64_t p = cfg.param_count();
  Eigen::MatrixXd F(n, p * cfg.output_dim);
  for (int j = 0; j < n; ++j) {
    for (int out = 0; out < cfg.output_dim; ++out) {
      std::vector<Eigen::RowVectorXd> deltas(cfg.num_layers());
      deltas[cfg.depth] = Eigen::RowVectorXd::Zero(cfg.output_dim);
      deltas[cfg.depth](out) = 1.0;
      for (int l = cfg.depth; l > 0; --l) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.layer_in(l)));
        Eigen::RowVectorXd back = scale * (deltas[l] * params.weights[l]);
        deltas[l - 1] =
            back.cwiseProduct(apply_act_deriv(cfg.activation, fc.pre[l - 1].row(j)));
      }
      std::int64_t at = static_cast<std::int64_t>(out) * p;
      for (int l = 0; l <= cfg.depth; ++l) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.layer_in(l)));
        const int dout = cfg.layer_out(l);
        const int din = cfg.layer_in(l);
        for (int r = 0; r < dout; ++r) {
          const double dr = scale * deltas[l](r);
          for (int c = 0; c < din; ++c) F(j, at++) = dr * fc.post[l](j, c);
        }
        for (int r = 0; r < dout; ++r) F(j, at++) = deltas[l](r);
      }
    }
  }
  return F;
}

Eigen::MatrixXd jvp(const NetParams& params, const Eigen::MatrixXd& X, const NetParams& dir) {
  const NetConfig& cfg = params.config;
  const ForwardCache fc = forward_cached(params, X);
  const int n = static_cast<int>(X.rows());
  Eigen::MatrixXd Xdot = Eigen::MatrixXd::Zero(n, cfg.input_dim);
  Eigen::MatrixXd Hdot;
  for (int l = 0; l <= cfg.depth; ++l) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.layer_in(l)));
    Hdot = scale * (fc.post[l] * dir.weights[l].transpose() + Xdot * params.weights[l].transpose());
    Hdot.rowwise() += dir.biases[l].transpose();
    if (l < cfg.depth) {
      Xdot = Hdot.cwiseProduct(apply_act_deriv(cfg.activation, fc.pre[l]));
    }
  }
  return Hdot;
}

NetParams weighted_loss_grad(const NetParams& params, const Eigen::MatrixXd& X,
                             const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  if (params.config.output_dim != 1) throw ConfigError("weighted_loss_grad requires output_dim == 1");
  if (X.rows() != y.size() || X.rows() != w.size()) {
    throw ConfigError("weighted_loss_grad: batch size mismatch between X, y, w");
  }
  const ForwardCache fc = forward_cached(params, X);
  const Eigen::VectorXd residual = fc.output().col(0) - y;
  NetParams grad = make_shaped(params.config);
  backward_accumulate(params, fc, (w.array() * residual.array()).matrix(), &grad);
  return grad;
}

NetParams weighted_loss_grad_multiclass(const NetParams& params, const Eigen::MatrixXd& X,
                                        const std::vector<int>& y_class,
                                        const Eigen::VectorXd& w, LossKind loss) {
  const NetConfig& cfg = params.config;
  if (static_cast<int>(y_class.size()) != X.rows() || w.size() != X.rows()) {
    throw ConfigError("weighted_loss_grad_multiclass: batch size mismatch");
  }
  const ForwardCache fc = forward_cached(params, X);
  Eigen::MatrixXd seed = fc.output();  // n x C
  if (loss == LossKind::kSoftmaxCrossEntropy) {
    for (int i = 0; i < seed.rows(); ++i) {
      const double mx = seed.row(i).maxCoeff();
      Eigen::RowVectorXd e = (seed.row(i).array() - mx).exp();
      seed.row(i) = e / e.sum();
    }
  }
  for (int i = 0; i < seed.rows(); ++i) {
    const int c = y_class[i];
    if (c < 0 || c >= cfg.output_dim) throw ConfigError("class label out of range");
    seed(i, c) -= 1.0;
    seed.row(i) *= w(i);
  }
  NetParams grad = make_shaped(cfg);
  backward_accumulate(params, fc, seed, &grad);
  return grad;
}

namespace {

NetParams apply_step(const NetParams& params, const NetParams& grad, double eta) {
  if (!grad.all_finite()) {
    std::ostringstream msg;
    msg << "non-finite gradient in weighted SGD step (eta=" << eta << ")";
    throw NumericError(msg.str());
  }
  NetParams next = params;
  next.axpy(-eta, grad);
  return next;
}

}  // namespace

NetParams weighted_sgd_step(const NetParams& params, const Eigen::MatrixXd& X,
                            const Eigen::VectorXd& y, const Eigen::VectorXd& w, double eta) {
  return apply_step(params, weighted_loss_grad(params, X, y, w), eta);
}

NetParams weighted_sgd_step_multiclass(const NetParams& params, const Eigen::MatrixXd& X,
                                       const std::vector<int>& y_class, const Eigen::VectorXd& w,
                                       double eta, LossKind loss) {
  return apply_step(params, weighted_loss_grad_multiclass(params, X, y_class, w, loss), eta);
}

}  // namespace rlab::net
