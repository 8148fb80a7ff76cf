#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>
#include <vector>

#include "rlab/data.hpp"
#include "rlab/meta.hpp"

using namespace rlab;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct TinyInstance {
  net::NetParams params;
  MatrixXd X, Xv;
  VectorXd y, yv, w;
  double eta = 1e-3;
};

TinyInstance random_instance(std::uint64_t seed, int max_width = 16, int max_n = 8,
                             int max_m = 4) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> depth_pick(1, 2);
  std::uniform_int_distribution<int> width_pick(4, max_width);
  std::uniform_int_distribution<int> n_pick(2, max_n);
  std::uniform_int_distribution<int> m_pick(1, max_m);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  TinyInstance t;
  net::NetConfig cfg;
  cfg.depth = depth_pick(rng);
  cfg.input_dim = 3;
  cfg.hidden_width = width_pick(rng);
  t.params = net::random_params(cfg, rng());
  const int n = n_pick(rng);
  const int m = m_pick(rng);
  t.X.resize(n, 3);
  t.Xv.resize(m, 3);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 3; ++j) t.X(i, j) = 0.5 * gauss(rng);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < 3; ++j) t.Xv(i, j) = 0.5 * gauss(rng);
  t.y.resize(n);
  t.yv.resize(m);
  t.w.resize(n);
  for (int i = 0; i < n; ++i) t.y(i) = unit(rng) < 0.5 ? 1.0 : -1.0;
  for (int i = 0; i < m; ++i) t.yv(i) = unit(rng) < 0.5 ? 1.0 : -1.0;
  for (int i = 0; i < n; ++i) t.w(i) = unit(rng);
  t.eta = 1e-4 + 9e-4 * unit(rng);
  return t;
}

data::ExampleSet noisy_clusters(int n, int d, double rate, std::uint64_t seed,
                                double separation = 6.0) {
  data::ExampleSet set = data::gen_clusters(n, d, 2, separation, seed);
  data::NoiseSpec spec;
  spec.kind = rate > 0 ? data::NoiseKind::kSymmetric : data::NoiseKind::kNone;
  spec.rate = rate;
  spec.seed = seed + 1;
  return data::inject_noise(set, spec);
}

}  // namespace

TEST_CASE("pseudo_update: zero weights return theta bitwise") {
  const TinyInstance t = random_instance(1);
  const net::NetParams hat =
      meta::pseudo_update(t.params, t.X, t.y, VectorXd::Zero(t.X.rows()), t.eta);
  CHECK(hat.flatten() == t.params.flatten());
}

TEST_CASE("pseudo_update: equals weighted_sgd_step and is linear in w") {
  const TinyInstance t = random_instance(2);
  const net::NetParams a = meta::pseudo_update(t.params, t.X, t.y, t.w, t.eta);
  const net::NetParams b = net::weighted_sgd_step(t.params, t.X, t.y, t.w, t.eta);
  CHECK(a.flatten() == b.flatten());

  const VectorXd w2 = VectorXd::Ones(t.X.rows()) - t.w;
  const VectorXd base = t.params.flatten();
  const VectorXd move_sum = (meta::pseudo_update(t.params, t.X, t.y, t.w + w2, t.eta).flatten() - base);
  const VectorXd move_parts =
      (meta::pseudo_update(t.params, t.X, t.y, t.w, t.eta).flatten() - base) +
      (meta::pseudo_update(t.params, t.X, t.y, w2, t.eta).flatten() - base);
  CHECK((move_sum - move_parts).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("hypergrad: exact backend matches finite differences on the tiny spec instance") {
  std::mt19937_64 rng(33);
  std::normal_distribution<double> gauss(0.0, 1.0);
  net::NetConfig cfg;
  cfg.depth = 1;
  cfg.input_dim = 3;
  cfg.hidden_width = 8;
  const net::NetParams params = net::random_params(cfg, 34);
  MatrixXd X(4, 3), Xv(2, 3);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) X(i, j) = 0.5 * gauss(rng);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) Xv(i, j) = 0.5 * gauss(rng);
  VectorXd y(4), yv(2), w(4);
  y << 1, -1, 1, -1;
  yv << 1, -1;
  w << 0.3, 0.8, 0.5, 0.1;
  const double eta = 1e-3;

  const meta::HypergradResult hg =
      meta::hypergrad(params, X, y, Xv, yv, w, eta, meta::Backend::kExact, nullptr, false);
  const VectorXd fd = meta::fd_hypergrad(params, X, y, Xv, yv, w, eta, 1e-6);
  const double rel =
      (fd - hg.g).lpNorm<Eigen::Infinity>() / std::max(fd.lpNorm<Eigen::Infinity>(), 1e-12);
  CHECK(rel <= 1e-6);
}

TEST_CASE("hypergrad: oracle equivalence on many random tiny instances") {
  for (std::uint64_t seed = 100; seed < 112; ++seed) {
    const TinyInstance t = random_instance(seed);
    const meta::HypergradResult hg = meta::hypergrad(t.params, t.X, t.y, t.Xv, t.yv, t.w, t.eta,
                                                     meta::Backend::kExact, nullptr, false);
    const VectorXd fd = meta::fd_hypergrad(t.params, t.X, t.y, t.Xv, t.yv, t.w, t.eta, 1e-6);
    const double rel =
        (fd - hg.g).lpNorm<Eigen::Infinity>() / std::max(fd.lpNorm<Eigen::Infinity>(), 1e-12);
    CHECK(rel <= 1e-6);
  }
}

TEST_CASE("hypergrad: perfectly fit clean subset gives an exactly zero gradient") {
  TinyInstance t = random_instance(7);
  // Make the clean labels equal the pseudo-updated network's predictions, so
  // u^v(theta_hat) = 0 and the chain rule has a zero factor.
  const net::NetParams hat = meta::pseudo_update(t.params, t.X, t.y, t.w, t.eta);
  t.yv = net::forward_scalar(hat, t.Xv);
  const meta::HypergradResult hg =
      meta::hypergrad(t.params, t.X, t.y, t.Xv, t.yv, t.w, t.eta, meta::Backend::kExact, nullptr,
                      false);
  CHECK(hg.g.lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("hypergrad: at t=0 on sign-separated data the clean gradients are negative") {
  const data::ExampleSet full = noisy_clusters(40, 8, 0.0, 50);
  const auto [clean, train] = data::take_clean_subset(full, 10, 51);
  net::NetConfig cfg;
  cfg.depth = 1;
  cfg.input_dim = 8;
  cfg.hidden_width = 1024;
  cfg.seed = 52;
  const net::NetParams params = net::init_network(cfg);
  const VectorXd w = VectorXd::Constant(train.size(), 0.5);
  const meta::HypergradResult hg =
      meta::hypergrad(params, train.X, train.pm1_observed(), clean.X, clean.pm1_observed(), w,
                      1e-3, meta::Backend::kExact, nullptr, false);
  // All samples are clean here; every weight should be pushed upward.
  for (int i = 0; i < hg.g.size(); ++i) CHECK(hg.g(i) < 0.0);
}

TEST_CASE("hypergrad: ntk_frozen without a cached Gram is rejected") {
  const TinyInstance t = random_instance(8);
  CHECK_THROWS_AS(meta::hypergrad(t.params, t.X, t.y, t.Xv, t.yv, t.w, t.eta,
                                  meta::Backend::kNtkFrozen, nullptr, false),
                  ConfigError);
}

TEST_CASE("hypergrad: diagnostics populate all three backends consistently") {
  const TinyInstance t = random_instance(9);
  const Eigen::MatrixXd k0 =
      net::jacobian(t.params, t.X).values.transpose() * net::jacobian(t.params, t.Xv).values;
  for (meta::Backend b :
       {meta::Backend::kExact, meta::Backend::kFirstOrder, meta::Backend::kNtkFrozen}) {
    const meta::HypergradResult hg =
        meta::hypergrad(t.params, t.X, t.y, t.Xv, t.yv, t.w, t.eta, b, &k0, true);
    REQUIRE(hg.diagnostics.has_value());
    const auto& d = *hg.diagnostics;
    const VectorXd& expect = b == meta::Backend::kExact
                                 ? d.g_exact
                                 : (b == meta::Backend::kFirstOrder ? d.g_first_order : d.g_ntk);
    CHECK(hg.g == expect);
    CHECK(d.e1_norm >= 0.0);
    CHECK(d.e2_norm >= 0.0);
  }
}

TEST_CASE("weight_step: identity, upper clip, lower clip") {
  VectorXd w(3), g(3);
  w << 0.5, 0.9, 0.2;
  g << 0.0, -0.5, 0.7;  // alpha*g = (0, -0.5, 0.7)
  const VectorXd out = meta::weight_step(w, g, 1.0);
  CHECK(out(0) == 0.5);
  CHECK(out(1) == 1.0);
  CHECK(out(2) == 0.0);
}

TEST_CASE("e1 shrinks quadratically in eta") {
  const TinyInstance base = random_instance(60, 16, 8, 4);
  const Eigen::MatrixXd k0 =
      net::jacobian(base.params, base.X).values.transpose() *
      net::jacobian(base.params, base.Xv).values;
  std::vector<double> e1;
  for (double eta : {1e-2, 5e-3, 2.5e-3}) {
    const meta::HypergradResult hg = meta::hypergrad(base.params, base.X, base.y, base.Xv,
                                                     base.yv, base.w, eta,
                                                     meta::Backend::kExact, &k0, true);
    e1.push_back(hg.diagnostics->e1_norm);
  }
  CHECK(e1[0] / e1[1] >= 3.0);
  CHECK(e1[1] / e1[2] >= 3.0);
}

TEST_CASE("e2 shrinks with width") {
  const data::ExampleSet full = noisy_clusters(60, 8, 0.4, 70);
  const auto [clean, train] = data::take_clean_subset(full, 12, 71);
  auto median_e2 = [&](int width) {
    std::vector<double> vals;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      net::NetConfig cfg;
      cfg.depth = 1;
      cfg.input_dim = 8;
      cfg.hidden_width = width;
      cfg.seed = 700 + seed;
      meta::MetaConfig mcfg;
      mcfg.eta = 1e-3;
      mcfg.beta = 1e-3;
      mcfg.epochs = 10;
      mcfg.measure_kernel = false;
      const meta::MetaRunResult run = meta::meta_train(mcfg, train, clean, cfg);
      vals.push_back(run.trace.epochs.back().e2_norm);
    }
    std::sort(vals.begin(), vals.end());
    return vals[2];
  };
  CHECK(median_e2(2048) < median_e2(128));
}

TEST_CASE("meta_train: initial residual is exactly -Y and weights start at 1/2") {
  const data::ExampleSet full = noisy_clusters(30, 6, 0.3, 80);
  const auto [clean, train] = data::take_clean_subset(full, 6, 81);
  net::NetConfig cfg;
  cfg.depth = 1;
  cfg.input_dim = 6;
  cfg.hidden_width = 64;
  cfg.seed = 82;
  meta::MetaConfig mcfg;
  mcfg.eta = 1e-3;
  mcfg.beta = 1e-3;
  mcfg.epochs = 3;
  mcfg.measure_kernel = false;
  const meta::MetaRunResult run = meta::meta_train(mcfg, train, clean, cfg);
  const auto& first = run.trace.epochs.front();
  const VectorXd y = train.pm1_observed();
  for (int i = 0; i < y.size(); ++i) {
    CHECK(first.residual(i) == -y(i));
    CHECK(first.weights(i) == 0.5);
  }
  CHECK(run.trace.epochs.size() == 4);  // rows t = 0..3
}

TEST_CASE("meta_train: weights stay inside [0,1] every epoch") {
  const data::ExampleSet full = noisy_clusters(40, 6, 0.4, 90);
  const auto [clean, train] = data::take_clean_subset(full, 8, 91);
  net::NetConfig cfg;
  cfg.depth = 1;
  cfg.input_dim = 6;
  cfg.hidden_width = 128;
  cfg.seed = 92;
  meta::MetaConfig mcfg;
  mcfg.eta = 1e-3;
  mcfg.beta = 0.05;  // aggressive coupling so clipping actually engages
  mcfg.epochs = 20;
  mcfg.measure_kernel = false;
  const meta::MetaRunResult run = meta::meta_train(mcfg, train, clean, cfg);
  for (const auto& e : run.trace.epochs) {
    CHECK(e.weights.minCoeff() >= 0.0);
    CHECK(e.weights.maxCoeff() <= 1.0);
  }
}

TEST_CASE("meta_train: all-clean run polarizes every weight to 1 by ceil(T1) and stays") {
  const data::ExampleSet full = noisy_clusters(70, 8, 0.0, 95);
  const auto [clean, train] = data::take_clean_subset(full, 10, 96);
  net::NetConfig cfg;
  cfg.depth = 1;
  cfg.input_dim = 8;
  cfg.hidden_width = 512;
  cfg.seed = 97;

  // Probe run to measure gamma_hat, then size beta for T1_pred ~ 5.
  meta::MetaConfig probe;
  probe.eta = 1e-3;
  probe.beta = 1e-3;
  probe.epochs = 0;
  const double gamma_hat = meta::meta_train(probe, train, clean, cfg).trace.gamma_hat;
  REQUIRE(gamma_hat > 0.0);

  meta::MetaConfig mcfg;
  mcfg.eta = 1e-3;
  mcfg.beta = 1.0 / (4.0 * clean.size() * gamma_hat);
  mcfg.epochs = 12;
  const meta::MetaRunResult run = meta::meta_train(mcfg, train, clean, cfg);

  const double t1_pred = 1.0 + 1.0 / (clean.size() * mcfg.beta * gamma_hat);
  const int t1_ceil = static_cast<int>(std::ceil(t1_pred));
  REQUIRE(t1_ceil < mcfg.epochs);
  for (const auto& e : run.trace.epochs) {
    if (e.epoch >= t1_ceil) CHECK(e.weights.minCoeff() == 1.0);  // reached by ceil(T1) and stays
  }
}

TEST_CASE("meta_train: divergence guard trips on an absurd step size") {
  const data::ExampleSet full = noisy_clusters(40, 6, 0.2, 98);
  const auto [clean, train] = data::take_clean_subset(full, 6, 99);
  net::NetConfig cfg;
  cfg.depth = 1;
  cfg.input_dim = 6;
  cfg.hidden_width = 64;
  cfg.seed = 100;
  meta::MetaConfig mcfg;
  mcfg.eta = 50.0;
  mcfg.beta = 1e-3;
  mcfg.epochs = 50;
  mcfg.measure_kernel = false;
  const meta::MetaRunResult run = meta::meta_train(mcfg, train, clean, cfg);
  CHECK(run.trace.diverged);
  CHECK(run.trace.epochs.size() < 52u);
}
