#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rlab/data.hpp"
#include "rlab/meta.hpp"
#include "rlab/net.hpp"
#include "rlab/trace.hpp"

namespace rlab::analysis {

// ---------------------------------------------------------------------------
// Phase detection

double t1_predicted(int m, double beta, double gamma_hat);

struct PhaseParams {
  int clean_size = 0;      // m
  double beta = 0.0;       // alpha*eta
  double gamma_hat = 0.0;  // measured mean-centered sign margin
  double width = 0.0;      // d~ of the trained net
  double eta = 0.0;
  double kappa = 3.0;      // multiplier on the eta + d~^{-1/4} residual scale
};

struct PhaseReport {
  double t1_pred = 0.0;
  std::optional<int> t1_emp;  // first epoch with clean w >= 1-1e-9, noisy w <= 1e-9
  std::optional<int> t2_emp;  // first epoch after t1 with small val residual or a freed noisy weight
  bool early_band_ok = false;       // w within the 1/2 bands up to t1
  bool filtering_noisy_pinned = false;  // noisy w <= 1e-6 on (t1, t2]
  bool filtering_monotone = false;      // ||u^v||_inf non-increasing on (t1, t2] (tol 1e-6)
  std::optional<int> perturb_onset;     // first epoch > t2 with some noisy w > 1e-3
  double final_val_inf = 0.0;
  double threshold = 0.0;  // kappa * (eta + width^{-1/4})
  // Proxy diagnostic for the stable-convergence assumption: total sign flips
  // of clean-subset residual entries after each entry first drops below the
  // threshold.  Present only when the trace carries val residual vectors.
  std::optional<std::int64_t> val_sign_flips;
};

PhaseReport detect_phases(const trace::RunTrace& t, const PhaseParams& p);

void write_phase_report(const PhaseReport& r, const PhaseParams& p, const std::string& path);

// ---------------------------------------------------------------------------
// Centering-correction scaling Monte Carlo

struct ScalingMcConfig {
  enum class Kind { kTangentInit, kRawFeature, kConstantFeature };
  Kind kind = Kind::kRawFeature;
  int input_dim = 16;
  int width = 256;  // tangent kernel only
  int depth = 1;
  net::Activation activation = net::Activation::kTanh;
  std::vector<int> m_grid;
  int replicates = 200;
  std::uint64_t seed = 0;
};

struct ScalingMcResult {
  std::vector<int> m_grid;
  std::vector<double> median_c0;
  std::vector<double> median_si;
  std::vector<double> median_ratio;
  double slope_si = 0.0;     // log-log slope of median |S_i| vs m
  double slope_ratio = 0.0;  // log-log slope of median |c0|/|S_i| vs m
  int replicates = 0;
};

// Per draw: m clean points with balanced +-1 labels (u^v = -y^v), one
// held-out point; c0 = -(1/m) 1^T K_m u^v and S_i = K(x_i, X_clean) u^v,
// computed via feature mat-vecs (never forming K_m).
ScalingMcResult scaling_monte_carlo(const ScalingMcConfig& cfg);

void write_scaling_table(const ScalingMcResult& r, const std::string& csv_path);
void write_scaling_report(const ScalingMcResult& r, const std::string& path);

// Ordinary least squares slope of y against x (used on log-log medians).
double ols_slope(const std::vector<double>& x, const std::vector<double>& y);

// ---------------------------------------------------------------------------
// Linearized-network agreement across widths

struct LinGapConfig {
  net::NetConfig base;  // hidden_width overridden per grid entry
  std::vector<int> widths;
  double eta = 1e-3;
  double beta = 1e-3;
  int steps = 50;
  meta::Backend backend = meta::Backend::kExact;
};

struct LinGapRow {
  int width = 0;
  double gap = 0.0;  // max over probe points of |f_lin^(t) - f^(t)|
};

// Runs the bilevel loop on the true network, evolves the kernel-space
// linear model with the identical weight sequence, and reports the probe
// gap after `steps` epochs (probes are the clean-subset inputs).
std::vector<LinGapRow> linearization_gap(const LinGapConfig& cfg, const data::ExampleSet& train,
                                         const data::ExampleSet& clean);

void write_lingap_table(const std::vector<LinGapRow>& rows, const std::string& path);

// ---------------------------------------------------------------------------
// Figure data (one CSV per diagnostic panel; plotting is external)

void write_weight_dynamics_csv(const trace::RunTrace& t, const std::string& path);
void write_mean_residual_csv(const trace::RunTrace& t, const std::string& path);
void write_weight_distribution_csv(const trace::RunTrace& t, const std::string& path,
                                   int bins = 20);
// epoch < 0 selects the mid-training record.
void write_weight_directions_csv(const trace::RunTrace& t, const std::string& path,
                                 int epoch = -1, int bins = 40);

}  // namespace rlab::analysis
