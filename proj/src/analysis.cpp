#include "rlab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "rlab/kernel.hpp"

namespace rlab::analysis {

namespace {

constexpr double kPolarTol = 1e-9;
constexpr double kBandTol = 1e-6;
constexpr double kPinnedTol = 1e-6;
constexpr double kPerturbTol = 1e-3;
constexpr double kMonotoneTol = 1e-6;

bool polarized(const trace::EpochRecord& e, const std::vector<bool>& noisy) {
  for (int i = 0; i < e.weights.size(); ++i) {
    if (noisy[i]) {
      if (e.weights(i) > kPolarTol) return false;
    } else {
      if (e.weights(i) < 1.0 - kPolarTol) return false;
    }
  }
  return true;
}

}  // namespace

double t1_predicted(int m, double beta, double gamma_hat) {
  if (m <= 0 || beta <= 0.0 || gamma_hat <= 0.0) {
    return std::numeric_limits<double>::infinity();
  }
  return 1.0 + 1.0 / (m * beta * gamma_hat);
}

PhaseReport detect_phases(const trace::RunTrace& t, const PhaseParams& p) {
  if (t.epochs.empty()) throw ConfigError("detect_phases: empty trace");
  const std::vector<bool>& noisy = t.noise_mask;
  if (noisy.size() != static_cast<size_t>(t.epochs.front().weights.size())) {
    throw ConfigError("detect_phases: trace is missing the noise mask");
  }

  PhaseReport r;
  r.t1_pred = t1_predicted(p.clean_size, p.beta, p.gamma_hat);
  r.threshold = p.kappa * (p.eta + (p.width > 0 ? std::pow(p.width, -0.25) : 0.0));
  r.final_val_inf = t.epochs.back().val_inf;

  std::size_t t1_idx = 0;
  for (std::size_t k = 0; k < t.epochs.size(); ++k) {
    if (polarized(t.epochs[k], noisy)) {
      r.t1_emp = t.epochs[k].epoch;
      t1_idx = k;
      break;
    }
  }

  // Early bands: clean in [1/2 - tol, 1], noisy in [0, 1/2 + tol] up to t1
  // (the whole trace when t1 was never reached).
  const std::size_t band_end = r.t1_emp ? t1_idx : t.epochs.size() - 1;
  r.early_band_ok = true;
  for (std::size_t k = 0; k <= band_end && r.early_band_ok; ++k) {
    const auto& e = t.epochs[k];
    for (int i = 0; i < e.weights.size(); ++i) {
      const double w = e.weights(i);
      if (noisy[i] ? w > 0.5 + kBandTol : w < 0.5 - kBandTol) {
        r.early_band_ok = false;
        break;
      }
    }
  }

  if (!r.t1_emp) return r;

  std::size_t t2_idx = t.epochs.size();  // one past the end when not found
  for (std::size_t k = t1_idx + 1; k < t.epochs.size(); ++k) {
    const auto& e = t.epochs[k];
    bool noisy_free = false;
    for (int i = 0; i < e.weights.size() && !noisy_free; ++i) {
      if (noisy[i] && e.weights(i) > kPinnedTol) noisy_free = true;
    }
    if (e.val_inf <= r.threshold || noisy_free) {
      r.t2_emp = e.epoch;
      t2_idx = k;
      break;
    }
  }

  const std::size_t filter_end = r.t2_emp ? t2_idx : t.epochs.size() - 1;
  r.filtering_noisy_pinned = true;
  r.filtering_monotone = true;
  for (std::size_t k = t1_idx + 1; k <= filter_end; ++k) {
    const auto& e = t.epochs[k];
    for (int i = 0; i < e.weights.size(); ++i) {
      if (noisy[i] && e.weights(i) > kPinnedTol) {
        r.filtering_noisy_pinned = false;
        break;
      }
    }
    if (e.val_inf > t.epochs[k - 1].val_inf + kMonotoneTol) r.filtering_monotone = false;
  }

  if (r.t2_emp) {
    for (std::size_t k = t2_idx + 1; k < t.epochs.size(); ++k) {
      const auto& e = t.epochs[k];
      for (int i = 0; i < e.weights.size(); ++i) {
        if (noisy[i] && e.weights(i) > kPerturbTol) {
          r.perturb_onset = e.epoch;
          break;
        }
      }
      if (r.perturb_onset) break;
    }
  }

  if (!t.epochs.empty() && t.epochs.front().val_residual.size() > 0) {
    const int mvals = static_cast<int>(t.epochs.front().val_residual.size());
    std::int64_t flips = 0;
    for (int j = 0; j < mvals; ++j) {
      bool crossed = false;
      bool prev_neg = false;
      for (const auto& e : t.epochs) {
        if (e.val_residual.size() != mvals) break;
        const double v = e.val_residual(j);
        if (!crossed) {
          if (std::abs(v) <= r.threshold) {
            crossed = true;
            prev_neg = v < 0.0;
          }
          continue;
        }
        const bool neg = v < 0.0;
        if (neg != prev_neg) ++flips;
        prev_neg = neg;
      }
    }
    r.val_sign_flips = flips;
  }
  return r;
}

void write_phase_report(const PhaseReport& r, const PhaseParams& p, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open phase report: " + path);
  out << "t1_pred = " << format_double(r.t1_pred) << "\n";
  out << "t1_emp = " << (r.t1_emp ? std::to_string(*r.t1_emp) : "none") << "\n";
  out << "t2_emp = " << (r.t2_emp ? std::to_string(*r.t2_emp) : "none") << "\n";
  out << "early_band_ok = " << (r.early_band_ok ? "true" : "false") << "\n";
  out << "filtering_noisy_pinned = " << (r.filtering_noisy_pinned ? "true" : "false") << "\n";
  out << "filtering_monotone = " << (r.filtering_monotone ? "true" : "false") << "\n";
  out << "perturb_onset = " << (r.perturb_onset ? std::to_string(*r.perturb_onset) : "none")
      << "\n";
  out << "final_val_inf = " << format_double(r.final_val_inf) << "\n";
  out << "threshold = " << format_double(r.threshold) << "\n";
  out << "val_sign_flips = "
      << (r.val_sign_flips ? std::to_string(*r.val_sign_flips) : "none") << "\n";
  out << "kappa = " << format_double(p.kappa) << "\n";
  out << "gamma_hat = " << format_double(p.gamma_hat) << "\n";
  out << "beta = " << format_double(p.beta) << "\n";
  out << "eta = " << format_double(p.eta) << "\n";
  out << "clean_size = " << p.clean_size << "\n";
  out << "width = " << format_double(p.width) << "\n";
  if (!out) throw IoError("failed writing phase report: " + path);
}

// ---------------------------------------------------------------------------

double ols_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw ConfigError("ols_slope: need at least two points");
  }
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double denom = n * sxx - sx * sx;
  if (denom == 0.0) throw NumericError("ols_slope: degenerate abscissae");
  return (n * sxy - sx * sy) / denom;
}

namespace {

double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

// One sample from the input distribution: uniform on the unit sphere.  The
// constant norm keeps kernel row means constant across points, which is the
// row-sum regularity the scaling statement conditions on.
Eigen::RowVectorXd draw_input(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::RowVectorXd x(d);
  double norm = 0.0;
  do {
    for (int k = 0; k < d; ++k) x(k) = gauss(rng);
    norm = x.norm();
  } while (norm == 0.0);
  return x / norm;
}

}  // namespace

ScalingMcResult scaling_monte_carlo(const ScalingMcConfig& cfg) {
  if (cfg.m_grid.empty()) throw ConfigError("scaling mc: empty m grid");
  for (std::size_t i = 1; i < cfg.m_grid.size(); ++i) {
    if (cfg.m_grid[i] <= cfg.m_grid[i - 1]) throw ConfigError("scaling mc: m grid must increase");
  }
  for (int m : cfg.m_grid) {
    if (m < 2 || m % 2 != 0) {
      throw ConfigError("scaling mc: m must be even so the +-1 labels can balance");
    }
  }
  if (cfg.replicates < 1) throw ConfigError("scaling mc: need at least one replicate");

  // Fixed kernel across draws; for the tangent kind that means one network
  // initialization shared by every replicate.
  net::NetParams params;
  if (cfg.kind == ScalingMcConfig::Kind::kTangentInit) {
    net::NetConfig ncfg;
    ncfg.depth = cfg.depth;
    ncfg.input_dim = cfg.input_dim;
    ncfg.hidden_width = cfg.width;
    ncfg.output_dim = 1;
    ncfg.activation = cfg.activation;
    ncfg.seed = derive_seed(cfg.seed, 0xFEED);
    params = net::init_network(ncfg);
  }

  auto features = [&](const Eigen::MatrixXd& X) -> Eigen::MatrixXd {
    switch (cfg.kind) {
      case ScalingMcConfig::Kind::kTangentInit:
        return net::tangent_features(params, X);
      case ScalingMcConfig::Kind::kRawFeature:
        return X;
      case ScalingMcConfig::Kind::kConstantFeature:
        return Eigen::MatrixXd::Ones(X.rows(), cfg.input_dim);
    }
    return X;
  };

  ScalingMcResult res;
  res.m_grid = cfg.m_grid;
  res.replicates = cfg.replicates;

  for (std::size_t mi = 0; mi < cfg.m_grid.size(); ++mi) {
    const int m = cfg.m_grid[mi];
    std::vector<double> abs_c0, abs_si, ratio;
    abs_c0.reserve(cfg.replicates);
    abs_si.reserve(cfg.replicates);
    ratio.reserve(cfg.replicates);
    for (int rep = 0; rep < cfg.replicates; ++rep) {
      std::mt19937_64 rng(
          derive_seed(cfg.seed, (static_cast<std::uint64_t>(mi) << 32) | (rep + 1)));
      Eigen::MatrixXd X(m, cfg.input_dim);
      for (int j = 0; j < m; ++j) X.row(j) = draw_input(cfg.input_dim, rng);
      const Eigen::RowVectorXd x_held = draw_input(cfg.input_dim, rng);

      Eigen::VectorXd uv(m);
      for (int j = 0; j < m; ++j) uv(j) = j % 2 == 0 ? -1.0 : 1.0;  // u^v = -y^v, balanced

      const Eigen::MatrixXd F = features(X);
      const Eigen::RowVectorXd f_held = features(x_held);
      const Eigen::VectorXd su = F.transpose() * uv;       // F^T u^v
      const Eigen::VectorXd ones_f = F.colwise().sum();    // F^T 1
      const double c0 = -ones_f.dot(su) / m;
      const double si = f_held.dot(su);

      abs_c0.push_back(std::abs(c0));
      abs_si.push_back(std::abs(si));
      ratio.push_back(std::abs(si) > 0.0 ? std::abs(c0) / std::abs(si) : 0.0);
    }
    res.median_c0.push_back(median_of(std::move(abs_c0)));
    res.median_si.push_back(median_of(std::move(abs_si)));
    res.median_ratio.push_back(median_of(std::move(ratio)));
  }

  if (cfg.m_grid.size() >= 3) {
    std::vector<double> lx, ls, lr;
    for (std::size_t i = 0; i < cfg.m_grid.size(); ++i) {
      if (res.median_si[i] > 0.0 && res.median_ratio[i] > 0.0) {
        lx.push_back(std::log(static_cast<double>(cfg.m_grid[i])));
        ls.push_back(std::log(res.median_si[i]));
        lr.push_back(std::log(res.median_ratio[i]));
      }
    }
    if (lx.size() >= 3) {
      res.slope_si = ols_slope(lx, ls);
      res.slope_ratio = ols_slope(lx, lr);
    } else {
      res.slope_si = std::numeric_limits<double>::quiet_NaN();
      res.slope_ratio = std::numeric_limits<double>::quiet_NaN();
    }
  } else {
    res.slope_si = std::numeric_limits<double>::quiet_NaN();
    res.slope_ratio = std::numeric_limits<double>::quiet_NaN();
  }
  return res;
}

void write_scaling_table(const ScalingMcResult& r, const std::string& csv_path) {
  std::ofstream out(csv_path, std::ios::binary);
  if (!out) throw IoError("cannot open scaling table: " + csv_path);
  out << "m,median_abs_c0,median_abs_si,median_ratio\n";
  for (std::size_t i = 0; i < r.m_grid.size(); ++i) {
    out << r.m_grid[i] << "," << format_double(r.median_c0[i]) << ","
        << format_double(r.median_si[i]) << "," << format_double(r.median_ratio[i]) << "\n";
  }
  if (!out) throw IoError("failed writing scaling table: " + csv_path);
}

void write_scaling_report(const ScalingMcResult& r, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open scaling report: " + path);
  out << "replicates = " << r.replicates << "\n";
  out << "slope_si = " << format_double(r.slope_si) << "\n";
  out << "slope_ratio = " << format_double(r.slope_ratio) << "\n";
  if (!out) throw IoError("failed writing scaling report: " + path);
}

// ---------------------------------------------------------------------------

std::vector<LinGapRow> linearization_gap(const LinGapConfig& cfg, const data::ExampleSet& train,
                                         const data::ExampleSet& clean) {
  if (cfg.widths.empty()) throw ConfigError("linearization_gap: empty width grid");
  if (cfg.steps < 0) throw ConfigError("linearization_gap: steps must be >= 0");

  const Eigen::MatrixXd& X = train.X;
  const Eigen::MatrixXd& Xp = clean.X;  // probe points
  const Eigen::VectorXd y = train.pm1_observed();
  const Eigen::VectorXd yv = clean.pm1_observed();
  const double alpha = cfg.beta / cfg.eta;

  std::vector<LinGapRow> rows;
  for (int width : cfg.widths) {
    net::NetConfig ncfg = cfg.base;
    ncfg.hidden_width = width;
    ncfg.output_dim = 1;
    net::NetParams params = net::init_network(ncfg);

    const Eigen::MatrixXd K_train = kernel::ntk_gram(params, X, X).values;
    const Eigen::MatrixXd K_probe = kernel::ntk_gram(params, Xp, X).values;
    const Eigen::MatrixXd K_val = kernel::ntk_gram(params, X, Xp).values;

    Eigen::VectorXd w = Eigen::VectorXd::Constant(X.rows(), 0.5);
    Eigen::VectorXd u_lin = -y;  // zero-prediction initialization
    Eigen::VectorXd f_lin_probe = Eigen::VectorXd::Zero(Xp.rows());

    for (int t = 0; t < cfg.steps; ++t) {
      const meta::HypergradResult hg = meta::hypergrad(params, X, y, Xp, yv, w, cfg.eta,
                                                       cfg.backend, &K_val, false);
      w = meta::weight_step(w, hg.g, alpha);
      params = net::weighted_sgd_step(params, X, y, w, cfg.eta);

      const Eigen::VectorXd s = w.cwiseProduct(u_lin);
      f_lin_probe -= cfg.eta * (K_probe * s);
      u_lin -= cfg.eta * (K_train * s);
    }

    const Eigen::VectorXd f_true = net::forward_scalar(params, Xp);
    rows.push_back({width, (f_lin_probe - f_true).lpNorm<Eigen::Infinity>()});
  }
  return rows;
}

void write_lingap_table(const std::vector<LinGapRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open lingap table: " + path);
  out << "width,gap\n";
  for (const auto& r : rows) out << r.width << "," << format_double(r.gap) << "\n";
  if (!out) throw IoError("failed writing lingap table: " + path);
}

// ---------------------------------------------------------------------------

void write_weight_dynamics_csv(const trace::RunTrace& t, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open figure file: " + path);
  out << "epoch,sample_id,weight,is_noisy\n";
  for (const auto& e : t.epochs) {
    for (int i = 0; i < e.weights.size(); ++i) {
      out << e.epoch << "," << t.sample_ids[i] << "," << format_double(e.weights(i)) << ","
          << (t.noise_mask[i] ? 1 : 0) << "\n";
    }
  }
  if (!out) throw IoError("failed writing figure file: " + path);
}

void write_mean_residual_csv(const trace::RunTrace& t, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open figure file: " + path);
  out << "epoch,mean_abs_val_residual,val_residual_inf_norm\n";
  for (const auto& e : t.epochs) {
    out << e.epoch << "," << format_double(e.val_mean_abs) << "," << format_double(e.val_inf)
        << "\n";
  }
  if (!out) throw IoError("failed writing figure file: " + path);
}

namespace {

void histogram_by_group(const Eigen::VectorXd& values, const std::vector<bool>& noisy,
                        double lo, double hi, int bins, std::ofstream& out) {
  const double span = hi > lo ? hi - lo : 1.0;
  std::vector<std::int64_t> clean_count(bins, 0), noisy_count(bins, 0);
  for (int i = 0; i < values.size(); ++i) {
    int b = static_cast<int>((values(i) - lo) / span * bins);
    b = std::clamp(b, 0, bins - 1);
    if (noisy[i]) {
      ++noisy_count[b];
    } else {
      ++clean_count[b];
    }
  }
  for (int b = 0; b < bins; ++b) {
    const double blo = lo + span * b / bins;
    const double bhi = lo + span * (b + 1) / bins;
    out << format_double(blo) << "," << format_double(bhi) << "," << clean_count[b] << ",clean\n";
    out << format_double(blo) << "," << format_double(bhi) << "," << noisy_count[b] << ",noisy\n";
  }
}

}  // namespace

void write_weight_distribution_csv(const trace::RunTrace& t, const std::string& path, int bins) {
  if (t.epochs.empty()) throw ConfigError("weight_distribution: empty trace");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open figure file: " + path);
  out << "bin_lo,bin_hi,count,group\n";
  histogram_by_group(t.epochs.back().weights, t.noise_mask, 0.0, 1.0, bins, out);
  if (!out) throw IoError("failed writing figure file: " + path);
}

void write_weight_directions_csv(const trace::RunTrace& t, const std::string& path, int epoch,
                                 int bins) {
  if (t.epochs.empty()) throw ConfigError("weight_directions: empty trace");
  const trace::EpochRecord* rec = nullptr;
  if (epoch < 0) {
    rec = &t.epochs[t.epochs.size() / 2];
  } else {
    for (const auto& e : t.epochs) {
      if (e.epoch == epoch) {
        rec = &e;
        break;
      }
    }
    if (rec == nullptr) throw ConfigError("weight_directions: epoch not present in trace");
  }
  if (rec->direction.size() == 0) {
    throw ConfigError("weight_directions: trace carries no directions at the requested epoch");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open figure file: " + path);
  out << "bin_lo,bin_hi,count,group\n";
  histogram_by_group(rec->direction, t.noise_mask, rec->direction.minCoeff(),
                     rec->direction.maxCoeff(), bins, out);
  if (!out) throw IoError("failed writing figure file: " + path);
}

}  // namespace rlab::analysis
