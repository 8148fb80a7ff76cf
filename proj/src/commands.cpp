#include "rlab/commands.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "rlab/analysis.hpp"
#include "rlab/data.hpp"
#include "rlab/fbr.hpp"
#include "rlab/kernel.hpp"
#include "rlab/manifest.hpp"
#include "rlab/meta.hpp"
#include "rlab/net.hpp"
#include "rlab/trace.hpp"

namespace fs = std::filesystem;

namespace rlab::cli {

namespace {

// Seed streams derived from the master seed; ids documented in FORMATS.md.
constexpr std::uint64_t kStreamClusters = 1;
constexpr std::uint64_t kStreamNoise = 2;
constexpr std::uint64_t kStreamCleanSubset = 3;
constexpr std::uint64_t kStreamNetInit = 4;
constexpr std::uint64_t kStreamShuffle = 5;
constexpr std::uint64_t kStreamTestSplit = 6;
constexpr std::uint64_t kStreamMonteCarlo = 7;

int guard(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  }
}

data::NoiseSpec noise_from_config(const Config& cfg, std::uint64_t master, int classes) {
  data::NoiseSpec spec;
  const std::string kind = cfg.get_or("data", "noise_kind", "none");
  if (kind == "none") {
    spec.kind = data::NoiseKind::kNone;
  } else if (kind == "symmetric") {
    spec.kind = data::NoiseKind::kSymmetric;
  } else if (kind == "asymmetric") {
    spec.kind = data::NoiseKind::kAsymmetric;
    spec.class_map = cfg.get_int_list_or("data", "class_map", {});
  } else {
    throw ConfigError("unknown noise_kind '" + kind + "'");
  }
  spec.rate = cfg.get_double_or("data", "noise_rate", 0.0);
  spec.seed = derive_seed(master, kStreamNoise);
  spec.validate(classes);
  return spec;
}

net::NetConfig net_from_config(const Config& cfg, std::uint64_t master, int input_dim,
                               int output_dim) {
  net::NetConfig ncfg;
  ncfg.depth = cfg.get_int_or("net", "depth", 1);
  ncfg.hidden_width = cfg.get_int_or("net", "width", 64);
  ncfg.activation = net::activation_from_string(cfg.get_or("net", "activation", "tanh"));
  ncfg.input_dim = input_dim;
  ncfg.output_dim = output_dim;
  ncfg.seed = derive_seed(master, kStreamNetInit);
  ncfg.validate();
  return ncfg;
}

struct Splits {
  data::ExampleSet train;
  data::ExampleSet clean;
  data::ExampleSet test;
};

Splits make_splits(const Config& cfg, const data::ExampleSet& full, std::uint64_t master) {
  const int m = cfg.get_int("data", "clean_size");
  const int test_size = cfg.get_int_or("data", "test_size", 0);
  Splits s;
  auto [clean, rest] = data::take_clean_subset(full, m, derive_seed(master, kStreamCleanSubset));
  s.clean = std::move(clean);
  if (test_size > 0) {
    auto [test, train] =
        data::split_off(rest, test_size, derive_seed(master, kStreamTestSplit), data::Split::kTest);
    s.test = std::move(test);
    s.train = std::move(train);
  } else {
    s.train = std::move(rest);
  }
  s.train.split = data::Split::kTrain;
  return s;
}

std::string run_dir_name(const std::string& run_name, std::uint64_t seed) {
  if (!run_name.empty()) return run_name;
  std::ostringstream name;
  name << "run-" << std::time(nullptr) << "-s" << seed;
  return name.str();
}

double test_accuracy_meta(const net::NetParams& params, const data::ExampleSet& test) {
  if (test.size() == 0) return -1.0;
  const Eigen::VectorXd f = net::forward_scalar(params, test.X);
  const Eigen::VectorXd y = test.pm1_clean();
  int hits = 0;
  for (int i = 0; i < f.size(); ++i) {
    const double pred = f(i) >= 0.0 ? 1.0 : -1.0;
    if (pred == y(i)) ++hits;
  }
  return static_cast<double>(hits) / test.size();
}

double test_accuracy_fbr(const net::NetParams& params, const data::ExampleSet& test) {
  if (test.size() == 0) return -1.0;
  const Eigen::MatrixXd f = net::forward(params, test.X);
  int hits = 0;
  for (int i = 0; i < f.rows(); ++i) {
    int arg = 0;
    f.row(i).maxCoeff(&arg);
    if (arg == test.y_clean[i]) ++hits;
  }
  return static_cast<double>(hits) / test.size();
}

// Spot-check of the exact hypergradient against central finite differences
// on a handful of weight coordinates.
double hypergrad_self_check(const net::NetParams& params, const Eigen::MatrixXd& X,
                            const Eigen::VectorXd& y, const Eigen::MatrixXd& Xv,
                            const Eigen::VectorXd& yv, const Eigen::VectorXd& w, double eta) {
  const meta::HypergradResult hg =
      meta::hypergrad(params, X, y, Xv, yv, w, eta, meta::Backend::kExact, nullptr, false);
  const int probes = std::min<int>(6, static_cast<int>(w.size()));
  std::vector<int> coords(probes);
  for (int k = 0; k < probes; ++k) coords[k] = k * (static_cast<int>(w.size()) / probes);
  const Eigen::VectorXd fd = meta::fd_hypergrad_coords(params, X, y, Xv, yv, w, eta, coords, 1e-6);
  double rel = 0.0;
  const double scale = std::max(fd.lpNorm<Eigen::Infinity>(), 1e-12);
  for (int k = 0; k < probes; ++k) {
    rel = std::max(rel, std::abs(fd(k) - hg.g(coords[k])) / scale);
  }
  return rel;
}

int train_core(const std::string& mode, const Config& cfg, const std::string& dataset_path,
               const std::string& out_dir_flag, const std::string& run_name, bool self_check) {
  const auto t_start = std::chrono::steady_clock::now();
  const std::uint64_t master = cfg.get_u64("data", "seed");

  const data::RlabFile file = data::load_rlab(dataset_path);
  Splits splits = make_splits(cfg, file.set, master);

  RunManifest manifest = manifest_from_config(cfg);
  manifest.mode = mode;
  manifest.master_seed = master;
  manifest.dataset_path = dataset_path;
  manifest.dataset_checksum = checksum_hex(data::fnv1a_file(dataset_path));

  const fs::path run_dir = fs::path(resolve_out_dir(out_dir_flag, cfg)) /
                           run_dir_name(run_name, master);
  fs::create_directories(run_dir);

  trace::RunTrace* trace_out = nullptr;
  meta::MetaRunResult meta_result;
  fbr::FbrRunResult fbr_result;
  const bool is_fbr = mode == "fbr";
  double accuracy = -1.0;

  if (is_fbr) {
    const int C = file.set.num_classes;
    fbr::FbrConfig fcfg;
    fcfg.alpha = cfg.get_double("fbr", "alpha");
    fcfg.lambda_plus = cfg.get_double_or("fbr", "lambda_plus", 1.0);
    fcfg.lambda_minus = cfg.get_double_or("fbr", "lambda_minus", C > 1 ? 1.0 / (C - 1) : 0.0);
    fcfg.feature_map =
        fbr::feature_map_from_string(cfg.get_or("fbr", "feature_map", "penultimate"));
    fcfg.batch_size = cfg.get_int_or("fbr", "batch_size", 128);
    fcfg.epochs = cfg.get_int("fbr", "epochs");
    fcfg.eta = cfg.get_double("fbr", "eta");
    const std::string loss = cfg.get_or("fbr", "loss", "squared");
    if (loss == "squared") {
      fcfg.loss = net::LossKind::kSquared;
    } else if (loss == "softmax_ce") {
      fcfg.loss = net::LossKind::kSoftmaxCrossEntropy;
    } else {
      throw ConfigError("unknown fbr loss '" + loss + "'");
    }
    fcfg.anneal_rate = cfg.get_double_or("fbr", "anneal_rate", 1.0);
    fcfg.shuffle_seed = derive_seed(master, kStreamShuffle);

    const net::NetConfig ncfg = net_from_config(cfg, master, splits.train.dim(), C);
    fbr_result = fbr::fbr_train(fcfg, splits.train, splits.clean, ncfg);
    trace_out = &fbr_result.trace;
    accuracy = test_accuracy_fbr(fbr_result.final_params, splits.test);
  } else {
    meta::MetaConfig mcfg;
    mcfg.eta = cfg.get_double("meta", "eta");
    mcfg.beta = cfg.get_double("meta", "beta");
    mcfg.epochs = cfg.get_int("meta", "epochs");
    mcfg.diagnostics = cfg.get_int_or("meta", "diagnostics", 1) != 0;
    mcfg.measure_kernel = cfg.get_int_or("meta", "measure_kernel", 1) != 0;
    if (mode == "meta-exact") {
      mcfg.backend = meta::Backend::kExact;
    } else if (mode == "meta-first-order") {
      mcfg.backend = meta::Backend::kFirstOrder;
    } else if (mode == "meta-ntk") {
      mcfg.backend = meta::Backend::kNtkFrozen;
    } else {
      throw ConfigError("unknown train mode '" + mode + "'");
    }

    const net::NetConfig ncfg = net_from_config(cfg, master, splits.train.dim(), 1);

    if (self_check) {
      const net::NetParams params = net::init_network(ncfg);
      const Eigen::VectorXd w = Eigen::VectorXd::Constant(splits.train.size(), 0.5);
      const double rel =
          hypergrad_self_check(params, splits.train.X, splits.train.pm1_observed(),
                               splits.clean.X, splits.clean.pm1_observed(), w, mcfg.eta);
      std::cout << "self-check: exact hypergradient vs finite differences, max rel err = "
                << format_double(rel) << "\n";
      if (!(rel <= 1e-5)) {
        throw NumericError("hypergradient self-check failed (rel err " + format_double(rel) + ")");
      }
    }

    meta_result = meta::meta_train(mcfg, splits.train, splits.clean, ncfg);
    trace_out = &meta_result.trace;
    accuracy = test_accuracy_meta(meta_result.final_params, splits.test);

    analysis::PhaseParams pp;
    pp.clean_size = splits.clean.size();
    pp.beta = mcfg.beta;
    pp.gamma_hat = meta_result.trace.gamma_hat;
    pp.width = ncfg.hidden_width;
    pp.eta = mcfg.eta;
    pp.kappa = cfg.get_double_or("analysis", "kappa", 3.0);
    const analysis::PhaseReport pr = analysis::detect_phases(meta_result.trace, pp);
    manifest.summary["t1_pred"] = pr.t1_pred;
    manifest.summary["t1_emp"] = pr.t1_emp ? *pr.t1_emp : -1.0;
    manifest.summary["t2_emp"] = pr.t2_emp ? *pr.t2_emp : -1.0;
  }

  const trace::RunTrace& tr = *trace_out;
  trace::write_trace_csv(tr, (run_dir / "trace.csv").string(), is_fbr);
  trace::write_val_trace_csv(tr, (run_dir / "val_trace.csv").string());
  trace::write_directions_csv(tr, (run_dir / "directions.csv").string());
  manifest.trace_files = {"trace.csv", "val_trace.csv", "directions.csv"};

  const auto& last = tr.epochs.back();
  manifest.summary["epochs"] = static_cast<double>(tr.epochs.size() - 1);
  manifest.summary["final_val_inf"] = last.val_inf;
  manifest.summary["gamma_hat"] = tr.gamma_hat;
  manifest.summary["mean_clean_weight"] = last.mean_clean_weight;
  manifest.summary["mean_noisy_weight"] = last.mean_noisy_weight;
  manifest.summary["weight_auc"] = last.weight_auc;
  manifest.summary["test_accuracy"] = accuracy;
  manifest.summary["diverged"] = tr.diverged ? 1.0 : 0.0;
  manifest.wall_clock_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  save_manifest(manifest, (run_dir / "manifest.json").string());

  std::cout << "run dir: " << run_dir.string() << "\n";
  std::cout << "final_val_inf = " << format_double(last.val_inf) << "\n";
  std::cout << "mean_clean_weight = " << format_double(last.mean_clean_weight)
            << ", mean_noisy_weight = " << format_double(last.mean_noisy_weight)
            << ", weight_auc = " << format_double(last.weight_auc) << "\n";
  if (accuracy >= 0.0) std::cout << "test_accuracy = " << format_double(accuracy) << "\n";
  if (tr.diverged) {
    std::cerr << "numeric error: divergence guard tripped (||u||_inf exceeded 10x its initial "
                 "value)\n";
    return kExitNumeric;
  }
  return kExitOk;
}

}  // namespace

std::string resolve_out_dir(const std::string& flag_value, const Config& cfg) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("RLAB_OUT_DIR"); env != nullptr && *env != '\0') return env;
  return cfg.get_or("run", "out_dir", "runs");
}

namespace {

// Every subcommand records what it did; train writes the full run manifest,
// the others this lighter variant.
void write_tool_manifest(const std::string& mode, const Config& cfg, const std::string& input,
                         const std::string& input_checksum,
                         const std::vector<std::string>& outputs, const std::string& path) {
  RunManifest m = manifest_from_config(cfg);
  m.mode = mode;
  m.master_seed = cfg.has("data", "seed") ? cfg.get_u64("data", "seed") : 0;
  m.dataset_path = input;
  m.dataset_checksum = input_checksum;
  m.trace_files = outputs;
  save_manifest(m, path);
}

}  // namespace

int cmd_gen_data(const GenDataArgs& args) {
  return guard([&]() {
    const Config cfg = Config::parse_file(args.config_path);
    const std::uint64_t master = cfg.get_u64("data", "seed");
    const int n = cfg.get_int("data", "n");
    const int d = cfg.get_int("data", "dim");
    const int classes = cfg.get_int_or("data", "classes", 2);
    const double separation = cfg.get_double_or("data", "separation", 4.0);

    data::ExampleSet set =
        data::gen_clusters(n, d, classes, separation, derive_seed(master, kStreamClusters));
    const data::NoiseSpec spec = noise_from_config(cfg, master, classes);
    set = data::inject_noise(set, spec);

    fs::path out = args.out_path.empty()
                       ? fs::path(resolve_out_dir("", cfg)) / "dataset.rlab"
                       : fs::path(args.out_path);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    data::save_rlab(set, spec, out.string());

    int flipped = 0;
    for (bool b : set.noise_mask) flipped += b ? 1 : 0;
    const std::string checksum = checksum_hex(data::fnv1a_file(out.string()));
    write_tool_manifest("gen-data", cfg, out.string(), checksum, {out.filename().string()},
                        out.string() + ".manifest.json");
    std::cout << "wrote " << out.string() << " (n=" << set.size() << ", d=" << set.dim()
              << ", classes=" << set.num_classes << ", flipped=" << flipped << ")\n";
    std::cout << "fnv1a64 = " << checksum << "\n";
    return kExitOk;
  });
}

int cmd_train(const TrainArgs& args) {
  return guard([&]() {
    const Config cfg = Config::parse_file(args.config_path);
    return train_core(args.mode, cfg, args.dataset_path, args.out_dir, args.run_name,
                      args.self_check);
  });
}

int cmd_replay(const ReplayArgs& args) {
  return guard([&]() {
    const RunManifest m = load_manifest(args.manifest_path);
    const std::string sum = checksum_hex(data::fnv1a_file(m.dataset_path));
    if (sum != m.dataset_checksum) {
      throw IoError("dataset checksum mismatch: manifest says " + m.dataset_checksum +
                    ", file is " + sum);
    }
    return train_core(m.mode, m.to_config(), m.dataset_path, args.out_dir, args.run_name, false);
  });
}

namespace {

int analyze_phases(const AnalyzeArgs& args) {
  const fs::path run_dir(args.run_dir);
  const RunManifest m = load_manifest((run_dir / "manifest.json").string());
  if (m.mode == "fbr") {
    throw ConfigError("phase detection applies to meta traces, not mode 'fbr'");
  }
  const Config cfg = m.to_config();
  trace::RunTrace tr = trace::load_trace_csv((run_dir / "trace.csv").string());
  if (fs::exists(run_dir / "val_trace.csv")) {
    trace::merge_val_trace_csv(&tr, (run_dir / "val_trace.csv").string());
  }

  analysis::PhaseParams pp;
  pp.clean_size = cfg.get_int("data", "clean_size");
  pp.beta = cfg.get_double("meta", "beta");
  pp.gamma_hat = m.summary.count("gamma_hat") ? m.summary.at("gamma_hat") : 0.0;
  pp.width = cfg.get_int_or("net", "width", 64);
  pp.eta = cfg.get_double("meta", "eta");
  pp.kappa = cfg.get_double_or("analysis", "kappa", 3.0);

  const analysis::PhaseReport pr = analysis::detect_phases(tr, pp);
  const fs::path out_dir = args.out_dir.empty() ? run_dir : fs::path(args.out_dir);
  fs::create_directories(out_dir);
  analysis::write_phase_report(pr, pp, (out_dir / "phase_report.txt").string());
  write_tool_manifest("analyze-phases", cfg, (run_dir / "trace.csv").string(), "",
                      {"phase_report.txt"}, (out_dir / "analyze_manifest.json").string());
  std::cout << "t1_pred = " << format_double(pr.t1_pred) << "\n";
  std::cout << "t1_emp = " << (pr.t1_emp ? std::to_string(*pr.t1_emp) : "none") << "\n";
  std::cout << "t2_emp = " << (pr.t2_emp ? std::to_string(*pr.t2_emp) : "none") << "\n";
  std::cout << "wrote " << (out_dir / "phase_report.txt").string() << "\n";
  return kExitOk;
}

int analyze_scaling(const AnalyzeArgs& args) {
  const Config cfg = Config::parse_file(args.config_path);
  analysis::ScalingMcConfig pc;
  const std::string kind = cfg.get_or("scaling", "kernel", "raw");
  if (kind == "raw") {
    pc.kind = analysis::ScalingMcConfig::Kind::kRawFeature;
  } else if (kind == "tangent") {
    pc.kind = analysis::ScalingMcConfig::Kind::kTangentInit;
  } else if (kind == "constant") {
    pc.kind = analysis::ScalingMcConfig::Kind::kConstantFeature;
  } else {
    throw ConfigError("unknown scaling kernel '" + kind + "'");
  }
  pc.input_dim = cfg.get_int_or("scaling", "input_dim", 16);
  pc.width = cfg.get_int_or("scaling", "width", 256);
  pc.depth = cfg.get_int_or("scaling", "depth", 1);
  pc.m_grid = cfg.get_int_list_or("scaling", "m_grid", {64, 256, 1024});
  pc.replicates = cfg.get_int_or("scaling", "replicates", 200);
  pc.seed = derive_seed(cfg.get_u64("data", "seed"), kStreamMonteCarlo);

  const analysis::ScalingMcResult res = analysis::scaling_monte_carlo(pc);
  const fs::path out_dir(args.out_dir.empty() ? "." : args.out_dir);
  fs::create_directories(out_dir);
  analysis::write_scaling_table(res, (out_dir / "scaling_table.csv").string());
  analysis::write_scaling_report(res, (out_dir / "scaling_report.txt").string());
  write_tool_manifest("analyze-scaling", cfg, args.config_path, "",
                      {"scaling_table.csv", "scaling_report.txt"},
                      (out_dir / "analyze_manifest.json").string());
  std::cout << "slope_si = " << format_double(res.slope_si)
            << ", slope_ratio = " << format_double(res.slope_ratio) << "\n";
  std::cout << "wrote " << (out_dir / "scaling_table.csv").string() << "\n";
  return kExitOk;
}

int analyze_lingap(const AnalyzeArgs& args) {
  const Config cfg = Config::parse_file(args.config_path);
  const std::uint64_t master = cfg.get_u64("data", "seed");
  const data::RlabFile file = data::load_rlab(args.dataset_path);
  const Splits splits = make_splits(cfg, file.set, master);

  analysis::LinGapConfig lc;
  lc.base = net_from_config(cfg, master, splits.train.dim(), 1);
  lc.widths = cfg.get_int_list_or("lingap", "widths", {128, 512, 2048});
  lc.eta = cfg.get_double_or("lingap", "eta", 1e-3);
  lc.beta = cfg.get_double_or("lingap", "beta", 1e-3);
  lc.steps = cfg.get_int_or("lingap", "steps", 50);

  const auto rows = analysis::linearization_gap(lc, splits.train, splits.clean);
  const fs::path out_dir(args.out_dir.empty() ? "." : args.out_dir);
  fs::create_directories(out_dir);
  analysis::write_lingap_table(rows, (out_dir / "lingap.csv").string());
  write_tool_manifest("analyze-lingap", cfg, args.dataset_path,
                      checksum_hex(data::fnv1a_file(args.dataset_path)), {"lingap.csv"},
                      (out_dir / "analyze_manifest.json").string());
  for (const auto& r : rows) {
    std::cout << "width " << r.width << ": gap = " << format_double(r.gap) << "\n";
  }
  std::cout << "wrote " << (out_dir / "lingap.csv").string() << "\n";
  return kExitOk;
}

int analyze_figures(const AnalyzeArgs& args) {
  const fs::path run_dir(args.run_dir);
  const RunManifest m = load_manifest((run_dir / "manifest.json").string());
  const Config cfg = m.to_config();
  const std::uint64_t master = m.master_seed;

  trace::RunTrace tr = trace::load_trace_csv((run_dir / "trace.csv").string());
  trace::merge_val_trace_csv(&tr, (run_dir / "val_trace.csv").string());
  trace::merge_directions_csv(&tr, (run_dir / "directions.csv").string());

  const fs::path out_dir = args.out_dir.empty() ? run_dir / "figures" : fs::path(args.out_dir);
  fs::create_directories(out_dir);

  analysis::write_weight_dynamics_csv(tr, (out_dir / "weight_dynamics.csv").string());
  analysis::write_mean_residual_csv(tr, (out_dir / "mean_residual.csv").string());
  analysis::write_weight_distribution_csv(tr, (out_dir / "weight_distribution.csv").string());
  analysis::write_weight_directions_csv(tr, (out_dir / "weight_directions.csv").string());

  // Kernel histograms at initialization: tangent NTK for the meta modes,
  // the configured FBR feature map otherwise.
  const data::RlabFile file = data::load_rlab(m.dataset_path);
  const Splits splits = make_splits(cfg, file.set, master);
  const bool is_fbr = m.mode == "fbr";
  const int out_dim = is_fbr ? file.set.num_classes : 1;
  const net::NetConfig ncfg = net_from_config(cfg, master, splits.train.dim(), out_dim);
  const net::NetParams params = net::init_network(ncfg);

  kernel::GramMatrix raw, kvv;
  if (is_fbr) {
    const auto map =
        fbr::feature_map_from_string(cfg.get_or("fbr", "feature_map", "penultimate"));
    const Eigen::MatrixXd Ftr = map == fbr::FeatureMap::kPenultimate
                                    ? net::penultimate_features(params, splits.train.X)
                                    : net::tangent_features(params, splits.train.X);
    const Eigen::MatrixXd Fv = map == fbr::FeatureMap::kPenultimate
                                   ? net::penultimate_features(params, splits.clean.X)
                                   : net::tangent_features(params, splits.clean.X);
    raw = kernel::gram_from_features(Ftr, Fv);
    kvv = kernel::gram_from_features(Fv, Fv);
  } else {
    raw = kernel::ntk_gram(params, splits.train.X, splits.clean.X);
    kvv = kernel::ntk_gram(params, splits.clean.X, splits.clean.X);
  }
  kernel::CenteringSpec cspec;
  cspec.mode = kernel::Centering::kMeanCentered;
  cspec.col_gram = &kvv;
  const kernel::GramMatrix centered = kernel::center_gram(raw, cspec);

  const auto raw_stats = kernel::kernel_stats(raw, splits.train.y_clean, splits.clean.y_clean);
  const auto cen_stats =
      kernel::kernel_stats(centered, splits.train.y_clean, splits.clean.y_clean);
  kernel::write_histogram_csv(raw_stats, (out_dir / "ntk_hist.csv").string());
  kernel::write_histogram_csv(cen_stats, (out_dir / "centered_ntk_hist.csv").string());

  write_tool_manifest(
      "analyze-figures", cfg, (run_dir / "trace.csv").string(), "",
      {"weight_dynamics.csv", "mean_residual.csv", "weight_distribution.csv",
       "weight_directions.csv", "ntk_hist.csv", "centered_ntk_hist.csv"},
      (out_dir / "analyze_manifest.json").string());
  std::cout << "wrote 6 figure CSVs under " << out_dir.string() << "\n";
  return kExitOk;
}

}  // namespace

int cmd_analyze(const AnalyzeArgs& args) {
  return guard([&]() {
    if (args.what == "phases") return analyze_phases(args);
    if (args.what == "scaling") return analyze_scaling(args);
    if (args.what == "lingap") return analyze_lingap(args);
    if (args.what == "figures") return analyze_figures(args);
    throw ConfigError("unknown analyze target '" + args.what +
                      "' (expected phases, scaling, lingap or figures)");
  });
}

int cmd_self_check(std::uint64_t seed, int instances) {
  return guard([&]() {
    std::mt19937_64 rng(seed);
    double worst = 0.0;
    for (int k = 0; k < instances; ++k) {
      std::uniform_int_distribution<int> depth_pick(1, 2);
      std::uniform_int_distribution<int> width_pick(4, 16);
      std::uniform_int_distribution<int> n_pick(2, 8);
      std::uniform_int_distribution<int> m_pick(1, 4);
      net::NetConfig ncfg;
      ncfg.depth = depth_pick(rng);
      ncfg.input_dim = 3;
      ncfg.hidden_width = width_pick(rng);
      ncfg.output_dim = 1;
      ncfg.seed = rng();
      const net::NetParams params = net::random_params(ncfg, rng());

      const int n = n_pick(rng);
      const int m = m_pick(rng);
      std::normal_distribution<double> gauss(0.0, 1.0);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      Eigen::MatrixXd X(n, 3), Xv(m, 3);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < 3; ++j) X(i, j) = gauss(rng) / 2.0;
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < 3; ++j) Xv(i, j) = gauss(rng) / 2.0;
      Eigen::VectorXd y(n), yv(m), w(n);
      for (int i = 0; i < n; ++i) y(i) = unit(rng) < 0.5 ? 1.0 : -1.0;
      for (int i = 0; i < m; ++i) yv(i) = unit(rng) < 0.5 ? 1.0 : -1.0;
      for (int i = 0; i < n; ++i) w(i) = unit(rng);
      const double eta = 1e-3 * unit(rng) + 1e-4;

      const meta::HypergradResult hg =
          meta::hypergrad(params, X, y, Xv, yv, w, eta, meta::Backend::kExact, nullptr, false);
      const Eigen::VectorXd fd = meta::fd_hypergrad(params, X, y, Xv, yv, w, eta, 1e-6);
      const double rel =
          (fd - hg.g).lpNorm<Eigen::Infinity>() / std::max(fd.lpNorm<Eigen::Infinity>(), 1e-12);
      worst = std::max(worst, rel);
      std::cout << "instance " << k << ": rel err = " << format_double(rel) << "\n";
    }
    std::cout << "worst rel err = " << format_double(worst) << "\n";
    if (!(worst <= 1e-6)) throw NumericError("hypergradient self-check failed");
    std::cout << "self-check PASS\n";
    return kExitOk;
  });
}

}  // namespace rlab::cli
