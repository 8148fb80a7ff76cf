#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "rlab/commands.hpp"
#include "rlab/common.hpp"
#include "rlab/config.hpp"
#include "rlab/manifest.hpp"
#include "rlab/trace.hpp"

using namespace rlab;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::path("tmp_cli") / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str(const std::string& child = "") const {
    return child.empty() ? path.string() : (path / child).string();
  }
};

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  REQUIRE(out);
  out << text;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kSmallConfig = R"(
[data]
n = 220
dim = 8
classes = 2
separation = 6.0
noise_kind = symmetric
noise_rate = 0.3
clean_size = 20
test_size = 20
seed = 424242

[net]
depth = 1
width = 64
activation = tanh

[meta]
eta = 0.001
beta = 0.02
epochs = 10

[fbr]
alpha = 0.005
lambda_plus = 1.0
lambda_minus = 1.0
batch_size = 64
epochs = 8
eta = 0.05

[analysis]
kappa = 3.0

[run]
out_dir = runs
)";

}  // namespace

TEST_CASE("config: parse, defaults, errors") {
  const cli::Config cfg = cli::Config::parse_string("[a]\nx = 1.5\nname = hello world\n[b]\nk=2\n");
  CHECK(cfg.get_double("a", "x") == 1.5);
  CHECK(cfg.get("a", "name") == "hello world");
  CHECK(cfg.get_int("b", "k") == 2);
  CHECK(cfg.get_int_or("b", "missing", 7) == 7);
  CHECK_THROWS_AS(cfg.get("a", "missing"), ConfigError);
  CHECK_THROWS_AS(cfg.get_int("a", "name"), ConfigError);
  CHECK_THROWS_AS(cli::Config::parse_string("x = 1\n"), ConfigError);       // outside section
  CHECK_THROWS_AS(cli::Config::parse_string("[a]\nbroken\n"), ConfigError); // no '='
  CHECK(cli::Config::parse_string("# only a comment\n").entries().empty());
}

TEST_CASE("config: dump round trips") {
  const cli::Config cfg = cli::Config::parse_string(kSmallConfig);
  const cli::Config again = cli::Config::parse_string(cfg.dump());
  CHECK(again.dump() == cfg.dump());
  CHECK(again.get_int("data", "n") == 220);
}

TEST_CASE("seed derivation: deterministic and stream separated") {
  CHECK(derive_seed(42, 1) == derive_seed(42, 1));
  CHECK(derive_seed(42, 1) != derive_seed(42, 2));
  CHECK(derive_seed(42, 1) != derive_seed(43, 1));
}

TEST_CASE("manifest: save/load round trip") {
  TempDir dir("manifest");
  cli::RunManifest m = cli::manifest_from_config(cli::Config::parse_string(kSmallConfig));
  m.mode = "meta-exact";
  m.master_seed = 424242;
  m.dataset_path = "somewhere.rlab";
  m.dataset_checksum = "abc123";
  m.trace_files = {"trace.csv"};
  m.wall_clock_sec = 1.25;
  m.summary["final_val_inf"] = 0.5;
  m.summary["weight_auc"] = std::numeric_limits<double>::quiet_NaN();  // dropped on save
  cli::save_manifest(m, dir.str("manifest.json"));

  const cli::RunManifest back = cli::load_manifest(dir.str("manifest.json"));
  CHECK(back.mode == "meta-exact");
  CHECK(back.master_seed == 424242);
  CHECK(back.summary.at("final_val_inf") == 0.5);
  CHECK(back.summary.count("weight_auc") == 0);
  CHECK(back.to_config().get_int("data", "n") == 220);
}

TEST_CASE("gen-data: stable checksum, usage errors") {
  TempDir dir("gendata");
  write_file(dir.str("cfg.ini"), kSmallConfig);

  cli::GenDataArgs args;
  args.config_path = dir.str("cfg.ini");
  args.out_path = dir.str("a.rlab");
  REQUIRE(cli::cmd_gen_data(args) == cli::kExitOk);
  args.out_path = dir.str("b.rlab");
  REQUIRE(cli::cmd_gen_data(args) == cli::kExitOk);
  CHECK(slurp(dir.str("a.rlab")) == slurp(dir.str("b.rlab")));
  CHECK(fs::exists(dir.str("a.rlab.manifest.json")));
  CHECK(cli::load_manifest(dir.str("a.rlab.manifest.json")).mode == "gen-data");

  // rate outside [0,1) is a config error.
  std::string bad(kSmallConfig);
  const auto at = bad.find("noise_rate = 0.3");
  bad.replace(at, 16, "noise_rate = 1.0");
  write_file(dir.str("bad.ini"), bad);
  args.config_path = dir.str("bad.ini");
  args.out_path = dir.str("c.rlab");
  CHECK(cli::cmd_gen_data(args) == cli::kExitConfig);

  args.config_path = dir.str("nonexistent.ini");
  CHECK(cli::cmd_gen_data(args) == cli::kExitIo);
}

TEST_CASE("train + replay: byte-identical traces, analyze outputs") {
  TempDir dir("train");
  write_file(dir.str("cfg.ini"), kSmallConfig);

  cli::GenDataArgs gen;
  gen.config_path = dir.str("cfg.ini");
  gen.out_path = dir.str("dataset.rlab");
  REQUIRE(cli::cmd_gen_data(gen) == cli::kExitOk);

  cli::TrainArgs train;
  train.mode = "meta-exact";
  train.config_path = dir.str("cfg.ini");
  train.dataset_path = dir.str("dataset.rlab");
  train.out_dir = dir.str("out");
  train.run_name = "first";
  train.self_check = true;
  REQUIRE(cli::cmd_train(train) == cli::kExitOk);

  const fs::path run1 = fs::path(dir.str("out")) / "first";
  CHECK(fs::exists(run1 / "trace.csv"));
  CHECK(fs::exists(run1 / "val_trace.csv"));
  CHECK(fs::exists(run1 / "directions.csv"));
  const cli::RunManifest m = cli::load_manifest((run1 / "manifest.json").string());
  CHECK(m.mode == "meta-exact");
  CHECK(m.summary.count("final_val_inf") == 1);
  CHECK(m.summary.count("test_accuracy") == 1);

  // Replay from the manifest: byte-identical trace files.
  cli::ReplayArgs replay;
  replay.manifest_path = (run1 / "manifest.json").string();
  replay.out_dir = dir.str("out");
  replay.run_name = "second";
  REQUIRE(cli::cmd_replay(replay) == cli::kExitOk);
  const fs::path run2 = fs::path(dir.str("out")) / "second";
  CHECK(slurp((run1 / "trace.csv").string()) == slurp((run2 / "trace.csv").string()));
  CHECK(slurp((run1 / "val_trace.csv").string()) == slurp((run2 / "val_trace.csv").string()));
  CHECK(slurp((run1 / "directions.csv").string()) == slurp((run2 / "directions.csv").string()));

  // Trace CSV loads back with the documented schema; the meta variant
  // carries exactly the eight base columns.
  const std::string trace_text = slurp((run1 / "trace.csv").string());
  CHECK(trace_text.rfind("epoch,sample_id,weight,residual,is_noisy,e1_norm,e2_norm,"
                         "val_residual_inf_norm\n",
                         0) == 0);
  const trace::RunTrace tr = trace::load_trace_csv((run1 / "trace.csv").string());
  CHECK(tr.epochs.size() == 11);  // epochs 0..10
  CHECK(tr.sample_ids.size() == 180);

  // analyze phases writes a report.
  cli::AnalyzeArgs an;
  an.what = "phases";
  an.run_dir = run1.string();
  REQUIRE(cli::cmd_analyze(an) == cli::kExitOk);
  CHECK(fs::exists(run1 / "phase_report.txt"));

  // analyze figures emits exactly the six panel CSVs (plus its manifest).
  an.what = "figures";
  REQUIRE(cli::cmd_analyze(an) == cli::kExitOk);
  const fs::path figs = run1 / "figures";
  int csvs = 0;
  for (const auto& entry : fs::directory_iterator(figs)) {
    csvs += entry.path().extension() == ".csv" ? 1 : 0;
  }
  CHECK(csvs == 6);
  for (const char* name :
       {"weight_dynamics.csv", "mean_residual.csv", "weight_distribution.csv",
        "weight_directions.csv", "ntk_hist.csv", "centered_ntk_hist.csv"}) {
    CHECK(fs::exists(figs / name));
  }
  CHECK(fs::exists(figs / "analyze_manifest.json"));
  CHECK(fs::exists(run1 / "analyze_manifest.json"));  // from the phases pass
}

TEST_CASE("train: fbr on noiseless toy data keeps high mean weight") {
  TempDir dir("fbrtoy");
  std::string cfg(kSmallConfig);
  const auto at = cfg.find("noise_rate = 0.3");
  cfg.replace(at, 16, "noise_rate = 0.0");
  const auto lm = cfg.find("lambda_minus = 1.0");
  cfg.replace(lm, 18, "lambda_minus = 0.0");
  write_file(dir.str("cfg.ini"), cfg);

  cli::GenDataArgs gen;
  gen.config_path = dir.str("cfg.ini");
  gen.out_path = dir.str("dataset.rlab");
  REQUIRE(cli::cmd_gen_data(gen) == cli::kExitOk);

  cli::TrainArgs train;
  train.mode = "fbr";
  train.config_path = dir.str("cfg.ini");
  train.dataset_path = dir.str("dataset.rlab");
  train.out_dir = dir.str("out");
  train.run_name = "fbr";
  REQUIRE(cli::cmd_train(train) == cli::kExitOk);

  const cli::RunManifest m =
      cli::load_manifest((fs::path(dir.str("out")) / "fbr" / "manifest.json").string());
  CHECK(m.summary.at("mean_clean_weight") >= 0.95);
  const std::string header = slurp((fs::path(dir.str("out")) / "fbr" / "trace.csv").string());
  CHECK(header.rfind("epoch,sample_id,weight,residual,is_noisy,e1_norm,e2_norm,"
                     "val_residual_inf_norm,mean_clean_weight,mean_noisy_weight,weight_auc",
                     0) == 0);

  // Figures work for FBR runs too (feature-map Gram histograms).
  cli::AnalyzeArgs an;
  an.what = "figures";
  an.run_dir = (fs::path(dir.str("out")) / "fbr").string();
  REQUIRE(cli::cmd_analyze(an) == cli::kExitOk);
  CHECK(fs::exists(fs::path(an.run_dir) / "figures" / "centered_ntk_hist.csv"));

  // Phase detection is a meta-trace analysis; fbr runs are rejected.
  an.what = "phases";
  CHECK(cli::cmd_analyze(an) == cli::kExitConfig);
}

TEST_CASE("train: ntk-frozen backend runs through the CLI") {
  TempDir dir("ntkmode");
  write_file(dir.str("cfg.ini"), kSmallConfig);
  cli::GenDataArgs gen;
  gen.config_path = dir.str("cfg.ini");
  gen.out_path = dir.str("dataset.rlab");
  REQUIRE(cli::cmd_gen_data(gen) == cli::kExitOk);

  cli::TrainArgs train;
  train.mode = "meta-ntk";
  train.config_path = dir.str("cfg.ini");
  train.dataset_path = dir.str("dataset.rlab");
  train.out_dir = dir.str("out");
  train.run_name = "ntk";
  REQUIRE(cli::cmd_train(train) == cli::kExitOk);
  const cli::RunManifest m =
      cli::load_manifest((fs::path(dir.str("out")) / "ntk" / "manifest.json").string());
  CHECK(m.mode == "meta-ntk");
}

TEST_CASE("analyze: golden fixture trace reports (5, 40)") {
  TempDir dir("golden");
  // Build a run directory by hand: manifest + trace.csv with a known shape.
  trace::RunTrace t;
  t.sample_ids = {0, 1, 2, 3};
  t.noise_mask = {false, false, true, true};
  for (int e = 0; e <= 50; ++e) {
    trace::EpochRecord rec;
    rec.epoch = e;
    rec.weights.resize(4);
    if (e < 5) {
      rec.weights << 0.8, 0.9, 0.2, 0.1;
    } else {
      rec.weights << 1.0, 1.0, 0.0, 0.0;
    }
    rec.residual = Eigen::VectorXd::Zero(4);
    rec.val_inf = e < 40 ? 0.8 : 0.25;
    t.epochs.push_back(rec);
  }
  const fs::path run = fs::path(dir.str("run"));
  fs::create_directories(run);
  trace::write_trace_csv(t, (run / "trace.csv").string(), false);

  cli::Config cfg = cli::Config::parse_string(kSmallConfig);
  cfg.set("meta", "eta", "0.09");
  cfg.set("data", "clean_size", "4");
  cfg.set("net", "width", "1000000000");
  cli::RunManifest m = cli::manifest_from_config(cfg);
  m.mode = "meta-exact";
  m.master_seed = 1;
  m.dataset_path = "unused.rlab";
  m.dataset_checksum = "0";
  m.trace_files = {"trace.csv"};
  m.summary["gamma_hat"] = 1.0;
  cli::save_manifest(m, (run / "manifest.json").string());

  cli::AnalyzeArgs an;
  an.what = "phases";
  an.run_dir = run.string();
  REQUIRE(cli::cmd_analyze(an) == cli::kExitOk);
  const std::string report = slurp((run / "phase_report.txt").string());
  CHECK(report.find("t1_emp = 5") != std::string::npos);
  CHECK(report.find("t2_emp = 40") != std::string::npos);
}

TEST_CASE("analyze: usage and schema errors use the exit-code contract") {
  TempDir dir("anerr");
  cli::AnalyzeArgs an;
  an.what = "nonsense";
  CHECK(cli::cmd_analyze(an) == cli::kExitConfig);

  an.what = "phases";
  an.run_dir = dir.str("missing");
  CHECK(cli::cmd_analyze(an) == cli::kExitIo);

  // A trace with wrong columns is a schema error reported as IO.
  const fs::path run = fs::path(dir.str("run"));
  fs::create_directories(run);
  write_file((run / "trace.csv").string(), "epoch,foo\n1,2\n");
  cli::Config cfg = cli::Config::parse_string(kSmallConfig);
  cli::RunManifest m = cli::manifest_from_config(cfg);
  m.mode = "meta-exact";
  m.dataset_path = "unused";
  m.dataset_checksum = "0";
  cli::save_manifest(m, (run / "manifest.json").string());
  an.run_dir = run.string();
  CHECK(cli::cmd_analyze(an) == cli::kExitIo);
}

TEST_CASE("self-check command passes on tiny instances") {
  CHECK(cli::cmd_self_check(7, 5) == cli::kExitOk);
}

TEST_CASE("train: divergence guard maps to exit code 2") {
  TempDir dir("diverge");
  std::string cfg(kSmallConfig);
  const auto at = cfg.find("eta = 0.001");
  cfg.replace(at, 11, "eta = 50.0");
  write_file(dir.str("cfg.ini"), cfg);

  cli::GenDataArgs gen;
  gen.config_path = dir.str("cfg.ini");
  gen.out_path = dir.str("dataset.rlab");
  REQUIRE(cli::cmd_gen_data(gen) == cli::kExitOk);

  cli::TrainArgs train;
  train.mode = "meta-first-order";
  train.config_path = dir.str("cfg.ini");
  train.dataset_path = dir.str("dataset.rlab");
  train.out_dir = dir.str("out");
  train.run_name = "boom";
  CHECK(cli::cmd_train(train) == cli::kExitNumeric);
}

TEST_CASE("analyze lingap: width table from config and dataset") {
  TempDir dir("lingap");
  std::string cfg(kSmallConfig);
  cfg += "\n[lingap]\nwidths = 32,64\nsteps = 5\neta = 0.002\nbeta = 0.002\n";
  write_file(dir.str("cfg.ini"), cfg);

  cli::GenDataArgs gen;
  gen.config_path = dir.str("cfg.ini");
  gen.out_path = dir.str("dataset.rlab");
  REQUIRE(cli::cmd_gen_data(gen) == cli::kExitOk);

  cli::AnalyzeArgs an;
  an.what = "lingap";
  an.config_path = dir.str("cfg.ini");
  an.dataset_path = dir.str("dataset.rlab");
  an.out_dir = dir.str("out");
  REQUIRE(cli::cmd_analyze(an) == cli::kExitOk);
  const std::string table = slurp(dir.str("out/lingap.csv"));
  CHECK(table.rfind("width,gap", 0) == 0);
  int rows = 0;
  for (char c : table) rows += c == '\n' ? 1 : 0;
  CHECK(rows == 3);  // header + 2 widths
}

TEST_CASE("analyze scaling mc: three-row table from config") {
  TempDir dir("scaling");
  std::string cfg(kSmallConfig);
  cfg += "\n[scaling]\nkernel = raw\ninput_dim = 12\nm_grid = 16,32,64\nreplicates = 20\n";
  write_file(dir.str("cfg.ini"), cfg);
  cli::AnalyzeArgs an;
  an.what = "scaling";
  an.config_path = dir.str("cfg.ini");
  an.out_dir = dir.str("out");
  REQUIRE(cli::cmd_analyze(an) == cli::kExitOk);
  const std::string table = slurp(dir.str("out/scaling_table.csv"));
  int rows = 0;
  for (char c : table) rows += c == '\n' ? 1 : 0;
  CHECK(rows == 4);
  CHECK(fs::exists(dir.str("out/scaling_report.txt")));
}

TEST_CASE("resolve_out_dir precedence") {
  const cli::Config cfg = cli::Config::parse_string("[run]\nout_dir = from_config\n");
  CHECK(cli::resolve_out_dir("explicit", cfg) == "explicit");
  CHECK(cli::resolve_out_dir("", cli::Config::parse_string("")) == "runs");
  CHECK(cli::resolve_out_dir("", cfg) == "from_config");
}
