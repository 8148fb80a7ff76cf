#include <CLI11.hpp>
#include <cstdint>
#include <string>

#include "rlab/commands.hpp"
#include "rlab/manifest.hpp"

int main(int argc, char** argv) {
  CLI::App app{std::string(rlab::cli::kVersion) +
               " - meta-reweighting dynamics laboratory"};
  app.require_subcommand(1);

  rlab::cli::GenDataArgs gen;
  auto* cmd_gen = app.add_subcommand("gen-data", "Generate a synthetic noisy-label dataset");
  cmd_gen->add_option("--config", gen.config_path, "Experiment config file")->required();
  cmd_gen->add_option("--out", gen.out_path, "Output .rlab path (default <out_dir>/dataset.rlab)");

  rlab::cli::TrainArgs train;
  rlab::cli::ReplayArgs replay;
  auto* cmd_train = app.add_subcommand("train", "Run a reweighting training loop");
  cmd_train->add_option("--mode", train.mode,
                        "meta-exact | meta-first-order | meta-ntk | fbr");
  cmd_train->add_option("--config", train.config_path, "Experiment config file");
  cmd_train->add_option("--data", train.dataset_path, "Dataset .rlab file");
  cmd_train->add_option("--out", train.out_dir, "Output directory root");
  cmd_train->add_option("--run-name", train.run_name,
                        "Fixed run directory name (default run-<time>-s<seed>)");
  cmd_train->add_flag("--self-check", train.self_check,
                      "Verify the exact hypergradient against finite differences first");
  cmd_train->add_option("--replay", replay.manifest_path,
                        "Replay a previous run from its manifest.json");

  rlab::cli::AnalyzeArgs analyze;
  auto* cmd_analyze = app.add_subcommand("analyze", "Post-process traces and run diagnostics");
  cmd_analyze->add_option("--what", analyze.what, "phases | scaling | lingap | figures")
      ->required();
  cmd_analyze->add_option("--run", analyze.run_dir, "Run directory (phases, figures)");
  cmd_analyze->add_option("--config", analyze.config_path, "Config file (scaling, lingap)");
  cmd_analyze->add_option("--data", analyze.dataset_path, "Dataset .rlab file (lingap)");
  cmd_analyze->add_option("--out", analyze.out_dir, "Where to write report files");

  std::uint64_t check_seed = 12345;
  int check_instances = 10;
  auto* cmd_check = app.add_subcommand("self-check",
                                       "Exact hypergradient vs finite differences on random "
                                       "tiny instances");
  cmd_check->add_option("--seed", check_seed, "Instance seed");
  cmd_check->add_option("--instances", check_instances, "Number of instances");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : rlab::cli::kExitConfig;
  }

  if (cmd_gen->parsed()) return rlab::cli::cmd_gen_data(gen);
  if (cmd_train->parsed()) {
    if (!replay.manifest_path.empty()) {
      replay.out_dir = train.out_dir;
      replay.run_name = train.run_name;
      return rlab::cli::cmd_replay(replay);
    }
    if (train.mode.empty() || train.config_path.empty() || train.dataset_path.empty()) {
      std::fprintf(stderr, "error: train needs --mode, --config and --data (or --replay)\n");
      return rlab::cli::kExitConfig;
    }
    return rlab::cli::cmd_train(train);
  }
  if (cmd_analyze->parsed()) return rlab::cli::cmd_analyze(analyze);
  if (cmd_check->parsed()) return rlab::cli::cmd_self_check(check_seed, check_instances);
  return rlab::cli::kExitConfig;
}
