#pragma once

#include <cstdint>
#include <string>

#include "rlab/config.hpp"

namespace rlab::cli {

// Stable exit-code contract.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitNumeric = 2;
inline constexpr int kExitIo = 3;

struct GenDataArgs {
  std::string config_path;
  std::string out_path;  // default: dataset.rlab under the output directory
};

struct TrainArgs {
  std::string mode;  // meta-exact | meta-first-order | meta-ntk | fbr
  std::string config_path;
  std::string dataset_path;
  std::string out_dir;   // overrides config/env when set
  std::string run_name;  // overrides the timestamp+seed directory name
  bool self_check = false;
};

struct ReplayArgs {
  std::string manifest_path;
  std::string out_dir;
  std::string run_name;
};

struct AnalyzeArgs {
  std::string what;  // phases | scaling | lingap | figures
  std::string run_dir;
  std::string config_path;
  std::string dataset_path;
  std::string out_dir;
};

int cmd_gen_data(const GenDataArgs& args);
int cmd_train(const TrainArgs& args);
int cmd_replay(const ReplayArgs& args);
int cmd_analyze(const AnalyzeArgs& args);
int cmd_self_check(std::uint64_t seed, int instances);

// Output directory resolution: explicit flag > RLAB_OUT_DIR > [run] out_dir
// > "runs".
std::string resolve_out_dir(const std::string& flag_value, const Config& cfg);

}  // namespace rlab::cli
