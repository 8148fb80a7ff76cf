#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rlab/config.hpp"

namespace rlab::cli {

inline constexpr const char* kVersion = "rlab 0.1.0";

// Everything needed to replay a run: the config snapshot plus dataset
// identity.  Wall clock and summary are informational.
struct RunManifest {
  std::string version = kVersion;
  std::string mode;
  std::uint64_t master_seed = 0;
  std::string dataset_path;
  std::string dataset_checksum;  // fnv1a64, hex
  std::vector<std::string> trace_files;
  double wall_clock_sec = 0.0;
  std::map<std::string, std::string> config;  // flattened "section.key" -> value
  std::map<std::string, double> summary;

  Config to_config() const;  // rebuilds the snapshot for replay
};

RunManifest manifest_from_config(const Config& cfg);

void save_manifest(const RunManifest& m, const std::string& path);
RunManifest load_manifest(const std::string& path);

std::string checksum_hex(std::uint64_t h);

}  // namespace rlab::cli
