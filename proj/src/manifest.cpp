#include "rlab/manifest.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace rlab::cli {

using nlohmann::json;

Config RunManifest::to_config() const {
  Config cfg;
  for (const auto& [flat, value] : config) {
    const auto dot = flat.find('.');
    if (dot == std::string::npos) {
      throw ConfigError("manifest config key '" + flat + "' is not section.key");
    }
    cfg.set(flat.substr(0, dot), flat.substr(dot + 1), value);
  }
  return cfg;
}

RunManifest manifest_from_config(const Config& cfg) {
  RunManifest m;
  for (const auto& e : cfg.entries()) m.config[e.section + "." + e.key] = e.value;
  return m;
}

void save_manifest(const RunManifest& m, const std::string& path) {
  json j;
  j["version"] = m.version;
  j["mode"] = m.mode;
  j["master_seed"] = m.master_seed;
  j["dataset_path"] = m.dataset_path;
  j["dataset_checksum"] = m.dataset_checksum;
  j["trace_files"] = m.trace_files;
  j["wall_clock_sec"] = m.wall_clock_sec;
  j["config"] = m.config;
  // JSON has no NaN; entries that are undefined for a run (e.g. noisy-group
  // means of an all-clean dataset) are simply omitted.
  json summary = json::object();
  for (const auto& [key, value] : m.summary) {
    if (std::isfinite(value)) summary[key] = value;
  }
  j["summary"] = summary;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open manifest for writing: " + path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("failed writing manifest: " + path);
}

RunManifest load_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("bad manifest " + path + ": " + e.what());
  }
  RunManifest m;
  try {
    m.version = j.at("version").get<std::string>();
    m.mode = j.at("mode").get<std::string>();
    m.master_seed = j.at("master_seed").get<std::uint64_t>();
    m.dataset_path = j.at("dataset_path").get<std::string>();
    m.dataset_checksum = j.at("dataset_checksum").get<std::string>();
    m.trace_files = j.at("trace_files").get<std::vector<std::string>>();
    m.wall_clock_sec = j.at("wall_clock_sec").get<double>();
    m.config = j.at("config").get<std::map<std::string, std::string>>();
    m.summary = j.at("summary").get<std::map<std::string, double>>();
  } catch (const json::exception& e) {
    throw IoError("manifest " + path + " is missing fields: " + e.what());
  }
  return m;
}

std::string checksum_hex(std::uint64_t h) {
  std::ostringstream out;
  out << std::hex << h;
  return out.str();
}

}  // namespace rlab::cli
