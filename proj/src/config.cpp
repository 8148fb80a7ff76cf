#include "rlab/config.hpp"

#include <fstream>
#include <sstream>

namespace rlab::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

Config Config::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_string(buf.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

Config Config::parse_string(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']') {
        throw ConfigError("line " + std::to_string(lineno) + ": unterminated section header");
      }
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty()) {
        throw ConfigError("line " + std::to_string(lineno) + ": empty section name");
      }
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (section.empty()) {
      throw ConfigError("line " + std::to_string(lineno) + ": key outside any [section]");
    }
    cfg.set(section, key, value);
  }
  return cfg;
}

const Config::Entry* Config::find(const std::string& section, const std::string& key) const {
  for (const auto& e : entries_) {
    if (e.section == section && e.key == key) return &e;
  }
  return nullptr;
}

bool Config::has(const std::string& section, const std::string& key) const {
  return find(section, key) != nullptr;
}

std::string Config::get(const std::string& section, const std::string& key) const {
  const Entry* e = find(section, key);
  if (e == nullptr) throw ConfigError("missing config key [" + section + "] " + key);
  return e->value;
}

std::string Config::get_or(const std::string& section, const std::string& key,
                           const std::string& fallback) const {
  const Entry* e = find(section, key);
  return e ? e->value : fallback;
}

namespace {

double to_double(const std::string& section, const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key [" + section + "] " + key + ": '" + v + "' is not a number");
  }
}

}  // namespace

double Config::get_double(const std::string& section, const std::string& key) const {
  return to_double(section, key, get(section, key));
}

double Config::get_double_or(const std::string& section, const std::string& key,
                             double fallback) const {
  const Entry* e = find(section, key);
  return e ? to_double(section, key, e->value) : fallback;
}

int Config::get_int(const std::string& section, const std::string& key) const {
  const double d = get_double(section, key);
  const int i = static_cast<int>(d);
  if (static_cast<double>(i) != d) {
    throw ConfigError("config key [" + section + "] " + key + " must be an integer");
  }
  return i;
}

int Config::get_int_or(const std::string& section, const std::string& key, int fallback) const {
  return has(section, key) ? get_int(section, key) : fallback;
}

std::uint64_t Config::get_u64(const std::string& section, const std::string& key) const {
  const std::string v = get(section, key);
  try {
    std::size_t used = 0;
    const std::uint64_t u = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return u;
  } catch (const std::exception&) {
    throw ConfigError("config key [" + section + "] " + key + ": '" + v +
                      "' is not an unsigned integer");
  }
}

std::uint64_t Config::get_u64_or(const std::string& section, const std::string& key,
                                 std::uint64_t fallback) const {
  return has(section, key) ? get_u64(section, key) : fallback;
}

std::vector<int> Config::get_int_list_or(const std::string& section, const std::string& key,
                                         const std::vector<int>& fallback) const {
  const Entry* e = find(section, key);
  if (e == nullptr) return fallback;
  std::vector<int> out;
  std::istringstream in(e->value);
  std::string cell;
  while (std::getline(in, cell, ',')) {
    try {
      out.push_back(std::stoi(cell));
    } catch (const std::exception&) {
      throw ConfigError("config key [" + section + "] " + key + ": bad integer list entry '" +
                        cell + "'");
    }
  }
  if (out.empty()) throw ConfigError("config key [" + section + "] " + key + ": empty list");
  return out;
}

void Config::set(const std::string& section, const std::string& key, const std::string& value) {
  for (auto& e : entries_) {
    if (e.section == section && e.key == key) {
      e.value = value;
      return;
    }
  }
  entries_.push_back({section, key, value});
}

std::string Config::dump() const {
  std::ostringstream out;
  std::string current;
  for (const auto& e : entries_) {
    if (e.section != current) {
      if (!current.empty()) out << "\n";
      out << "[" << e.section << "]\n";
      current = e.section;
    }
    out << e.key << " = " << e.value << "\n";
  }
  return out.str();
}

}  // namespace rlab::cli
