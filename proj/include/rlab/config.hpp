#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rlab/common.hpp"

namespace rlab::cli {

// Plain-text `key = value` sections ([data], [net], [meta], [fbr], ...).
// Entries keep file order so dumps diff cleanly.
class Config {
 public:
  static Config parse_file(const std::string& path);
  static Config parse_string(const std::string& text);

  bool has(const std::string& section, const std::string& key) const;
  std::string get(const std::string& section, const std::string& key) const;
  std::string get_or(const std::string& section, const std::string& key,
                     const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key) const;
  double get_double_or(const std::string& section, const std::string& key, double fallback) const;
  int get_int(const std::string& section, const std::string& key) const;
  int get_int_or(const std::string& section, const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& section, const std::string& key) const;
  std::uint64_t get_u64_or(const std::string& section, const std::string& key,
                           std::uint64_t fallback) const;
  std::vector<int> get_int_list_or(const std::string& section, const std::string& key,
                                   const std::vector<int>& fallback) const;

  void set(const std::string& section, const std::string& key, const std::string& value);
  std::string dump() const;

  struct Entry {
    std::string section;
    std::string key;
    std::string value;
  };
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  const Entry* find(const std::string& section, const std::string& key) const;
  std::vector<Entry> entries_;
};

}  // namespace rlab::cli
