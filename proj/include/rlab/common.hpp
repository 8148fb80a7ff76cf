#pragma once

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace rlab {

// Error categories map 1:1 onto the CLI exit codes (config -> 1,
// numeric -> 2, io -> 3).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// splitmix64 step; the standard finalizer used to derive per-module
// RNG streams from one master seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derived stream: seed for module stream `stream_id` under `master`.
// Independent streams get distinct ids; documented in FORMATS.md.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream_id) {
  return splitmix64(master ^ splitmix64(stream_id));
}

// Shortest decimal form that round-trips a double exactly.  Used for every
// float we persist so that write -> read -> write is byte identical.
inline std::string format_double(double v) {
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    double back = 0.0;
    std::sscanf(buf, "%lf", &back);
    if (back == v || (back != back && v != v)) break;
  }
  return std::string(buf);
}

}  // namespace rlab
