#include "rlab/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace rlab::data {

std::string to_string(Split s) {
  switch (s) {
    case Split::kFull:
      return "full";
    case Split::kTrain:
      return "train";
    case Split::kCleanSubset:
      return "clean_subset";
    case Split::kTest:
      return "test";
  }
  return "?";
}

Split split_from_string(const std::string& s) {
  if (s == "full") return Split::kFull;
  if (s == "train") return Split::kTrain;
  if (s == "clean_subset") return Split::kCleanSubset;
  if (s == "test") return Split::kTest;
  throw ConfigError("unknown split tag '" + s + "'");
}

void NoiseSpec::validate(int num_classes) const {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("noise rate must lie in [0, 1)");
  if (kind == NoiseKind::kAsymmetric) {
    if (static_cast<int>(class_map.size()) != num_classes) {
      throw ConfigError("asymmetric noise needs one class_map entry per class");
    }
    for (int c : class_map) {
      if (c < 0 || c >= num_classes) throw ConfigError("class_map entry out of range");
    }
  }
}

double pm1_from_class(int c) { return c == 0 ? 1.0 : -1.0; }

int class_from_pm1(double y) { return y > 0 ? 0 : 1; }

Eigen::VectorXd ExampleSet::pm1_observed() const {
  if (num_classes != 2) throw ConfigError("pm1 labels require a binary set");
  Eigen::VectorXd y(size());
  for (int i = 0; i < size(); ++i) y(i) = pm1_from_class(y_observed[i]);
  return y;
}

Eigen::VectorXd ExampleSet::pm1_clean() const {
  if (num_classes != 2) throw ConfigError("pm1 labels require a binary set");
  Eigen::VectorXd y(size());
  for (int i = 0; i < size(); ++i) y(i) = pm1_from_class(y_clean[i]);
  return y;
}

void ExampleSet::validate() const {
  const size_t n = static_cast<size_t>(size());
  if (y_observed.size() != n || y_clean.size() != n || noise_mask.size() != n ||
      ids.size() != n) {
    throw ConfigError("ExampleSet: column lengths disagree with X");
  }
  for (size_t i = 0; i < n; ++i) {
    if (noise_mask[i] != (y_observed[i] != y_clean[i])) {
      throw ConfigError("ExampleSet: noise mask inconsistent with labels");
    }
    if (y_observed[i] < 0 || y_observed[i] >= num_classes || y_clean[i] < 0 ||
        y_clean[i] >= num_classes) {
      throw ConfigError("ExampleSet: label out of range");
    }
    if (X.row(static_cast<int>(i)).norm() > 1.0 + 1e-12) {
      throw ConfigError("ExampleSet: input norm exceeds the unit ball");
    }
  }
}

ExampleSet gen_clusters(int n, int d, int num_classes, double separation, std::uint64_t seed) {
  if (n < 1) throw ConfigError("gen_clusters: n must be >= 1");
  if (num_classes < 2) throw ConfigError("gen_clusters: need at least 2 classes");
  if (separation <= 0.0) throw ConfigError("gen_clusters: separation must be > 0");
  if (num_classes > d) {
    std::ostringstream msg;
    msg << "gen_clusters: cannot place " << num_classes << " simplex means in " << d
        << " dimensions";
    throw ConfigError(msg.str());
  }

  // Regular simplex in the first C coordinates: v_c = e_c - 1/C, pairwise
  // distance sqrt(2), then scaled to `separation`.
  Eigen::MatrixXd means = Eigen::MatrixXd::Zero(num_classes, d);
  for (int c = 0; c < num_classes; ++c) {
    for (int k = 0; k < num_classes; ++k) {
      means(c, k) = (k == c ? 1.0 : 0.0) - 1.0 / num_classes;
    }
  }
  means *= separation / std::sqrt(2.0);

  ExampleSet set;
  set.X.resize(n, d);
  set.y_observed.resize(n);
  set.y_clean.resize(n);
  set.noise_mask.assign(n, false);
  set.ids.resize(n);
  set.num_classes = num_classes;
  set.split = Split::kFull;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double sigma = 1.0 / std::sqrt(static_cast<double>(d));
  for (int i = 0; i < n; ++i) {
    const int c = i % num_classes;
    for (int k = 0; k < d; ++k) set.X(i, k) = means(c, k) + sigma * gauss(rng);
    set.ids[i] = i;
  }

  const double max_norm = set.X.rowwise().norm().maxCoeff();
  if (max_norm > 1.0) {
    set.X /= max_norm;
    means /= max_norm;
  }

  for (int i = 0; i < n; ++i) {
    int best = 0;
    double best_d = (set.X.row(i) - means.row(0)).squaredNorm();
    for (int c = 1; c < num_classes; ++c) {
      const double dist = (set.X.row(i) - means.row(c)).squaredNorm();
      if (dist < best_d) {
        best_d = dist;
        best = c;
      }
    }
    set.y_clean[i] = best;
    set.y_observed[i] = best;
  }
  return set;
}

ExampleSet inject_noise(const ExampleSet& set, const NoiseSpec& spec) {
  spec.validate(set.num_classes);
  ExampleSet out = set;
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> other(0, set.num_classes - 2);
  for (int i = 0; i < out.size(); ++i) {
    out.y_observed[i] = out.y_clean[i];
    if (spec.kind == NoiseKind::kNone) continue;
    if (unit(rng) >= spec.rate) continue;
    if (spec.kind == NoiseKind::kSymmetric) {
      int pick = other(rng);
      if (pick >= out.y_clean[i]) ++pick;  // uniform over the C-1 wrong classes
      out.y_observed[i] = pick;
    } else {
      out.y_observed[i] = spec.class_map[out.y_clean[i]];
    }
  }
  for (int i = 0; i < out.size(); ++i) {
    out.noise_mask[i] = out.y_observed[i] != out.y_clean[i];
  }
  return out;
}

namespace {

ExampleSet gather(const ExampleSet& set, const std::vector<int>& rows, Split tag) {
  ExampleSet out;
  const int k = static_cast<int>(rows.size());
  out.X.resize(k, set.dim());
  out.y_observed.resize(k);
  out.y_clean.resize(k);
  out.noise_mask.resize(k);
  out.ids.resize(k);
  out.num_classes = set.num_classes;
  out.split = tag;
  for (int i = 0; i < k; ++i) {
    const int r = rows[i];
    out.X.row(i) = set.X.row(r);
    out.y_observed[i] = set.y_observed[r];
    out.y_clean[i] = set.y_clean[r];
    out.noise_mask[i] = set.noise_mask[r];
    out.ids[i] = set.ids[r];
  }
  return out;
}

}  // namespace

std::pair<ExampleSet, ExampleSet> take_clean_subset(const ExampleSet& set, int m,
                                                    std::uint64_t seed) {
  if (m < 1) throw ConfigError("take_clean_subset: m must be >= 1");
  if (m % set.num_classes != 0) {
    std::ostringstream msg;
    msg << "take_clean_subset: m=" << m << " not divisible by " << set.num_classes << " classes";
    throw ConfigError(msg.str());
  }
  const int per_class = m / set.num_classes;

  std::vector<std::vector<int>> clean_by_class(set.num_classes);
  for (int i = 0; i < set.size(); ++i) {
    if (!set.noise_mask[i]) clean_by_class[set.y_observed[i]].push_back(i);
  }
  std::mt19937_64 rng(seed);
  std::vector<int> chosen;
  chosen.reserve(m);
  for (int c = 0; c < set.num_classes; ++c) {
    auto& pool = clean_by_class[c];
    if (static_cast<int>(pool.size()) < per_class) {
      std::ostringstream msg;
      msg << "take_clean_subset: class " << c << " has only " << pool.size()
          << " clean examples, need " << per_class;
      throw ConfigError(msg.str());
    }
    std::shuffle(pool.begin(), pool.end(), rng);
    chosen.insert(chosen.end(), pool.begin(), pool.begin() + per_class);
  }
  std::sort(chosen.begin(), chosen.end());

  std::vector<bool> taken(set.size(), false);
  for (int r : chosen) taken[r] = true;
  std::vector<int> rest;
  rest.reserve(set.size() - m);
  for (int i = 0; i < set.size(); ++i) {
    if (!taken[i]) rest.push_back(i);
  }
  return {gather(set, chosen, Split::kCleanSubset), gather(set, rest, Split::kTrain)};
}

std::pair<ExampleSet, ExampleSet> split_off(const ExampleSet& set, int k, std::uint64_t seed,
                                            Split tag) {
  if (k < 0 || k > set.size()) throw ConfigError("split_off: size out of range");
  std::vector<int> order(set.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> head(order.begin(), order.begin() + k);
  std::vector<int> tail(order.begin() + k, order.end());
  std::sort(head.begin(), head.end());
  std::sort(tail.begin(), tail.end());
  return {gather(set, head, tag), gather(set, tail, set.split)};
}

void save_rlab(const ExampleSet& set, const NoiseSpec& noise, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "rlab v1\n";
  out << "n " << set.size() << "\n";
  out << "d " << set.dim() << "\n";
  out << "classes " << set.num_classes << "\n";
  out << "split " << to_string(set.split) << "\n";
  switch (noise.kind) {
    case NoiseKind::kNone:
      out << "noise none\n";
      break;
    case NoiseKind::kSymmetric:
      out << "noise symmetric " << format_double(noise.rate) << "\n";
      break;
    case NoiseKind::kAsymmetric: {
      out << "noise asymmetric " << format_double(noise.rate);
      for (int c : noise.class_map) out << " " << c;
      out << "\n";
      break;
    }
  }
  out << "seed " << noise.seed << "\n";
  out << "columns id label_observed label_clean noise_flag features\n";
  for (int i = 0; i < set.size(); ++i) {
    out << set.ids[i] << " " << set.y_observed[i] << " " << set.y_clean[i] << " "
        << (set.noise_mask[i] ? 1 : 0);
    for (int k = 0; k < set.dim(); ++k) out << " " << format_double(set.X(i, k));
    out << "\n";
  }
  if (!out) throw IoError("failed writing: " + path);
}

RlabFile load_rlab(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "rlab v1") {
    throw IoError("not an rlab v1 file: " + path);
  }
  RlabFile file;
  int n = -1, d = -1;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "n") {
      ls >> n;
    } else if (key == "d") {
      ls >> d;
    } else if (key == "classes") {
      ls >> file.set.num_classes;
    } else if (key == "split") {
      std::string tag;
      ls >> tag;
      file.set.split = split_from_string(tag);
    } else if (key == "noise") {
      std::string kind;
      ls >> kind;
      if (kind == "none") {
        file.noise.kind = NoiseKind::kNone;
      } else if (kind == "symmetric") {
        file.noise.kind = NoiseKind::kSymmetric;
        ls >> file.noise.rate;
      } else if (kind == "asymmetric") {
        file.noise.kind = NoiseKind::kAsymmetric;
        ls >> file.noise.rate;
        int c;
        while (ls >> c) file.noise.class_map.push_back(c);
      } else {
        throw IoError("unknown noise kind in " + path);
      }
    } else if (key == "seed") {
      ls >> file.noise.seed;
    } else if (key == "columns") {
      break;
    } else {
      throw IoError("unexpected header key '" + key + "' in " + path);
    }
  }
  if (n < 0 || d < 0) throw IoError("rlab header missing n/d: " + path);

  ExampleSet& set = file.set;
  set.X.resize(n, d);
  set.y_observed.resize(n);
  set.y_clean.resize(n);
  set.noise_mask.resize(n);
  set.ids.resize(n);
  for (int i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw IoError("truncated rlab file: " + path);
    std::istringstream ls(line);
    int flag;
    if (!(ls >> set.ids[i] >> set.y_observed[i] >> set.y_clean[i] >> flag)) {
      throw IoError("bad row " + std::to_string(i) + " in " + path);
    }
    set.noise_mask[i] = flag != 0;
    for (int k = 0; k < d; ++k) {
      if (!(ls >> set.X(i, k))) throw IoError("bad feature row " + std::to_string(i));
    }
  }
  // Inputs must live in the unit ball; out-of-ball data is corrected by a
  // global rescale rather than rejected.
  if (n > 0) {
    const double max_norm = set.X.rowwise().norm().maxCoeff();
    if (max_norm > 1.0 + 1e-12) {
      std::fprintf(stderr,
                   "warning: %s: max input norm %.6g exceeds the unit ball; rescaling all "
                   "features by 1/%.6g\n",
                   path.c_str(), max_norm, max_norm);
      set.X /= max_norm;
    }
  }
  set.validate();
  return file;
}

std::uint64_t fnv1a_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for checksum: " + path);
  std::uint64_t h = 1469598103934665603ULL;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
    if (got < static_cast<std::streamsize>(sizeof(buf))) break;
  }
  return h;
}

}  // namespace rlab::data
