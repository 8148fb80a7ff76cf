#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rlab/common.hpp"

namespace rlab::data {

enum class Split { kFull, kTrain, kCleanSubset, kTest };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

enum class NoiseKind { kNone, kSymmetric, kAsymmetric };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::kNone;
  double rate = 0.0;  // in [0, 1)
  // Asymmetric target class per source class; identity entries stay clean.
  std::vector<int> class_map;
  std::uint64_t seed = 0;

  void validate(int num_classes) const;
};

// Inputs live in the unit ball; labels are integer classes 0..C-1 (binary
// runs use classes {0, 1} and convert with pm1_labels()).
struct ExampleSet {
  Eigen::MatrixXd X;  // n x d, rows are examples, ||row||_2 <= 1
  std::vector<int> y_observed;
  std::vector<int> y_clean;
  std::vector<bool> noise_mask;  // true iff y_observed != y_clean
  std::vector<int> ids;
  int num_classes = 2;
  Split split = Split::kFull;

  int size() const { return static_cast<int>(X.rows()); }
  int dim() const { return static_cast<int>(X.cols()); }

  // +1 for class 0, -1 for class 1; binary sets only.
  Eigen::VectorXd pm1_observed() const;
  Eigen::VectorXd pm1_clean() const;

  void validate() const;  // shape + mask consistency + norm bound
};

double pm1_from_class(int c);
int class_from_pm1(double y);

// C Gaussian clusters with means on a regular simplex scaled to pairwise
// distance `separation`, isotropic noise of scale 1/sqrt(d), everything
// rescaled into the unit ball.  Labels are the nearest mean.
ExampleSet gen_clusters(int n, int d, int num_classes, double separation, std::uint64_t seed);

// Relabels from Y_clean according to the spec; recomputes the noise mask.
ExampleSet inject_noise(const ExampleSet& set, const NoiseSpec& spec);

// Balanced clean subset (m/C per class, only unflipped samples), plus the
// disjoint remainder as the train split.
std::pair<ExampleSet, ExampleSet> take_clean_subset(const ExampleSet& set, int m,
                                                    std::uint64_t seed);

// Carves `k` examples off the front of a shuffled copy; used for test splits.
std::pair<ExampleSet, ExampleSet> split_off(const ExampleSet& set, int k, std::uint64_t seed,
                                            Split tag);

// Self-describing columnar text format; write -> read -> write is byte
// identical.  See FORMATS.md.
void save_rlab(const ExampleSet& set, const NoiseSpec& noise, const std::string& path);

struct RlabFile {
  ExampleSet set;
  NoiseSpec noise;
};

RlabFile load_rlab(const std::string& path);

// FNV-1a 64 over the file bytes; printed by gen-data and recorded in
// run manifests.
std::uint64_t fnv1a_file(const std::string& path);

}  // namespace rlab::data
