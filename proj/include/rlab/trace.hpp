#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "rlab/common.hpp"

namespace rlab::trace {

// Per-epoch snapshot of a reweighting run.  Row `t` is self-consistent at
// time t: weights w_t, residuals at theta_t, and the update direction and
// error norms measured at (theta_t, w_t).
struct EpochRecord {
  int epoch = 0;
  Eigen::VectorXd weights;       // n
  Eigen::VectorXd residual;      // n; signed u_i on the scalar path,
                                 // max-abs per-sample residual for multiclass
  Eigen::VectorXd direction;     // n; meta hypergradient / FBR row-sum (may be empty)
  Eigen::VectorXd val_residual;  // m (scalar path; may be empty)
  double e1_norm = 0.0;
  double e2_norm = 0.0;
  double val_inf = 0.0;       // ||u^v||_inf
  double val_mean_abs = 0.0;  // |sum_i u^v_i| / m
  double mean_clean_weight = 0.0;
  double mean_noisy_weight = 0.0;
  double weight_auc = 0.0;
};

struct RunTrace {
  std::vector<int> sample_ids;
  std::vector<bool> noise_mask;
  std::vector<EpochRecord> epochs;
  bool diverged = false;
  double gamma_hat = 0.0;  // mean-centered init-kernel margin, when measured
  int clean_subset_size = 0;
};

// Mean weight over clean/noisy samples plus the rank AUC of weights as a
// clean-vs-noisy score (ties counted half; NaN when either group is empty).
void weight_separation(const Eigen::VectorXd& w, const std::vector<bool>& noisy,
                       double* mean_clean, double* mean_noisy, double* auc);

// trace.csv: epoch,sample_id,weight,residual,is_noisy,e1_norm,e2_norm,
// val_residual_inf_norm[,mean_clean_weight,mean_noisy_weight,weight_auc]
void write_trace_csv(const RunTrace& t, const std::string& path, bool fbr_columns);

// val_trace.csv: epoch,sample_id,residual
void write_val_trace_csv(const RunTrace& t, const std::string& path);

// directions.csv: epoch,sample_id,direction
void write_directions_csv(const RunTrace& t, const std::string& path);

// Reconstructs what the analysis pass needs from trace.csv (weights,
// noise mask, per-epoch val residual inf norm, the extra FBR columns when
// present).
RunTrace load_trace_csv(const std::string& path);

// Fill val_residual / val_mean_abs (resp. direction) from the side files;
// epochs are matched by number, missing epochs are left empty.
void merge_val_trace_csv(RunTrace* t, const std::string& path);
void merge_directions_csv(RunTrace* t, const std::string& path);

}  // namespace rlab::trace
