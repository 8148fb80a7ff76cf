#include "rlab/trace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace rlab::trace {

void weight_separation(const Eigen::VectorXd& w, const std::vector<bool>& noisy,
                       double* mean_clean, double* mean_noisy, double* auc) {
  double sum_c = 0.0, sum_n = 0.0;
  int n_c = 0, n_n = 0;
  for (int i = 0; i < w.size(); ++i) {
    if (noisy[i]) {
      sum_n += w(i);
      ++n_n;
    } else {
      sum_c += w(i);
      ++n_c;
    }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  *mean_clean = n_c ? sum_c / n_c : nan;
  *mean_noisy = n_n ? sum_n / n_n : nan;
  if (n_c == 0 || n_n == 0) {
    *auc = nan;
    return;
  }
  // Mann-Whitney via sorted sweep with tie groups.
  std::vector<std::pair<double, bool>> v(w.size());
  for (int i = 0; i < w.size(); ++i) v[i] = {w(i), noisy[i]};
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  double wins = 0.0;
  std::size_t i = 0;
  std::int64_t noisy_below = 0;
  while (i < v.size()) {
    std::size_t j = i;
    int tie_clean = 0, tie_noisy = 0;
    while (j < v.size() && v[j].first == v[i].first) {
      if (v[j].second) {
        ++tie_noisy;
      } else {
        ++tie_clean;
      }
      ++j;
    }
    wins += static_cast<double>(tie_clean) * noisy_below + 0.5 * tie_clean * tie_noisy;
    noisy_below += tie_noisy;
    i = j;
  }
  *auc = wins / (static_cast<double>(n_c) * n_n);
}

namespace {

void fill_separation(const RunTrace& t, EpochRecord* e) {
  weight_separation(e->weights, t.noise_mask, &e->mean_clean_weight, &e->mean_noisy_weight,
                    &e->weight_auc);
}

}  // namespace

void write_trace_csv(const RunTrace& t, const std::string& path, bool fbr_columns) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open trace file for writing: " + path);
  out << "epoch,sample_id,weight,residual,is_noisy,e1_norm,e2_norm,val_residual_inf_norm";
  if (fbr_columns) out << ",mean_clean_weight,mean_noisy_weight,weight_auc";
  out << "\n";
  for (const auto& e : t.epochs) {
    for (int i = 0; i < e.weights.size(); ++i) {
      out << e.epoch << "," << t.sample_ids[i] << "," << format_double(e.weights(i)) << ","
          << format_double(e.residual(i)) << "," << (t.noise_mask[i] ? 1 : 0) << ","
          << format_double(e.e1_norm) << "," << format_double(e.e2_norm) << ","
          << format_double(e.val_inf);
      if (fbr_columns) {
        out << "," << format_double(e.mean_clean_weight) << ","
            << format_double(e.mean_noisy_weight) << "," << format_double(e.weight_auc);
      }
      out << "\n";
    }
  }
  if (!out) throw IoError("failed writing trace file: " + path);
}

void write_val_trace_csv(const RunTrace& t, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open val trace for writing: " + path);
  out << "epoch,sample_id,residual\n";
  for (const auto& e : t.epochs) {
    for (int j = 0; j < e.val_residual.size(); ++j) {
      out << e.epoch << "," << j << "," << format_double(e.val_residual(j)) << "\n";
    }
  }
  if (!out) throw IoError("failed writing val trace: " + path);
}

void write_directions_csv(const RunTrace& t, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open directions file for writing: " + path);
  out << "epoch,sample_id,direction\n";
  for (const auto& e : t.epochs) {
    for (int i = 0; i < e.direction.size(); ++i) {
      out << e.epoch << "," << t.sample_ids[i] << "," << format_double(e.direction(i)) << "\n";
    }
  }
  if (!out) throw IoError("failed writing directions file: " + path);
}

RunTrace load_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trace file: " + path);
  std::string header;
  if (!std::getline(in, header)) throw IoError("empty trace file: " + path);
  const std::string base = "epoch,sample_id,weight,residual,is_noisy,e1_norm,e2_norm,val_residual_inf_norm";
  if (header.rfind(base, 0) != 0) {
    throw IoError("trace file has unexpected columns: expected '" + base + "...', got '" + header +
                  "'");
  }

  RunTrace t;
  std::map<int, int> id_index;
  std::map<int, EpochRecord> epochs;
  std::string line;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() < 8) {
      throw IoError("trace row " + std::to_string(lineno) + ": expected >= 8 columns");
    }
    const int epoch = std::stoi(cells[0]);
    const int sid = std::stoi(cells[1]);
    if (!id_index.count(sid)) {
      const int idx = static_cast<int>(id_index.size());
      id_index[sid] = idx;
      t.sample_ids.push_back(sid);
      t.noise_mask.push_back(cells[4] == "1");
    }
    auto& e = epochs[epoch];
    e.epoch = epoch;
    const int at = id_index[sid];
    if (e.weights.size() <= at) {
      const int want = std::max<int>(at + 1, static_cast<int>(id_index.size()));
      e.weights.conservativeResize(want);
      e.residual.conservativeResize(want);
    }
    e.weights(at) = std::stod(cells[2]);
    e.residual(at) = std::stod(cells[3]);
    e.e1_norm = std::stod(cells[5]);
    e.e2_norm = std::stod(cells[6]);
    e.val_inf = std::stod(cells[7]);
    if (cells.size() >= 11) {
      e.mean_clean_weight = std::stod(cells[8]);
      e.mean_noisy_weight = std::stod(cells[9]);
      e.weight_auc = std::stod(cells[10]);
    }
  }
  for (auto& [epoch, rec] : epochs) t.epochs.push_back(std::move(rec));
  for (auto& e : t.epochs) {
    if (e.weights.size() != static_cast<int>(t.sample_ids.size())) {
      throw IoError("trace file: epoch " + std::to_string(e.epoch) +
                    " is missing rows for some samples");
    }
    fill_separation(t, &e);
  }
  return t;
}

namespace {

// Shared reader for the (epoch,sample_id,value) side files.
std::map<int, std::vector<double>> load_epoch_series(const std::string& path,
                                                     const std::string& expected_header) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  std::string header;
  if (!std::getline(in, header) || header != expected_header) {
    throw IoError(path + ": expected header '" + expected_header + "'");
  }
  std::map<int, std::vector<double>> series;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string c0, c1, c2;
    if (!std::getline(ls, c0, ',') || !std::getline(ls, c1, ',') || !std::getline(ls, c2, ',')) {
      throw IoError(path + ": malformed row '" + line + "'");
    }
    series[std::stoi(c0)].push_back(std::stod(c2));
  }
  return series;
}

}  // namespace

void merge_val_trace_csv(RunTrace* t, const std::string& path) {
  const auto series = load_epoch_series(path, "epoch,sample_id,residual");
  for (auto& e : t->epochs) {
    const auto it = series.find(e.epoch);
    if (it == series.end()) continue;
    e.val_residual = Eigen::Map<const Eigen::VectorXd>(it->second.data(), it->second.size());
    e.val_mean_abs = std::abs(e.val_residual.sum()) / e.val_residual.size();
  }
}

void merge_directions_csv(RunTrace* t, const std::string& path) {
  const auto series = load_epoch_series(path, "epoch,sample_id,direction");
  for (auto& e : t->epochs) {
    const auto it = series.find(e.epoch);
    if (it == series.end()) continue;
    if (it->second.size() != t->sample_ids.size()) {
      throw IoError(path + ": direction count mismatch at epoch " + std::to_string(e.epoch));
    }
    e.direction = Eigen::Map<const Eigen::VectorXd>(it->second.data(), it->second.size());
  }
}

}  // namespace rlab::trace
