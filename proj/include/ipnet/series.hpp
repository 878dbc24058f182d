#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ipnet {

enum class Task { classification, regression };

const char* task_name(Task t);
Task task_from_name(const std::string& name);

// Target for one case. Classification stores 0/1 in value; regression stores
// the log length of stay in days. A dataset carries exactly one task.
struct Label {
  Task task = Task::classification;
  double value = 0.0;
};

struct Obs {
  double time = 0.0;   // hours since window start
  double value = 0.0;  // measurement
};

// One data case: D per-dimension observation lists with strictly increasing
// times in [0, window], any of which may be empty.
struct SparseSeries {
  std::string id;
  std::vector<std::vector<Obs>> dims;
  Label target;

  int num_dims() const { return static_cast<int>(dims.size()); }
  size_t total_observations() const;
};

// Normalizes raw per-dimension observation lists into a valid SparseSeries:
// sorts by time, resolves duplicate timestamps keeping the entry that
// appeared last, and validates the window bounds. `duplicates`, when given,
// is incremented once per dropped entry.
SparseSeries make_sparse_series(std::string id,
                                std::vector<std::vector<Obs>> dims,
                                Label target, double window_length,
                                int* duplicates = nullptr);

// Evenly spaced reference time points spanning [0, window_length].
struct ReferenceGrid {
  std::vector<double> points;
  double spacing = 0.0;

  int size() const { return static_cast<int>(points.size()); }
  double window_length() const { return points.empty() ? 0.0 : points.back(); }
};

ReferenceGrid make_grid(double window_length, int T);

// Union-of-timestamps representation of one case: a sorted, deduplicated
// timestamp list shared by all dimensions, a D x U value array that is zero
// wherever unobserved, and the matching observation mask.
struct DenseCase {
  std::string id;
  int D = 0;
  std::vector<double> times;      // U
  std::vector<double> values;     // D x U, row-major
  std::vector<uint8_t> observed;  // D x U
  Label target;

  int U() const { return static_cast<int>(times.size()); }
  double value_at(int d, int u) const { return values[static_cast<size_t>(d) * times.size() + u]; }
  bool observed_at(int d, int u) const { return observed[static_cast<size_t>(d) * times.size() + u] != 0; }
  size_t observation_count() const;
};

using DenseBatch = std::vector<DenseCase>;

DenseCase densify(const SparseSeries& s, double window_length);
SparseSeries sparsify(const DenseCase& c);

// Per-dimension z-score statistics, fit on training-fold observed values
// only and stored with the model so evaluation reuses them.
struct Normalizer {
  std::vector<double> mean;
  std::vector<double> stdev;

  static Normalizer fit(const DenseBatch& batch, std::span<const int> case_indices);
  static Normalizer identity(int dims);
  void apply(DenseCase& c) const;
};

}  // namespace ipnet
