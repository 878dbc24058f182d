#include "ipnet/series.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ipnet {

const char* task_name(Task t) {
  return t == Task::classification ? "classification" : "regression";
}

Task task_from_name(const std::string& name) {
  if (name == "classification") return Task::classification;
  if (name == "regression") return Task::regression;
  throw std::invalid_argument("unknown task: " + name);
}

size_t SparseSeries::total_observations() const {
  size_t n = 0;
  for (const auto& d : dims) n += d.size();
  return n;
}

SparseSeries make_sparse_series(std::string id,
                                std::vector<std::vector<Obs>> dims,
                                Label target, double window_length,
                                int* duplicates) {
  for (size_t d = 0; d < dims.size(); ++d) {
    auto& obs = dims[d];
    std::stable_sort(obs.begin(), obs.end(),
                     [](const Obs& a, const Obs& b) { return a.time < b.time; });
    // duplicate timestamps: keep the entry that appeared last in input order
    size_t out = 0;
    for (size_t i = 0; i < obs.size(); ++i) {
      if (out > 0 && obs[out - 1].time == obs[i].time) {
        obs[out - 1] = obs[i];
        if (duplicates) ++*duplicates;
      } else {
        obs[out++] = obs[i];
      }
    }
    obs.resize(out);
    for (const Obs& o : obs) {
      if (!(o.time >= 0.0 && o.time <= window_length) || !std::isfinite(o.time))
        throw std::invalid_argument("case " + id + " dim " + std::to_string(d) +
                                    ": time " + std::to_string(o.time) +
                                    " outside [0, " + std::to_string(window_length) + "]");
      if (!std::isfinite(o.value))
        throw std::invalid_argument("case " + id + " dim " + std::to_string(d) +
                                    ": non-finite value");
    }
  }
  SparseSeries s;
  s.id = std::move(id);
  s.dims = std::move(dims);
  s.target = target;
  return s;
}

ReferenceGrid make_grid(double window_length, int T) {
  if (T < 2) throw std::invalid_argument("reference grid needs T >= 2");
  if (!(window_length > 0.0))
    throw std::invalid_argument("reference grid needs window_length > 0");
  ReferenceGrid g;
  g.spacing = window_length / (T - 1);
  g.points.resize(T);
  for (int k = 0; k < T; ++k) g.points[k] = k * g.spacing;
  g.points.back() = window_length;
  return g;
}

size_t DenseCase::observation_count() const {
  size_t n = 0;
  for (uint8_t m : observed) n += m;
  return n;
}

DenseCase densify(const SparseSeries& s, double window_length) {
  const int D = s.num_dims();
  for (int d = 0; d < D; ++d) {
    const auto& obs = s.dims[d];
    for (size_t j = 0; j < obs.size(); ++j) {
      if (j > 0 && !(obs[j - 1].time < obs[j].time))
        throw std::invalid_argument("case " + s.id + " dim " + std::to_string(d) +
                                    ": times not strictly increasing");
      if (!(obs[j].time >= 0.0 && obs[j].time <= window_length))
        throw std::invalid_argument("case " + s.id + " dim " + std::to_string(d) +
                                    ": time outside window");
    }
  }

  DenseCase c;
  c.id = s.id;
  c.D = D;
  c.target = s.target;
  for (int d = 0; d < D; ++d)
    for (const Obs& o : s.dims[d]) c.times.push_back(o.time);
  std::sort(c.times.begin(), c.times.end());
  c.times.erase(std::unique(c.times.begin(), c.times.end()), c.times.end());

  const size_t U = c.times.size();
  c.values.assign(static_cast<size_t>(D) * U, 0.0);
  c.observed.assign(static_cast<size_t>(D) * U, 0);
  for (int d = 0; d < D; ++d) {
    for (const Obs& o : s.dims[d]) {
      const size_t u = static_cast<size_t>(
          std::lower_bound(c.times.begin(), c.times.end(), o.time) - c.times.begin());
      c.values[static_cast<size_t>(d) * U + u] = o.value;
      c.observed[static_cast<size_t>(d) * U + u] = 1;
    }
  }
  return c;
}

SparseSeries sparsify(const DenseCase& c) {
  SparseSeries s;
  s.id = c.id;
  s.target = c.target;
  s.dims.resize(c.D);
  const size_t U = c.times.size();
  for (int d = 0; d < c.D; ++d)
    for (size_t u = 0; u < U; ++u)
      if (c.observed[static_cast<size_t>(d) * U + u])
        s.dims[d].push_back({c.times[u], c.values[static_cast<size_t>(d) * U + u]});
  return s;
}

Normalizer Normalizer::fit(const DenseBatch& batch, std::span<const int> case_indices) {
  if (batch.empty()) throw std::invalid_argument("normalizer: empty batch");
  const int D = batch.front().D;
  std::vector<double> sum(D, 0.0), sumsq(D, 0.0);
  std::vector<size_t> count(D, 0);
  for (int ci : case_indices) {
    const DenseCase& c = batch[ci];
    const size_t U = c.times.size();
    for (int d = 0; d < D; ++d) {
      for (size_t u = 0; u < U; ++u) {
        if (!c.observed[static_cast<size_t>(d) * U + u]) continue;
        const double x = c.values[static_cast<size_t>(d) * U + u];
        sum[d] += x;
        sumsq[d] += x * x;
        ++count[d];
      }
    }
  }
  Normalizer n;
  n.mean.resize(D);
  n.stdev.resize(D);
  for (int d = 0; d < D; ++d) {
    if (count[d] == 0) {
      n.mean[d] = 0.0;
      n.stdev[d] = 1.0;
      continue;
    }
    n.mean[d] = sum[d] / count[d];
    const double var = sumsq[d] / count[d] - n.mean[d] * n.mean[d];
    n.stdev[d] = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
  return n;
}

Normalizer Normalizer::identity(int dims) {
  Normalizer n;
  n.mean.assign(dims, 0.0);
  n.stdev.assign(dims, 1.0);
  return n;
}

void Normalizer::apply(DenseCase& c) const {
  if (static_cast<int>(mean.size()) != c.D)
    throw std::invalid_argument("normalizer dims mismatch for case " + c.id);
  const size_t U = c.times.size();
  for (int d = 0; d < c.D; ++d)
    for (size_t u = 0; u < U; ++u)
      if (c.observed[static_cast<size_t>(d) * U + u])
        c.values[static_cast<size_t>(d) * U + u] =
            (c.values[static_cast<size_t>(d) * U + u] - mean[d]) / stdev[d];
}

}  // namespace ipnet
