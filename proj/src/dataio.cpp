#include "ipnet/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "ipnet/rng.hpp"

namespace ipnet {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_double(const std::string& s, const std::string& path, int line) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = b + s.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e) {
    throw std::invalid_argument(path + ":" + std::to_string(line) +
                             ": cannot parse number '" + s + "'");
  }
  return v;
}

long parse_int(const std::string& s, const std::string& path, int line) {
  long v = 0;
  const char* b = s.data();
  const char* e = b + s.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e) {
    throw std::invalid_argument(path + ":" + std::to_string(line) +
                             ": cannot parse integer '" + s + "'");
  }
  return v;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string LoadReport::summary() const {
  std::ostringstream out;
  out << n_cases << " cases, " << n_obs << " observations";
  if (duplicates > 0) out << ", " << duplicates << " duplicate rows dropped";
  if (unlabeled_cases > 0) out << ", " << unlabeled_cases << " unlabeled cases rejected";
  out << "\nper-dim missingness over union timestamps:";
  for (size_t d = 0; d < missing_frac.size(); ++d) {
    char buf[32];
    std::snprintf(buf, sizeof buf, " d%zu=%.1f%%", d, 100.0 * missing_frac[d]);
    out << buf;
  }
  return out.str();
}

LoadReport dataset_report(const std::vector<SparseSeries>& data) {
  LoadReport r;
  r.n_cases = static_cast<int>(data.size());
  const int D = data.empty() ? 0 : data[0].num_dims();
  std::vector<size_t> observed(D, 0);
  size_t union_total = 0;
  std::vector<double> stamps;
  for (const auto& s : data) {
    r.n_obs += s.total_observations();
    stamps.clear();
    for (int d = 0; d < D; ++d) {
      observed[d] += s.dims[d].size();  // times within a dim are distinct
      for (const Obs& o : s.dims[d]) stamps.push_back(o.time);
    }
    std::sort(stamps.begin(), stamps.end());
    stamps.erase(std::unique(stamps.begin(), stamps.end()), stamps.end());
    union_total += stamps.size();
  }
  r.missing_frac.assign(D, 0.0);
  for (int d = 0; d < D; ++d) {
    r.missing_frac[d] =
        union_total == 0
            ? 0.0
            : 1.0 - static_cast<double>(observed[d]) / union_total;
  }
  return r;
}

std::vector<SparseSeries> load_dataset(const std::string& obs_path,
                                       const std::string& labels_path,
                                       Task task, double window_length,
                                       LoadReport* report) {
  std::ifstream labels_in(labels_path);
  if (!labels_in) {
    throw std::invalid_argument("cannot open labels file " + labels_path);
  }
  std::vector<std::string> roster;          // case order = labels file order
  std::map<std::string, Label> labels;
  std::string line;
  int lineno = 0;
  while (std::getline(labels_in, line)) {
    ++lineno;
    if (lineno == 1) {
      if (line.rfind("case_id,label", 0) != 0) {
        throw std::invalid_argument(labels_path + ":1: expected header case_id,label");
      }
      continue;
    }
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 2 || f[0].empty()) {
      throw std::invalid_argument(labels_path + ":" + std::to_string(lineno) +
                               ": expected case_id,label");
    }
    Label lab;
    lab.task = task;
    lab.value = parse_double(f[1], labels_path, lineno);
    if (task == Task::classification && lab.value != 0.0 && lab.value != 1.0) {
      throw std::invalid_argument(labels_path + ":" + std::to_string(lineno) +
                               ": classification label must be 0 or 1, got '" +
                               f[1] + "'");
    }
    if (!std::isfinite(lab.value)) {
      throw std::invalid_argument(labels_path + ":" + std::to_string(lineno) +
                               ": non-finite label");
    }
    if (labels.emplace(f[0], lab).second) roster.push_back(f[0]);
  }

  std::ifstream obs_in(obs_path);
  if (!obs_in) {
    throw std::invalid_argument("cannot open observation file " + obs_path);
  }
  std::map<std::string, std::vector<std::vector<Obs>>> raw;
  std::map<std::string, bool> unlabeled;
  int max_dim = -1;
  lineno = 0;
  while (std::getline(obs_in, line)) {
    ++lineno;
    if (lineno == 1) {
      if (line.rfind("case_id,dim,time,value", 0) != 0) {
        throw std::invalid_argument(obs_path + ":1: expected header case_id,dim,time,value");
      }
      continue;
    }
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 4 || f[0].empty()) {
      throw std::invalid_argument(obs_path + ":" + std::to_string(lineno) +
                               ": expected case_id,dim,time,value");
    }
    const long dim = parse_int(f[1], obs_path, lineno);
    if (dim < 0) {
      throw std::invalid_argument(obs_path + ":" + std::to_string(lineno) +
                               ": dim index must be >= 0, got " + f[1]);
    }
    const double t = parse_double(f[2], obs_path, lineno);
    const double v = parse_double(f[3], obs_path, lineno);
    if (!labels.count(f[0])) {
      unlabeled[f[0]] = true;
      continue;
    }
    max_dim = std::max(max_dim, static_cast<int>(dim));
    auto& dims = raw[f[0]];
    if (static_cast<long>(dims.size()) <= dim) dims.resize(dim + 1);
    dims[static_cast<size_t>(dim)].push_back({t, v});
  }

  const int D = max_dim + 1;
  int duplicates = 0;
  std::vector<SparseSeries> out;
  out.reserve(roster.size());
  for (const auto& id : roster) {
    auto it = raw.find(id);
    std::vector<std::vector<Obs>> dims =
        it == raw.end() ? std::vector<std::vector<Obs>>() : std::move(it->second);
    dims.resize(std::max(D, 1));
    out.push_back(make_sparse_series(id, std::move(dims), labels.at(id),
                                     window_length, &duplicates));
  }
  if (report != nullptr) {
    *report = dataset_report(out);
    report->duplicates = duplicates;
    report->unlabeled_cases = static_cast<int>(unlabeled.size());
  }
  return out;
}

void write_dataset_csv(const std::vector<SparseSeries>& data,
                       const std::string& obs_path,
                       const std::string& labels_path) {
  std::ofstream obs(obs_path);
  if (!obs) throw std::runtime_error("cannot write " + obs_path);
  obs << "case_id,dim,time,value\n";
  for (const auto& s : data) {
    for (int d = 0; d < s.num_dims(); ++d) {
      for (const Obs& o : s.dims[d]) {
        obs << s.id << ',' << d << ',' << format_double(o.time) << ','
            << format_double(o.value) << '\n';
      }
    }
  }
  std::ofstream lab(labels_path);
  if (!lab) throw std::runtime_error("cannot write " + labels_path);
  lab << "case_id,label\n";
  for (const auto& s : data) {
    if (s.target.task == Task::classification) {
      lab << s.id << ',' << static_cast<int>(s.target.value) << '\n';
    } else {
      lab << s.id << ',' << format_double(s.target.value) << '\n';
    }
  }
}

void SynthConfig::validate() const {
  if (n_cases <= 0 || D <= 0) {
    throw std::invalid_argument("SynthConfig: n_cases and D must be positive");
  }
  if (!(window > 0.0)) {
    throw std::invalid_argument("SynthConfig: window must be positive");
  }
  if (!(class_balance > 0.0 && class_balance < 1.0)) {
    throw std::invalid_argument("SynthConfig: class_balance must be in (0,1)");
  }
  if (static_cast<int>(rate_per_hour.size()) != D) {
    throw std::invalid_argument("SynthConfig: need one rate per dimension");
  }
  for (double r : rate_per_hour) {
    if (!(r > 0.0)) {
      throw std::invalid_argument("SynthConfig: rates must be positive");
    }
  }
  if (noise_sd < 0.0 || latent_harmonics < 1 || latent_amp <= 0.0) {
    throw std::invalid_argument("SynthConfig: bad latent parameters");
  }
}

void SynthConfig::fill_default_rates() {
  if (!rate_per_hour.empty()) return;
  // Profile shaped like common bedside vitals: a few densely sampled
  // channels and a long sparse tail.
  static const double profile[12] = {0.80, 0.90, 0.48, 0.59, 0.60, 0.19,
                                     0.14, 0.06, 0.20, 0.06, 0.10, 0.04};
  rate_per_hour.resize(D);
  for (int d = 0; d < D; ++d) rate_per_hour[d] = profile[d % 12];
}

double SynthConfig::rate_for_missingness(double missing_frac) {
  if (!(missing_frac > 0.0 && missing_frac < 1.0)) {
    throw std::invalid_argument("missing fraction must be in (0,1)");
  }
  return -std::log(missing_frac);
}

namespace {

struct Latent {
  // shared and per-dim sinusoid mixtures plus class effects
  int H = 0;
  double window = 0.0;
  std::vector<double> shared_a, shared_b;          // H
  std::vector<double> idio_a, idio_b;              // D x H
  std::vector<double> mix;                         // D
  double shift = 0.0;                              // class trend shift
  struct Bump {
    int d;
    double center, width, amp;
  };
  std::vector<Bump> bumps;

  double eval(int d, double t) const {
    const double w = 2.0 * M_PI / window;
    double s = 0.0;
    for (int h = 0; h < H; ++h) {
      const double ph = w * (h + 1) * t;
      s += (shared_a[h] * std::sin(ph) + shared_b[h] * std::cos(ph)) / (h + 1);
    }
    double v = mix[d] * s + shift;
    for (int h = 0; h < H; ++h) {
      const double ph = w * (h + 1) * t;
      const size_t i = static_cast<size_t>(d) * H + h;
      v += (idio_a[i] * std::sin(ph) + idio_b[i] * std::cos(ph)) / (2.0 * (h + 1));
    }
    for (const Bump& b : bumps) {
      if (b.d != d) continue;
      const double z = (t - b.center) / b.width;
      v += b.amp * std::exp(-0.5 * z * z);
    }
    return v;
  }

  double dim0_average(int steps = 64) const {
    // trapezoid-free midpoint average of the bump-free trend is fine here;
    // include bumps so the target is exactly the latent the values follow
    double s = 0.0;
    for (int i = 0; i < steps; ++i) {
      const double t = window * (i + 0.5) / steps;
      s += eval(0, t);
    }
    return s / steps;
  }
};

}  // namespace

std::vector<SparseSeries> generate_synthetic(const SynthConfig& cfg_in) {
  SynthConfig cfg = cfg_in;
  cfg.fill_default_rates();
  cfg.validate();

  const int D = cfg.D;
  const int H = cfg.latent_harmonics;

  // Dataset-level structure: per-dimension mixing weights for the shared
  // latent component, fixed across cases so dimensions stay correlated.
  Rng mix_rng(derive_seed(cfg.seed, 0xda7a));
  std::vector<double> mix(D);
  for (int d = 0; d < D; ++d) {
    const double sign = mix_rng.uniform() < 0.5 ? -1.0 : 1.0;
    mix[d] = sign * mix_rng.uniform(0.4, 1.0);
  }

  std::vector<SparseSeries> out(cfg.n_cases);
  for (int n = 0; n < cfg.n_cases; ++n) {
    Rng rng(derive_seed(cfg.seed, 0xca5e, static_cast<uint64_t>(n)));
    const int cls = rng.uniform() < cfg.class_balance ? 1 : 0;
    const double class_sign = cls == 1 ? 0.5 : -0.5;

    Latent lat;
    lat.H = H;
    lat.window = cfg.window;
    lat.mix = mix;
    lat.shared_a.resize(H);
    lat.shared_b.resize(H);
    lat.idio_a.resize(static_cast<size_t>(D) * H);
    lat.idio_b.resize(static_cast<size_t>(D) * H);
    for (int h = 0; h < H; ++h) {
      lat.shared_a[h] = cfg.latent_amp * rng.normal();
      lat.shared_b[h] = cfg.latent_amp * rng.normal();
    }
    for (size_t i = 0; i < lat.idio_a.size(); ++i) {
      lat.idio_a[i] = cfg.latent_amp * rng.normal();
      lat.idio_b[i] = cfg.latent_amp * rng.normal();
    }
    lat.shift = cfg.trend_signal * class_sign;

    if (cls == 1 && cfg.transient_signal > 0.0) {
      const int n_bumps = 1 + rng.poisson(1.5);
      for (int b = 0; b < n_bumps; ++b) {
        Latent::Bump bump;
        bump.d = static_cast<int>(rng.uniform_int(D));
        bump.center = rng.uniform(0.0, cfg.window);
        bump.width = rng.uniform(0.3, 0.8);
        bump.amp = cfg.transient_signal *
                   (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.8, 1.2);
        lat.bumps.push_back(bump);
      }
    }

    // Observation times: inhomogeneous Poisson by thinning, with a mild
    // 24-hour modulation and a class-dependent rate multiplier.
    const double rate_mult = std::exp(cfg.intensity_signal * class_sign);
    const double phase = rng.uniform(0.0, 2.0 * M_PI);
    std::vector<std::vector<Obs>> dims(D);
    for (int d = 0; d < D; ++d) {
      const double lam_max = cfg.rate_per_hour[d] * rate_mult * 1.3;
      double t = 0.0;
      for (;;) {
        t += rng.exponential(lam_max);
        if (t >= cfg.window) break;
        const double lam_t = cfg.rate_per_hour[d] * rate_mult *
                             (1.0 + 0.3 * std::sin(2.0 * M_PI * t / 24.0 + phase));
        if (rng.uniform() * lam_max <= lam_t) {
          dims[d].push_back({t, lat.eval(d, t) + cfg.noise_sd * rng.normal()});
        }
      }
    }

    Label lab;
    lab.task = cfg.task;
    if (cfg.task == Task::classification) {
      lab.value = cls;
    } else {
      lab.value = cfg.reg_bias + cfg.reg_scale * lat.dim0_average();
    }

    char id[32];
    std::snprintf(id, sizeof id, "case-%06d", n);
    out[n] = make_sparse_series(id, std::move(dims), lab, cfg.window);
  }
  return out;
}

std::vector<FoldSplit> kfold_split(const std::vector<SparseSeries>& data,
                                   int k, uint64_t seed,
                                   double val_fraction) {
  const int n = static_cast<int>(data.size());
  if (k < 2) throw std::invalid_argument("kfold_split: k must be >= 2");
  if (n < k) throw std::invalid_argument("kfold_split: fewer cases than folds");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw std::invalid_argument("kfold_split: val_fraction must be in [0,1)");
  }

  const bool stratified =
      !data.empty() && data[0].target.task == Task::classification;

  // Shuffle within each stratum, then deal round-robin into folds.
  std::vector<std::vector<int>> strata;
  if (stratified) {
    strata.resize(2);
    for (int i = 0; i < n; ++i) {
      strata[data[i].target.value == 1.0 ? 1 : 0].push_back(i);
    }
    for (const auto& s : strata) {
      if (static_cast<int>(s.size()) < k) {
        throw std::invalid_argument(
            "kfold_split: a class has fewer cases than folds");
      }
    }
  } else {
    strata.resize(1);
    for (int i = 0; i < n; ++i) strata[0].push_back(i);
  }

  Rng rng(derive_seed(seed, 0xf01d));
  std::vector<std::vector<int>> fold_members(k);
  for (auto& s : strata) {
    rng.shuffle(s);
    for (size_t i = 0; i < s.size(); ++i) {
      fold_members[i % k].push_back(s[i]);
    }
  }
  for (auto& members : fold_members) std::sort(members.begin(), members.end());

  std::vector<FoldSplit> folds(k);
  for (int f = 0; f < k; ++f) {
    folds[f].test = fold_members[f];
    std::vector<int> rest;
    for (int g = 0; g < k; ++g) {
      if (g == f) continue;
      rest.insert(rest.end(), fold_members[g].begin(), fold_members[g].end());
    }
    std::sort(rest.begin(), rest.end());
    Rng vr(derive_seed(seed, 0xf01d + 1, static_cast<uint64_t>(f)));
    vr.shuffle(rest);
    const int n_val = static_cast<int>(std::floor(val_fraction * rest.size()));
    folds[f].val.assign(rest.begin(), rest.begin() + n_val);
    folds[f].train.assign(rest.begin() + n_val, rest.end());
    std::sort(folds[f].val.begin(), folds[f].val.end());
    std::sort(folds[f].train.begin(), folds[f].train.end());
  }
  return folds;
}

}  // namespace ipnet
