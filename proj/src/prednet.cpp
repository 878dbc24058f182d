#include "ipnet/prednet.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ipnet {

namespace {

double sigm(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// y += M x, M is rows x cols row-major.
void matvec_acc(std::span<const double> M, std::span<const double> x, int rows,
                int cols, double* y) {
  for (int i = 0; i < rows; ++i) {
    const double* row = M.data() + static_cast<size_t>(i) * cols;
    double s = 0.0;
    for (int j = 0; j < cols; ++j) s += row[j] * x[j];
    y[i] += s;
  }
}

// y += M^T x, M is rows x cols row-major, x has rows entries.
void matvec_t_acc(std::span<const double> M, const double* x, int rows,
                  int cols, double* y) {
  for (int i = 0; i < rows; ++i) {
    const double* row = M.data() + static_cast<size_t>(i) * cols;
    const double xi = x[i];
    if (xi == 0.0) continue;
    for (int j = 0; j < cols; ++j) y[j] += row[j] * xi;
  }
}

// M += a outer b, M is |a| x |b| row-major.
void outer_acc(std::span<double> M, const double* a, int na, const double* b,
               int nb) {
  for (int i = 0; i < na; ++i) {
    double* row = M.data() + static_cast<size_t>(i) * nb;
    const double ai = a[i];
    if (ai == 0.0) continue;
    for (int j = 0; j < nb; ++j) row[j] += ai * b[j];
  }
}

}  // namespace

void gru_forward(std::span<const double> seq, int T, const GruSpans& w,
                 GruCache& cache) {
  const int F = w.F;
  const int H = w.H;
  if (static_cast<int>(seq.size()) != T * F) {
    throw std::invalid_argument("gru_forward: sequence length " +
                                std::to_string(seq.size()) +
                                " does not match T*F");
  }
  cache.T = T;
  cache.F = F;
  cache.H = H;
  cache.x.assign(seq.begin(), seq.end());
  const size_t th = static_cast<size_t>(T) * H;
  cache.z.assign(th, 0.0);
  cache.r.assign(th, 0.0);
  cache.c.assign(th, 0.0);
  cache.h.assign(th, 0.0);

  std::vector<double> az(H), ar(H), ac(H), rh(H);
  std::vector<double> hprev(H, 0.0);

  for (int t = 0; t < T; ++t) {
    std::span<const double> xt = seq.subspan(static_cast<size_t>(t) * F, F);
    for (int f = 0; f < F; ++f) {
      if (!std::isfinite(xt[f])) {
        throw std::runtime_error("gru_forward: non-finite input at step " +
                                 std::to_string(t) + ", feature " +
                                 std::to_string(f));
      }
    }
    std::copy(w.bz.begin(), w.bz.end(), az.begin());
    std::copy(w.br.begin(), w.br.end(), ar.begin());
    std::copy(w.bh.begin(), w.bh.end(), ac.begin());
    matvec_acc(w.Wz, xt, H, F, az.data());
    matvec_acc(w.Wr, xt, H, F, ar.data());
    matvec_acc(w.Wh, xt, H, F, ac.data());
    matvec_acc(w.Uz, hprev, H, H, az.data());
    matvec_acc(w.Ur, hprev, H, H, ar.data());

    double* zt = cache.z.data() + static_cast<size_t>(t) * H;
    double* rt = cache.r.data() + static_cast<size_t>(t) * H;
    double* ct = cache.c.data() + static_cast<size_t>(t) * H;
    double* ht = cache.h.data() + static_cast<size_t>(t) * H;
    for (int i = 0; i < H; ++i) {
      zt[i] = sigm(az[i]);
      rt[i] = sigm(ar[i]);
      rh[i] = rt[i] * hprev[i];
    }
    matvec_acc(w.Uh, rh, H, H, ac.data());
    for (int i = 0; i < H; ++i) {
      ct[i] = std::tanh(ac[i]);
      ht[i] = (1.0 - zt[i]) * hprev[i] + zt[i] * ct[i];
      hprev[i] = ht[i];
    }
  }
}

void gru_backward(const GruCache& cache, const GruSpans& w,
                  std::span<const double> d_final, GruGradSpans& g,
                  std::span<double> d_seq) {
  const int T = cache.T;
  const int F = cache.F;
  const int H = cache.H;

  std::vector<double> dh(d_final.begin(), d_final.end());
  std::vector<double> dhprev(H), daz(H), dar(H), dac(H), drh(H), rh(H);

  for (int t = T - 1; t >= 0; --t) {
    const double* zt = cache.z.data() + static_cast<size_t>(t) * H;
    const double* rt = cache.r.data() + static_cast<size_t>(t) * H;
    const double* ct = cache.c.data() + static_cast<size_t>(t) * H;
    const double* hprev =
        t > 0 ? cache.h.data() + static_cast<size_t>(t - 1) * H : nullptr;
    const double* xt = cache.x.data() + static_cast<size_t>(t) * F;

    std::fill(dhprev.begin(), dhprev.end(), 0.0);
    for (int i = 0; i < H; ++i) {
      const double hp = hprev ? hprev[i] : 0.0;
      const double dz = dh[i] * (ct[i] - hp);
      const double dc = dh[i] * zt[i];
      dhprev[i] = dh[i] * (1.0 - zt[i]);
      dac[i] = dc * (1.0 - ct[i] * ct[i]);
      daz[i] = dz * zt[i] * (1.0 - zt[i]);
      rh[i] = rt[i] * hp;
    }
    // candidate path: a_c = Wh x + Uh (r*hprev) + bh
    outer_acc(g.Wh, dac.data(), H, xt, F);
    outer_acc(g.Uh, dac.data(), H, rh.data(), H);
    for (int i = 0; i < H; ++i) g.bh[i] += dac[i];
    std::fill(drh.begin(), drh.end(), 0.0);
    matvec_t_acc(w.Uh, dac.data(), H, H, drh.data());
    for (int i = 0; i < H; ++i) {
      const double hp = hprev ? hprev[i] : 0.0;
      const double dr = drh[i] * hp;
      dhprev[i] += drh[i] * rt[i];
      dar[i] = dr * rt[i] * (1.0 - rt[i]);
    }
    // gate paths
    outer_acc(g.Wz, daz.data(), H, xt, F);
    outer_acc(g.Wr, dar.data(), H, xt, F);
    for (int i = 0; i < H; ++i) {
      g.bz[i] += daz[i];
      g.br[i] += dar[i];
    }
    if (hprev) {
      outer_acc(g.Uz, daz.data(), H, hprev, H);
      outer_acc(g.Ur, dar.data(), H, hprev, H);
      matvec_t_acc(w.Uz, daz.data(), H, H, dhprev.data());
      matvec_t_acc(w.Ur, dar.data(), H, H, dhprev.data());
    }
    if (!d_seq.empty()) {
      double* dx = d_seq.data() + static_cast<size_t>(t) * F;
      matvec_t_acc(w.Wz, daz.data(), H, F, dx);
      matvec_t_acc(w.Wr, dar.data(), H, F, dx);
      matvec_t_acc(w.Wh, dac.data(), H, F, dx);
    }
    dh.swap(dhprev);
  }
}

double cls_head_forward(std::span<const double> hidden,
                        std::span<const double> w, double b) {
  double s = b;
  for (size_t i = 0; i < hidden.size(); ++i) s += w[i] * hidden[i];
  return s;
}

void cls_head_backward(std::span<const double> hidden,
                       std::span<const double> w, double d_score,
                       std::span<double> dw, std::span<double> db,
                       std::span<double> d_hidden) {
  for (size_t i = 0; i < hidden.size(); ++i) {
    dw[i] += d_score * hidden[i];
    d_hidden[i] += d_score * w[i];
  }
  db[0] += d_score;
}

double reg_head_forward(std::span<const double> hidden, const RegHeadSpans& p,
                        RegHeadCache& cache) {
  cache.a.assign(p.R, 0.0);
  double out = p.b2;
  for (int i = 0; i < p.R; ++i) {
    const double* row = p.W1.data() + static_cast<size_t>(i) * p.H;
    double s = p.b1[i];
    for (int j = 0; j < p.H; ++j) s += row[j] * hidden[j];
    cache.a[i] = std::tanh(s);
    out += p.w2[i] * cache.a[i];
  }
  return out;
}

void reg_head_backward(std::span<const double> hidden, const RegHeadSpans& p,
                       const RegHeadCache& cache, double d_out,
                       std::span<double> dW1, std::span<double> db1,
                       std::span<double> dw2, std::span<double> db2,
                       std::span<double> d_hidden) {
  db2[0] += d_out;
  for (int i = 0; i < p.R; ++i) {
    const double ai = cache.a[i];
    dw2[i] += d_out * ai;
    const double da = d_out * p.w2[i] * (1.0 - ai * ai);
    double* gw = dW1.data() + static_cast<size_t>(i) * p.H;
    const double* row = p.W1.data() + static_cast<size_t>(i) * p.H;
    for (int j = 0; j < p.H; ++j) {
      gw[j] += da * hidden[j];
      d_hidden[j] += da * row[j];
    }
    db1[i] += da;
  }
}

const char* baseline_name(BaselineVariant v) {
  switch (v) {
    case BaselineVariant::mean: return "mean";
    case BaselineVariant::forward: return "forward";
    case BaselineVariant::simple: return "simple";
    case BaselineVariant::decay: return "decay";
  }
  return "?";
}

BaselineInput build_baseline_input(const DenseCase& c,
                                   const ReferenceGrid& grid,
                                   BaselineVariant variant,
                                   std::span<const double> dim_means,
                                   std::span<const double> decay_w,
                                   std::span<const double> decay_b) {
  const int D = c.D;
  const int T = grid.size();
  const double window = grid.window_length();
  const bool rich =
      variant == BaselineVariant::simple || variant == BaselineVariant::decay;

  BaselineInput in;
  in.variant = variant;
  in.T = T;
  in.D = D;
  in.F = rich ? 3 * D : D;
  in.seq.assign(static_cast<size_t>(T) * in.F, 0.0);
  if (variant == BaselineVariant::decay) {
    in.last_value.assign(static_cast<size_t>(T) * D, 0.0);
    in.has_prior.assign(static_cast<size_t>(T) * D, 0);
  }
  if (rich) in.dt.assign(static_cast<size_t>(T) * D, 0.0);

  // Latest observation per (grid bin, dim): nearest grid point, last wins.
  std::vector<double> bin_value(static_cast<size_t>(T) * D, 0.0);
  std::vector<double> bin_time(static_cast<size_t>(T) * D, 0.0);
  std::vector<uint8_t> bin_obs(static_cast<size_t>(T) * D, 0);
  for (int d = 0; d < D; ++d) {
    for (int u = 0; u < c.U(); ++u) {
      if (!c.observed_at(d, u)) continue;
      const double t = c.times[u];
      int k = grid.spacing > 0.0
                  ? static_cast<int>(std::lround(t / grid.spacing))
                  : 0;
      k = std::clamp(k, 0, T - 1);
      const size_t cell = static_cast<size_t>(k) * D + d;
      bin_value[cell] = c.value_at(d, u);
      bin_time[cell] = t;
      bin_obs[cell] = 1;
    }
  }

  for (int d = 0; d < D; ++d) {
    bool seen = false;
    double last_v = dim_means[d];
    double last_t = 0.0;
    for (int k = 0; k < T; ++k) {
      const size_t cell = static_cast<size_t>(k) * D + d;
      if (bin_obs[cell]) {
        seen = true;
        last_v = bin_value[cell];
        last_t = bin_time[cell];
      }
      const double dt =
          bin_obs[cell] ? 0.0
                        : std::min(grid.points[k] - (seen ? last_t : 0.0),
                                   window);
      double* step = in.seq.data() + static_cast<size_t>(k) * in.F;
      switch (variant) {
        case BaselineVariant::mean:
          step[d] = bin_obs[cell] ? bin_value[cell] : dim_means[d];
          break;
        case BaselineVariant::forward:
          step[d] = seen ? last_v : dim_means[d];
          break;
        case BaselineVariant::simple:
          step[d] = seen ? last_v : dim_means[d];
          step[D + d] = bin_obs[cell] ? 1.0 : 0.0;
          step[2 * D + d] = dt;
          break;
        case BaselineVariant::decay: {
          double g = 0.0;
          if (seen) {
            const double a = decay_w[d] * dt + decay_b[d];
            g = std::exp(-std::max(0.0, a));
          }
          step[d] = seen ? g * last_v + (1.0 - g) * dim_means[d]
                         : dim_means[d];
          step[D + d] = bin_obs[cell] ? 1.0 : 0.0;
          step[2 * D + d] = dt;
          in.last_value[cell] = seen ? last_v : dim_means[d];
          in.has_prior[cell] = seen ? 1 : 0;
          break;
        }
      }
      if (rich) in.dt[cell] = dt;
    }
  }
  return in;
}

void decay_backward(const BaselineInput& in, std::span<const double> d_seq,
                    std::span<const double> dim_means,
                    std::span<const double> decay_w,
                    std::span<const double> decay_b, std::span<double> d_w,
                    std::span<double> d_b) {
  if (in.variant != BaselineVariant::decay) {
    throw std::invalid_argument("decay_backward: input is not decay variant");
  }
  for (int k = 0; k < in.T; ++k) {
    for (int d = 0; d < in.D; ++d) {
      const size_t cell = static_cast<size_t>(k) * in.D + d;
      if (!in.has_prior[cell]) continue;  // g pinned at 0, no dependence
      const double dt = in.dt[cell];
      const double a = decay_w[d] * dt + decay_b[d];
      if (a <= 0.0) continue;  // g = 1 on the flat side of max(0, a)
      const double g = std::exp(-a);
      const double dval = d_seq[static_cast<size_t>(k) * in.F + d];
      // value = g*last + (1-g)*mean; dg/da = -g
      const double da = dval * (in.last_value[cell] - dim_means[d]) * (-g);
      d_w[d] += da * dt;
      d_b[d] += da;
    }
  }
}

std::vector<double> mean_features(const DenseCase& c,
                                  std::span<const double> dim_means) {
  std::vector<double> f(c.D, 0.0);
  for (int d = 0; d < c.D; ++d) {
    double s = 0.0;
    int n = 0;
    for (int u = 0; u < c.U(); ++u) {
      if (c.observed_at(d, u)) {
        s += c.value_at(d, u);
        ++n;
      }
    }
    f[d] = n > 0 ? s / n : dim_means[d];
  }
  return f;
}

}  // namespace ipnet
