#include "ipnet/interp.hpp"

#include <cmath>
#include <stdexcept>

namespace ipnet {

namespace {

// Masked RBF weight sums shared by every op in this module:
//   S[d,q] = sum_u exp(-alpha_d (r_q - t_u)^2) over observed u
//   N[d,q] = same sum weighted by the observed values
// w_store, when non-null, receives the D x Q x U weight array (zero at
// masked-out entries) for reuse in the backward pass.
void rbf_sums(const DenseCase& c, std::span<const double> queries,
              std::span<const double> alpha, std::span<const uint8_t> mask,
              double* w_store, double* S, double* N) {
  const int D = c.D;
  const int U = c.U();
  const int Q = static_cast<int>(queries.size());
  const uint8_t* obs = mask.empty() ? c.observed.data() : mask.data();
  for (int d = 0; d < D; ++d) {
    const double a = alpha[d];
    const double* vals = c.values.data() + static_cast<size_t>(d) * U;
    const uint8_t* om = obs + static_cast<size_t>(d) * U;
    for (int q = 0; q < Q; ++q) {
      const double rq = queries[q];
      double s = 0.0, n = 0.0;
      double* wrow =
          w_store ? w_store + (static_cast<size_t>(d) * Q + q) * U : nullptr;
      for (int u = 0; u < U; ++u) {
        double w = 0.0;
        if (om[u]) {
          const double dt = rq - c.times[u];
          w = std::exp(-a * dt * dt);
          s += w;
          n += w * vals[u];
        }
        if (wrow) wrow[u] = w;
      }
      S[static_cast<size_t>(d) * Q + q] = s;
      N[static_cast<size_t>(d) * Q + q] = n;
    }
  }
}

void check_alpha(std::span<const double> alpha) {
  for (double a : alpha)
    if (!(a > 0.0) || !std::isfinite(a))
      throw std::invalid_argument("interpolation bandwidth must be positive");
}

}  // namespace

void InterpParams::validate() const {
  if (!(kappa > 1.0))
    throw std::invalid_argument("interp params: kappa must be > 1");
  const int D = dims();
  if (static_cast<int>(rho.size()) != D * D)
    throw std::invalid_argument("interp params: rho must be D x D");
  for (double la : log_alpha)
    if (!std::isfinite(la))
      throw std::invalid_argument("interp params: non-finite log_alpha");
  for (double r : rho)
    if (!std::isfinite(r))
      throw std::invalid_argument("interp params: non-finite rho");
}

InterpParams InterpParams::init(int D, double kappa, double grid_spacing,
                                Rng& rng) {
  InterpParams p;
  p.kappa = kappa;
  const double alpha0 = 1.0 / (4.0 * grid_spacing * grid_spacing);
  p.log_alpha.assign(D, std::log(alpha0));
  p.rho.assign(static_cast<size_t>(D) * D, 0.0);
  for (int d = 0; d < D; ++d)
    for (int d2 = 0; d2 < D; ++d2)
      p.rho[static_cast<size_t>(d) * D + d2] =
          (d == d2 ? 1.0 : 0.0) + rng.uniform(-0.01, 0.01);
  p.validate();
  return p;
}

void layer1_interpolate(const DenseCase& c, std::span<const double> queries,
                        std::span<const double> alpha, std::span<double> out,
                        std::span<const uint8_t> mask) {
  check_alpha(alpha);
  const int Q = static_cast<int>(queries.size());
  std::vector<double> S(static_cast<size_t>(c.D) * Q), N(S.size());
  rbf_sums(c, queries, alpha, mask, nullptr, S.data(), N.data());
  for (size_t i = 0; i < S.size(); ++i) out[i] = S[i] > 0.0 ? N[i] / S[i] : 0.0;
}

void intensity(const DenseCase& c, std::span<const double> queries,
               std::span<const double> alpha, std::span<double> out,
               std::span<const uint8_t> mask) {
  check_alpha(alpha);
  const int Q = static_cast<int>(queries.size());
  std::vector<double> S(static_cast<size_t>(c.D) * Q), N(S.size());
  rbf_sums(c, queries, alpha, mask, nullptr, S.data(), N.data());
  for (size_t i = 0; i < S.size(); ++i) out[i] = S[i];
}

void layer2_interpolate(std::span<const double> layer1,
                        std::span<const double> intens,
                        std::span<const double> rho, int D, int Q,
                        std::span<double> out) {
  for (int q = 0; q < Q; ++q) {
    double total = 0.0;
    for (int d2 = 0; d2 < D; ++d2) total += intens[static_cast<size_t>(d2) * Q + q];
    for (int d = 0; d < D; ++d) {
      if (total > 0.0) {
        double num = 0.0;
        for (int d2 = 0; d2 < D; ++d2)
          num += rho[static_cast<size_t>(d) * D + d2] *
                 intens[static_cast<size_t>(d2) * Q + q] *
                 layer1[static_cast<size_t>(d2) * Q + q];
        out[static_cast<size_t>(d) * Q + q] = num / total;
      } else {
        out[static_cast<size_t>(d) * Q + q] = 0.0;
      }
    }
  }
}

void transient_residual(std::span<const double> nonsmooth,
                        std::span<const double> smooth, std::span<double> out) {
  for (size_t i = 0; i < nonsmooth.size(); ++i) out[i] = nonsmooth[i] - smooth[i];
}

ChannelGrid interpolate_batch(const DenseCase& c, const ReferenceGrid& grid,
                              const InterpParams& p) {
  p.validate();
  if (p.dims() != c.D)
    throw std::invalid_argument("interpolate_batch: params/case dims mismatch");
  const int D = c.D;
  const int T = grid.size();
  ChannelGrid g;
  g.D = D;
  g.T = T;
  g.smooth.resize(static_cast<size_t>(D) * T);
  g.transient.resize(g.smooth.size());
  g.intensity.resize(g.smooth.size());

  std::vector<double> a1(D), a2(D);
  for (int d = 0; d < D; ++d) {
    a1[d] = p.alpha1(d);
    a2[d] = p.alpha2(d);
  }
  std::vector<double> l1(g.smooth.size()), l1_rough(g.smooth.size());
  layer1_interpolate(c, grid.points, a1, l1);
  intensity(c, grid.points, a1, g.intensity);
  layer2_interpolate(l1, g.intensity, p.rho, D, T, g.smooth);
  layer1_interpolate(c, grid.points, a2, l1_rough);
  transient_residual(l1_rough, g.smooth, g.transient);
  return g;
}

void InterpEvaluator::forward(const DenseCase& c,
                              std::span<const double> queries,
                              const InterpParams& p,
                              std::span<const uint8_t> mask,
                              bool with_transient) {
  case_ = &c;
  params_ = p;
  with_transient_ = with_transient;
  D_ = c.D;
  U_ = c.U();
  Q_ = static_cast<int>(queries.size());
  queries_.assign(queries.begin(), queries.end());
  mask_.assign(mask.begin(), mask.end());

  const size_t dq = static_cast<size_t>(D_) * Q_;
  const size_t dqu = dq * U_;
  w1_.resize(dqu);
  s1_.resize(dq);
  n1_.resize(dq);
  l1_.resize(dq);
  total_intens_.resize(Q_);
  smooth_.resize(dq);
  intens_.resize(dq);

  std::vector<double> a1(D_), a2(D_);
  for (int d = 0; d < D_; ++d) {
    a1[d] = p.alpha1(d);
    a2[d] = p.alpha2(d);
  }

  rbf_sums(c, queries_, a1, mask_, w1_.data(), s1_.data(), n1_.data());
  for (size_t i = 0; i < dq; ++i) l1_[i] = s1_[i] > 0.0 ? n1_[i] / s1_[i] : 0.0;
  intens_ = s1_;
  for (int q = 0; q < Q_; ++q) {
    double total = 0.0;
    for (int d = 0; d < D_; ++d) total += s1_[static_cast<size_t>(d) * Q_ + q];
    total_intens_[q] = total;
  }
  layer2_interpolate(l1_, intens_, p.rho, D_, Q_, smooth_);

  if (with_transient) {
    w2_.resize(dqu);
    s2_.resize(dq);
    n2_.resize(dq);
    l2_.resize(dq);
    transient_.resize(dq);
    rbf_sums(c, queries_, a2, mask_, w2_.data(), s2_.data(), n2_.data());
    for (size_t i = 0; i < dq; ++i) l2_[i] = s2_[i] > 0.0 ? n2_[i] / s2_[i] : 0.0;
    transient_residual(l2_, smooth_, transient_);
  } else {
    transient_.clear();
  }
}

void InterpEvaluator::backward(std::span<const double> d_smooth,
                               std::span<const double> d_transient,
                               std::span<const double> d_intensity,
                               std::span<double> d_log_alpha,
                               std::span<double> d_rho) const {
  const int D = D_, Q = Q_, U = U_;
  if (Q == 0 || D == 0) return;
  const size_t dq = static_cast<size_t>(D) * Q;
  const bool has_tr = !d_transient.empty();

  // transient = l1(kappa a) - smooth, so its gradient feeds both paths
  std::vector<double> g_sm(dq, 0.0), g_l1(dq, 0.0), g_int(dq, 0.0);
  for (size_t i = 0; i < dq; ++i) {
    double g = d_smooth.empty() ? 0.0 : d_smooth[i];
    if (has_tr) g -= d_transient[i];
    g_sm[i] = g;
  }
  if (!d_intensity.empty())
    for (size_t i = 0; i < dq; ++i) g_int[i] = d_intensity[i];

  // layer 2: smooth_dq = sum_d2 rho[d,d2] I[d2,q] l1[d2,q] / P_q
  const std::span<const double> rho(params_.rho);
  for (int q = 0; q < Q; ++q) {
    const double total = total_intens_[q];
    if (!(total > 0.0)) continue;  // exact-zero outputs carry no gradient
    for (int d = 0; d < D; ++d) {
      const double g = g_sm[static_cast<size_t>(d) * Q + q];
      if (g == 0.0) continue;
      const double sm = smooth_[static_cast<size_t>(d) * Q + q];
      for (int d2 = 0; d2 < D; ++d2) {
        const size_t i2 = static_cast<size_t>(d2) * Q + q;
        const double r = rho[static_cast<size_t>(d) * D + d2];
        d_rho[static_cast<size_t>(d) * D + d2] += g * s1_[i2] * l1_[i2] / total;
        g_l1[i2] += g * r * s1_[i2] / total;
        g_int[i2] += g * (r * l1_[i2] - sm) / total;
      }
    }
  }

  // layer 1: d l1 / d alpha = (l1 * B - A) / S with
  //   A = sum_u w (r-t)^2 x,  B = sum_u w (r-t)^2
  // intensity = S, so d I / d alpha = -B. Transient uses the kappa pass.
  for (int d = 0; d < D; ++d) {
    double d_a1 = 0.0, d_a2 = 0.0;
    const double* vals = case_->values.data() + static_cast<size_t>(d) * U;
    for (int q = 0; q < Q; ++q) {
      const size_t i = static_cast<size_t>(d) * Q + q;
      const double gl = g_l1[i];
      const double gi = g_int[i];
      const bool need_l1 = gl != 0.0 && s1_[i] > 0.0;
      if (need_l1 || gi != 0.0) {
        const double* wrow = w1_.data() + i * U;
        double A = 0.0, B = 0.0;
        for (int u = 0; u < U; ++u) {
          const double dt = queries_[q] - case_->times[u];
          const double wd2 = wrow[u] * dt * dt;
          A += wd2 * vals[u];
          B += wd2;
        }
        if (need_l1) d_a1 += gl * (l1_[i] * B - A) / s1_[i];
        d_a1 -= gi * B;
      }
      if (has_tr) {
        const double gt = d_transient[i];
        if (gt != 0.0 && s2_[i] > 0.0) {
          const double* wrow = w2_.data() + i * U;
          double A = 0.0, B = 0.0;
          for (int u = 0; u < U; ++u) {
            const double dt = queries_[q] - case_->times[u];
            const double wd2 = wrow[u] * dt * dt;
            A += wd2 * vals[u];
            B += wd2;
          }
          d_a2 += gt * (l2_[i] * B - A) / s2_[i];
        }
      }
    }
    const double a1 = params_.alpha1(d);
    d_log_alpha[d] += a1 * d_a1 + params_.kappa * a1 * d_a2;
  }
}

}  // namespace ipnet
