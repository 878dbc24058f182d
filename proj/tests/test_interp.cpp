#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "ipnet/interp.hpp"
#include "ipnet/rng.hpp"
#include "ipnet/series.hpp"

#include "test_util.hpp"

using namespace ipnet;

namespace {

InterpParams params_for(int D, double alpha, double kappa = 10.0) {
  InterpParams p;
  p.kappa = kappa;
  p.log_alpha.assign(D, std::log(alpha));
  p.rho.assign(static_cast<size_t>(D) * D, 0.0);
  for (int d = 0; d < D; ++d) p.rho[static_cast<size_t>(d) * D + d] = 1.0;
  return p;
}

InterpParams random_params(Rng& rng, int D) {
  InterpParams p;
  p.kappa = rng.uniform(1.5, 20.0);
  p.log_alpha.resize(D);
  // Keep even the kappa-scaled bandwidth out of exp underflow on a 10h
  // window (kappa * alpha * 100 < 700), so no weight sum degrades to the
  // exact-zero convention or to denormals inside these property checks.
  const double hi = std::min(0.9, std::log(6.0 / p.kappa));
  for (double& la : p.log_alpha) la = rng.uniform(-3.0, hi);
  p.rho.resize(static_cast<size_t>(D) * D);
  for (double& r : p.rho) r = rng.normal();
  return p;
}

}  // namespace

TEST_CASE("layer1: single observation gives a constant interpolant") {
  auto c = testutil::make_case({{{10.0, 4.2}}});
  auto grid = make_grid(48.0, 49);
  std::vector<double> alpha{0.005}, out(49);
  layer1_interpolate(c, grid.points, alpha, out);
  for (double v : out) CHECK(v == doctest::Approx(4.2).epsilon(1e-12));
}

TEST_CASE("layer1: symmetric weights average two observations") {
  auto c = testutil::make_case({{{0.0, 0.0}, {1.0, 2.0}}});
  std::vector<double> q{0.5}, alpha{1.0}, out(1);
  layer1_interpolate(c, q, alpha, out);
  CHECK(out[0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("layer1: scalar kernel evaluation at an endpoint") {
  auto c = testutil::make_case({{{0.0, 0.0}, {1.0, 2.0}}});
  std::vector<double> q{0.0}, alpha{1.0}, out(1);
  layer1_interpolate(c, q, alpha, out);
  // 2 e^-1 / (1 + e^-1), frozen at double precision
  CHECK(out[0] == doctest::Approx(0.5378828427399902).epsilon(1e-14));
}

TEST_CASE("layer1: mask drops points exactly like removing them") {
  auto c = testutil::make_case({{{0.0, 1.0}, {2.0, 5.0}, {4.0, -3.0}}});
  std::vector<double> q{0.0, 1.0, 3.7}, alpha{0.7};
  std::vector<double> masked(3), removed(3);
  std::vector<uint8_t> mask = c.observed;
  mask[1] = 0;  // drop the t=2 point
  layer1_interpolate(c, q, alpha, masked, mask);
  auto c2 = testutil::make_case({{{0.0, 1.0}, {4.0, -3.0}}});
  layer1_interpolate(c2, q, alpha, removed);
  for (int k = 0; k < 3; ++k) CHECK(masked[k] == removed[k]);
}

TEST_CASE("intensity: observation exactly at the query gives 1") {
  auto c = testutil::make_case({{{3.0, 9.9}}});
  std::vector<double> q{3.0}, alpha{2.5}, out(1);
  intensity(c, q, alpha, out);
  CHECK(out[0] == 1.0);
}

TEST_CASE("intensity: empty dimension is identically zero") {
  auto c = testutil::make_case({{}, {{1.0, 1.0}}});
  std::vector<double> q{0.0, 1.0, 2.0}, alpha{1.0, 1.0}, out(6);
  intensity(c, q, alpha, out);
  for (int k = 0; k < 3; ++k) CHECK(out[k] == 0.0);
}

TEST_CASE("intensity: sums kernel weights over observations") {
  auto c = testutil::make_case({{{3.0, 0.0}, {4.0, 0.0}}}, 10.0);
  std::vector<double> q{2.0}, alpha{1.0}, out(1);
  intensity(c, q, alpha, out);
  // e^-1 + e^-4, frozen at double precision
  CHECK(out[0] == doctest::Approx(0.3861950800601765).epsilon(1e-14));
}

TEST_CASE("layer2: D=1 with rho=1 is the identity") {
  std::vector<double> l1{0.3, -1.7, 2.2}, inten{0.5, 1.0, 3.0};
  std::vector<double> rho{1.0}, out(3);
  layer2_interpolate(l1, inten, rho, 1, 3, out);
  for (int k = 0; k < 3; ++k)
    CHECK(out[k] == doctest::Approx(l1[k]).epsilon(1e-15));
}

TEST_CASE("layer2: identity rho with one silent dimension") {
  // intensities (1, 0): dim 0 passes through scaled by total intensity,
  // dim 1 has a zero numerator.
  std::vector<double> l1{0.7, -2.0}, inten{1.0, 0.0}, rho{1, 0, 0, 1}, out(2);
  layer2_interpolate(l1, inten, rho, 2, 1, out);
  CHECK(out[0] == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(out[1] == 0.0);
}

TEST_CASE("layer2: all-ones rho with equal intensities averages") {
  std::vector<double> l1{3.0, 5.0}, inten{0.8, 0.8}, rho{1, 1, 1, 1}, out(2);
  layer2_interpolate(l1, inten, rho, 2, 1, out);
  CHECK(out[0] == doctest::Approx(4.0).epsilon(1e-15));
  CHECK(out[1] == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("layer2: zero total intensity yields exact zero") {
  std::vector<double> l1{1.0, 2.0}, inten{0.0, 0.0}, rho{1, 1, 1, 1}, out(2);
  layer2_interpolate(l1, inten, rho, 2, 1, out);
  CHECK(out[0] == 0.0);
  CHECK(out[1] == 0.0);
}

TEST_CASE("transient_residual: elementwise subtraction") {
  std::vector<double> a{1.0, 1.0}, out(2);
  transient_residual(a, a, out);
  CHECK(out[0] == 0.0);
  CHECK(out[1] == 0.0);

  std::vector<double> ns{3.0}, sm{1.5}, out1(1);
  transient_residual(ns, sm, out1);
  CHECK(out1[0] == 1.5);

  Rng rng(5);
  std::vector<double> x(8), y(8), z(8);
  for (int i = 0; i < 8; ++i) {
    x[i] = rng.normal();
    y[i] = rng.normal();
  }
  transient_residual(x, y, z);
  for (int i = 0; i < 8; ++i) CHECK(z[i] == x[i] - y[i]);
}

TEST_CASE("interpolate_batch: empty case is all zeros") {
  auto c = testutil::make_case({{}, {}});
  auto grid = make_grid(48.0, 9);
  auto g = interpolate_batch(c, grid, params_for(2, 0.1));
  CHECK(g.D == 2);
  CHECK(g.T == 9);
  for (double v : g.smooth) CHECK(v == 0.0);
  for (double v : g.transient) CHECK(v == 0.0);
  for (double v : g.intensity) CHECK(v == 0.0);
}

TEST_CASE("interpolate_batch: single observation limit") {
  auto c = testutil::make_case({{{10.0, 4.2}}});
  auto grid = make_grid(48.0, 49);
  auto g = interpolate_batch(c, grid, params_for(1, 0.01));
  for (int k = 0; k < 49; ++k) {
    CHECK(g.smooth[k] == doctest::Approx(4.2).epsilon(1e-12));
    CHECK(std::abs(g.transient[k]) < 1e-9);
  }
  // intensity peaks exactly at the observation's grid point
  const auto it = std::max_element(g.intensity.begin(), g.intensity.end());
  CHECK(it - g.intensity.begin() == 10);
  CHECK(*it == 1.0);
}

TEST_CASE("interpolate_batch: matches the composition of the four ops") {
  Rng rng(123);
  auto grid = make_grid(10.0, 5);
  for (int rep = 0; rep < 50; ++rep) {
    auto c = testutil::random_case(rng, 3, 4);
    auto p = random_params(rng, 3);
    auto g = interpolate_batch(c, grid, p);

    const size_t n = 3 * 5;
    std::vector<double> a1(3), a2(3);
    for (int d = 0; d < 3; ++d) {
      a1[d] = p.alpha1(d);
      a2[d] = p.alpha2(d);
    }
    std::vector<double> l1(n), l1k(n), inten(n), smooth(n), trans(n);
    layer1_interpolate(c, grid.points, a1, l1);
    layer1_interpolate(c, grid.points, a2, l1k);
    intensity(c, grid.points, a1, inten);
    layer2_interpolate(l1, inten, p.rho, 3, 5, smooth);
    transient_residual(l1k, smooth, trans);

    for (size_t i = 0; i < n; ++i) {
      CHECK(g.smooth[i] == smooth[i]);
      CHECK(g.transient[i] == trans[i]);
      CHECK(g.intensity[i] == inten[i]);
    }
  }
}

TEST_CASE("properties: 1000 random instances") {
  Rng rng(2024);
  auto grid = make_grid(10.0, 7);
  int nonempty_rows = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    const int D = 1 + static_cast<int>(rng.uniform_int(4));
    auto c = testutil::random_case(rng, D, 5);
    auto p = random_params(rng, D);
    auto g = interpolate_batch(c, grid, p);
    const int T = grid.size();

    std::vector<double> a1(D), a2(D);
    for (int d = 0; d < D; ++d) {
      a1[d] = p.alpha1(d);
      a2[d] = p.alpha2(d);
      // bandwidth tie is exact by construction
      CHECK(p.alpha2(d) == p.kappa * p.alpha1(d));
    }
    std::vector<double> l1(g.smooth.size()), l1k(g.smooth.size());
    layer1_interpolate(c, grid.points, a1, l1);
    layer1_interpolate(c, grid.points, a2, l1k);

    auto s = sparsify(c);
    for (int d = 0; d < D; ++d) {
      const auto& obs = s.dims[d];
      if (obs.empty()) {
        // empty-dimension convention: layer 1 and intensity exactly zero
        for (int k = 0; k < T; ++k) {
          CHECK(l1[static_cast<size_t>(d) * T + k] == 0.0);
          CHECK(g.intensity[static_cast<size_t>(d) * T + k] == 0.0);
        }
        continue;
      }
      ++nonempty_rows;
      double lo = obs[0].value, hi = obs[0].value;
      for (const auto& o : obs) {
        lo = std::min(lo, o.value);
        hi = std::max(hi, o.value);
      }
      const double slack = 1e-12 * (1.0 + std::max(std::abs(lo), std::abs(hi)));
      for (int k = 0; k < T; ++k) {
        // convex-combination bound for both bandwidths
        for (const auto* arr : {&l1, &l1k}) {
          const double v = (*arr)[static_cast<size_t>(d) * T + k];
          CHECK(v >= lo - slack);
          CHECK(v <= hi + slack);
        }
      }
    }

    for (size_t i = 0; i < g.smooth.size(); ++i) {
      CHECK(std::isfinite(g.smooth[i]));
      CHECK(std::isfinite(g.transient[i]));
      CHECK(g.intensity[i] >= 0.0);
      // residual identity, bit-exact against an independent recomputation
      CHECK(g.transient[i] == l1k[i] - g.smooth[i]);
    }

    // permutation invariance: rebuild the case from reversed observation
    // lists; outputs must be bit-identical
    auto dims = s.dims;
    for (auto& dd : dims) std::reverse(dd.begin(), dd.end());
    auto c2 = densify(make_sparse_series("perm", std::move(dims), {}, 10.0), 10.0);
    auto g2 = interpolate_batch(c2, grid, p);
    CHECK(g2.smooth == g.smooth);
    CHECK(g2.transient == g.transient);
    CHECK(g2.intensity == g.intensity);
  }
  CHECK(nonempty_rows > 1000);  // the sweep actually exercised data
}

TEST_CASE("layer2 all-ones rho stays within per-point layer1 bounds") {
  Rng rng(77);
  auto grid = make_grid(10.0, 7);
  for (int rep = 0; rep < 300; ++rep) {
    const int D = 2 + static_cast<int>(rng.uniform_int(3));
    auto c = testutil::random_case(rng, D, 5);
    std::vector<double> alpha(D);
    for (double& a : alpha) a = std::exp(rng.uniform(-3.0, 0.9));
    const int T = grid.size();
    std::vector<double> l1(static_cast<size_t>(D) * T),
        inten(static_cast<size_t>(D) * T), out(static_cast<size_t>(D) * T);
    layer1_interpolate(c, grid.points, alpha, l1);
    intensity(c, grid.points, alpha, inten);
    std::vector<double> ones(static_cast<size_t>(D) * D, 1.0);
    layer2_interpolate(l1, inten, ones, D, T, out);
    for (int k = 0; k < T; ++k) {
      double tot = 0.0, lo = 1e300, hi = -1e300;
      for (int d = 0; d < D; ++d) {
        tot += inten[static_cast<size_t>(d) * T + k];
        lo = std::min(lo, l1[static_cast<size_t>(d) * T + k]);
        hi = std::max(hi, l1[static_cast<size_t>(d) * T + k]);
      }
      if (tot == 0.0) continue;
      const double slack = 1e-10 * (1.0 + std::max(std::abs(lo), std::abs(hi)));
      for (int d = 0; d < D; ++d) {
        const double v = out[static_cast<size_t>(d) * T + k];
        CHECK(v >= lo - slack);
        CHECK(v <= hi + slack);
      }
    }
  }
}

TEST_CASE("bandwidth limit: huge alpha recovers on-grid observations") {
  auto grid = make_grid(4.0, 5);
  auto c = testutil::make_case({{{0.5, -3.0}, {2.0, 1.25}, {3.1, 8.0}}}, 4.0);
  std::vector<double> alpha{1e6}, out(5);
  layer1_interpolate(c, grid.points, alpha, out);
  CHECK(std::abs(out[2] - 1.25) <= 1e-6);  // grid point r=2 hits t=2 exactly
}

TEST_CASE("InterpParams: validation and initialization") {
  InterpParams p = params_for(2, 1.0);
  CHECK_NOTHROW(p.validate());
  p.kappa = 1.0;  // must be > 1
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);

  Rng rng(9);
  auto q = InterpParams::init(3, 10.0, 1.0, rng);
  CHECK(q.dims() == 3);
  // length scale about twice the spacing: alpha = 1 / (2 * spacing)^2
  for (int d = 0; d < 3; ++d)
    CHECK(q.alpha1(d) == doctest::Approx(0.25).epsilon(1e-12));
  for (int d = 0; d < 3; ++d)
    for (int e = 0; e < 3; ++e) {
      const double r = q.rho[static_cast<size_t>(d) * 3 + e];
      if (d == e) CHECK(r == doctest::Approx(1.0).epsilon(0.011));
      else CHECK(std::abs(r) <= 0.01);
    }
}

TEST_CASE("evaluator forward matches the free-function pipeline") {
  Rng rng(31);
  auto grid = make_grid(10.0, 6);
  for (int rep = 0; rep < 20; ++rep) {
    auto c = testutil::random_case(rng, 3, 4);
    auto p = random_params(rng, 3);
    auto g = interpolate_batch(c, grid, p);
    InterpEvaluator ev;
    ev.forward(c, grid.points, p, {}, true);
    REQUIRE(ev.D() == 3);
    REQUIRE(ev.Q() == 6);
    for (size_t i = 0; i < g.smooth.size(); ++i) {
      CHECK(ev.smooth()[i] == g.smooth[i]);
      CHECK(ev.transient()[i] == g.transient[i]);
      CHECK(ev.intens()[i] == g.intensity[i]);
    }
  }
}
