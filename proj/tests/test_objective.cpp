#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "ipnet/objective.hpp"
#include "ipnet/rng.hpp"

#include "test_util.hpp"

using namespace ipnet;

namespace {

DenseCase ten_obs_case() {
  std::vector<std::vector<Obs>> dims(2);
  for (int j = 0; j < 5; ++j) {
    dims[0].push_back({static_cast<double>(j), 1.0 * j});
    dims[1].push_back({j + 0.5, 2.0 * j});
  }
  return testutil::make_case(std::move(dims), 10.0);
}

InterpParams identity_params(int D, double alpha) {
  InterpParams p;
  p.kappa = 10.0;
  p.log_alpha.assign(D, std::log(alpha));
  p.rho.assign(static_cast<size_t>(D) * D, 0.0);
  for (int d = 0; d < D; ++d) p.rho[static_cast<size_t>(d) * D + d] = 1.0;
  return p;
}

}  // namespace

TEST_CASE("sample_masks: floor of fraction times observation count") {
  auto c = ten_obs_case();
  REQUIRE(c.observation_count() == 10);
  auto m = sample_masks(c, 0.2, 42);
  CHECK(m.count == 2);
  int held = 0;
  for (size_t i = 0; i < m.held.size(); ++i) {
    held += m.held[i];
    // held is a subset of observed
    if (m.held[i]) CHECK(c.observed[i] == 1);
  }
  CHECK(held == 2);
}

TEST_CASE("sample_masks: same seed reproduces, different seed varies") {
  auto c = ten_obs_case();
  auto a = sample_masks(c, 0.4, 7);
  auto b = sample_masks(c, 0.4, 7);
  CHECK(a.held == b.held);
  bool any_diff = false;
  for (uint64_t s = 8; s < 16 && !any_diff; ++s)
    any_diff = (sample_masks(c, 0.4, s).held != a.held);
  CHECK(any_diff);
}

TEST_CASE("sample_masks: single observation is never stripped") {
  auto c = testutil::make_case({{{1.0, 3.0}}});
  auto m = sample_masks(c, 0.2, 1);
  CHECK(m.count == 0);
  for (uint8_t h : m.held) CHECK(h == 0);
}

TEST_CASE("sample_masks: empty case and bad fraction") {
  auto c = testutil::make_case({{}});
  auto m = sample_masks(c, 0.5, 3);
  CHECK(m.count == 0);
  CHECK_THROWS_AS(sample_masks(c, 1.0, 3), std::invalid_argument);
  CHECK_THROWS_AS(sample_masks(c, -0.1, 3), std::invalid_argument);
}

TEST_CASE("sample_masks: marginal held rate approaches the fraction") {
  auto c = ten_obs_case();
  int total = 0;
  for (uint64_t s = 0; s < 500; ++s) total += sample_masks(c, 0.2, s).count;
  CHECK(total == 2 * 500);  // k is deterministic; only placement varies
}

TEST_CASE("input_mask: observed and not held") {
  auto c = ten_obs_case();
  auto m = sample_masks(c, 0.3, 9);
  auto in = m.input_mask(c);
  for (size_t i = 0; i < in.size(); ++i) {
    CHECK(in[i] == ((c.observed[i] != 0 && m.held[i] == 0) ? 1 : 0));
  }
}

TEST_CASE("reconstruct_heldout: lone observation predicts zero") {
  // the only observation of the case is held out -> nothing drives the
  // interpolant -> zero-denominator convention
  auto c = testutil::make_case({{{2.0, 5.0}}, {}});
  HeldMask m;
  m.held.assign(c.observed.size(), 0);
  m.held[0] = 1;  // dim 0, u 0
  m.count = 1;
  auto terms = reconstruct_heldout(c, m, identity_params(2, 1.0));
  REQUIRE(terms.size() == 1);
  CHECK(terms[0].d == 0);
  CHECK(terms[0].target == 5.0);
  CHECK(terms[0].predicted == 0.0);
}

TEST_CASE("reconstruct_heldout: constant series reconstructs exactly") {
  auto c = testutil::make_case({{{0.0, 1.0}, {1.0, 1.0}, {2.0, 1.0}}});
  HeldMask m;
  m.held.assign(c.observed.size(), 0);
  m.held[1] = 1;  // middle point
  m.count = 1;
  auto terms = reconstruct_heldout(c, m, identity_params(1, 1.0));
  REQUIRE(terms.size() == 1);
  CHECK(terms[0].target == 1.0);
  CHECK(terms[0].predicted == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("reconstruct_heldout: symmetric neighbors average") {
  // points (0,0) and (2,2); a held-out point at t=1 sits exactly between
  // them, so the smooth interpolant there is 1 for any bandwidth
  auto c = testutil::make_case({{{0.0, 0.0}, {1.0, -7.0}, {2.0, 2.0}}});
  HeldMask m;
  m.held.assign(c.observed.size(), 0);
  m.held[1] = 1;
  m.count = 1;
  auto terms = reconstruct_heldout(c, m, identity_params(1, 0.8));
  REQUIRE(terms.size() == 1);
  CHECK(terms[0].target == -7.0);
  CHECK(terms[0].predicted == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("mask independence: held-out values never drive the interpolant") {
  Rng rng(55);
  for (int rep = 0; rep < 50; ++rep) {
    auto c = testutil::random_case(rng, 3, 6);
    if (c.observation_count() < 4) continue;
    auto mask = sample_masks(c, 0.4, 1000 + rep);
    if (mask.count == 0) continue;
    auto p = identity_params(3, 0.5);
    auto base = reconstruct_heldout(c, mask, p);

    // perturb every held-out value wildly; predictions must be bit-identical
    DenseCase mut = c;
    for (size_t i = 0; i < mask.held.size(); ++i)
      if (mask.held[i]) mut.values[i] += 1e6;
    auto perturbed = reconstruct_heldout(mut, mask, p);

    REQUIRE(base.size() == perturbed.size());
    for (size_t i = 0; i < base.size(); ++i) {
      CHECK(perturbed[i].predicted == base[i].predicted);
      CHECK(perturbed[i].target == base[i].target + 1e6);
    }
  }
}

TEST_CASE("composite_loss: degenerate weight settings") {
  LossConfig cfg;
  cfg.delta = 0.0;
  cfg.lambda_interp = 0.0;
  cfg.lambda_pred = 0.0;
  std::vector<ReconTerm> terms{{0, 0, 3.0, 1.0}};
  auto b = composite_loss(0.7, terms, {}, {}, cfg);
  CHECK(b.total == 0.7);  // supervised alone
  CHECK(b.reconstruction == 0.0);

  // perfect prediction and reconstruction
  std::vector<ReconTerm> perfect{{0, 0, 2.0, 2.0}};
  cfg.delta = 1.0;
  auto z = composite_loss(0.0, perfect, {}, {}, cfg);
  CHECK(z.total == 0.0);
}

TEST_CASE("composite_loss: hand-computed composite value") {
  LossConfig cfg;
  cfg.delta = 1.0;
  cfg.lambda_interp = 0.1;
  cfg.lambda_pred = 0.0;
  std::vector<ReconTerm> terms{{0, 0, 1.0, 1.3}};  // error 0.3, squared 0.09
  std::vector<double> theta{2.0};
  auto b = composite_loss(0.5, terms, theta, {}, cfg);
  CHECK(b.supervised == 0.5);
  CHECK(b.reconstruction == doctest::Approx(0.09).epsilon(1e-12));
  CHECK(b.reg_interp == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(b.total == doctest::Approx(0.99).epsilon(1e-12));
}

TEST_CASE("composite_loss: nonnegative for nonnegative inputs") {
  Rng rng(8);
  LossConfig cfg;
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<ReconTerm> terms;
    for (int i = 0; i < 3; ++i)
      terms.push_back({0, i, rng.normal(), rng.normal()});
    std::vector<double> th{rng.normal(), rng.normal()};
    std::vector<double> ph{rng.normal()};
    const double sup = -std::log(rng.uniform(0.01, 1.0));  // a valid ce value
    auto b = composite_loss(sup, terms, th, ph, cfg);
    CHECK(b.total >= 0.0);
    CHECK(b.total >= b.supervised);
  }
}

TEST_CASE("composite_loss: non-finite terms abort with a named term") {
  LossConfig cfg;
  try {
    composite_loss(std::numeric_limits<double>::quiet_NaN(), {}, {}, {}, cfg);
    FAIL("expected abort");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("supervised") != std::string::npos);
  }
  std::vector<ReconTerm> bad{{0, 0, 0.0, std::numeric_limits<double>::infinity()}};
  try {
    composite_loss(0.0, bad, {}, {}, cfg);
    FAIL("expected abort");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("reconstruction") != std::string::npos);
  }
}

TEST_CASE("bce_from_logit: stable and correct") {
  // matches -[y log p + (1-y) log(1-p)] at moderate logits
  for (double z : {-3.0, -0.5, 0.0, 0.5, 3.0}) {
    for (double y : {0.0, 1.0}) {
      const double p = 1.0 / (1.0 + std::exp(-z));
      const double ref = -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
      CHECK(bce_from_logit(z, y) == doctest::Approx(ref).epsilon(1e-12));
      CHECK(bce_grad_logit(z, y) == doctest::Approx(p - y).epsilon(1e-12));
    }
  }
  // extreme logits stay finite (the naive form overflows)
  CHECK(std::isfinite(bce_from_logit(800.0, 0.0)));
  CHECK(std::isfinite(bce_from_logit(-800.0, 1.0)));
  CHECK(bce_from_logit(800.0, 1.0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(800.0) == doctest::Approx(1.0));
  CHECK(sigmoid(-800.0) == doctest::Approx(0.0));
}

TEST_CASE("plan_reconstruction: queries cover exactly the held timestamps") {
  auto c = ten_obs_case();
  auto m = sample_masks(c, 0.3, 4);
  auto plan = plan_reconstruction(c, m);
  // every held (d,u) has its u in query_u; queries ascend
  for (int u = 0; u < c.U(); ++u) {
    bool any_held = false;
    for (int d = 0; d < c.D; ++d)
      any_held |= (m.held[static_cast<size_t>(d) * c.U() + u] != 0);
    const bool queried =
        std::find(plan.query_u.begin(), plan.query_u.end(), u) != plan.query_u.end();
    CHECK(queried == any_held);
  }
  for (size_t q = 1; q < plan.query_u.size(); ++q)
    CHECK(plan.query_u[q] > plan.query_u[q - 1]);
  CHECK(plan.input == m.input_mask(c));
}
