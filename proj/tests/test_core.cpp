#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <set>
#include <stdexcept>

#include "ipnet/parallel.hpp"
#include "ipnet/rng.hpp"
#include "ipnet/series.hpp"

#include "test_util.hpp"

using namespace ipnet;

TEST_CASE("rng: deterministic and seed-sensitive") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const double x = a.uniform();
    CHECK(x == b.uniform());
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
  }
  bool differs = false;
  Rng a2(42);
  for (int i = 0; i < 10; ++i) differs |= (a2.uniform() != c.uniform());
  CHECK(differs);
}

TEST_CASE("rng: derived streams are independent per tag") {
  Rng a(derive_seed(7, 1)), b(derive_seed(7, 2));
  bool differs = false;
  for (int i = 0; i < 10; ++i) differs |= (a.uniform() != b.uniform());
  CHECK(differs);
  CHECK(derive_seed(7, 1, 3) != derive_seed(7, 1, 4));
  CHECK(derive_seed(7, 1, 3, 5) != derive_seed(7, 1, 3, 6));
}

TEST_CASE("rng: uniform_int bounds and shuffle permutes") {
  Rng r(1);
  for (int i = 0; i < 1000; ++i) CHECK(r.uniform_int(7) < 7);
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  auto w = v;
  r.shuffle(w);
  auto sorted = w;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == v);
}

TEST_CASE("rng: poisson mean roughly matches") {
  Rng r(3);
  double sum = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) sum += static_cast<double>(r.poisson(2.5));
  CHECK(sum / n == doctest::Approx(2.5).epsilon(0.05));
}

TEST_CASE("parallel_for covers every index once, any thread count") {
  for (int threads : {1, 2, 4}) {
    std::vector<int> hits(100, 0);
    parallel_for(100, threads, [&](size_t i, int) { hits[i]++; });
    for (int h : hits) CHECK(h == 1);
  }
}

TEST_CASE("densify: union alignment of two dims") {
  auto c = testutil::make_case({{{1.0, 5.0}}, {{2.0, 7.0}}});
  CHECK(c.D == 2);
  REQUIRE(c.U() == 2);
  CHECK(c.times == std::vector<double>{1.0, 2.0});
  CHECK(c.value_at(0, 0) == 5.0);
  CHECK(c.value_at(0, 1) == 0.0);
  CHECK(c.value_at(1, 0) == 0.0);
  CHECK(c.value_at(1, 1) == 7.0);
  CHECK(c.observed_at(0, 0));
  CHECK_FALSE(c.observed_at(0, 1));
  CHECK_FALSE(c.observed_at(1, 0));
  CHECK(c.observed_at(1, 1));
}

TEST_CASE("densify: empty case") {
  auto c = testutil::make_case({{}});
  CHECK(c.D == 1);
  CHECK(c.U() == 0);
  CHECK(c.values.empty());
  CHECK(c.observed.empty());
}

TEST_CASE("densify: shared timestamp counted once, both observed") {
  auto c = testutil::make_case({{{3.0, 1.0}}, {{3.0, 2.0}}});
  REQUIRE(c.U() == 1);
  CHECK(c.observed_at(0, 0));
  CHECK(c.observed_at(1, 0));
  CHECK(c.value_at(0, 0) == 1.0);
  CHECK(c.value_at(1, 0) == 2.0);
}

TEST_CASE("densify: rejects out-of-window times naming case and dim") {
  SparseSeries s;
  s.id = "bad-case";
  s.dims = {{{-1.0, 0.0}}};
  try {
    densify(s, 48.0);
    FAIL("expected validation error");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("bad-case") != std::string::npos);
    CHECK(msg.find("0") != std::string::npos);
  }
}

TEST_CASE("densify: rejects non-increasing times") {
  SparseSeries s;
  s.id = "x";
  s.dims = {{{2.0, 0.0}, {2.0, 1.0}}};
  CHECK_THROWS_AS(densify(s, 48.0), std::invalid_argument);
}

TEST_CASE("round-trip: sparsify(densify(s)) == s over random cases") {
  Rng rng(11);
  for (int rep = 0; rep < 200; ++rep) {
    auto c = testutil::random_case(rng, 3, 5);
    auto s = sparsify(c);
    auto c2 = densify(s, 10.0);
    CHECK(c2.times == c.times);
    CHECK(c2.values == c.values);
    CHECK(c2.observed == c.observed);
    // mask consistency: observed count equals total observations
    CHECK(c.observation_count() == s.total_observations());
  }
}

TEST_CASE("make_grid: hourly 48h grid") {
  auto g = make_grid(48.0, 49);
  REQUIRE(g.size() == 49);
  CHECK(g.spacing == 1.0);
  for (int k = 0; k < 49; ++k) CHECK(g.points[k] == doctest::Approx(k).epsilon(1e-15));
  CHECK(g.points.front() == 0.0);
  CHECK(g.points.back() == 48.0);
}

TEST_CASE("make_grid: two-point and fractional grids") {
  auto g2 = make_grid(48.0, 2);
  CHECK(g2.points == std::vector<double>{0.0, 48.0});
  auto g5 = make_grid(1.0, 5);
  REQUIRE(g5.size() == 5);
  CHECK(g5.points[0] == 0.0);
  CHECK(g5.points[1] == 0.25);
  CHECK(g5.points[2] == 0.5);
  CHECK(g5.points[3] == 0.75);
  CHECK(g5.points[4] == 1.0);
}

TEST_CASE("make_grid: rejects T < 2 and nonpositive window") {
  CHECK_THROWS_AS(make_grid(48.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(make_grid(0.0, 5), std::invalid_argument);
}

TEST_CASE("normalizer: fit on observed values of selected cases only") {
  DenseBatch batch;
  batch.push_back(testutil::make_case({{{0.0, 2.0}, {1.0, 4.0}}}));
  batch.push_back(testutil::make_case({{{0.0, 100.0}}}));  // excluded
  std::vector<int> train{0};
  auto norm = Normalizer::fit(batch, train);
  REQUIRE(norm.mean.size() == 1);
  CHECK(norm.mean[0] == doctest::Approx(3.0));
  CHECK(norm.stdev[0] == doctest::Approx(1.0));

  // mutating the excluded case leaves the statistics untouched
  batch[1].values[0] = -1e9;
  auto norm2 = Normalizer::fit(batch, train);
  CHECK(norm2.mean[0] == norm.mean[0]);
  CHECK(norm2.stdev[0] == norm.stdev[0]);
}

TEST_CASE("normalizer: apply touches observed cells only") {
  auto c = testutil::make_case({{{1.0, 5.0}}, {{2.0, 7.0}}});
  Normalizer n;
  n.mean = {5.0, 1.0};
  n.stdev = {2.0, 3.0};
  n.apply(c);
  CHECK(c.value_at(0, 0) == doctest::Approx(0.0));
  CHECK(c.value_at(0, 1) == 0.0);  // unobserved stays exactly zero
  CHECK(c.value_at(1, 0) == 0.0);
  CHECK(c.value_at(1, 1) == doctest::Approx(2.0));
}

TEST_CASE("make_sparse_series: sorts and keeps last duplicate") {
  int dups = 0;
  auto s = make_sparse_series(
      "d", {{{2.0, 9.0}, {1.0, 1.0}, {2.0, 3.0}}}, {}, 48.0, &dups);
  CHECK(dups == 1);
  REQUIRE(s.dims[0].size() == 2);
  CHECK(s.dims[0][0].time == 1.0);
  CHECK(s.dims[0][1].time == 2.0);
  CHECK(s.dims[0][1].value == 3.0);  // later row wins
}

TEST_CASE("task names round-trip") {
  CHECK(task_from_name("classification") == Task::classification);
  CHECK(task_from_name("regression") == Task::regression);
  CHECK(task_name(Task::classification) == std::string("classification"));
  CHECK_THROWS_AS(task_from_name("nope"), std::invalid_argument);
}
