#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "mac_alloc/errors.hpp"
#include "mac_alloc/offline.hpp"
#include "mac_alloc/sim.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace mac_alloc;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double total(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

SystemParams random_instance(std::mt19937_64& rng, std::size_t n, std::size_t t) {
  std::uniform_real_distribution<double> budget(0.1, 10.0);
  std::vector<double> budgets(n);
  for (auto& b : budgets) b = budget(rng);
  return support::params(n, t, budgets);
}

}  // namespace

TEST_CASE("water filling at reference points") {
  const auto one = water_fill({{0.7}, 2.0});
  CHECK(one.allocation == std::vector<double>{2.0});
  CHECK(one.water_level == doctest::Approx(2.7).epsilon(1e-15));

  const auto flat = water_fill({{0.5, 0.5, 0.5}, 3.0});
  for (double e : flat.allocation) CHECK(e == doctest::Approx(1.0).epsilon(1e-15));

  const auto two = water_fill({{1.0, 2.0}, 3.0});
  CHECK(two.allocation[0] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(two.allocation[1] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(two.water_level == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(two.water_level == doctest::Approx(oracle::bisection_water_level({1.0, 2.0}, 3.0)).epsilon(1e-12));
}

TEST_CASE("water filling matches the bisection oracle") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ratio(0.01, 5.0);
  std::uniform_real_distribution<double> budget(0.0, 20.0);
  std::uniform_int_distribution<int> len(1, 12);
  for (int k = 0; k < 300; ++k) {
    std::vector<double> ratios(static_cast<std::size_t>(len(rng)));
    for (auto& r : ratios) r = ratio(rng);
    if (ratios.size() > 2 && k % 3 == 0) ratios[1] = kInf;
    const double e = budget(rng);
    const auto sol = water_fill({ratios, e});
    const auto ref = oracle::bisection_water_fill(ratios, e);
    CHECK(std::abs(total(sol.allocation) - e) <= 1e-10 * std::max(1.0, e));
    for (std::size_t t = 0; t < ratios.size(); ++t) {
      CHECK(sol.allocation[t] == doctest::Approx(ref[t]).epsilon(1e-9).scale(std::max(1.0, e)));
      CHECK(sol.allocation[t] >= 0.0);
      if (!std::isfinite(ratios[t])) CHECK(sol.allocation[t] == 0.0);
      for (std::size_t s = 0; s < ratios.size(); ++s)
        if (ratios[t] < ratios[s]) CHECK(sol.allocation[t] >= sol.allocation[s]);
    }
  }
}

TEST_CASE("water level grows with the budget") {
  const std::vector<double> ratios{0.3, 1.2, 0.8, 2.5, 4.0};
  double level = 0.0;
  std::vector<double> previous(ratios.size(), 0.0);
  for (double e = 0.1; e < 12.0; e += 0.37) {
    const auto sol = water_fill({ratios, e});
    CHECK(sol.water_level > level);
    for (std::size_t t = 0; t < ratios.size(); ++t) CHECK(sol.allocation[t] >= previous[t]);
    level = sol.water_level;
    previous = sol.allocation;
  }
}

TEST_CASE("water filling error paths") {
  CHECK_THROWS_AS(water_fill({{kInf, kInf}, 1.0}), InfeasibleError);
  const auto idle = water_fill({{kInf, kInf}, 0.0});
  CHECK(idle.allocation == std::vector<double>{0.0, 0.0});
  CHECK_THROWS_AS(water_fill({{1.0}, -1.0}), std::invalid_argument);
  CHECK_THROWS_AS(water_fill({{0.0}, 1.0}), std::invalid_argument);
  const auto zero = water_fill({{1.0, 2.0}, 0.0});
  CHECK(zero.allocation == std::vector<double>{0.0, 0.0});
}

TEST_CASE("iterative water filling with one user is plain water filling") {
  const auto p = support::params(1, 4, {3.0});
  const auto r = support::realization({{0.5}, {2.0}, {0.1}, {1.0}});
  const auto res = iterative_water_fill(p, r);
  CHECK(res.iterations == 1);
  const auto ref = oracle::bisection_water_fill({1.0 / 0.5, 1.0 / 2.0, 1.0 / 0.1, 1.0 / 1.0}, 3.0);
  for (std::size_t t = 0; t < 4; ++t) CHECK(res.allocation.energies(t, 0) == doctest::Approx(ref[t]).epsilon(1e-12));
}

TEST_CASE("iterative water filling on a symmetric instance splits evenly") {
  const auto p = support::params(2, 2, {2.0, 2.0});
  const auto r = support::realization({{1.0, 1.0}, {1.0, 1.0}});
  const auto res = iterative_water_fill(p, r);
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t i = 0; i < 2; ++i) CHECK(res.allocation.energies(t, i) == doctest::Approx(1.0).epsilon(1e-12));
  const auto gap = single_iteration_gap_check(p, r);
  CHECK(std::abs(gap.gap_nats) <= 1e-12);
}

TEST_CASE("iterative water filling converges to a verified fixed point") {
  std::mt19937_64 rng(21);
  for (int k = 0; k < 60; ++k) {
    const std::size_t n = 1 + static_cast<std::size_t>(k % 3);
    const std::size_t t = 1 + static_cast<std::size_t>(k % 5);
    const auto p = random_instance(rng, n, t);
    const auto r = generate_realization(p, 1234, static_cast<std::uint64_t>(k));
    const auto res = iterative_water_fill(p, r);

    for (std::size_t l = 1; l < res.objective_trace.size(); ++l)
      CHECK(res.objective_trace[l] >= res.objective_trace[l - 1] - 1e-12 * std::abs(res.objective_trace[l - 1]));
    CHECK(res.objective_trace.back() ==
          doctest::Approx(realized_throughput_nats(p, r, res.allocation)).epsilon(1e-14));
    for (std::size_t i = 0; i < n; ++i)
      CHECK(std::abs(res.allocation.energies.column_sum(i) - p.energy_budgets[i]) <= 1e-9);

    // One more sweep barely moves anything.
    auto again = res.allocation;
    double moved = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto sol = water_fill({effective_noise_ratios(p, r, again, i), p.energy_budgets[i]});
      for (std::size_t s = 0; s < t; ++s) {
        moved = std::max(moved, std::abs(sol.allocation[s] - again.energies(s, i)));
        again.energies(s, i) = sol.allocation[s];
      }
    }
    CHECK(moved < 1e-8);

    const auto kkt = verify_kkt(p, r, res.allocation);
    CHECK(kkt.max_residual() <= 1e-6);
    CHECK(kkt.water_levels.size() == n);
  }
}

TEST_CASE("iterative water filling matches a brute-force grid on two users and two slots") {
  for (std::uint64_t k = 0; k < 3; ++k) {
    const auto p = support::params(2, 2, {1.0, 1.0});
    const auto r = generate_realization(p, 77, k);
    const double iwf = realized_throughput(p, r, iterative_water_fill(p, r).allocation);
    const double grid = oracle::brute_force_two_by_two(p, r, 1e-3);
    CHECK(iwf >= grid * (1.0 - 1e-12));
    CHECK(iwf == doctest::Approx(grid).epsilon(1e-3));
  }
}

TEST_CASE("iterative water filling error paths") {
  const auto p = support::params(2, 2, {1.0, 1.0});
  const auto r = support::realization({{1.0, 0.0}, {1.0, 0.0}});
  CHECK_THROWS_AS(iterative_water_fill(p, r), InfeasibleError);
  const auto ok = support::realization({{1.0, 1.0}, {1.0, 1.0}});
  CHECK_THROWS_AS(iterative_water_fill(p, ok, IwfConfig{0, 1e-9}), std::invalid_argument);
  CHECK_THROWS_AS(iterative_water_fill(p, ok, IwfConfig{10, 0.0}), std::invalid_argument);
  const auto wrong = support::realization({{1.0, 1.0}});
  CHECK_THROWS_AS(iterative_water_fill(p, wrong), std::invalid_argument);
}

TEST_CASE("optimality residuals flag non-optimal allocations") {
  const auto p = support::params(2, 3, {3.0, 3.0});
  const auto r = support::realization({{2.0, 0.3}, {0.4, 1.5}, {1.0, 1.0}});
  AllocationMatrix equal{SlotMatrix(3, 2, 1.0)};
  const auto rep = verify_kkt(p, r, equal);
  CHECK(rep.stationarity_residual > 1e-2);
  CHECK(rep.budget_residual <= 1e-15);

  AllocationMatrix short_budget{SlotMatrix(3, 2, 0.5)};
  CHECK(verify_kkt(p, r, short_budget).budget_residual == doctest::Approx(0.5));
}

TEST_CASE("optimality residuals vanish for a single full slot") {
  const auto p = support::params(2, 1, {1.5, 0.5});
  const auto r = support::realization({{0.8, 2.0}});
  AllocationMatrix full{SlotMatrix(1, 2)};
  full.energies(0, 0) = 1.5;
  full.energies(0, 1) = 0.5;
  CHECK(verify_kkt(p, r, full).max_residual() <= 1e-12);
}

TEST_CASE("single sweep gap stays within its bound") {
  const auto p1 = support::params(1, 5, {2.0});
  const auto r1 = generate_realization(p1, 5, 0);
  const auto g1 = single_iteration_gap_check(p1, r1);
  CHECK(g1.gap_nats == 0.0);
  CHECK(g1.bound_nats == 0.0);

  auto p = support::params(2, 5, {1.0, 1.0}, FadingDistribution::exponential(1.0), 1e6);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> budget(0.1, 10.0);
  for (std::uint64_t k = 0; k < 40; ++k) {
    p.energy_budgets = {budget(rng), budget(rng)};
    const auto g = single_iteration_gap_check(p, generate_realization(p, 6, k));
    CHECK(g.bound_nats == doctest::Approx(2.5e6));
    CHECK(g.gap_nats >= -1e-9 * g.bound_nats);
    CHECK(g.gap_nats <= g.bound_nats);
  }
}
