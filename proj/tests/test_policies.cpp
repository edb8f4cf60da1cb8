#include <doctest.h>

#include <cmath>
#include <random>

#include "mac_alloc/offline.hpp"
#include "mac_alloc/policies.hpp"
#include "mac_alloc/sim.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace mac_alloc;

namespace {

std::size_t nonzero_entries(const AllocationMatrix& a, std::size_t user) {
  std::size_t n = 0;
  for (std::size_t t = 0; t < a.energies.slots(); ++t)
    if (a.energies(t, user) != 0.0) ++n;
  return n;
}

}  // namespace

TEST_CASE("equal energy spends the same amount every slot") {
  const auto p = support::params(2, 5, {5.0, 0.0});
  const EqualEnergyPolicy policy(p);
  const auto r = generate_realization(p, 1, 0);
  const auto a = run_causal_policy(policy, p, r);
  for (std::size_t t = 0; t < 5; ++t) {
    CHECK(a.energies(t, 0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(a.energies(t, 1) == 0.0);
  }
  CHECK(a.energies.column_sum(0) == 5.0);

  const auto odd = support::params(1, 3, {1.0});
  const auto b = run_causal_policy(EqualEnergyPolicy(odd), odd, generate_realization(odd, 1, 0));
  CHECK(b.energies.column_sum(0) == 1.0);
}

TEST_CASE("one-shot thresholds follow the backward recursion") {
  for (std::size_t t : {1, 2, 3, 5, 8}) {
    const auto th = one_shot_thresholds(support::params(1, t, {1.0}));
    const auto ref = oracle::unit_exponential_thresholds(t);
    REQUIRE(th.nu[0].size() == t + 1);
    CHECK(th.nu[0][t] == 0.0);
    CHECK(th.nu[0][t - 1] == 1.0);
    for (std::size_t k = 0; k < t; ++k) CHECK(th.nu[0][k] == doctest::Approx(ref[k]).epsilon(1e-12));
  }
  const auto two = one_shot_thresholds(support::params(1, 2, {1.0}));
  CHECK(two.nu[0][0] == doctest::Approx(1.0 + std::exp(-1.0)).epsilon(1e-14));
  const auto three = one_shot_thresholds(support::params(1, 3, {1.0}));
  CHECK(three.nu[0][0] == doctest::Approx(1.622525821).epsilon(1e-9));

  // Survival-integral check that does not use the closed form.
  const auto rate2 = one_shot_thresholds(support::params(1, 4, {1.0}, FadingDistribution::exponential(2.0)));
  std::vector<double> nu(5, 0.0);
  nu[3] = 0.5;
  for (std::size_t k = 3; k-- > 0;)
    nu[k] = oracle::expected_max_by_survival([](double x) { return std::exp(-2.0 * x); }, nu[k + 1], 40.0);
  for (std::size_t k = 0; k < 5; ++k) CHECK(rate2.nu[0][k] == doctest::Approx(nu[k]).epsilon(1e-10));
}

TEST_CASE("one-shot thresholds never increase toward the deadline") {
  for (const auto& d : {FadingDistribution::exponential(0.5), FadingDistribution::exponential(1.0),
                        FadingDistribution::exponential(2.0), FadingDistribution::deterministic(1.7)}) {
    const auto th = one_shot_thresholds(support::params(1, 7, {1.0}, d));
    CHECK(th.nu[0][6] == d.mean());
    for (std::size_t k = 0; k < 7; ++k) CHECK(th.nu[0][k] >= th.nu[0][k + 1]);
  }
  auto mixed = support::params(2, 3, {1.0, 1.0});
  mixed.fading[1] = FadingDistribution::exponential(0.5);
  const auto th = one_shot_thresholds(mixed);
  CHECK(th.nu[1][2] == 2.0);
  CHECK(th.nu[0][2] == 1.0);
}

TEST_CASE("one-shot transmits at the first gain above the next threshold") {
  const auto p = support::params(1, 2, {1.0});
  const OneShotPolicy policy(one_shot_thresholds(p), p);

  const auto early = run_causal_policy(policy, p, support::realization({{1.5}, {0.3}}));
  CHECK(early.energies(0, 0) == 1.0);
  CHECK(early.energies(1, 0) == 0.0);

  const auto late = run_causal_policy(policy, p, support::realization({{0.5}, {0.3}}));
  CHECK(late.energies(0, 0) == 0.0);
  CHECK(late.energies(1, 0) == 1.0);

  // Ties defer.
  const auto tie = run_causal_policy(policy, p, support::realization({{1.0}, {0.3}}));
  CHECK(tie.energies(0, 0) == 0.0);

  const auto idle = run_causal_policy(policy, p, support::realization({{0.5}, {0.0}}));
  CHECK(idle.energies.column_sum(0) == 0.0);
  CHECK(realized_throughput(p, support::realization({{0.5}, {0.0}}), idle) == 0.0);
}

TEST_CASE("one-shot columns hold a single full-budget spike") {
  const auto p = support::params(3, 5, {1.0, 2.5, 0.7});
  const OneShotPolicy policy(one_shot_thresholds(p), p);
  for (std::uint64_t k = 0; k < 200; ++k) {
    const auto a = run_causal_policy(policy, p, generate_realization(p, 4, k));
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(nonzero_entries(a, i) <= 1);
      CHECK(a.energies.column_sum(i) == p.energy_budgets[i]);
    }
  }
}

TEST_CASE("certainty equivalent control") {
  const auto p = support::params(2, 3, {2.0, 1.0});
  const CecPolicy policy(p);
  const std::vector<double> h{0.3, 2.0};
  CHECK(policy.allocate(2, EnergyState{{1.2, 0.4}}, h) == std::vector<double>{1.2, 0.4});

  const auto det = support::params(1, 2, {3.0}, FadingDistribution::deterministic(1.0));
  const std::vector<double> one{1.0};
  CHECK(CecPolicy(det).allocate(0, EnergyState{{3.0}}, one)[0] == doctest::Approx(1.5).epsilon(1e-12));

  const auto unit = support::params(1, 2, {1.0});
  const std::vector<double> strong{10.0};
  const double first = CecPolicy(unit).allocate(0, EnergyState{{1.0}}, strong)[0];
  CHECK(first > 0.5);
  CHECK(first == doctest::Approx(oracle::bisection_water_fill({0.1, 1.0}, 1.0)[0]).epsilon(1e-12));

  const std::vector<double> dead{0.0, 1.0};
  const auto e = policy.allocate(0, EnergyState{{2.0, 1.0}}, dead);
  CHECK(e[0] == 0.0);
  CHECK(e[1] > 0.0);
}

TEST_CASE("certainty equivalent trajectory equals the offline optimum on a fixed channel") {
  auto p = support::params(3, 4, {1.0, 2.5, 0.4}, FadingDistribution::deterministic(1.0));
  p.fading[1] = FadingDistribution::deterministic(0.5);
  p.fading[2] = FadingDistribution::deterministic(2.0);
  const auto r = generate_realization(p, 0, 0);
  const auto cec = run_causal_policy(CecPolicy(p), p, r);
  const auto offline = iterative_water_fill(p, r).allocation;
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(cec.energies(t, i) - offline.energies(t, i)) <= 1e-6);
  const auto equal = run_causal_policy(EqualEnergyPolicy(p), p, r);
  CHECK(realized_throughput(p, r, equal) == doctest::Approx(realized_throughput(p, r, offline)).epsilon(1e-9));
}

TEST_CASE("causal heuristics stay within the budget and under the offline optimum") {
  const auto p = support::params(2, 4, {1.5, 0.8});
  const EqualEnergyPolicy equal(p);
  const OneShotPolicy one_shot(one_shot_thresholds(p), p);
  const CecPolicy cec(p);
  for (std::uint64_t k = 0; k < 100; ++k) {
    const auto r = generate_realization(p, 12, k);
    const double best = realized_throughput(p, r, iterative_water_fill(p, r).allocation);
    for (const CausalPolicy* policy : {static_cast<const CausalPolicy*>(&equal),
                                       static_cast<const CausalPolicy*>(&one_shot), static_cast<const CausalPolicy*>(&cec)}) {
      const auto a = run_causal_policy(*policy, p, r);
      CHECK_NOTHROW(check_allocation(p, a));
      CHECK(realized_throughput(p, r, a) <= best * (1.0 + 1e-9));
    }
    const auto c = run_causal_policy(cec, p, r);
    for (std::size_t i = 0; i < 2; ++i) CHECK(c.energies.column_sum(i) == doctest::Approx(p.energy_budgets[i]).epsilon(1e-9));
  }
}
