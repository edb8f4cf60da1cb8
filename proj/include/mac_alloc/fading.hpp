#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace mac_alloc {

struct Exponential {
  double rate = 1.0;
  friend bool operator==(const Exponential&, const Exponential&) = default;
};

struct Deterministic {
  double value = 0.0;
  friend bool operator==(const Deterministic&, const Deterministic&) = default;
};

/// Piecewise-linear inverse CDF through (u, x) knots. The first knot must sit at
/// u = 0 and the last at u = 1, so the support is [x.front(), x.back()].
struct TabulatedInverseCdf {
  std::vector<double> u;
  std::vector<double> x;
  friend bool operator==(const TabulatedInverseCdf&, const TabulatedInverseCdf&) = default;
};

/// Distribution of a user's per-slot channel power gain. Immutable; the mean is
/// computed once at construction.
class FadingDistribution {
 public:
  using Kind = std::variant<Exponential, Deterministic, TabulatedInverseCdf>;

  explicit FadingDistribution(Kind kind);

  static FadingDistribution exponential(double rate);
  static FadingDistribution deterministic(double value);
  static FadingDistribution tabulated(std::vector<double> u, std::vector<double> x);

  const Kind& kind() const noexcept { return kind_; }
  double mean() const noexcept { return mean_; }
  bool is_deterministic() const noexcept { return std::holds_alternative<Deterministic>(kind_); }

  friend bool operator==(const FadingDistribution& a, const FadingDistribution& b) {
    return a.kind_ == b.kind_;
  }

 private:
  Kind kind_;
  double mean_ = 0.0;
};

struct QuadratureNode {
  double gain;
  double weight;
};

/// Inverse-CDF sample for a uniform draw in [0, 1).
double sample(const FadingDistribution& dist, double uniform_draw);

/// P(H <= x).
double cdf(const FadingDistribution& dist, double x);

inline double mean(const FadingDistribution& dist) { return dist.mean(); }

/// E[max(H, floor)] for floor >= 0.
double expected_max_with(const FadingDistribution& dist, double floor);

/// Expectation rule with `order` nodes: Gauss-Laguerre (scaled by the rate) for
/// exponential gains, equal-weight u-strata midpoints for tabulated inverse CDFs
/// and a single node for deterministic gains.
std::vector<QuadratureNode> quadrature_nodes(const FadingDistribution& dist, std::size_t order);

/// Largest absolute error of the quadrature mean for this order. Exact (round-off
/// only) for Gauss rules; for stratified tabulated nodes it is bounded by the
/// midpoint rule on the piecewise-linear inverse CDF.
double quadrature_mean_tolerance(const FadingDistribution& dist, std::size_t order);

std::string describe(const FadingDistribution& dist);

}  // namespace mac_alloc
