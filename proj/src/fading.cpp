#include "mac_alloc/fading.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include "mac_alloc/errors.hpp"

namespace mac_alloc {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void validate_kind(const FadingDistribution::Kind& kind) {
  std::visit(overloaded{
                 [](const Exponential& e) {
                   if (!(e.rate > 0.0) || !std::isfinite(e.rate))
                     throw std::invalid_argument("exponential fading needs a finite rate > 0");
                 },
                 [](const Deterministic& d) {
                   if (!(d.value >= 0.0) || !std::isfinite(d.value))
                     throw std::invalid_argument("deterministic gain must be finite and >= 0");
                 },
                 [](const TabulatedInverseCdf& t) {
                   if (t.u.size() != t.x.size() || t.u.size() < 2)
                     throw std::invalid_argument("tabulated inverse CDF needs >= 2 matching (u, x) knots");
                   if (t.u.front() != 0.0 || t.u.back() != 1.0)
                     throw std::invalid_argument("tabulated inverse CDF must span u in [0, 1]");
                   for (std::size_t k = 0; k < t.u.size(); ++k) {
                     if (!std::isfinite(t.x[k]) || t.x[k] < 0.0)
                       throw std::invalid_argument("tabulated gains must be finite and >= 0");
                     if (k > 0 && !(t.u[k] > t.u[k - 1]))
                       throw std::invalid_argument("tabulated u knots must be strictly increasing");
                     if (k > 0 && t.x[k] < t.x[k - 1])
                       throw std::invalid_argument("tabulated x knots must be non-decreasing");
                   }
                 },
             },
             kind);
}

// Exact integral of max(x(u), floor) over one linear segment of the inverse CDF.
double segment_expected_max(double du, double x0, double x1, double floor) {
  if (x1 <= floor) return floor * du;
  if (x0 >= floor) return 0.5 * (x0 + x1) * du;
  const double frac = (floor - x0) / (x1 - x0);
  return floor * frac * du + 0.5 * (floor + x1) * (1.0 - frac) * du;
}

double tabulated_inverse(const TabulatedInverseCdf& t, double u) {
  const auto it = std::upper_bound(t.u.begin(), t.u.end(), u);
  const auto k = static_cast<std::size_t>(std::distance(t.u.begin(), it)) - 1;
  if (k + 1 >= t.u.size()) return t.x.back();
  const double w = (u - t.u[k]) / (t.u[k + 1] - t.u[k]);
  return t.x[k] + w * (t.x[k + 1] - t.x[k]);
}

std::vector<QuadratureNode> gauss_laguerre(std::size_t order) {
  // Golub-Welsch on the Jacobi matrix of the Laguerre weight e^{-x}.
  Eigen::VectorXd diag(static_cast<Eigen::Index>(order));
  Eigen::VectorXd sub(static_cast<Eigen::Index>(order > 0 ? order - 1 : 0));
  for (std::size_t k = 0; k < order; ++k) {
    diag(static_cast<Eigen::Index>(k)) = 2.0 * static_cast<double>(k) + 1.0;
    if (k + 1 < order) sub(static_cast<Eigen::Index>(k)) = static_cast<double>(k) + 1.0;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success) throw std::runtime_error("Gauss-Laguerre eigensolve failed");

  std::vector<QuadratureNode> nodes(order);
  double total = 0.0;
  for (std::size_t k = 0; k < order; ++k) {
    const auto idx = static_cast<Eigen::Index>(k);
    const double v0 = solver.eigenvectors()(0, idx);
    nodes[k] = {solver.eigenvalues()(idx), v0 * v0};
    total += nodes[k].weight;
  }
  for (auto& n : nodes) n.weight /= total;
  return nodes;
}

}  // namespace

FadingDistribution::FadingDistribution(Kind kind) : kind_(std::move(kind)) {
  validate_kind(kind_);
  mean_ = std::visit(overloaded{
                         [](const Exponential& e) { return 1.0 / e.rate; },
                         [](const Deterministic& d) { return d.value; },
                         [](const TabulatedInverseCdf& t) {
                           double m = 0.0;
                           for (std::size_t k = 0; k + 1 < t.u.size(); ++k)
                             m += 0.5 * (t.x[k] + t.x[k + 1]) * (t.u[k + 1] - t.u[k]);
                           return m;
                         },
                     },
                     kind_);
}

FadingDistribution FadingDistribution::exponential(double rate) {
  return FadingDistribution(Exponential{rate});
}

FadingDistribution FadingDistribution::deterministic(double value) {
  return FadingDistribution(Deterministic{value});
}

FadingDistribution FadingDistribution::tabulated(std::vector<double> u, std::vector<double> x) {
  return FadingDistribution(TabulatedInverseCdf{std::move(u), std::move(x)});
}

double sample(const FadingDistribution& dist, double uniform_draw) {
  if (!(uniform_draw >= 0.0 && uniform_draw < 1.0))
    throw std::invalid_argument(fmt::format("uniform draw {} outside [0, 1)", uniform_draw));
  return std::visit(overloaded{
                        [&](const Exponential& e) { return -std::log1p(-uniform_draw) / e.rate; },
                        [](const Deterministic& d) { return d.value; },
                        [&](const TabulatedInverseCdf& t) { return tabulated_inverse(t, uniform_draw); },
                    },
                    dist.kind());
}

double cdf(const FadingDistribution& dist, double x) {
  return std::visit(overloaded{
                        [&](const Exponential& e) { return x <= 0.0 ? 0.0 : -std::expm1(-e.rate * x); },
                        [&](const Deterministic& d) { return x >= d.value ? 1.0 : 0.0; },
                        [&](const TabulatedInverseCdf& t) {
                          if (x < t.x.front()) return 0.0;
                          if (x >= t.x.back()) return 1.0;
                          const auto it = std::upper_bound(t.x.begin(), t.x.end(), x);
                          const auto k = static_cast<std::size_t>(std::distance(t.x.begin(), it)) - 1;
                          const double w = (x - t.x[k]) / (t.x[k + 1] - t.x[k]);
                          return t.u[k] + w * (t.u[k + 1] - t.u[k]);
                        },
                    },
                    dist.kind());
}

double expected_max_with(const FadingDistribution& dist, double floor) {
  if (!(floor >= 0.0)) throw std::invalid_argument("expected_max_with: floor must be >= 0");
  return std::visit(overloaded{
                        [&](const Exponential& e) { return floor + std::exp(-e.rate * floor) / e.rate; },
                        [&](const Deterministic& d) { return std::max(d.value, floor); },
                        [&](const TabulatedInverseCdf& t) {
                          double acc = 0.0;
                          for (std::size_t k = 0; k + 1 < t.u.size(); ++k)
                            acc += segment_expected_max(t.u[k + 1] - t.u[k], t.x[k], t.x[k + 1], floor);
                          return acc;
                        },
                    },
                    dist.kind());
}

std::vector<QuadratureNode> quadrature_nodes(const FadingDistribution& dist, std::size_t order) {
  if (order == 0) throw UnsupportedError("quadrature order must be >= 1");
  return std::visit(overloaded{
                        [&](const Exponential& e) {
                          // Past ~180 nodes the smallest weights underflow and the rule degrades.
                          if (order > 180)
                            throw UnsupportedError(fmt::format("Gauss-Laguerre order {} not supported", order));
                          auto nodes = gauss_laguerre(order);
                          for (auto& n : nodes) n.gain /= e.rate;
                          return nodes;
                        },
                        [](const Deterministic& d) { return std::vector<QuadratureNode>{{d.value, 1.0}}; },
                        [&](const TabulatedInverseCdf& t) {
                          std::vector<QuadratureNode> nodes(order);
                          const double w = 1.0 / static_cast<double>(order);
                          for (std::size_t k = 0; k < order; ++k)
                            nodes[k] = {tabulated_inverse(t, (static_cast<double>(k) + 0.5) * w), w};
                          return nodes;
                        },
                    },
                    dist.kind());
}

double quadrature_mean_tolerance(const FadingDistribution& dist, std::size_t order) {
  return std::visit(overloaded{
                        [](const Exponential& e) { return 1e-10 / e.rate; },
                        [](const Deterministic&) { return 0.0; },
                        [&](const TabulatedInverseCdf& t) {
                          // Each stratum's midpoint error is at most its width times the rise of x
                          // across it; the rises sum to the support width.
                          return (t.x.back() - t.x.front()) / static_cast<double>(order);
                        },
                    },
                    dist.kind());
}

std::string describe(const FadingDistribution& dist) {
  return std::visit(overloaded{
                        [](const Exponential& e) { return fmt::format("exponential(rate={})", e.rate); },
                        [](const Deterministic& d) { return fmt::format("deterministic({})", d.value); },
                        [](const TabulatedInverseCdf& t) {
                          return fmt::format("tabulated({} knots)", t.u.size());
                        },
                    },
                    dist.kind());
}

}  // namespace mac_alloc
