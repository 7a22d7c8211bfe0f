#include "gabor_adapt/distributions.hpp"

#include "gabor_adapt/errors.hpp"

#include <cmath>
#include <numbers>

namespace gabor_adapt {

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double cdf(const UniformDist& d, double x) {
  if (x <= d.lo) return 0.0;
  if (x >= d.hi) return 1.0;
  return (x - d.lo) / (d.hi - d.lo);
}

double cdf(const LogNormalDist& d, double x) {
  if (x <= 0.0) return 0.0;
  return std_normal_cdf((std::log(x) - d.mu) / d.sigma);
}

double cdf(const ParetoDist& d, double x) {
  if (x < d.beta) return 0.0;
  return 1.0 - std::pow(d.beta / x, d.alpha);
}

double cdf(const Marginal& d, double x) {
  return std::visit([x](const auto& dist) { return cdf(dist, x); }, d);
}

double quantile(const UniformDist& d, double u) { return d.lo + (d.hi - d.lo) * u; }

double quantile(const ParetoDist& d, double u) {
  if (!(u >= 0.0 && u < 1.0)) throw DomainError("Pareto quantile needs u in [0, 1)");
  return d.beta * std::pow(1.0 - u, -1.0 / d.alpha);
}

std::string_view kind_name(const Marginal& d) {
  struct {
    std::string_view operator()(const UniformDist&) const { return "Uniform"; }
    std::string_view operator()(const LogNormalDist&) const { return "LogNormal"; }
    std::string_view operator()(const ParetoDist&) const { return "Pareto"; }
  } names;
  return std::visit(names, d);
}

}  // namespace gabor_adapt
