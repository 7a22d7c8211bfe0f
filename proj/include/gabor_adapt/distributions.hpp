#pragma once

#include <string_view>
#include <variant>

namespace gabor_adapt {

struct UniformDist {
  double lo = 0.0;
  double hi = 1.0;
};

/// ln(x) ~ Normal(mu, sigma^2).
struct LogNormalDist {
  double mu = 0.0;
  double sigma = 1.0;
};

/// Density alpha beta^alpha / x^(alpha+1) for x >= beta.
struct ParetoDist {
  double alpha = 1.0;
  double beta = 1.0;
};

using Marginal = std::variant<UniformDist, LogNormalDist, ParetoDist>;

/// Phi(x) = 0.5 (1 + erf(x / sqrt 2)), evaluated through erfc so the lower
/// tail keeps full relative precision.
double std_normal_cdf(double x);

double cdf(const UniformDist& d, double x);
double cdf(const LogNormalDist& d, double x);
double cdf(const ParetoDist& d, double x);
double cdf(const Marginal& d, double x);

/// Inverse CDF for u in [0, 1). The Pareto form is beta (1 - u)^(-1/alpha).
double quantile(const UniformDist& d, double u);
double quantile(const ParetoDist& d, double u);

std::string_view kind_name(const Marginal& d);

}  // namespace gabor_adapt
