#include "gabor_adapt/genmodel.hpp"

#include "gabor_adapt/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <numbers>
#include <string>

namespace gabor_adapt {

using std::numbers::pi;

std::string_view to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::Model1: return "model1";
    case ModelVariant::Model2: return "model2";
    case ModelVariant::Model3: return "model3";
  }
  return "?";
}

ModelVariant parse_model_variant(std::string_view name) {
  if (name == "model1" || name == "1") return ModelVariant::Model1;
  if (name == "model2" || name == "2") return ModelVariant::Model2;
  if (name == "model3" || name == "3") return ModelVariant::Model3;
  throw ArgumentError("unknown model variant '" + std::string(name) + "'");
}

double copula_residual_variance(const CopulaRhos& r) {
  const double c = r.rho3 - r.rho1 * r.rho2;
  return 1.0 - r.rho2 * r.rho2 - c * c / (1.0 - r.rho1 * r.rho1);
}

void GenModelSpec::validate() const {
  if (!(sigma_x.sigma > 0.0) || !std::isfinite(sigma_x.mu)) throw ConfigError("sigma_x Log-Normal needs sigma > 0");
  for (const ParetoDist* p : {&sigma_y, &wavelength}) {
    if (!(p->alpha > 0.0) || !(p->beta > 0.0) || !std::isfinite(p->alpha)) {
      throw ConfigError("Pareto marginals need finite alpha > 0 and beta > 0");
    }
  }
  if (variant == ModelVariant::Model2) {
    for (double r : {rhos.rho1, rhos.rho2, rhos.rho3}) {
      if (!(std::abs(r) <= 1.0)) throw ConfigError("copula correlations must lie in [-1, 1]");
    }
    if (!(std::abs(rhos.rho1) < 1.0)) throw ConfigError("copula needs |rho1| < 1");
    if (copula_residual_variance(rhos) < 0.0) throw ConfigError("copula correlations are not a valid correlation structure");
  }
  if (variant == ModelVariant::Model3) {
    // Wavelengths in [beta, inf) where a line is positive form one interval;
    // both widths must be positive somewhere in common.
    double lo = wavelength.beta, hi = std::numeric_limits<double>::infinity();
    for (auto [a, b] : {std::pair{lines.a1, lines.b1}, std::pair{lines.a2, lines.b2}}) {
      if (a > 0.0) {
        lo = std::max(lo, -b / a);
      } else if (a < 0.0) {
        hi = std::min(hi, -b / a);
      } else if (!(b > 0.0)) {
        hi = lo;
      }
    }
    if (!(lo < hi)) {
      throw ConfigError("width lines give non-positive widths for every admissible wavelength");
    }
  }
}

GenModelSpec GenModelSpec::defaults(ModelVariant variant) {
  GenModelSpec s;
  s.variant = variant;
  return s;
}

GenModelSpec GenModelSpec::from_fit(const FitReport& report, ModelVariant variant) {
  GenModelSpec s;
  s.variant = variant;
  const auto* sx = std::get_if<LogNormalDist>(&report.sigma_x.dist);
  const auto* sy = std::get_if<ParetoDist>(&report.sigma_y.dist);
  const auto* lam = std::get_if<ParetoDist>(&report.wavelength.dist);
  if (!sx || !sy || !lam) throw ConfigError("fit report marginals are not LogNormal/Pareto/Pareto");
  s.sigma_x = *sx;
  s.sigma_y = *sy;
  s.wavelength = *lam;
  const auto& c = report.correlation;
  s.rhos = {c.rho1, c.rho2, c.rho3};
  s.lines = {c.sigma_x_on_wavelength.slope, c.sigma_x_on_wavelength.intercept, c.sigma_y_on_wavelength.slope,
             c.sigma_y_on_wavelength.intercept};
  s.validate();
  return s;
}

namespace {

GaborParams angles(double u_phi, double u_phase) {
  GaborParams g;
  g.phi = pi * u_phi;
  g.phase = -2.0 * pi + 4.0 * pi * u_phase;
  return g;
}

double lognormal_from_normal(const LogNormalDist& d, double z) { return std::exp(d.mu + d.sigma * z); }

double unit(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }
double normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

}  // namespace

GaborParams model1_from_draws(const GenModelSpec& spec, double u_phi, double u_phase, double z_sigma_x,
                              double u_sigma_y, double u_wavelength) {
  GaborParams g = angles(u_phi, u_phase);
  g.sigma_x = lognormal_from_normal(spec.sigma_x, z_sigma_x);
  g.sigma_y = quantile(spec.sigma_y, u_sigma_y);
  g.k = 2.0 * pi / quantile(spec.wavelength, u_wavelength);
  return g;
}

GaborParams model2_from_draws(const GenModelSpec& spec, double u_phi, double u_phase, double z1, double z2,
                              double z3) {
  const auto& r = spec.rhos;
  if (!(std::abs(r.rho1) < 1.0) || copula_residual_variance(r) < 0.0) {
    throw ConfigError("copula correlations are not a valid correlation structure");
  }
  const double c1 = std::sqrt(1.0 - r.rho1 * r.rho1);
  const double latent_y = r.rho1 * z1 + c1 * z2;
  const double latent_z =
      r.rho2 * z1 + (r.rho3 - r.rho1 * r.rho2) / c1 * z2 + std::sqrt(copula_residual_variance(r)) * z3;
  // Phi can round to exactly 1 in the far upper tail; keep u inside [0, 1).
  auto to_unit = [](double z) { return std::min(std_normal_cdf(z), std::nextafter(1.0, 0.0)); };
  GaborParams g = angles(u_phi, u_phase);
  g.sigma_x = lognormal_from_normal(spec.sigma_x, z1);
  g.sigma_y = quantile(spec.sigma_y, to_unit(latent_y));
  g.k = 2.0 * pi / quantile(spec.wavelength, to_unit(latent_z));
  return g;
}

std::optional<GaborParams> model3_from_draws(const GenModelSpec& spec, double u_phi, double u_phase,
                                             double u_wavelength) {
  const double lambda = quantile(spec.wavelength, u_wavelength);
  GaborParams g = angles(u_phi, u_phase);
  g.sigma_x = spec.lines.a1 * lambda + spec.lines.b1;
  g.sigma_y = spec.lines.a2 * lambda + spec.lines.b2;
  if (!(g.sigma_x > 0.0) || !(g.sigma_y > 0.0)) return std::nullopt;
  g.k = 2.0 * pi / lambda;
  return g;
}

GaborParams sample_model1(const GenModelSpec& spec, Rng& rng) {
  const double u_phi = unit(rng);
  const double u_phase = unit(rng);
  const double z = normal(rng);
  const double u_sy = unit(rng);
  const double u_lam = unit(rng);
  return model1_from_draws(spec, u_phi, u_phase, z, u_sy, u_lam);
}

GaborParams sample_model2(const GenModelSpec& spec, Rng& rng) {
  const double u_phi = unit(rng);
  const double u_phase = unit(rng);
  const double z1 = normal(rng);
  const double z2 = normal(rng);
  const double z3 = normal(rng);
  return model2_from_draws(spec, u_phi, u_phase, z1, z2, z3);
}

GaborParams sample_model3(const GenModelSpec& spec, Rng& rng) {
  const double u_phi = unit(rng);
  const double u_phase = unit(rng);
  for (;;) {
    if (auto g = model3_from_draws(spec, u_phi, u_phase, unit(rng))) return *g;
  }
}

GaborParams sample_params(const GenModelSpec& spec, Rng& rng) {
  switch (spec.variant) {
    case ModelVariant::Model1: return sample_model1(spec, rng);
    case ModelVariant::Model2: return sample_model2(spec, rng);
    case ModelVariant::Model3: return sample_model3(spec, rng);
  }
  throw ConfigError("bad model variant");
}

GaborBasis generate_basis(const GenModelSpec& spec, int patch_size, std::uint64_t seed, double scale) {
  spec.validate();
  if (patch_size < 1) throw ArgumentError("patch_size must be positive");
  std::vector<GaborParams> shapes(static_cast<std::size_t>(patch_size) * patch_size);
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    Rng rng(derive_seed(seed, i));
    shapes[i] = canonicalize(sample_params(spec, rng));
  }
  return make_basis(patch_size, scale, shapes);
}

}  // namespace gabor_adapt
