#pragma once

#include "gabor_adapt/distributions.hpp"
#include "gabor_adapt/fitstats.hpp"
#include "gabor_adapt/gabor.hpp"
#include "gabor_adapt/rng.hpp"

#include <cstdint>
#include <optional>
#include <string_view>

namespace gabor_adapt {

enum class ModelVariant {
  Model1,  ///< independent fitted marginals
  Model2,  ///< fitted marginals coupled by a trivariate Gaussian copula
  Model3,  ///< wavelength marginal plus linear width-wavelength relations
};

std::string_view to_string(ModelVariant v);
/// Accepts model1/model2/model3 (also 1/2/3).
ModelVariant parse_model_variant(std::string_view name);

/// Latent-normal correlations: rho1 (sigma_x, sigma_y), rho2 (sigma_x,
/// wavelength), rho3 (sigma_y, wavelength).
struct CopulaRhos {
  double rho1 = 0.8054;
  double rho2 = 0.7432;
  double rho3 = 0.7279;
};

/// sigma_x = a1 wavelength + b1, sigma_y = a2 wavelength + b2.
struct WidthLines {
  double a1 = 1.393;
  double b1 = -0.0872;
  double a2 = 0.4948;
  double b2 = 0.0013;
};

struct GenModelSpec {
  ModelVariant variant = ModelVariant::Model1;
  LogNormalDist sigma_x{-1.269, 0.3771};
  ParetoDist sigma_y{1.592, 0.0750};
  ParetoDist wavelength{2.751, 0.1987};
  CopulaRhos rhos;
  WidthLines lines;

  /// Throws ConfigError on invalid marginals, an infeasible correlation
  /// structure (Model2) or lines that never give positive widths (Model3).
  void validate() const;

  /// Spec with the published table estimates.
  static GenModelSpec defaults(ModelVariant variant);
  /// Spec built from a fit of a learned basis.
  static GenModelSpec from_fit(const FitReport& report, ModelVariant variant);
};

/// Variance left for the third latent normal after conditioning on the
/// first two; negative when the correlations are inconsistent.
double copula_residual_variance(const CopulaRhos& r);

/// Deterministic transforms from explicit uniform (u) and standard normal
/// (z) draws to the five learnable parameters. Centers are left at zero.
GaborParams model1_from_draws(const GenModelSpec& spec, double u_phi, double u_phase, double z_sigma_x,
                              double u_sigma_y, double u_wavelength);
GaborParams model2_from_draws(const GenModelSpec& spec, double u_phi, double u_phase, double z1, double z2,
                              double z3);
/// Empty when a width comes out non-positive; the sampler then redraws.
std::optional<GaborParams> model3_from_draws(const GenModelSpec& spec, double u_phi, double u_phase,
                                             double u_wavelength);

GaborParams sample_model1(const GenModelSpec& spec, Rng& rng);
GaborParams sample_model2(const GenModelSpec& spec, Rng& rng);
GaborParams sample_model3(const GenModelSpec& spec, Rng& rng);
GaborParams sample_params(const GenModelSpec& spec, Rng& rng);

/// One canonicalized draw per pixel of the P x P grid. Atom i uses its own
/// stream seeded by derive_seed(seed, i).
GaborBasis generate_basis(const GenModelSpec& spec, int patch_size, std::uint64_t seed, double scale = 1.0);

}  // namespace gabor_adapt
