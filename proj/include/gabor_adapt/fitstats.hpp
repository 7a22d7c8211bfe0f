#pragma once

#include "gabor_adapt/distributions.hpp"
#include "gabor_adapt/gabor.hpp"

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace gabor_adapt {

struct MarginalFit {
  Marginal dist;
  std::size_t n = 0;
  /// Set when the sample cannot identify the distribution (zero spread).
  bool degenerate = false;
};

/// Least-squares line y = slope * x + intercept.
struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;
};

struct CorrelationReport {
  double rho1 = 0.0;  ///< (sigma_x, sigma_y)
  double rho2 = 0.0;  ///< (sigma_x, wavelength)
  double rho3 = 0.0;  ///< (sigma_y, wavelength)
  LineFit sigma_x_on_wavelength;
  LineFit sigma_y_on_wavelength;
  std::size_t n = 0;
  bool positive_semidefinite = true;
};

/// Atoms with sigma_x <= 1, the population used for statistics. Prints a
/// warning when nothing survives.
std::vector<GaborParams> filter_for_stats(const GaborBasis& basis);

/// ML estimates: mean and population standard deviation of ln(x).
MarginalFit fit_lognormal(std::span<const double> samples);
/// ML estimates: beta = min(x), alpha = n / sum ln(x / beta).
MarginalFit fit_pareto(std::span<const double> samples);

double pearson(std::span<const double> x, std::span<const double> y);
LineFit fit_line(std::span<const double> x, std::span<const double> y);

CorrelationReport correlations(const std::vector<GaborParams>& params);

struct Histogram {
  std::string name;
  double lo = 0.0;
  double hi = 1.0;
  std::vector<std::size_t> counts;

  double bin_width() const { return (hi - lo) / static_cast<double>(counts.size()); }
  /// Counts normalized to unit area.
  std::vector<double> density() const;
};

/// Histograms of phi, phase, sigma_x, sigma_y, wavelength and sigma_y/sigma_x.
/// Angles are taken from canonicalized parameters over their canonical ranges;
/// the other quantities span the data range.
std::vector<Histogram> export_histograms(const std::vector<GaborParams>& params, int bins = 20);

void write_histograms_csv(const std::filesystem::path& path, const std::vector<Histogram>& hists);
/// One row per atom: sigma_x, sigma_y, wavelength, aspect, n_x, n_y, phi, phase.
void write_scatter_csv(const std::filesystem::path& path, const std::vector<GaborParams>& params);

/// Everything fitted from one basis, consumed by the generative models.
struct FitReport {
  std::size_t total_atoms = 0;
  std::size_t retained_atoms = 0;
  MarginalFit sigma_x;     ///< Log-Normal
  MarginalFit sigma_y;     ///< Pareto
  MarginalFit wavelength;  ///< Pareto
  CorrelationReport correlation;
  double mean_aspect = 0.0;
  std::string pareto_estimator = "ml-sample-minimum";
};

FitReport fit_basis(const GaborBasis& basis);

void write_fit_report(const std::filesystem::path& path, const FitReport& report);
FitReport read_fit_report(const std::filesystem::path& path);

}  // namespace gabor_adapt
