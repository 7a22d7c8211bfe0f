#pragma once

#include "gabor_adapt/gabor.hpp"
#include "gabor_adapt/imageio.hpp"
#include "gabor_adapt/inference.hpp"

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

namespace gabor_adapt {

/// Per-parameter gradient-ascent rates, applied to batch-averaged gradients.
struct LearningRates {
  double phi = 0.1;
  double phase = 0.1;
  double sigma_x = 0.25;
  double sigma_y = 0.05;
  double k = 10.0;

  double get(GaborParam p) const;
  void set(GaborParam p, double v);
  /// Rates with sigma_x and sigma_y exchanged.
  LearningRates swapped_sigma() const;
  static LearningRates all(double v) { return {v, v, v, v, v}; }
};

struct ParameterClamps {
  double sigma_min = 0.05;
  double sigma_max = 1.5;
  double min_wavelength_px = 2.0;
};

struct LearningConfig {
  LearningRates eta;
  double alpha = 0.1;          ///< exponent of the ellipse-area rule
  double sigma_goal_sq = 1.5;  ///< target coefficient variance
  int iterations = 200;
  bool variance_rescale = true;
  ParameterClamps clamps;
  int snapshot_every = 50;     ///< 0 disables basis snapshots in the trace

  void validate() const;
};

struct IterationRecord {
  int iteration = 0;
  double mean_energy = 0.0;
  double mean_coeff_variance = 0.0;
};

struct LearningTrace {
  std::vector<IterationRecord> records;
  std::vector<std::pair<int, GaborBasis>> snapshots;
};

struct LearningResult {
  GaborBasis basis;
  LearningTrace trace;
};

/// Supplies the patch batch for a given iteration.
using BatchSource = std::function<PatchBatch(int iteration)>;

/// Fresh batches sampled from whitened images, seeded per iteration.
BatchSource image_batches(const std::vector<RawImage>& images, const PipelineConfig& cfg);
/// Batches drawn with replacement from a patch pool, seeded per iteration.
BatchSource pool_batches(const PatchBatch& pool, int batch_size, std::uint64_t seed);

/// Initial parameters: phi ~ U(0, pi), phase ~ U(-2pi, 2pi) and sigma_x,
/// sigma_y, wavelength ~ U(0.2, 0.4).
GaborBasis uniform_init(int patch_size, double scale, std::uint64_t seed);

/// Clamps widths and the wavelength, then canonicalizes.
GaborParams clamp_params(GaborParams g, const ParameterClamps& clamps, int patch_size);

/// Batch average of coefficient times residual, atoms x pixels.
Eigen::MatrixXd coefficient_residual_correlation(const std::vector<SparseCode>& codes);

/// One gradient-ascent step on the five parameters of every atom.
GaborBasis m_step_update(const GaborBasis& basis, const PatchBatch& batch, const std::vector<SparseCode>& codes,
                         const LearningConfig& cfg);

/// Rescales both envelope widths of each atom by (<a^2> / goal)^(alpha/2),
/// multiplying the ellipse area by (<a^2> / goal)^alpha.
GaborBasis variance_rescale(const GaborBasis& basis, const std::vector<SparseCode>& codes, const LearningConfig& cfg);

LearningResult em_learn(const BatchSource& batches, const InferenceConfig& icfg, const LearningConfig& lcfg,
                        const GaborBasis& init);
LearningResult em_learn(const std::vector<RawImage>& images, const PipelineConfig& pcfg, const InferenceConfig& icfg,
                        const LearningConfig& lcfg, const GaborBasis& init);

struct NonparamConfig {
  double eta = 0.01;
  double alpha = 0.02;
  double sigma_goal_sq = 1.5;
  int iterations = 2000;
  bool gain_adapt = true;

  void validate() const;
};

/// Unconstrained dictionary learning: column j moves by eta <a_j r>, then
/// its norm is scaled by (<a_j^2> / goal)^alpha.
FieldMatrix learn_nonparam(const BatchSource& batches, const InferenceConfig& icfg, const NonparamConfig& ncfg,
                           const FieldMatrix& init);
FieldMatrix learn_nonparam(const std::vector<RawImage>& images, const PipelineConfig& pcfg,
                           const InferenceConfig& icfg, const NonparamConfig& ncfg, const FieldMatrix& init);

/// Mean distance between unit-normalized columns after optimal sign and
/// permutation alignment; each term lies in [0, sqrt(2)].
double alignment_drift(const FieldMatrix& before, const FieldMatrix& after);

struct ProbeResult {
  FieldMatrix before;
  FieldMatrix after;
  double drift = 0.0;
};

ProbeResult stability_probe(const GaborBasis& basis, const BatchSource& batches, const InferenceConfig& icfg,
                            const NonparamConfig& ncfg);

}  // namespace gabor_adapt
