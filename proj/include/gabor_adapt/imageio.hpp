#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace gabor_adapt {

/// Grayscale luminance image. Row index is y, column index is x.
struct RawImage {
  Eigen::MatrixXd pixels;

  int width() const { return static_cast<int>(pixels.cols()); }
  int height() const { return static_cast<int>(pixels.rows()); }
};

struct PipelineConfig {
  int patch_size = 16;
  int batch_size = 100;
  /// Low-pass cutoff f0 in cycles per image, measured along the shorter
  /// image side. Zero selects 0.8 x Nyquist of the image being whitened.
  double whitening_cutoff = 0.0;
  /// Rescale whitened images to zero mean and unit variance.
  bool standardize = true;
  std::uint64_t rng_seed = 1;

  void validate() const;
};

struct PatchOrigin {
  int image = 0;
  int x = 0;
  int y = 0;
};

/// B patches of P x P pixels. Row b holds patch b in row-major pixel order.
struct PatchBatch {
  Eigen::MatrixXd patches;
  std::vector<PatchOrigin> origins;
  int patch_size = 0;

  int size() const { return static_cast<int>(patches.rows()); }
  /// Patches as columns, the layout used by inference.
  Eigen::MatrixXd columns() const { return patches.transpose(); }
};

/// Reads PGM/PPM (8 or 16 bit, ascii or binary) and PNG files. Values are
/// scaled to [0,1]; color is reduced with Rec. 601 luma weights.
RawImage load_grayscale(const std::filesystem::path& path);

/// Writes an 8-bit binary PGM, clamping values to [0,1].
void write_pgm(const std::filesystem::path& path, const RawImage& img);

/// Radial whitening/low-pass gain R(f) = f exp(-(f/f0)^4).
double whitening_gain(double f, double f0);

/// Default cutoff, 0.8 x Nyquist in cycles per image for a width x height image.
double default_whitening_cutoff(int width, int height);

/// Filters the image spectrum by whitening_gain, then optionally
/// standardizes to zero mean and unit variance.
RawImage whiten(const RawImage& img, const PipelineConfig& cfg);

/// Draws cfg.batch_size patches: image uniformly, then offset uniformly.
PatchBatch sample_patches(const std::vector<RawImage>& images, const PipelineConfig& cfg);

void write_patch_csv(const std::filesystem::path& path, const PatchBatch& batch);
PatchBatch read_patch_csv(const std::filesystem::path& path);

/// Compact little-endian float64 cache used by the command-line pipeline.
void write_patch_cache(const std::filesystem::path& path, const PatchBatch& batch);
PatchBatch read_patch_cache(const std::filesystem::path& path);

}  // namespace gabor_adapt
