#pragma once

#include "gabor_adapt/gabor.hpp"
#include "gabor_adapt/inference.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace gabor_adapt {

/// Mean sparseness ratio and mean reconstruction error over a patch set at
/// one sparseness weight.
struct BenchPoint {
  double lambda = 0.0;
  double mean_ratio = 0.0;
  double mean_error = 0.0;
};

struct BenchCurve {
  std::string basis_id;
  std::vector<BenchPoint> points;  ///< ascending lambda
};

struct SweepConfig {
  InferenceConfig inference;
  double lambda_start = 0.03;
  double lambda_factor = 1.7782794100389228;  ///< 10^(1/4)
  /// The sweep grows until its ratios bracket [ratio_min, ratio_max].
  double ratio_min = 0.45;
  double ratio_max = 0.95;
  int max_points = 40;
};

/// `patches` holds one patch per column.
BenchPoint evaluate_lambda(const FieldMatrix& basis, const Eigen::MatrixXd& patches, const InferenceConfig& icfg);

/// Geometric lambda grid extended in both directions until the sparseness
/// ratios cover [ratio_min, ratio_max] or max_points is reached.
BenchCurve sweep_lambda(const FieldMatrix& basis, const Eigen::MatrixXd& patches, const SweepConfig& cfg,
                        std::string basis_id = {});
/// Fixed lambda list.
BenchCurve sweep_lambda(const FieldMatrix& basis, const Eigen::MatrixXd& patches, const InferenceConfig& icfg,
                        const std::vector<double>& lambdas, std::string basis_id = {});

/// Mean error at a target sparseness ratio by linear interpolation between
/// the neighbouring sweep points; empty when the target is not bracketed.
std::optional<double> error_at_sparseness(const BenchCurve& curve, double target_ratio);

/// Rows: basis, lambda, mean_ratio, mean_error.
void write_bench_csv(const std::filesystem::path& path, const std::vector<BenchCurve>& curves);
/// Rows: basis, target_ratio, mean_error (empty when not bracketed).
void write_matched_csv(const std::filesystem::path& path, const std::vector<BenchCurve>& curves,
                       const std::vector<double>& targets);

}  // namespace gabor_adapt
