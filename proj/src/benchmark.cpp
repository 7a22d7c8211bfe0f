#include "gabor_adapt/benchmark.hpp"

#include "gabor_adapt/errors.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace gabor_adapt {

BenchPoint evaluate_lambda(const FieldMatrix& basis, const Eigen::MatrixXd& patches, const InferenceConfig& icfg) {
  if (patches.cols() == 0) throw ArgumentError("benchmark needs at least one patch");
  const auto codes = map_infer_batch(patches, basis, icfg);
  BenchPoint pt{icfg.lambda_sparse, 0.0, 0.0};
  for (Eigen::Index j = 0; j < patches.cols(); ++j) {
    pt.mean_ratio += sparseness_ratio(codes[j].a, patches.col(j));
    pt.mean_error += codes[j].residual.squaredNorm() / static_cast<double>(patches.rows());
  }
  pt.mean_ratio /= static_cast<double>(patches.cols());
  pt.mean_error /= static_cast<double>(patches.cols());
  return pt;
}

BenchCurve sweep_lambda(const FieldMatrix& basis, const Eigen::MatrixXd& patches, const SweepConfig& cfg,
                        std::string basis_id) {
  if (!(cfg.lambda_start > 0.0) || !(cfg.lambda_factor > 1.0)) throw ArgumentError("bad lambda sweep settings");
  BenchCurve curve{std::move(basis_id), {}};
  auto eval = [&](double lambda) {
    InferenceConfig ic = cfg.inference;
    ic.lambda_sparse = lambda;
    return evaluate_lambda(basis, patches, ic);
  };
  std::vector<BenchPoint> pts{eval(cfg.lambda_start)};
  // Smaller lambda gives denser codes and larger ratios.
  while (pts.front().mean_ratio < cfg.ratio_max && static_cast<int>(pts.size()) < cfg.max_points) {
    pts.insert(pts.begin(), eval(pts.front().lambda / cfg.lambda_factor));
  }
  while (pts.back().mean_ratio > cfg.ratio_min && static_cast<int>(pts.size()) < cfg.max_points) {
    pts.push_back(eval(pts.back().lambda * cfg.lambda_factor));
  }
  curve.points = std::move(pts);
  return curve;
}

BenchCurve sweep_lambda(const FieldMatrix& basis, const Eigen::MatrixXd& patches, const InferenceConfig& icfg,
                        const std::vector<double>& lambdas, std::string basis_id) {
  BenchCurve curve{std::move(basis_id), {}};
  std::vector<double> sorted = lambdas;
  std::sort(sorted.begin(), sorted.end());
  for (double l : sorted) {
    InferenceConfig ic = icfg;
    ic.lambda_sparse = l;
    curve.points.push_back(evaluate_lambda(basis, patches, ic));
  }
  return curve;
}

std::optional<double> error_at_sparseness(const BenchCurve& curve, double target) {
  const auto& p = curve.points;
  for (std::size_t i = 0; i + 1 < p.size(); ++i) {
    const double r0 = p[i].mean_ratio;
    const double r1 = p[i + 1].mean_ratio;
    if ((r0 - target) * (r1 - target) > 0.0) continue;
    if (r0 == r1) return 0.5 * (p[i].mean_error + p[i + 1].mean_error);
    const double w = (target - r0) / (r1 - r0);
    return p[i].mean_error + w * (p[i + 1].mean_error - p[i].mean_error);
  }
  return std::nullopt;
}

void write_bench_csv(const std::filesystem::path& path, const std::vector<BenchCurve>& curves) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "basis,lambda,mean_ratio,mean_error\n";
  char buf[256];
  for (const auto& c : curves) {
    for (const auto& p : c.points) {
      std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g\n", p.lambda, p.mean_ratio, p.mean_error);
      out << c.basis_id << buf;
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void write_matched_csv(const std::filesystem::path& path, const std::vector<BenchCurve>& curves,
                       const std::vector<double>& targets) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "basis,target_ratio,mean_error\n";
  char buf[128];
  for (const auto& c : curves) {
    for (double t : targets) {
      const auto e = error_at_sparseness(c, t);
      std::snprintf(buf, sizeof buf, ",%.17g,", t);
      out << c.basis_id << buf;
      if (e) {
        std::snprintf(buf, sizeof buf, "%.17g", *e);
        out << buf;
      }
      out << '\n';
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace gabor_adapt
