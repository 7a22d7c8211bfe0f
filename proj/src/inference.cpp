#include "gabor_adapt/inference.hpp"

#include "gabor_adapt/errors.hpp"

#include <cmath>
#include <sstream>

namespace gabor_adapt {

void InferenceConfig::validate() const {
  if (!(lambda_sparse >= 0.0)) throw ArgumentError("lambda_sparse must be >= 0");
  if (!(cg_tol > 0.0)) throw ArgumentError("cg_tol must be > 0");
  if (cg_max_iters < 1) throw ArgumentError("cg_max_iters must be >= 1");
}

double sparseness(const Eigen::Ref<const Eigen::VectorXd>& x) { return x.array().square().log1p().sum(); }

double energy(const Eigen::Ref<const Eigen::VectorXd>& image, const Eigen::Ref<const Eigen::MatrixXd>& basis,
              const Eigen::Ref<const Eigen::VectorXd>& a, double lambda) {
  return 0.5 * (image - basis * a).squaredNorm() + lambda * sparseness(a);
}

Eigen::VectorXd energy_grad_a(const Eigen::Ref<const Eigen::VectorXd>& image,
                              const Eigen::Ref<const Eigen::MatrixXd>& basis,
                              const Eigen::Ref<const Eigen::VectorXd>& a, double lambda) {
  const Eigen::VectorXd residual = image - basis * a;
  Eigen::VectorXd grad = -(basis.transpose() * residual);
  if (lambda != 0.0) grad.array() += lambda * 2.0 * a.array() / (1.0 + a.array().square());
  return grad;
}

namespace {

// Energy restricted to the line a + t d, given q = G d and the current
// residual r. All terms are O(atoms + pixels), so the line search never
// touches the basis matrix.
struct LineFunction {
  double rr, rq, qq, lambda;
  const Eigen::VectorXd& a;
  const Eigen::VectorXd& d;

  double value(double t) const {
    double s = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      const double u = a[i] + t * d[i];
      s += std::log1p(u * u);
    }
    return 0.5 * (rr - 2.0 * t * rq + t * t * qq) + lambda * s;
  }

  // First and second derivative in t.
  std::pair<double, double> slope(double t) const {
    double d1 = -rq + t * qq;
    double d2 = qq;
    if (lambda != 0.0) {
      for (Eigen::Index i = 0; i < a.size(); ++i) {
        const double u = a[i] + t * d[i];
        const double w = 1.0 + u * u;
        d1 += lambda * 2.0 * d[i] * u / w;
        d2 += lambda * 2.0 * d[i] * d[i] * (1.0 - u * u) / (w * w);
      }
    }
    return {d1, d2};
  }
};

// Safeguarded Newton steps for the line minimum, then Armijo backtracking.
// Returns 0 when no decrease could be found.
double line_search(const LineFunction& line, double e0, double slope0, double t_hint) {
  constexpr double kArmijo = 1e-4;
  double t = t_hint;
  {
    const auto [d1, d2] = line.slope(0.0);
    if (d2 > 0.0) t = -d1 / d2;
  }
  for (int it = 0; it < 12; ++it) {
    const auto [d1, d2] = line.slope(t);
    if (!(d2 > 0.0)) break;
    double next = t - d1 / d2;
    if (!(next > 0.0)) next = 0.5 * t;
    next = std::min(next, 10.0 * t);
    const bool done = std::abs(next - t) <= 1e-12 * t;
    t = next;
    if (done) break;
  }
  if (!(t > 0.0) || !std::isfinite(t)) t = t_hint;
  for (int it = 0; it < 60; ++it) {
    const double e = line.value(t);
    if (e <= e0 + kArmijo * t * slope0) return t;
    t *= 0.5;
  }
  return 0.0;
}

struct ColumnState {
  Eigen::VectorXd a, r, g, d;
  double energy = 0.0;
  double gg = 0.0;
  double last_step = 1.0;
  int iterations = 0;
  int since_restart = 0;
  bool steepest = true;
  bool moved = false;
  bool active = true;
  bool converged = false;
};

void fail_non_finite(Eigen::Index column, int iteration, double e) {
  std::ostringstream msg;
  msg << "non-finite energy in map_infer (patch " << column << ", iteration " << iteration << ", energy " << e
      << ")";
  throw NumericError(msg.str());
}

}  // namespace

std::vector<SparseCode> map_infer_batch(const Eigen::Ref<const Eigen::MatrixXd>& images,
                                        const Eigen::Ref<const Eigen::MatrixXd>& basis, const InferenceConfig& cfg) {
  cfg.validate();
  if (images.rows() != basis.rows()) throw ArgumentError("patch length does not match basis rows");
  const Eigen::Index atoms = basis.cols();
  const Eigen::Index count = images.cols();
  const double lambda = cfg.lambda_sparse;
  // Restarting along the steepest-descent direction every `atoms` steps.
  const int restart_period = static_cast<int>(std::max<Eigen::Index>(atoms, 1));

  auto penalty_grad = [lambda](const Eigen::VectorXd& a) -> Eigen::VectorXd {
    return lambda * 2.0 * a.array() / (1.0 + a.array().square());
  };

  std::vector<ColumnState> cols(count);
  {
    const Eigen::MatrixXd gtr = basis.transpose() * images;
    for (Eigen::Index j = 0; j < count; ++j) {
      auto& s = cols[j];
      s.a = Eigen::VectorXd::Zero(atoms);
      s.r = images.col(j);
      s.g = -gtr.col(j);
      s.d = -s.g;
      s.gg = s.g.squaredNorm();
      s.energy = 0.5 * s.r.squaredNorm();
      if (!std::isfinite(s.energy)) fail_non_finite(j, 0, s.energy);
      if (atoms == 0 || s.g.lpNorm<Eigen::Infinity>() < cfg.cg_tol) {
        s.active = false;
        s.converged = true;
      }
    }
  }

  std::vector<Eigen::Index> live;
  Eigen::MatrixXd dirs, q, res, gtr;
  for (int iter = 0; iter < cfg.cg_max_iters; ++iter) {
    live.clear();
    for (Eigen::Index j = 0; j < count; ++j)
      if (cols[j].active) live.push_back(j);
    if (live.empty()) break;
    const auto m = static_cast<Eigen::Index>(live.size());

    dirs.resize(atoms, m);
    for (Eigen::Index c = 0; c < m; ++c) dirs.col(c) = cols[live[c]].d;
    q.noalias() = basis * dirs;

    res.resize(basis.rows(), m);
    for (Eigen::Index c = 0; c < m; ++c) {
      auto& s = cols[live[c]];
      const auto qc = q.col(c);
      const double slope0 = s.g.dot(s.d);
      LineFunction line{s.r.squaredNorm(), s.r.dot(qc), qc.squaredNorm(), lambda, s.a, s.d};
      double t = slope0 < 0.0 ? line_search(line, s.energy, slope0, s.last_step) : 0.0;
      s.moved = t > 0.0;
      if (s.moved) {
        const double e = line.value(t);
        if (!std::isfinite(e)) fail_non_finite(live[c], iter, e);
        s.a += t * s.d;
        s.r -= t * qc;
        s.energy = e;
        s.last_step = t;
      }
      s.iterations = iter + 1;
      if (t == 0.0) {
        if (s.steepest) {
          // No descent along the gradient itself: numerically stationary.
          s.active = false;
          s.converged = s.g.lpNorm<Eigen::Infinity>() < cfg.cg_tol;
        } else {
          s.d = -s.g;
          s.steepest = true;
          s.since_restart = 0;
        }
      }
      res.col(c) = s.r;
    }

    gtr.noalias() = basis.transpose() * res;
    for (Eigen::Index c = 0; c < m; ++c) {
      auto& s = cols[live[c]];
      if (!s.active || !s.moved) continue;
      Eigen::VectorXd g = -gtr.col(c);
      if (lambda != 0.0) g += penalty_grad(s.a);
      if (g.lpNorm<Eigen::Infinity>() < cfg.cg_tol) {
        s.g = std::move(g);
        s.active = false;
        s.converged = true;
        continue;
      }
      const double gg_new = g.squaredNorm();
      double beta = s.gg > 0.0 ? (gg_new - g.dot(s.g)) / s.gg : 0.0;
      beta = std::max(beta, 0.0);
      if (++s.since_restart >= restart_period) {
        beta = 0.0;
        s.since_restart = 0;
      }
      s.d = -g + beta * s.d;
      s.steepest = beta == 0.0;
      if (s.d.dot(g) >= 0.0) {
        s.d = -g;
        s.steepest = true;
      }
      s.g = std::move(g);
      s.gg = gg_new;
    }
  }

  std::vector<SparseCode> out(count);
  for (Eigen::Index j = 0; j < count; ++j) {
    auto& s = cols[j];
    SparseCode code;
    code.residual = images.col(j) - basis * s.a;
    code.energy = 0.5 * code.residual.squaredNorm() + lambda * sparseness(s.a);
    if (!std::isfinite(code.energy)) fail_non_finite(j, s.iterations, code.energy);
    code.a = std::move(s.a);
    code.iterations = s.iterations;
    code.converged = s.converged;
    out[j] = std::move(code);
  }
  return out;
}

SparseCode map_infer(const Eigen::Ref<const Eigen::VectorXd>& image, const Eigen::Ref<const Eigen::MatrixXd>& basis,
                     const InferenceConfig& cfg) {
  return std::move(map_infer_batch(image, basis, cfg).front());
}

double sparseness_ratio(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& image) {
  const double denom = sparseness(image);
  if (denom == 0.0) throw DomainError("sparseness ratio undefined for an all-zero image");
  return sparseness(a) / denom;
}

double reconstruction_error(const Eigen::Ref<const Eigen::VectorXd>& image,
                            const Eigen::Ref<const Eigen::MatrixXd>& basis,
                            const Eigen::Ref<const Eigen::VectorXd>& a) {
  if (image.size() == 0) return 0.0;
  return (image - basis * a).squaredNorm() / static_cast<double>(image.size());
}

}  // namespace gabor_adapt
