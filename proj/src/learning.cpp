#include "gabor_adapt/learning.hpp"

#include "gabor_adapt/errors.hpp"
#include "gabor_adapt/rng.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numbers>
#include <sstream>

namespace gabor_adapt {

using std::numbers::pi;

double LearningRates::get(GaborParam p) const {
  switch (p) {
    case GaborParam::Phi: return phi;
    case GaborParam::SigmaX: return sigma_x;
    case GaborParam::SigmaY: return sigma_y;
    case GaborParam::K: return k;
    case GaborParam::Phase: return phase;
  }
  return 0.0;
}

void LearningRates::set(GaborParam p, double v) {
  switch (p) {
    case GaborParam::Phi: phi = v; break;
    case GaborParam::SigmaX: sigma_x = v; break;
    case GaborParam::SigmaY: sigma_y = v; break;
    case GaborParam::K: k = v; break;
    case GaborParam::Phase: phase = v; break;
  }
}

LearningRates LearningRates::swapped_sigma() const {
  LearningRates r = *this;
  std::swap(r.sigma_x, r.sigma_y);
  return r;
}

void LearningConfig::validate() const {
  for (GaborParam p : kLearnableParams) {
    if (!(eta.get(p) >= 0.0)) throw ArgumentError("learning rate for " + std::string(to_string(p)) + " must be >= 0");
  }
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ArgumentError("alpha must lie in (0, 1]");
  if (!(sigma_goal_sq > 0.0)) throw ArgumentError("sigma_goal_sq must be > 0");
  if (iterations < 0) throw ArgumentError("iterations must be >= 0");
  if (!(clamps.sigma_min > 0.0 && clamps.sigma_min < clamps.sigma_max)) throw ArgumentError("bad sigma clamps");
  if (!(clamps.min_wavelength_px > 0.0)) throw ArgumentError("min_wavelength_px must be > 0");
}

void NonparamConfig::validate() const {
  if (!(eta >= 0.0)) throw ArgumentError("eta must be >= 0");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ArgumentError("alpha must lie in (0, 1]");
  if (!(sigma_goal_sq > 0.0)) throw ArgumentError("sigma_goal_sq must be > 0");
  if (iterations < 0) throw ArgumentError("iterations must be >= 0");
}

BatchSource image_batches(const std::vector<RawImage>& images, const PipelineConfig& cfg) {
  cfg.validate();
  if (images.empty()) throw ArgumentError("no images to sample from");
  return [images, cfg](int iteration) {
    PipelineConfig c = cfg;
    c.rng_seed = derive_seed(cfg.rng_seed, static_cast<std::uint64_t>(iteration));
    return sample_patches(images, c);
  };
}

BatchSource pool_batches(const PatchBatch& pool, int batch_size, std::uint64_t seed) {
  if (pool.size() == 0) throw ArgumentError("empty patch pool");
  if (batch_size < 1) throw ArgumentError("batch_size must be >= 1");
  return [pool, batch_size, seed](int iteration) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(iteration)));
    std::uniform_int_distribution<int> pick(0, pool.size() - 1);
    PatchBatch batch;
    batch.patch_size = pool.patch_size;
    batch.patches.resize(batch_size, pool.patches.cols());
    batch.origins.resize(batch_size);
    for (int b = 0; b < batch_size; ++b) {
      const int row = pick(rng);
      batch.patches.row(b) = pool.patches.row(row);
      batch.origins[b] = pool.origins[row];
    }
    return batch;
  };
}

GaborBasis uniform_init(int patch_size, double scale, std::uint64_t seed) {
  if (patch_size < 1) throw ArgumentError("patch_size must be positive");
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<GaborParams> shapes(static_cast<std::size_t>(patch_size) * patch_size);
  for (auto& g : shapes) {
    g.phi = pi * unit(rng);
    g.phase = -2.0 * pi + 4.0 * pi * unit(rng);
    g.sigma_x = 0.2 + 0.2 * unit(rng);
    g.sigma_y = 0.2 + 0.2 * unit(rng);
    g.k = 2.0 * pi / (0.2 + 0.2 * unit(rng));
  }
  return make_basis(patch_size, scale, shapes);
}

GaborParams clamp_params(GaborParams g, const ParameterClamps& clamps, int patch_size) {
  g.sigma_x = std::clamp(g.sigma_x, clamps.sigma_min, clamps.sigma_max);
  g.sigma_y = std::clamp(g.sigma_y, clamps.sigma_min, clamps.sigma_max);
  // Wavelengths below two pixels alias on the grid.
  const double k_max = 2.0 * pi / (clamps.min_wavelength_px / patch_size);
  constexpr double k_min = 1e-6;
  const double mag = std::clamp(std::abs(g.k), k_min, k_max);
  g.k = g.k < 0.0 ? -mag : mag;
  return canonicalize(g);
}

Eigen::MatrixXd coefficient_residual_correlation(const std::vector<SparseCode>& codes) {
  if (codes.empty()) throw ArgumentError("no sparse codes");
  const auto atoms = codes.front().a.size();
  const auto pixels = codes.front().residual.size();
  Eigen::MatrixXd a(atoms, codes.size());
  Eigen::MatrixXd r(pixels, codes.size());
  for (std::size_t b = 0; b < codes.size(); ++b) {
    a.col(static_cast<Eigen::Index>(b)) = codes[b].a;
    r.col(static_cast<Eigen::Index>(b)) = codes[b].residual;
  }
  return (a * r.transpose()) / static_cast<double>(codes.size());
}

namespace {

void check_codes(const GaborBasis& basis, const std::vector<SparseCode>& codes) {
  if (codes.empty()) throw ArgumentError("no sparse codes");
  for (const auto& c : codes) {
    if (c.a.size() != basis.size() || c.residual.size() != basis.patch_size * basis.patch_size) {
      throw ArgumentError("sparse code dimensions do not match the basis");
    }
  }
}

}  // namespace

GaborBasis m_step_update(const GaborBasis& basis, const PatchBatch& batch, const std::vector<SparseCode>& codes,
                         const LearningConfig& cfg) {
  check_codes(basis, codes);
  if (batch.size() != static_cast<int>(codes.size())) throw ArgumentError("one sparse code per patch required");
  const Eigen::MatrixXd corr = coefficient_residual_correlation(codes);
  GaborBasis out = basis;
  for (int j = 0; j < basis.size(); ++j) {
    const AtomJet jet = evaluate_jet(basis.atoms[j], basis.scale, basis.patch_size);
    const Eigen::VectorXd grad = jet.d.transpose() * corr.row(j).transpose();
    GaborParams next = basis.atoms[j];
    bool moved = false;
    for (int i = 0; i < 5; ++i) {
      const GaborParam p = kLearnableParams[i];
      const double step = cfg.eta.get(p) * grad[i];
      if (!std::isfinite(step)) {
        std::ostringstream msg;
        msg << "non-finite update for atom " << j << " parameter " << to_string(p);
        throw NumericError(msg.str());
      }
      param_ref(next, p) += step;
      moved = moved || step != 0.0;
    }
    if (moved) out.atoms[j] = clamp_params(next, cfg.clamps, basis.patch_size);
  }
  return out;
}

GaborBasis variance_rescale(const GaborBasis& basis, const std::vector<SparseCode>& codes, const LearningConfig& cfg) {
  check_codes(basis, codes);
  GaborBasis out = basis;
  const double inv = 1.0 / static_cast<double>(codes.size());
  for (int j = 0; j < basis.size(); ++j) {
    double var = 0.0;
    for (const auto& c : codes) var += c.a[j] * c.a[j];
    var *= inv;
    if (var == 0.0) continue;  // dead atom
    double s = std::pow(var / cfg.sigma_goal_sq, 0.5 * cfg.alpha);
    auto& g = out.atoms[j];
    // Keep both widths inside the clamp box without changing their ratio.
    const double lo = cfg.clamps.sigma_min / std::min(g.sigma_x, g.sigma_y);
    const double hi = cfg.clamps.sigma_max / std::max(g.sigma_x, g.sigma_y);
    if (lo <= hi) s = std::clamp(s, lo, hi);
    if (!std::isfinite(s)) throw NumericError("non-finite width rescale for atom " + std::to_string(j));
    g.sigma_x = std::clamp(g.sigma_x * s, cfg.clamps.sigma_min, cfg.clamps.sigma_max);
    g.sigma_y = std::clamp(g.sigma_y * s, cfg.clamps.sigma_min, cfg.clamps.sigma_max);
  }
  return out;
}

namespace {

double mean_coefficient_variance(const std::vector<SparseCode>& codes) {
  double total = 0.0;
  for (const auto& c : codes) total += c.a.squaredNorm();
  const auto atoms = codes.front().a.size();
  return atoms == 0 ? 0.0 : total / (static_cast<double>(codes.size()) * atoms);
}

constexpr int kDegradationWarningIteration = 320;

}  // namespace

LearningResult em_learn(const BatchSource& batches, const InferenceConfig& icfg, const LearningConfig& lcfg,
                        const GaborBasis& init) {
  icfg.validate();
  lcfg.validate();
  init.validate();
  if (lcfg.iterations > kDegradationWarningIteration) {
    std::clog << "warning: Gabor learning past " << kDegradationWarningIteration
              << " iterations tends to degrade reconstruction\n";
  }
  LearningResult result{init, {}};
  GaborBasis& basis = result.basis;
  for (int it = 0; it < lcfg.iterations; ++it) {
    try {
      const PatchBatch batch = batches(it);
      const FieldMatrix g = render(basis);
      const auto codes = map_infer_batch(batch.columns(), g, icfg);
      double energy_sum = 0.0;
      for (const auto& c : codes) energy_sum += c.energy;
      result.trace.records.push_back(
          {it, energy_sum / static_cast<double>(codes.size()), mean_coefficient_variance(codes)});
      basis = m_step_update(basis, batch, codes, lcfg);
      if (lcfg.variance_rescale) basis = variance_rescale(basis, codes, lcfg);
    } catch (const NumericError& e) {
      throw NumericError("iteration " + std::to_string(it) + ": " + e.what());
    }
    if (lcfg.snapshot_every > 0 && (it + 1) % lcfg.snapshot_every == 0) {
      result.trace.snapshots.emplace_back(it + 1, basis);
    }
  }
  return result;
}

LearningResult em_learn(const std::vector<RawImage>& images, const PipelineConfig& pcfg, const InferenceConfig& icfg,
                        const LearningConfig& lcfg, const GaborBasis& init) {
  return em_learn(image_batches(images, pcfg), icfg, lcfg, init);
}

FieldMatrix learn_nonparam(const BatchSource& batches, const InferenceConfig& icfg, const NonparamConfig& ncfg,
                           const FieldMatrix& init) {
  icfg.validate();
  ncfg.validate();
  if (!init.allFinite()) throw ArgumentError("initial basis has non-finite entries");
  FieldMatrix basis = init;
  for (int it = 0; it < ncfg.iterations; ++it) {
    const PatchBatch batch = batches(it);
    if (batch.patches.cols() != basis.rows()) throw ArgumentError("patch size does not match basis");
    std::vector<SparseCode> codes;
    try {
      codes = map_infer_batch(batch.columns(), basis, icfg);
    } catch (const NumericError& e) {
      throw NumericError("iteration " + std::to_string(it) + ": " + e.what());
    }
    const Eigen::MatrixXd corr = coefficient_residual_correlation(codes);
    basis.noalias() += ncfg.eta * corr.transpose();
    if (ncfg.gain_adapt) {
      const double inv = 1.0 / static_cast<double>(codes.size());
      for (Eigen::Index j = 0; j < basis.cols(); ++j) {
        double var = 0.0;
        for (const auto& c : codes) var += c.a[j] * c.a[j];
        var *= inv;
        if (var == 0.0) continue;
        basis.col(j) *= std::pow(var / ncfg.sigma_goal_sq, ncfg.alpha);
      }
    }
    if (!basis.allFinite()) throw NumericError("iteration " + std::to_string(it) + ": non-finite basis entry");
  }
  return basis;
}

FieldMatrix learn_nonparam(const std::vector<RawImage>& images, const PipelineConfig& pcfg,
                           const InferenceConfig& icfg, const NonparamConfig& ncfg, const FieldMatrix& init) {
  return learn_nonparam(image_batches(images, pcfg), icfg, ncfg, init);
}

namespace {

// Minimum-cost perfect matching on a square cost matrix (Hungarian method
// with potentials). Returns assignment[row] = column.
std::vector<int> min_cost_assignment(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assignment(n);
  for (int j = 1; j <= n; ++j) assignment[p[j] - 1] = j - 1;
  return assignment;
}

Eigen::MatrixXd unit_columns(const FieldMatrix& m) {
  Eigen::MatrixXd out = m;
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    const double n = out.col(j).norm();
    if (n > 0.0) out.col(j) /= n;
  }
  return out;
}

}  // namespace

double alignment_drift(const FieldMatrix& before, const FieldMatrix& after) {
  if (before.rows() != after.rows() || before.cols() != after.cols()) {
    throw ArgumentError("drift needs matrices of equal shape");
  }
  if (before.cols() == 0) return 0.0;
  const Eigen::MatrixXd u = unit_columns(before);
  const Eigen::MatrixXd v = unit_columns(after);
  const Eigen::MatrixXd cosines = u.transpose() * v;
  const Eigen::MatrixXd cost = (2.0 - 2.0 * cosines.array().abs()).max(0.0).sqrt().matrix();
  const auto match = min_cost_assignment(cost);
  double total = 0.0;
  for (int i = 0; i < static_cast<int>(match.size()); ++i) {
    const double sign = cosines(i, match[i]) < 0.0 ? -1.0 : 1.0;
    total += (u.col(i) - sign * v.col(match[i])).norm();
  }
  return total / static_cast<double>(match.size());
}

ProbeResult stability_probe(const GaborBasis& basis, const BatchSource& batches, const InferenceConfig& icfg,
                            const NonparamConfig& ncfg) {
  ProbeResult out;
  out.before = render(basis);
  out.after = learn_nonparam(batches, icfg, ncfg, out.before);
  out.drift = alignment_drift(out.before, out.after);
  return out;
}

}  // namespace gabor_adapt
