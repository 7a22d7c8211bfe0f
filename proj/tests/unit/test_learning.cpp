#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gabor_adapt/errors.hpp"
#include "gabor_adapt/learning.hpp"
#include "test_util.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

using namespace gabor_adapt;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using std::numbers::pi;

namespace {

std::vector<RawImage> small_corpus() {
  std::vector<RawImage> imgs;
  for (const char* f : {"01_gravel.pgm", "04_chelsea.pgm"}) {
    imgs.push_back(whiten(load_grayscale(test_util::corpus_dir() / f), PipelineConfig{}));
  }
  return imgs;
}

PatchBatch random_batch(std::mt19937_64& rng, int count, int P) {
  std::normal_distribution<double> n01;
  PatchBatch b;
  b.patch_size = P;
  b.patches.resize(count, P * P);
  for (Eigen::Index i = 0; i < b.patches.size(); ++i) b.patches.data()[i] = n01(rng);
  b.origins.resize(count);
  return b;
}

SparseCode code_with(const VectorXd& a, const VectorXd& r) {
  SparseCode c;
  c.a = a;
  c.residual = r;
  return c;
}

GaborBasis canonical_basis(int P, double scale, std::uint64_t seed) {
  GaborBasis b = uniform_init(P, scale, seed);
  for (auto& g : b.atoms) g = canonicalize(g);
  return b;
}

LearningConfig frozen() {
  LearningConfig c;
  c.eta = LearningRates::all(0.0);
  c.variance_rescale = false;
  return c;
}

}  // namespace

TEST_CASE("learning rates") {
  LearningRates r;
  CHECK(r.sigma_x == doctest::Approx(5 * r.sigma_y));
  auto s = r.swapped_sigma();
  CHECK(s.sigma_x == r.sigma_y);
  CHECK(s.sigma_y == r.sigma_x);
  CHECK(s.phi == r.phi);
  r.set(GaborParam::K, 3.0);
  CHECK(r.get(GaborParam::K) == 3.0);
  auto a = LearningRates::all(0.5);
  for (auto p : kLearnableParams) CHECK(a.get(p) == 0.5);
}

TEST_CASE("configuration validation") {
  LearningConfig c;
  CHECK_NOTHROW(c.validate());
  c.eta.phi = -1;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = LearningConfig{};
  c.alpha = 0.0;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c.alpha = 1.5;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = LearningConfig{};
  c.sigma_goal_sq = 0.0;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = LearningConfig{};
  c.iterations = -1;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  NonparamConfig n;
  CHECK_NOTHROW(n.validate());
  n.eta = -0.1;
  CHECK_THROWS_AS(n.validate(), ArgumentError);
}

TEST_CASE("uniform initialization ranges") {
  GaborBasis b = uniform_init(16, 0.25, 3);
  REQUIRE(b.size() == 256);
  CHECK(b.scale == 0.25);
  CHECK_NOTHROW(b.validate());
  for (const auto& g : b.atoms) {
    CHECK(g.phi >= 0.0);
    CHECK(g.phi < pi);
    CHECK(g.phase >= -2 * pi);
    CHECK(g.phase < 2 * pi);
    CHECK(g.sigma_x >= 0.2);
    CHECK(g.sigma_x < 0.4);
    CHECK(g.sigma_y >= 0.2);
    CHECK(g.sigma_y < 0.4);
    CHECK(g.wavelength() >= 0.2 - 1e-12);
    CHECK(g.wavelength() < 0.4 + 1e-12);
  }
}

TEST_CASE("initial orientations are uniform") {
  GaborBasis b = uniform_init(64, 1.0, 11);
  std::vector<int> bins(10, 0);
  for (const auto& g : b.atoms) bins[std::min(9, static_cast<int>(g.phi / pi * 10))]++;
  const double expect = b.size() / 10.0;
  double chi2 = 0.0;
  for (int n : bins) chi2 += (n - expect) * (n - expect) / expect;
  CHECK(chi2 < 27.88);  // 0.999 quantile, 9 degrees of freedom
}

TEST_CASE("clamp_params") {
  ParameterClamps c;
  GaborParams g;
  g.sigma_x = 0.01;
  g.sigma_y = 9.0;
  g.k = 1000.0;
  auto out = clamp_params(g, c, 16);
  CHECK(out.sigma_x == 0.05);
  CHECK(out.sigma_y == 1.5);
  CHECK(out.wavelength() * 16 == doctest::Approx(2.0));
  g.k = 0.0;
  CHECK(clamp_params(g, c, 16).k > 0.0);
  g.k = -10.0;
  g.phase = 0.4;
  out = clamp_params(g, c, 16);
  CHECK(out.k == 10.0);
  CHECK(out.phase == doctest::Approx(-0.4));
}

TEST_CASE("coefficient-residual correlation matches direct averaging") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n01;
  std::vector<SparseCode> codes;
  for (int b = 0; b < 7; ++b) {
    VectorXd a(5), r(9);
    for (auto& v : a) v = n01(rng);
    for (auto& v : r) v = n01(rng);
    codes.push_back(code_with(a, r));
  }
  MatrixXd c = coefficient_residual_correlation(codes);
  for (int j = 0; j < 5; ++j) {
    for (int p = 0; p < 9; ++p) {
      double s = 0.0;
      for (const auto& code : codes) s += code.a[j] * code.residual[p];
      CHECK(c(j, p) == doctest::Approx(s / 7).epsilon(1e-13));
    }
  }
  CHECK_THROWS_AS(coefficient_residual_correlation({}), ArgumentError);
}

TEST_CASE("M-step leaves the basis alone without signal or rate") {
  std::mt19937_64 rng(2);
  GaborBasis b = uniform_init(4, 1.0, 5);
  PatchBatch batch = random_batch(rng, 3, 4);
  std::vector<SparseCode> codes(3, code_with(VectorXd::Ones(16), VectorXd::Zero(16)));
  LearningConfig cfg;
  CHECK(m_step_update(b, batch, codes, cfg).atoms == b.atoms);
  codes.assign(3, code_with(VectorXd::Ones(16), VectorXd::Ones(16)));
  CHECK(m_step_update(b, batch, codes, frozen()).atoms == b.atoms);
}

TEST_CASE("M-step equals direct summation") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  const int P = 4, N = 16;
  GaborBasis b = canonical_basis(P, 0.8, 6);
  for (auto& g : b.atoms) {
    g.phi = std::clamp(g.phi, 0.3, pi - 0.3);
    g.phase = std::clamp(g.phase, -2.5, 2.5);
    g.k = 2 * pi / (4.0 / P);  // four pixels, clear of the wavelength clamp
  }
  LearningConfig cfg;
  cfg.eta = {1e-3, 2e-3, 3e-3, 4e-4, 5e-4};

  for (int batch_size : {1, 4}) {
    PatchBatch batch = random_batch(rng, batch_size, P);
    std::vector<SparseCode> codes;
    for (int s = 0; s < batch_size; ++s) {
      VectorXd a(N), r(P * P);
      for (auto& v : a) v = n01(rng);
      for (auto& v : r) v = 0.1 * n01(rng);
      if (batch_size == 1) {  // single active atom
        for (int j = 1; j < N; ++j) a[j] = 0.0;
      }
      codes.push_back(code_with(a, r));
    }
    GaborBasis next = m_step_update(b, batch, codes, cfg);
    for (int j = 0; j < N; ++j) {
      for (auto p : kLearnableParams) {
        Field d = partial_derivative(b.atoms[j], b.scale, P, p);
        double sum = 0.0;
        for (int y = 0; y < P; ++y) {
          for (int x = 0; x < P; ++x) {
            double avg = 0.0;
            for (const auto& c : codes) avg += c.a[j] * c.residual[y * P + x];
            sum += d(y, x) * avg / batch_size;
          }
        }
        double expect = cfg.eta.get(p) * sum;
        double got = param_value(next.atoms[j], p) - param_value(b.atoms[j], p);
        // the subtraction above costs a few ulps of the parameter itself
        double ulps = 4 * std::numeric_limits<double>::epsilon() * std::abs(param_value(b.atoms[j], p));
        CHECK(std::abs(got - expect) <= 1e-10 * std::abs(expect) + ulps);
      }
    }
  }
}

TEST_CASE("M-step errors") {
  GaborBasis b = uniform_init(4, 1.0, 7);
  std::mt19937_64 rng(4);
  PatchBatch batch = random_batch(rng, 2, 4);
  VectorXd r = VectorXd::Ones(16);
  r[3] = std::numeric_limits<double>::quiet_NaN();
  std::vector<SparseCode> codes(2, code_with(VectorXd::Ones(16), r));
  CHECK_THROWS_AS(m_step_update(b, batch, codes, LearningConfig{}), NumericError);
  codes.pop_back();
  CHECK_THROWS_AS(m_step_update(b, batch, codes, LearningConfig{}), ArgumentError);
  std::vector<SparseCode> wrong(2, code_with(VectorXd::Ones(3), VectorXd::Ones(16)));
  CHECK_THROWS_AS(m_step_update(b, batch, wrong, LearningConfig{}), ArgumentError);
}

TEST_CASE("variance rescale") {
  GaborBasis b = canonical_basis(2, 1.0, 8);
  LearningConfig cfg;
  cfg.sigma_goal_sq = 0.5;

  SUBCASE("goal variance is a fixed point") {
    std::vector<SparseCode> codes(4, code_with(VectorXd::Constant(4, std::sqrt(0.5)), VectorXd::Zero(4)));
    CHECK(variance_rescale(b, codes, cfg).atoms == b.atoms);
  }
  SUBCASE("four times the goal doubles each width at alpha 1") {
    cfg.alpha = 1.0;
    std::vector<SparseCode> codes(4, code_with(VectorXd::Constant(4, std::sqrt(2.0)), VectorXd::Zero(4)));
    auto out = variance_rescale(b, codes, cfg);
    for (int j = 0; j < 4; ++j) {
      CHECK(out.atoms[j].sigma_x == doctest::Approx(2 * b.atoms[j].sigma_x).epsilon(1e-14));
      CHECK(out.atoms[j].sigma_y == doctest::Approx(2 * b.atoms[j].sigma_y).epsilon(1e-14));
      double area = out.atoms[j].sigma_x * out.atoms[j].sigma_y / (b.atoms[j].sigma_x * b.atoms[j].sigma_y);
      CHECK(area == doctest::Approx(4.0).epsilon(1e-14));
    }
  }
  SUBCASE("dead atoms are left unchanged") {
    VectorXd a = VectorXd::Constant(4, 3.0);
    a[2] = 0.0;
    std::vector<SparseCode> codes(3, code_with(a, VectorXd::Zero(4)));
    auto out = variance_rescale(b, codes, cfg);
    CHECK(out.atoms[2] == b.atoms[2]);
    CHECK(out.atoms[0].sigma_x != b.atoms[0].sigma_x);
  }
  SUBCASE("frozen variance gives a geometric area progression") {
    cfg.alpha = 0.1;
    const double ratio = 1.3;
    std::vector<SparseCode> codes(2, code_with(VectorXd::Constant(4, std::sqrt(ratio * 0.5)), VectorXd::Zero(4)));
    GaborBasis cur = b;
    double prev_area = b.atoms[1].sigma_x * b.atoms[1].sigma_y;
    for (int n = 1; n <= 5; ++n) {
      cur = variance_rescale(cur, codes, cfg);
      double area = cur.atoms[1].sigma_x * cur.atoms[1].sigma_y;
      double closed = b.atoms[1].sigma_x * b.atoms[1].sigma_y * std::pow(ratio, n * cfg.alpha);
      CHECK(area == doctest::Approx(closed).epsilon(1e-12));
      CHECK(area > prev_area);
      prev_area = area;
    }
  }
}

TEST_CASE("variance rescale preserves aspect ratio and the clamp box") {
  std::mt19937_64 rng(9);
  std::lognormal_distribution<double> var(0.0, 2.0);
  LearningConfig cfg;
  cfg.alpha = 1.0;
  GaborBasis b = canonical_basis(8, 1.0, 10);
  for (int t = 0; t < 5; ++t) {
    VectorXd a(64);
    for (auto& v : a) v = std::sqrt(var(rng));
    std::vector<SparseCode> codes(1, code_with(a, VectorXd::Zero(64)));
    GaborBasis out = variance_rescale(b, codes, cfg);
    for (int j = 0; j < 64; ++j) {
      const auto& g0 = b.atoms[j];
      const auto& g1 = out.atoms[j];
      CHECK(std::abs(g1.sigma_y / g1.sigma_x - g0.sigma_y / g0.sigma_x) < 1e-12);
      CHECK(g1.sigma_x >= cfg.clamps.sigma_min - 1e-15);
      CHECK(g1.sigma_y <= cfg.clamps.sigma_max + 1e-15);
    }
    b = out;
  }
}

TEST_CASE("em_learn bookkeeping and invariants") {
  auto imgs = small_corpus();
  PipelineConfig pcfg;
  pcfg.patch_size = 8;
  pcfg.batch_size = 20;
  pcfg.rng_seed = 12;
  InferenceConfig icfg{0.03, 1e-4, 100};
  GaborBasis init = uniform_init(8, 0.25, 13);

  SUBCASE("zero iterations echo the init") {
    LearningConfig lcfg;
    lcfg.iterations = 0;
    auto r = em_learn(imgs, pcfg, icfg, lcfg, init);
    CHECK(r.basis.atoms == init.atoms);
    CHECK(r.trace.records.empty());
  }
  SUBCASE("zero rates without rescaling are the identity") {
    LearningConfig lcfg = frozen();
    lcfg.iterations = 4;
    auto r = em_learn(imgs, pcfg, icfg, lcfg, init);
    CHECK(r.basis.atoms == init.atoms);
    CHECK(r.trace.records.size() == 4);
  }
  SUBCASE("clamps hold after every iteration and runs are reproducible") {
    LearningConfig lcfg;
    lcfg.iterations = 6;
    lcfg.snapshot_every = 1;
    lcfg.eta = {0.5, 0.5, 5.0, 5.0, 50.0};  // large steps to hit the clamps
    auto r = em_learn(imgs, pcfg, icfg, lcfg, init);
    REQUIRE(r.trace.snapshots.size() == 6);
    for (const auto& [it, b] : r.trace.snapshots) {
      for (const auto& g : b.atoms) {
        CHECK(g.sigma_x >= lcfg.clamps.sigma_min);
        CHECK(g.sigma_x <= lcfg.clamps.sigma_max);
        CHECK(g.sigma_y >= lcfg.clamps.sigma_min);
        CHECK(g.sigma_y <= lcfg.clamps.sigma_max);
        CHECK(g.wavelength() * 8 >= lcfg.clamps.min_wavelength_px - 1e-9);
        CHECK(g.phi >= 0.0);
        CHECK(g.phi < pi);
      }
    }
    auto again = em_learn(imgs, pcfg, icfg, lcfg, init);
    REQUIRE(again.trace.records.size() == r.trace.records.size());
    for (std::size_t i = 0; i < r.trace.records.size(); ++i) {
      CHECK(again.trace.records[i].iteration == r.trace.records[i].iteration);
      CHECK(again.trace.records[i].mean_energy == r.trace.records[i].mean_energy);
      CHECK(again.trace.records[i].mean_coeff_variance == r.trace.records[i].mean_coeff_variance);
    }
    CHECK(again.basis.atoms == r.basis.atoms);
  }
  SUBCASE("numeric failures name the iteration") {
    LearningConfig lcfg;
    lcfg.iterations = 5;
    BatchSource bad = [&](int it) {
      PipelineConfig c = pcfg;
      c.rng_seed = it;
      PatchBatch b = sample_patches(imgs, c);
      if (it == 2) b.patches(0, 0) = std::numeric_limits<double>::quiet_NaN();
      return b;
    };
    try {
      em_learn(bad, icfg, lcfg, init);
      FAIL("expected a numeric error");
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("iteration 2") != std::string::npos);
    }
  }
}

TEST_CASE("pool batches") {
  std::mt19937_64 rng(14);
  PatchBatch pool = random_batch(rng, 30, 4);
  auto src = pool_batches(pool, 10, 99);
  PatchBatch a = src(3), b = src(3), c = src(4);
  CHECK(a.patches == b.patches);
  CHECK(a.patches != c.patches);
  CHECK(a.size() == 10);
  for (int i = 0; i < a.size(); ++i) {
    bool found = false;
    for (int j = 0; j < pool.size() && !found; ++j) found = pool.patches.row(j) == a.patches.row(i);
    CHECK(found);
  }
  CHECK_THROWS_AS(pool_batches(PatchBatch{}, 10, 1), ArgumentError);
  CHECK_THROWS_AS(pool_batches(pool, 0, 1), ArgumentError);
}

TEST_CASE("non-parametric learner") {
  std::mt19937_64 rng(15);
  InferenceConfig icfg{0.03, 1e-6, 200};

  SUBCASE("zero rate returns the init") {
    PatchBatch pool = random_batch(rng, 20, 4);
    MatrixXd init = render(uniform_init(4, 0.5, 16));
    NonparamConfig n;
    n.eta = 0.0;
    n.gain_adapt = false;
    n.iterations = 3;
    CHECK(learn_nonparam(pool_batches(pool, 5, 1), icfg, n, init) == init);
  }
  SUBCASE("single atom, single patch update is eta a r") {
    PatchBatch one;
    one.patch_size = 1;
    one.patches = MatrixXd::Constant(1, 1, 0.9);
    one.origins.resize(1);
    MatrixXd init = MatrixXd::Constant(1, 1, 0.6);
    NonparamConfig n;
    n.eta = 0.25;
    n.gain_adapt = false;
    n.iterations = 1;
    auto code = map_infer(one.patches.row(0).transpose(), init, icfg);
    MatrixXd out = learn_nonparam([&](int) { return one; }, icfg, n, init);
    CHECK(out(0, 0) == doctest::Approx(0.6 + 0.25 * code.a[0] * code.residual[0]).epsilon(1e-15));
  }
  SUBCASE("gain adaptation scales each column") {
    PatchBatch pool = random_batch(rng, 20, 4);
    MatrixXd init = render(uniform_init(4, 0.5, 17));
    NonparamConfig n;
    n.eta = 0.0;
    n.iterations = 1;
    n.alpha = 0.5;
    MatrixXd out = learn_nonparam([&](int) { return pool; }, icfg, n, init);
    auto codes = map_infer_batch(pool.columns(), init, icfg);
    for (int j = 0; j < 16; ++j) {
      double var = 0.0;
      for (const auto& c : codes) var += c.a[j] * c.a[j] / codes.size();
      CHECK((out.col(j) - init.col(j) * std::pow(var / n.sigma_goal_sq, 0.5)).norm() < 1e-12);
    }
  }
  SUBCASE("errors") {
    NonparamConfig n;
    n.iterations = 1;
    MatrixXd bad = MatrixXd::Ones(16, 16);
    bad(0, 0) = std::numeric_limits<double>::infinity();
    PatchBatch pool = random_batch(rng, 5, 4);
    CHECK_THROWS_AS(learn_nonparam(pool_batches(pool, 5, 1), icfg, n, bad), ArgumentError);
    CHECK_THROWS_AS(learn_nonparam(pool_batches(pool, 5, 1), icfg, n, MatrixXd::Ones(9, 9)), ArgumentError);
  }
}

TEST_CASE("alignment drift") {
  std::mt19937_64 rng(18);
  std::normal_distribution<double> n01;
  MatrixXd m(10, 6);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n01(rng);
  CHECK(alignment_drift(m, m) == 0.0);
  MatrixXd p(10, 6);
  const int perm[] = {3, 0, 5, 1, 4, 2};
  for (int j = 0; j < 6; ++j) p.col(j) = (j % 2 ? -2.5 : 0.7) * m.col(perm[j]);
  CHECK(alignment_drift(m, p) < 1e-7);

  MatrixXd e = MatrixXd::Identity(4, 4);
  MatrixXd f = MatrixXd::Zero(4, 4);
  f(0, 0) = f(1, 1) = 1.0;
  f(3, 2) = f(2, 3) = 1.0;
  CHECK(alignment_drift(e, f) == doctest::Approx(0.0).epsilon(1e-12));
  MatrixXd g = MatrixXd::Zero(4, 4);
  g(0, 0) = g(1, 1) = g(2, 2) = 1.0;
  g(0, 3) = 1.0;  // only shares a direction already taken
  CHECK(alignment_drift(e, g) == doctest::Approx(std::sqrt(2.0) / 4).epsilon(1e-12));

  // brute force over all permutations on a small instance
  MatrixXd a(5, 4), b(5, 4);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    a.data()[i] = n01(rng);
    b.data()[i] = n01(rng);
  }
  std::vector<int> idx = {0, 1, 2, 3};
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (int i = 0; i < 4; ++i) {
      double c = std::abs(a.col(i).normalized().dot(b.col(idx[i]).normalized()));
      s += std::sqrt(std::max(0.0, 2 - 2 * c));
    }
    best = std::min(best, s / 4);
  } while (std::next_permutation(idx.begin(), idx.end()));
  CHECK(alignment_drift(a, b) == doctest::Approx(best).epsilon(1e-12));
  CHECK_THROWS_AS(alignment_drift(a, MatrixXd::Ones(5, 3)), ArgumentError);
}

TEST_CASE("stability probe with no iterations has zero drift") {
  std::mt19937_64 rng(19);
  PatchBatch pool = random_batch(rng, 10, 4);
  NonparamConfig n;
  n.iterations = 0;
  GaborBasis b = uniform_init(4, 0.5, 20);
  auto r = stability_probe(b, pool_batches(pool, 5, 2), InferenceConfig{}, n);
  CHECK(r.drift == 0.0);
  CHECK(r.before == r.after);
  CHECK(r.before == render(b));
}
