#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gabor_adapt/errors.hpp"
#include "gabor_adapt/gabor.hpp"
#include "test_util.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace gabor_adapt;
using std::numbers::pi;

namespace {

GaborParams random_params(std::mt19937_64& rng, int P) {
  std::uniform_real_distribution<double> u01;
  std::uniform_int_distribution<int> pix(0, P - 1);
  GaborParams g;
  g.x0 = pix(rng);
  g.y0 = pix(rng);
  g.phi = 2 * pi * u01(rng);
  g.phase = -pi + 2 * pi * u01(rng);
  g.sigma_x = 0.1 + 0.5 * u01(rng);
  g.sigma_y = 0.1 + 0.5 * u01(rng);
  g.k = 5.0 + 35.0 * u01(rng);
  return g;
}

// Direct transcription of the atom formula, pixel by pixel.
double atom_oracle(const GaborParams& g, double A, int P, int x, int y, bool sine = false) {
  double dx = (x - g.x0) / P, dy = (y - g.y0) / P;
  double xt = std::cos(g.phi) * dx - std::sin(g.phi) * dy;
  double yt = std::sin(g.phi) * dx + std::cos(g.phi) * dy;
  double env = A * std::exp(-0.5 * (xt * xt / (g.sigma_x * g.sigma_x) + yt * yt / (g.sigma_y * g.sigma_y)));
  return env * (sine ? std::sin(g.k * yt + g.phase) : std::cos(g.k * yt + g.phase));
}

double max_abs(const Field& f) { return f.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("parameter names") {
  for (auto p : kLearnableParams) CHECK(parse_gabor_param(to_string(p)) == p);
  CHECK(parse_gabor_param("sigma_x") == GaborParam::SigmaX);
  CHECK_THROWS_AS(parse_gabor_param("x0"), ArgumentError);
  CHECK_THROWS_AS(partial_derivative(GaborParams{}, 1.0, 8, "amplitude"), ArgumentError);
  GaborParams g;
  param_ref(g, GaborParam::K) = 12.0;
  CHECK(param_value(g, GaborParam::K) == 12.0);
  CHECK(g.wavelength() == doctest::Approx(2 * pi / 12.0));
}

TEST_CASE("rotate_coords") {
  GaborParams g;
  g.x0 = 5;
  g.y0 = 7;
  auto [a, b] = rotate_coords(g, 5, 7, 16);
  CHECK(a == 0.0);
  CHECK(b == 0.0);

  g.phi = pi / 2;
  auto [c, d] = rotate_coords(g, 5 + 16, 7, 16);  // one unit along x
  CHECK(c == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std::abs(c) < 1e-12);
  CHECK(d == doctest::Approx(1.0).epsilon(1e-12));

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-20, 20);
  for (int i = 0; i < 100; ++i) {
    g.phi = u(rng);
    double x = u(rng), y = u(rng);
    auto [xt, yt] = rotate_coords(g, x, y, 16);
    double r2 = ((x - g.x0) * (x - g.x0) + (y - g.y0) * (y - g.y0)) / 256.0;
    CHECK(std::abs(xt * xt + yt * yt - r2) < 1e-12 * std::max(1.0, r2));
  }
}

TEST_CASE("evaluate matches the closed form") {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 10; ++t) {
    auto g = random_params(rng, 12);
    Field f = evaluate(g, 0.7, 12);
    Field h = evaluate_h(g, 0.7, 12);
    REQUIRE(f.rows() == 12);
    for (int y = 0; y < 12; ++y) {
      for (int x = 0; x < 12; ++x) {
        CHECK(std::abs(f(y, x) - atom_oracle(g, 0.7, 12, x, y)) < 1e-14);
        CHECK(std::abs(h(y, x) - atom_oracle(g, 0.7, 12, x, y, true)) < 1e-14);
      }
    }
  }
}

TEST_CASE("evaluate at the center") {
  GaborParams g;
  g.x0 = 3;
  g.y0 = 4;
  CHECK(evaluate(g, 2.5, 8)(4, 3) == doctest::Approx(2.5));
  g.phase = pi / 2;
  CHECK(std::abs(evaluate(g, 2.5, 8)(4, 3)) < 1e-12);
  g.phase = 0.0;
  CHECK(std::abs(evaluate_h(g, 2.5, 8)(4, 3)) < 1e-12);
}

TEST_CASE("field symmetries") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    auto g = random_params(rng, 16);
    Field f = evaluate(g, 1.0, 16);
    auto flipped = g;
    flipped.k = -g.k;
    flipped.phase = -g.phase;
    CHECK(max_abs(evaluate(flipped, 1.0, 16) - f) < 1e-12);
    auto turned = g;
    turned.phi += 2 * pi;
    turned.phase += 2 * pi;
    CHECK(max_abs(evaluate(turned, 1.0, 16) - f) < 1e-12);

    auto shifted = g;
    shifted.phase -= pi / 2;
    CHECK(max_abs(evaluate_h(g, 1.0, 16) - evaluate(shifted, 1.0, 16)) < 1e-12);

    Field h = evaluate_h(g, 1.0, 16);
    for (int y = 0; y < 16; ++y) {
      for (int x = 0; x < 16; ++x) {
        auto [xt, yt] = rotate_coords(g, x, y, 16);
        double env2 = std::exp(-(xt * xt / (g.sigma_x * g.sigma_x) + yt * yt / (g.sigma_y * g.sigma_y)));
        CHECK(std::abs(f(y, x) * f(y, x) + h(y, x) * h(y, x) - env2) < 1e-12);
      }
    }
  }
}

TEST_CASE("analytic derivatives match central differences") {
  std::mt19937_64 rng(4);
  const double step = 1e-5;
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    auto g = random_params(rng, 16);
    AtomJet jet = evaluate_jet(g, 1.3, 16);
    for (int c = 0; c < 5; ++c) {
      GaborParam p = kLearnableParams[c];
      auto up = g, down = g;
      param_ref(up, p) += step;
      param_ref(down, p) -= step;
      Field fd = (evaluate(up, 1.3, 16) - evaluate(down, 1.3, 16)) / (2 * step);
      Field an = partial_derivative(g, 1.3, 16, p);
      double rel = max_abs(an - fd) / max_abs(an);
      worst = std::max(worst, rel);
      CHECK_MESSAGE(rel < 1e-5, to_string(p), " draw ", t);
      Eigen::Map<const Eigen::VectorXd> col(jet.d.col(c).data(), 256);
      // jet columns use row-major pixel order
      Eigen::MatrixXd an_t = an.transpose();
      CHECK(max_abs(col - Eigen::Map<Eigen::VectorXd>(an_t.data(), 256)) < 1e-12);
    }
  }
  MESSAGE("worst relative finite-difference error ", worst);
}

TEST_CASE("derivative spot values") {
  GaborParams g;
  g.x0 = 6;
  g.y0 = 6;
  CHECK(std::abs(partial_derivative(g, 1.0, 12, GaborParam::SigmaX)(6, 6)) < 1e-15);
  std::mt19937_64 rng(5);
  auto r = random_params(rng, 12);
  CHECK(max_abs(partial_derivative(r, 1.0, 12, "phase") + evaluate_h(r, 1.0, 12)) < 1e-15);
}

TEST_CASE("render lays out atoms as columns") {
  GaborBasis one{{GaborParams{0, 0, 0.0, 0.4, 0.3, 0.3, 5.0}}, 1.5, 1};
  FieldMatrix m = render(one);
  REQUIRE(m.rows() == 1);
  REQUIRE(m.cols() == 1);
  CHECK(m(0, 0) == doctest::Approx(1.5 * std::cos(0.4)).epsilon(1e-14));

  std::mt19937_64 rng(6);
  std::vector<GaborParams> shapes;
  for (int i = 0; i < 16; ++i) shapes.push_back(random_params(rng, 4));
  GaborBasis b = make_basis(4, 0.5, shapes);
  CHECK_NOTHROW(b.validate());
  FieldMatrix r = render(b);
  for (int j = 0; j < 16; ++j) {
    CHECK(b.atoms[j].x0 == j % 4);
    CHECK(b.atoms[j].y0 == j / 4);
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) CHECK(r(y * 4 + x, j) == doctest::Approx(atom_oracle(b.atoms[j], 0.5, 4, x, y)));
  }
}

TEST_CASE("render is permutation-equivariant") {
  std::mt19937_64 rng(7);
  std::vector<GaborParams> shapes;
  for (int i = 0; i < 16; ++i) shapes.push_back(random_params(rng, 4));
  GaborBasis b = make_basis(4, 1.0, shapes);
  GaborBasis swapped = b;
  std::swap(swapped.atoms[2], swapped.atoms[11]);
  FieldMatrix r = render(b), s = render(swapped);
  CHECK(s.col(2) == r.col(11));
  CHECK(s.col(11) == r.col(2));
  CHECK(s.col(5) == r.col(5));
}

TEST_CASE("basis validation") {
  GaborBasis b = make_basis(4, 1.0, std::vector<GaborParams>(16));
  CHECK_NOTHROW(b.validate());
  b.atoms[3].x0 = 1;
  CHECK_THROWS_AS(b.validate(), ArgumentError);
  b = make_basis(4, 1.0, std::vector<GaborParams>(16));
  b.atoms[0].sigma_x = 0.0;
  CHECK_THROWS_AS(b.validate(), ArgumentError);
  b.atoms.pop_back();
  CHECK_THROWS_AS(b.validate(), ArgumentError);
  CHECK_THROWS_AS(make_basis(4, 1.0, std::vector<GaborParams>(15)), ArgumentError);
}

TEST_CASE("canonicalize examples") {
  GaborParams g;
  g.x0 = 8;
  g.y0 = 8;
  g.phi = 3 * pi / 2;
  g.phase = 0.3;
  auto c = canonicalize(g);
  CHECK(c.phi == doctest::Approx(pi / 2).epsilon(1e-14));
  CHECK(c.phase == doctest::Approx(-0.3).epsilon(1e-14));
  CHECK(max_abs(evaluate(c, 1.0, 16) - evaluate(g, 1.0, 16)) < 1e-12);

  g.phi = 0.5;
  CHECK(canonicalize(g) == g);

  g.k = -7.0;
  g.phase = 1.0;
  c = canonicalize(g);
  CHECK(c.k == 7.0);
  CHECK(c.phase == -1.0);
  g.phase = -pi;
  g.k = 7.0;
  CHECK(canonicalize(g).phase == doctest::Approx(pi));
}

TEST_CASE("canonicalize preserves the field and is idempotent") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> wide(-30, 30);
  for (int t = 0; t < 100; ++t) {
    auto g = random_params(rng, 16);
    g.phi = wide(rng);
    g.phase = wide(rng);
    if (t % 2) g.k = -g.k;
    auto c = canonicalize(g);
    CHECK(c.phi >= 0.0);
    CHECK(c.phi < pi);
    CHECK(c.phase > -pi);
    CHECK(c.phase <= pi);
    CHECK(c.k > 0.0);
    CHECK(max_abs(evaluate(c, 1.0, 16) - evaluate(g, 1.0, 16)) < 1e-12);
    CHECK(canonicalize(c) == c);
  }
}

TEST_CASE("shape_stats") {
  GaborParams g;
  g.sigma_x = g.sigma_y = 0.25;
  CHECK(shape_stats(g).aspect == 1.0);
  g.sigma_x = 0.3;
  g.sigma_y = 0.15;
  g.k = 2 * pi / 0.3;
  auto s = shape_stats(g);
  CHECK(s.aspect == doctest::Approx(0.5));
  CHECK(s.n_x == doctest::Approx(0.5));
  CHECK(s.n_y == doctest::Approx(1.0));
  g.k = 0.0;
  CHECK_THROWS_AS(shape_stats(g), DomainError);
}

TEST_CASE("basis CSV round trip is exact") {
  test_util::TempDir dir("gabor");
  std::mt19937_64 rng(9);
  std::vector<GaborParams> shapes;
  for (int i = 0; i < 64; ++i) shapes.push_back(random_params(rng, 8));
  GaborBasis b = make_basis(8, 0.123456789, shapes);
  write_basis_csv(dir / "b.csv", b);
  GaborBasis c = read_basis_csv(dir / "b.csv");
  CHECK(c.patch_size == 8);
  CHECK(c.scale == b.scale);
  CHECK(c.atoms == b.atoms);

  test_util::write_bytes(dir / "bad.csv", "patch_size,scale\n2,1\nx0,y0,phi,phase,sigma_x,sigma_y,k\n0,0,0,0,0.3\n");
  CHECK_THROWS_AS(read_basis_csv(dir / "bad.csv"), FormatError);
  test_util::write_bytes(dir / "nan.csv", "patch_size,scale\n1,1\nx0,y0,phi,phase,sigma_x,sigma_y,k\n0,0,0,zero,0.3,0.3,1\n");
  CHECK_THROWS_AS(read_basis_csv(dir / "nan.csv"), FormatError);
  CHECK_THROWS_AS(read_basis_csv(dir / "none.csv"), IoError);
}

TEST_CASE("mosaic layout") {
  FieldMatrix f(4, 5);
  for (int j = 0; j < 5; ++j)
    for (int i = 0; i < 4; ++i) f(i, j) = j * 10 + i;
  Eigen::MatrixXd m = mosaic(f, 2);
  // 3x3 tile grid, tiles of 2 pixels plus one-pixel borders
  CHECK(m.rows() == 3 * 3 + 1);
  CHECK(m.cols() == 3 * 3 + 1);
  CHECK(m(0, 0) == 0.5);
  CHECK(m(1, 1) == 0.0);
  CHECK(m(2, 2) == 1.0);
  CHECK(m(1, 2) == doctest::Approx(1.0 / 3.0));
  CHECK(m.minCoeff() >= 0.0);
  CHECK(m.maxCoeff() <= 1.0);
  test_util::TempDir dir("gabor");
  write_mosaic_pgm(dir / "m.pgm", f, 2);
  CHECK(std::filesystem::file_size(dir / "m.pgm") > 100);
}
