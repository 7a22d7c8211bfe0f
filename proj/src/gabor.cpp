#include "gabor_adapt/gabor.hpp"

#include "gabor_adapt/errors.hpp"
#include "gabor_adapt/imageio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

namespace gabor_adapt {

using std::numbers::pi;

double GaborParams::wavelength() const { return 2.0 * pi / std::abs(k); }

std::string_view to_string(GaborParam p) {
  switch (p) {
    case GaborParam::Phi: return "phi";
    case GaborParam::SigmaX: return "sigma_x";
    case GaborParam::SigmaY: return "sigma_y";
    case GaborParam::K: return "k";
    case GaborParam::Phase: return "phase";
  }
  return "?";
}

GaborParam parse_gabor_param(std::string_view name) {
  for (GaborParam p : kLearnableParams) {
    if (to_string(p) == name) return p;
  }
  throw ArgumentError("unknown Gabor parameter '" + std::string(name) + "'");
}

double& param_ref(GaborParams& g, GaborParam p) {
  switch (p) {
    case GaborParam::Phi: return g.phi;
    case GaborParam::SigmaX: return g.sigma_x;
    case GaborParam::SigmaY: return g.sigma_y;
    case GaborParam::K: return g.k;
    case GaborParam::Phase: return g.phase;
  }
  throw ArgumentError("bad GaborParam");
}

double param_value(const GaborParams& g, GaborParam p) { return param_ref(const_cast<GaborParams&>(g), p); }

void GaborBasis::validate() const {
  if (patch_size < 1) throw ArgumentError("basis patch_size must be positive");
  if (size() != patch_size * patch_size) throw ArgumentError("basis must hold one atom per pixel");
  for (int i = 0; i < size(); ++i) {
    const auto& a = atoms[i];
    if (a.x0 != i % patch_size || a.y0 != i / patch_size) {
      throw ArgumentError("atom " + std::to_string(i) + " is not centered on its pixel");
    }
    if (!(a.sigma_x > 0.0) || !(a.sigma_y > 0.0) || a.k == 0.0) {
      throw ArgumentError("atom " + std::to_string(i) + " has non-positive width or zero wave number");
    }
  }
}

std::pair<double, double> rotate_coords(const GaborParams& g, double x, double y, int patch_size) {
  const double dx = (x - g.x0) / patch_size;
  const double dy = (y - g.y0) / patch_size;
  const double c = std::cos(g.phi);
  const double s = std::sin(g.phi);
  return {c * dx - s * dy, s * dx + c * dy};
}

namespace {

template <typename Fn>
Field tabulate(const GaborParams& g, int patch_size, Fn&& fn) {
  Field out(patch_size, patch_size);
  for (int y = 0; y < patch_size; ++y) {
    for (int x = 0; x < patch_size; ++x) {
      const auto [xt, yt] = rotate_coords(g, x, y, patch_size);
      out(y, x) = fn(xt, yt);
    }
  }
  return out;
}

double envelope(const GaborParams& g, double xt, double yt) {
  const double u = xt / g.sigma_x;
  const double v = yt / g.sigma_y;
  return std::exp(-0.5 * (u * u + v * v));
}

}  // namespace

Field evaluate(const GaborParams& g, double scale, int patch_size) {
  return tabulate(g, patch_size, [&](double xt, double yt) {
    return scale * envelope(g, xt, yt) * std::cos(g.k * yt + g.phase);
  });
}

Field evaluate_h(const GaborParams& g, double scale, int patch_size) {
  return tabulate(g, patch_size, [&](double xt, double yt) {
    return scale * envelope(g, xt, yt) * std::sin(g.k * yt + g.phase);
  });
}

AtomJet evaluate_jet(const GaborParams& g, double scale, int patch_size) {
  const int n = patch_size * patch_size;
  AtomJet jet;
  jet.value.resize(n);
  jet.d.resize(n, 5);
  const double sx2 = g.sigma_x * g.sigma_x;
  const double sy2 = g.sigma_y * g.sigma_y;
  const double sx3 = sx2 * g.sigma_x;
  const double sy3 = sy2 * g.sigma_y;
  const double cross = 1.0 / sx2 - 1.0 / sy2;
  for (int y = 0; y < patch_size; ++y) {
    for (int x = 0; x < patch_size; ++x) {
      const int i = y * patch_size + x;
      const auto [xt, yt] = rotate_coords(g, x, y, patch_size);
      const double env = scale * envelope(g, xt, yt);
      const double arg = g.k * yt + g.phase;
      const double gv = env * std::cos(arg);
      const double hv = env * std::sin(arg);
      jet.value[i] = gv;
      jet.d(i, 0) = gv * cross * xt * yt - hv * g.k * xt;
      jet.d(i, 1) = gv * xt * xt / sx3;
      jet.d(i, 2) = gv * yt * yt / sy3;
      jet.d(i, 3) = -hv * yt;
      jet.d(i, 4) = -hv;
    }
  }
  return jet;
}

Field partial_derivative(const GaborParams& g, double scale, int patch_size, GaborParam which) {
  const AtomJet jet = evaluate_jet(g, scale, patch_size);
  const int col = static_cast<int>(std::find(std::begin(kLearnableParams), std::end(kLearnableParams), which) -
                                   std::begin(kLearnableParams));
  Field out(patch_size, patch_size);
  for (int y = 0; y < patch_size; ++y)
    for (int x = 0; x < patch_size; ++x) out(y, x) = jet.d(y * patch_size + x, col);
  return out;
}

Field partial_derivative(const GaborParams& g, double scale, int patch_size, std::string_view which) {
  return partial_derivative(g, scale, patch_size, parse_gabor_param(which));
}

FieldMatrix render(const GaborBasis& basis) {
  const int p = basis.patch_size;
  FieldMatrix m(p * p, basis.size());
  for (int j = 0; j < basis.size(); ++j) {
    const Field f = evaluate(basis.atoms[j], basis.scale, p);
    for (int y = 0; y < p; ++y)
      for (int x = 0; x < p; ++x) m(y * p + x, j) = f(y, x);
  }
  return m;
}

GaborParams canonicalize(GaborParams g) {
  if (g.k < 0.0) {
    g.k = -g.k;
    g.phase = -g.phase;
  }
  double phi = std::fmod(g.phi, 2.0 * pi);
  if (phi < 0.0) phi += 2.0 * pi;
  // Half-turn rotation flips the sign of both rotated coordinates.
  if (phi >= pi) {
    phi -= pi;
    g.phase = -g.phase;
  }
  if (phi >= pi) phi = 0.0;  // rounding at the upper edge
  g.phi = phi;
  double phase = std::remainder(g.phase, 2.0 * pi);
  if (phase <= -pi) phase += 2.0 * pi;
  g.phase = phase;
  return g;
}

ShapeStats shape_stats(const GaborParams& g) {
  if (g.k == 0.0) throw DomainError("shape_stats needs a non-zero wave number");
  const double lambda = g.wavelength();
  return {g.sigma_y / g.sigma_x, g.sigma_y / lambda, g.sigma_x / lambda};
}

GaborBasis make_basis(int patch_size, double scale, const std::vector<GaborParams>& shapes) {
  if (static_cast<int>(shapes.size()) != patch_size * patch_size) {
    throw ArgumentError("need exactly one parameter set per pixel");
  }
  GaborBasis basis;
  basis.patch_size = patch_size;
  basis.scale = scale;
  basis.atoms = shapes;
  for (int i = 0; i < basis.size(); ++i) {
    basis.atoms[i].x0 = i % patch_size;
    basis.atoms[i].y0 = i / patch_size;
  }
  return basis;
}

void write_basis_csv(const std::filesystem::path& path, const GaborBasis& basis) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  char buf[256];
  std::snprintf(buf, sizeof buf, "patch_size,scale\n%d,%.17g\n", basis.patch_size, basis.scale);
  out << buf << "x0,y0,phi,phase,sigma_x,sigma_y,k\n";
  for (const auto& a : basis.atoms) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", a.x0, a.y0, a.phi, a.phase,
                  a.sigma_x, a.sigma_y, a.k);
    out << buf;
  }
  if (!out) throw IoError("write failed: " + path.string());
}

namespace {

std::vector<double> parse_row(const std::string& line, const std::filesystem::path& path) {
  std::vector<double> values;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(cell, &used));
    } catch (const std::exception&) {
      throw FormatError("bad number '" + cell + "' in " + path.string());
    }
  }
  return values;
}

}  // namespace

GaborBasis read_basis_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("patch_size,scale", 0) != 0) {
    throw FormatError("missing basis header in " + path.string());
  }
  if (!std::getline(in, line)) throw FormatError("missing basis header values in " + path.string());
  const auto head = parse_row(line, path);
  if (head.size() != 2) throw FormatError("basis header must hold patch_size and scale");
  if (!std::getline(in, line) || line.rfind("x0,y0,phi,phase,sigma_x,sigma_y,k", 0) != 0) {
    throw FormatError("missing atom column header in " + path.string());
  }
  GaborBasis basis;
  basis.patch_size = static_cast<int>(head[0]);
  basis.scale = head[1];
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto v = parse_row(line, path);
    if (v.size() != 7) throw FormatError("atom row must have 7 fields in " + path.string());
    basis.atoms.push_back({v[0], v[1], v[2], v[3], v[4], v[5], v[6]});
  }
  basis.validate();
  return basis;
}

Eigen::MatrixXd mosaic(const FieldMatrix& fields, int patch_size) {
  const int n = static_cast<int>(fields.cols());
  const int side = std::max(1, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n)))));
  const int tile = patch_size + 1;
  Eigen::MatrixXd img = Eigen::MatrixXd::Constant(side * tile + 1, side * tile + 1, 0.5);
  for (int j = 0; j < n; ++j) {
    const auto col = fields.col(j);
    const double lo = col.minCoeff();
    const double hi = col.maxCoeff();
    const double span = hi - lo;
    const int oy = 1 + (j / side) * tile;
    const int ox = 1 + (j % side) * tile;
    for (int y = 0; y < patch_size; ++y)
      for (int x = 0; x < patch_size; ++x)
        img(oy + y, ox + x) = span > 0.0 ? (col[y * patch_size + x] - lo) / span : 0.5;
  }
  return img;
}

void write_mosaic_pgm(const std::filesystem::path& path, const FieldMatrix& fields, int patch_size) {
  write_pgm(path, RawImage{mosaic(fields, patch_size)});
}

}  // namespace gabor_adapt
