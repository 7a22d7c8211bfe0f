#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <string_view>
#include <utility>
#include <vector>

namespace gabor_adapt {

/// One Gabor atom. The center is in pixels; widths and the wave number use
/// dimensionless units where 1 unit is one patch side length.
struct GaborParams {
  double x0 = 0.0;
  double y0 = 0.0;
  double phi = 0.0;    ///< envelope orientation, radians
  double phase = 0.0;  ///< cosine phase, radians
  double sigma_x = 0.3;
  double sigma_y = 0.3;
  double k = 20.0;     ///< radians per unit; wavelength = 2 pi / |k|

  double wavelength() const;
  bool operator==(const GaborParams&) const = default;
};

/// The five learnable parameters.
enum class GaborParam { Phi, SigmaX, SigmaY, K, Phase };

inline constexpr GaborParam kLearnableParams[] = {GaborParam::Phi, GaborParam::SigmaX, GaborParam::SigmaY,
                                                  GaborParam::K, GaborParam::Phase};

std::string_view to_string(GaborParam p);
/// Accepts phi, sigma_x, sigma_y, k, phase. Throws ArgumentError otherwise.
GaborParam parse_gabor_param(std::string_view name);

double& param_ref(GaborParams& g, GaborParam p);
double param_value(const GaborParams& g, GaborParam p);

/// One atom per pixel of a P x P patch; atom i is centered on pixel
/// (i % P, i / P).
struct GaborBasis {
  std::vector<GaborParams> atoms;
  double scale = 1.0;
  int patch_size = 0;

  int size() const { return static_cast<int>(atoms.size()); }
  /// Throws ArgumentError when the atom layout does not tile the patch.
  void validate() const;
};

/// P^2 x N matrix whose column j is atom j over the pixel grid, row-major
/// pixel order (pixel index = y * P + x).
using FieldMatrix = Eigen::MatrixXd;

/// Field over a P x P grid; row is y, column is x.
using Field = Eigen::MatrixXd;

/// Centered, rotated coordinates of pixel (x, y) in dimensionless units.
std::pair<double, double> rotate_coords(const GaborParams& g, double x, double y, int patch_size);

Field evaluate(const GaborParams& g, double scale, int patch_size);
/// Sine-phase partner of evaluate.
Field evaluate_h(const GaborParams& g, double scale, int patch_size);
/// Closed-form derivative of the atom field with respect to one parameter.
Field partial_derivative(const GaborParams& g, double scale, int patch_size, GaborParam which);
Field partial_derivative(const GaborParams& g, double scale, int patch_size, std::string_view which);

/// The atom field and all five derivative fields from one pass over the grid.
struct AtomJet {
  Eigen::VectorXd value;
  Eigen::Matrix<double, Eigen::Dynamic, 5> d;  ///< columns follow kLearnableParams
};
AtomJet evaluate_jet(const GaborParams& g, double scale, int patch_size);

FieldMatrix render(const GaborBasis& basis);

/// Maps parameters onto the equivalent representative with phi in [0, pi),
/// phase in (-pi, pi] and k > 0. The rendered field does not change.
GaborParams canonicalize(GaborParams g);

struct ShapeStats {
  double aspect;  ///< sigma_y / sigma_x
  double n_x;     ///< sigma_y / wavelength
  double n_y;     ///< sigma_x / wavelength
};
ShapeStats shape_stats(const GaborParams& g);

/// Atom centers on the P x P grid with the given parameters at every site.
GaborBasis make_basis(int patch_size, double scale, const std::vector<GaborParams>& shapes);

void write_basis_csv(const std::filesystem::path& path, const GaborBasis& basis);
GaborBasis read_basis_csv(const std::filesystem::path& path);

/// Tiles the columns of a field matrix into a square mosaic, each tile
/// normalized to [0,1] independently, one-pixel gray borders.
Eigen::MatrixXd mosaic(const FieldMatrix& fields, int patch_size);
void write_mosaic_pgm(const std::filesystem::path& path, const FieldMatrix& fields, int patch_size);

}  // namespace gabor_adapt
