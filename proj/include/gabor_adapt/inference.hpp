#pragma once

#include <Eigen/Dense>

#include <vector>

namespace gabor_adapt {

struct InferenceConfig {
  double lambda_sparse = 0.1;  ///< weight of the Cauchy sparseness penalty
  double cg_tol = 1e-4;        ///< stop when the gradient infinity-norm drops below this
  int cg_max_iters = 200;

  void validate() const;
};

struct SparseCode {
  Eigen::VectorXd a;
  double energy = 0.0;
  Eigen::VectorXd residual;
  int iterations = 0;
  bool converged = false;
};

/// Cauchy sparseness cost sum log(1 + x^2).
double sparseness(const Eigen::Ref<const Eigen::VectorXd>& x);

/// Least-squares reconstruction term plus lambda times the sparseness cost.
double energy(const Eigen::Ref<const Eigen::VectorXd>& image, const Eigen::Ref<const Eigen::MatrixXd>& basis,
              const Eigen::Ref<const Eigen::VectorXd>& a, double lambda);

Eigen::VectorXd energy_grad_a(const Eigen::Ref<const Eigen::VectorXd>& image,
                              const Eigen::Ref<const Eigen::MatrixXd>& basis,
                              const Eigen::Ref<const Eigen::VectorXd>& a, double lambda);

/// MAP coefficients for one patch, by Polak-Ribiere conjugate gradient from a = 0.
SparseCode map_infer(const Eigen::Ref<const Eigen::VectorXd>& image, const Eigen::Ref<const Eigen::MatrixXd>& basis,
                     const InferenceConfig& cfg);

/// MAP coefficients for every column of `images`. Each column is solved
/// independently; the batch only shares the matrix products.
std::vector<SparseCode> map_infer_batch(const Eigen::Ref<const Eigen::MatrixXd>& images,
                                        const Eigen::Ref<const Eigen::MatrixXd>& basis, const InferenceConfig& cfg);

/// S(a) / S(I). Throws DomainError when S(I) is zero.
double sparseness_ratio(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& image);

/// Mean squared residual per pixel.
double reconstruction_error(const Eigen::Ref<const Eigen::VectorXd>& image,
                            const Eigen::Ref<const Eigen::MatrixXd>& basis,
                            const Eigen::Ref<const Eigen::VectorXd>& a);

}  // namespace gabor_adapt
