#ifndef SELBIAS_PCA_HPP_
#define SELBIAS_PCA_HPP_

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "selbias/common.hpp"

namespace selbias {

struct PcaResult {
  Eigen::VectorXd mean;
  Eigen::MatrixXd components;  // dim x k, orthonormal columns
  Eigen::MatrixXd projected;   // n x k
  std::vector<double> explained_ratio;

  Eigen::MatrixXd transform(const Eigen::MatrixXd& data) const {
    return (data.rowwise() - mean.transpose()) * components;
  }
  Eigen::MatrixXd reconstruct(const Eigen::MatrixXd& coords) const {
    return (coords * components.transpose()).rowwise() + mean.transpose();
  }
};

// Eigendecomposition of the sample covariance. Each component is flipped so
// its largest-magnitude loading is positive.
inline PcaResult pca_project(const Eigen::MatrixXd& data, std::size_t components) {
  const auto n = static_cast<std::size_t>(data.rows());
  const auto d = static_cast<std::size_t>(data.cols());
  if (components < 1) throw InvalidArgument("pca: components must be >= 1");
  if (components > d) {
    throw InvalidArgument("pca: components (" + std::to_string(components) +
                          ") exceed dimension (" + std::to_string(d) + ")");
  }
  if (n < components + 1) {
    throw InvalidArgument("pca: need at least components + 1 vectors");
  }
  PcaResult r;
  r.mean = data.colwise().mean().transpose();
  const Eigen::MatrixXd centered = data.rowwise() - r.mean.transpose();
  Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  cov = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw Error("pca: eigendecomposition failed");

  const auto k = static_cast<Eigen::Index>(components);
  const auto dd = static_cast<Eigen::Index>(d);
  const double total = std::max(0.0, eig.eigenvalues().sum());
  r.components.resize(dd, k);
  for (Eigen::Index c = 0; c < k; ++c) {
    // Eigen sorts ascending.
    Eigen::VectorXd v = eig.eigenvectors().col(dd - 1 - c);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    r.components.col(c) = v;
    const double lambda = std::max(0.0, eig.eigenvalues()(dd - 1 - c));
    r.explained_ratio.push_back(total > 0 ? lambda / total : 0.0);
  }
  r.projected = centered * r.components;
  return r;
}

}  // namespace selbias

#endif  // SELBIAS_PCA_HPP_
