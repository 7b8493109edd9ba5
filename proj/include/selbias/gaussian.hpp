#ifndef SELBIAS_GAUSSIAN_HPP_
#define SELBIAS_GAUSSIAN_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "selbias/common.hpp"

namespace selbias {

class SingularCovariance : public Error {
 public:
  using Error::Error;
};

struct GaussianFit {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  std::size_t n = 0;

  std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
};

// Rows of `data` are samples. Sample covariance with denominator n - 1,
// plus lambda on the diagonal.
inline GaussianFit fit_gaussian(const Eigen::MatrixXd& data, double lambda) {
  if (data.rows() < 2) {
    throw InvalidArgument("fit_gaussian: need at least 2 vectors, got " +
                          std::to_string(data.rows()));
  }
  if (!(lambda >= 0)) throw InvalidArgument("fit_gaussian: lambda must be >= 0");
  GaussianFit g;
  g.n = static_cast<std::size_t>(data.rows());
  g.mean = data.colwise().mean().transpose();
  const Eigen::MatrixXd centered = data.rowwise() - g.mean.transpose();
  g.cov = (centered.transpose() * centered) / static_cast<double>(data.rows() - 1);
  g.cov = 0.5 * (g.cov + g.cov.transpose());
  g.cov.diagonal().array() += lambda;
  return g;
}

inline Eigen::MatrixXd to_matrix(std::span<const std::vector<double>> vectors) {
  if (vectors.empty()) return {};
  const auto p = static_cast<Eigen::Index>(vectors.front().size());
  Eigen::MatrixXd m(static_cast<Eigen::Index>(vectors.size()), p);
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (static_cast<Eigen::Index>(vectors[i].size()) != p) {
      throw InvalidArgument("to_matrix: ragged vectors");
    }
    for (Eigen::Index j = 0; j < p; ++j) m(static_cast<Eigen::Index>(i), j) = vectors[i][j];
  }
  return m;
}

inline GaussianFit fit_gaussian(std::span<const std::vector<double>> vectors, double lambda) {
  return fit_gaussian(to_matrix(vectors), lambda);
}

namespace detail {

inline Eigen::LLT<Eigen::MatrixXd> cholesky(const Eigen::MatrixXd& m, const char* which) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    throw SingularCovariance(std::string("kl_divergence: covariance ") + which +
                             " is not positive definite");
  }
  return llt;
}

inline double log_det(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace detail

// D(L || R) = 1/2 (tr(S_R^-1 S_L) + ln(|S_R| / |S_L|)
//                 + (m_R - m_L)^T S_R^-1 (m_R - m_L) - p)
inline double kl_divergence(const GaussianFit& left, const GaussianFit& right) {
  if (left.dim() != right.dim()) throw InvalidArgument("kl_divergence: dimension mismatch");
  const auto lr = detail::cholesky(right.cov, "R");
  const auto ll = detail::cholesky(left.cov, "L");
  const double trace = lr.solve(left.cov).trace();
  const Eigen::VectorXd diff = right.mean - left.mean;
  const double quad = diff.dot(lr.solve(diff));
  return 0.5 * (trace + detail::log_det(lr) - detail::log_det(ll) + quad -
                static_cast<double>(left.dim()));
}

// Jeffreys divergence D(L||R) + D(R||L).
inline double symmetrized_kl(const GaussianFit& left, const GaussianFit& right) {
  return kl_divergence(left, right) + kl_divergence(right, left);
}

// Log density, used by the Monte-Carlo checks.
inline double log_pdf(const GaussianFit& g, const Eigen::VectorXd& x) {
  const auto llt = detail::cholesky(g.cov, "");
  const Eigen::VectorXd diff = x - g.mean;
  const double p = static_cast<double>(g.dim());
  return -0.5 * (p * std::log(2.0 * M_PI) + detail::log_det(llt) + diff.dot(llt.solve(diff)));
}

}  // namespace selbias

#endif  // SELBIAS_GAUSSIAN_HPP_
