#ifndef SELBIAS_CLASSIFIER_HPP_
#define SELBIAS_CLASSIFIER_HPP_

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "selbias/common.hpp"
#include "selbias/metrics.hpp"

namespace selbias {

enum class ClassifierKind { kLassoLogistic, kRidgeLogistic, kLinearSvm, kRbfSvm };

inline constexpr std::array<ClassifierKind, 4> kAllClassifierKinds = {
    ClassifierKind::kLassoLogistic, ClassifierKind::kRidgeLogistic,
    ClassifierKind::kLinearSvm, ClassifierKind::kRbfSvm};

inline std::string_view to_string(ClassifierKind k) {
  switch (k) {
    case ClassifierKind::kLassoLogistic: return "lasso-logistic";
    case ClassifierKind::kRidgeLogistic: return "ridge-logistic";
    case ClassifierKind::kLinearSvm: return "linear-svm";
    case ClassifierKind::kRbfSvm: return "rbf-svm";
  }
  return "linear-svm";
}

inline ClassifierKind parse_classifier_kind(std::string_view s) {
  for (ClassifierKind k : kAllClassifierKinds) {
    if (to_string(k) == s) return k;
  }
  throw InvalidArgument("unknown classifier kind '" + std::string(s) +
                        "' (expected lasso-logistic, ridge-logistic, linear-svm, rbf-svm)");
}

// `c` is the inverse regularization strength for every kind (ridge's alpha
// enters as c = 1 / alpha). `gamma` is only read by the RBF kernel.
struct ClassifierParams {
  double c = 0.1;
  double gamma = 0.01;
  std::size_t max_iter = 1000;
  double tol = 1e-4;
  std::uint64_t seed = 13;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["c"] = c;
    j["gamma"] = gamma;
    j["max_iter"] = max_iter;
    j["tol"] = tol;
    j["seed"] = seed;
    return j;
  }
};

inline ClassifierParams default_params(ClassifierKind kind) {
  ClassifierParams p;
  switch (kind) {
    case ClassifierKind::kLassoLogistic: p.c = 1.0; break;
    case ClassifierKind::kRidgeLogistic: p.c = 1.0; break;  // alpha = 1
    case ClassifierKind::kLinearSvm: p.c = 0.1; break;
    case ClassifierKind::kRbfSvm:
      p.c = 2.0;
      p.gamma = 0.01;
      break;
  }
  return p;
}

struct ClassifierModel {
  ClassifierKind kind = ClassifierKind::kLinearSvm;
  ClassifierParams params;
  std::vector<int> classes;              // sorted
  std::vector<std::size_t> class_counts;  // training support per class
  Eigen::MatrixXd weights;               // p x K (linear kinds)
  Eigen::VectorXd bias;                  // K
  Eigen::MatrixXd support;               // rbf: support vectors as rows
  Eigen::MatrixXd dual;                  // rbf: alpha_i y_i, one column per class

  // One score per class per row.
  Eigen::MatrixXd decision_function(const Eigen::MatrixXd& x) const {
    if (kind != ClassifierKind::kRbfSvm) {
      return (x * weights).rowwise() + bias.transpose();
    }
    Eigen::MatrixXd k(x.rows(), support.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (Eigen::Index j = 0; j < support.rows(); ++j) {
        k(i, j) = std::exp(-params.gamma * (x.row(i) - support.row(j)).squaredNorm());
      }
    }
    return (k * dual).rowwise() + bias.transpose();
  }

  // Argmax; exact ties go to the class with the larger training support,
  // then the smaller label.
  std::vector<int> predict(const Eigen::MatrixXd& x) const {
    const Eigen::MatrixXd scores = decision_function(x);
    std::vector<int> out(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < classes.size(); ++c) {
        const double s = scores(i, static_cast<Eigen::Index>(c));
        const double b = scores(i, static_cast<Eigen::Index>(best));
        if (s > b || (s == b && class_counts[c] > class_counts[best])) best = c;
      }
      out[static_cast<std::size_t>(i)] = classes[best];
    }
    return out;
  }
};

namespace detail {

// Multinomial logistic regression with objective
//   c * sum_i CE_i + (ridge ? 1/2 |W|^2 : |W|_1)
// and an unpenalized intercept. FISTA with backtracking, started at zero.
inline void fit_logistic(ClassifierModel& m, const Eigen::MatrixXd& x,
                         const std::vector<std::size_t>& y, bool l1) {
  const Eigen::Index n = x.rows(), p = x.cols();
  const auto k = static_cast<Eigen::Index>(m.classes.size());
  const double c = m.params.c;
  Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(n, k);
  for (Eigen::Index i = 0; i < n; ++i) onehot(i, static_cast<Eigen::Index>(y[i])) = 1.0;

  // Parameters stacked as (p + 1) x K, last row the intercept.
  auto smooth = [&](const Eigen::MatrixXd& theta, Eigen::MatrixXd* grad) {
    Eigen::MatrixXd z = (x * theta.topRows(p)).rowwise() + theta.row(p);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mx = z.row(i).maxCoeff();
      const double lse = mx + std::log((z.row(i).array() - mx).exp().sum());
      loss += lse - z.row(i).dot(onehot.row(i));
      z.row(i) = (z.row(i).array() - lse).exp();
    }
    loss *= c;
    if (!l1) loss += 0.5 * theta.topRows(p).squaredNorm();
    if (grad) {
      const Eigen::MatrixXd g = c * (z - onehot);
      grad->resize(p + 1, k);
      grad->topRows(p) = x.transpose() * g;
      grad->row(p) = g.colwise().sum();
      if (!l1) grad->topRows(p) += theta.topRows(p);
    }
    return loss;
  };
  auto prox = [&](Eigen::MatrixXd theta, double step) {
    if (l1) {
      theta.topRows(p) = theta.topRows(p).unaryExpr([step](double v) {
        return v > step ? v - step : (v < -step ? v + step : 0.0);
      });
    }
    return theta;
  };

  Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(p + 1, k);
  Eigen::MatrixXd yk = theta, grad;
  double t = 1.0, lip = 1.0;
  for (std::size_t it = 0; it < m.params.max_iter; ++it) {
    const double fy = smooth(yk, &grad);
    Eigen::MatrixXd next;
    for (int bt = 0; bt < 60; ++bt) {
      next = prox(yk - grad / lip, 1.0 / lip);
      const Eigen::MatrixXd d = next - yk;
      if (smooth(next, nullptr) <= fy + (grad.array() * d.array()).sum() +
                                       0.5 * lip * d.squaredNorm() + 1e-12 * std::abs(fy)) {
        break;
      }
      lip *= 2.0;
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double change = (next - theta).norm();
    yk = next + ((t - 1.0) / t_next) * (next - theta);
    const double scale = std::max(1.0, theta.norm());
    theta = std::move(next);
    t = t_next;
    if (change <= m.params.tol * 1e-2 * scale) break;
  }
  m.weights = theta.topRows(p);
  m.bias = theta.row(p).transpose();
}

// One-vs-rest L2-regularized hinge loss, dual coordinate descent with the
// intercept as an extra constant feature (regularized, as in liblinear).
inline void fit_linear_svm(ClassifierModel& m, const Eigen::MatrixXd& x,
                           const std::vector<std::size_t>& y) {
  const Eigen::Index n = x.rows(), p = x.cols();
  const auto k = static_cast<Eigen::Index>(m.classes.size());
  const double c = m.params.c;
  m.weights = Eigen::MatrixXd::Zero(p, k);
  m.bias = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd qd(n);
  for (Eigen::Index i = 0; i < n; ++i) qd(i) = x.row(i).squaredNorm() + 1.0;

  for (Eigen::Index cls = 0; cls < k; ++cls) {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(p);
    double b = 0.0;
    std::vector<double> alpha(static_cast<std::size_t>(n), 0.0);
    std::vector<std::size_t> order(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(splitmix64(m.params.seed + static_cast<std::uint64_t>(cls)));
    for (std::size_t it = 0; it < m.params.max_iter && c > 0; ++it) {
      rng.shuffle(order);
      double max_pg = -std::numeric_limits<double>::infinity();
      double min_pg = std::numeric_limits<double>::infinity();
      for (std::size_t idx : order) {
        const auto i = static_cast<Eigen::Index>(idx);
        const double yi = y[idx] == static_cast<std::size_t>(cls) ? 1.0 : -1.0;
        const double g = yi * (x.row(i).dot(w) + b) - 1.0;
        double pg = g;
        if (alpha[idx] == 0) pg = std::min(g, 0.0);
        else if (alpha[idx] == c) pg = std::max(g, 0.0);
        max_pg = std::max(max_pg, pg);
        min_pg = std::min(min_pg, pg);
        if (std::abs(pg) > 1e-12) {
          const double old = alpha[idx];
          alpha[idx] = std::min(std::max(old - g / qd(i), 0.0), c);
          const double delta = (alpha[idx] - old) * yi;
          w += delta * x.row(i).transpose();
          b += delta;
        }
      }
      if (max_pg - min_pg < m.params.tol) break;
    }
    m.weights.col(cls) = w;
    m.bias(cls) = b;
  }
}

// One-vs-rest C-SVC with a Gaussian kernel; SMO with second-order working
// set selection.
inline void fit_rbf_svm(ClassifierModel& m, const Eigen::MatrixXd& x,
                        const std::vector<std::size_t>& y) {
  constexpr double kTau = 1e-12;
  const Eigen::Index n = x.rows();
  const auto k = static_cast<Eigen::Index>(m.classes.size());
  const double c = m.params.c;
  Eigen::MatrixXd kern(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      kern(i, j) = kern(j, i) = std::exp(-m.params.gamma * (x.row(i) - x.row(j)).squaredNorm());
    }
  }
  Eigen::MatrixXd dual = Eigen::MatrixXd::Zero(n, k);
  m.bias = Eigen::VectorXd::Zero(k);
  const double eps = std::max(m.params.tol, 1e-6);
  const std::size_t max_iter = std::max<std::size_t>(100000, 100 * static_cast<std::size_t>(n));

  for (Eigen::Index cls = 0; cls < k; ++cls) {
    std::vector<double> yv(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      yv[static_cast<std::size_t>(i)] = y[static_cast<std::size_t>(i)] == static_cast<std::size_t>(cls) ? 1.0 : -1.0;
    }
    std::vector<double> alpha(static_cast<std::size_t>(n), 0.0), grad(static_cast<std::size_t>(n), -1.0);
    auto upper = [&](std::size_t t) { return alpha[t] >= c; };
    auto lower = [&](std::size_t t) { return alpha[t] <= 0; };
    auto q = [&](std::size_t a, std::size_t b) {
      return yv[a] * yv[b] * kern(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
    };
    const auto nn = static_cast<std::size_t>(n);
    for (std::size_t iter = 0; iter < max_iter && c > 0; ++iter) {
      double gmax = -std::numeric_limits<double>::infinity();
      std::size_t i = nn;
      for (std::size_t t = 0; t < nn; ++t) {
        if (yv[t] > 0) {
          if (!upper(t) && -grad[t] >= gmax) { gmax = -grad[t]; i = t; }
        } else if (!lower(t) && grad[t] >= gmax) {
          gmax = grad[t];
          i = t;
        }
      }
      if (i == nn) break;
      double gmax2 = -std::numeric_limits<double>::infinity();
      double best_obj = std::numeric_limits<double>::infinity();
      std::size_t j = nn;
      const double qii = kern(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
      for (std::size_t t = 0; t < nn; ++t) {
        const double qtt = kern(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(t));
        if (yv[t] > 0) {
          if (lower(t)) continue;
          const double diff = gmax + grad[t];
          gmax2 = std::max(gmax2, grad[t]);
          if (diff > 0) {
            const double quad = qii + qtt - 2.0 * yv[i] * q(i, t);
            const double obj = -(diff * diff) / (quad > 0 ? quad : kTau);
            if (obj <= best_obj) { best_obj = obj; j = t; }
          }
        } else {
          if (upper(t)) continue;
          const double diff = gmax - grad[t];
          gmax2 = std::max(gmax2, -grad[t]);
          if (diff > 0) {
            const double quad = qii + qtt + 2.0 * yv[i] * q(i, t);
            const double obj = -(diff * diff) / (quad > 0 ? quad : kTau);
            if (obj <= best_obj) { best_obj = obj; j = t; }
          }
        }
      }
      if (gmax + gmax2 < eps || j == nn) break;

      const double qjj = kern(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j));
      const double qij = q(i, j);
      const double old_i = alpha[i], old_j = alpha[j];
      if (yv[i] != yv[j]) {
        double quad = qii + qjj + 2.0 * qij;
        if (quad <= 0) quad = kTau;
        const double delta = (-grad[i] - grad[j]) / quad;
        const double diff = alpha[i] - alpha[j];
        alpha[i] += delta;
        alpha[j] += delta;
        if (diff > 0) {
          if (alpha[j] < 0) { alpha[j] = 0; alpha[i] = diff; }
        } else if (alpha[i] < 0) {
          alpha[i] = 0;
          alpha[j] = -diff;
        }
        if (diff > 0) {
          if (alpha[i] > c) { alpha[i] = c; alpha[j] = c - diff; }
        } else if (alpha[j] > c) {
          alpha[j] = c;
          alpha[i] = c + diff;
        }
      } else {
        double quad = qii + qjj - 2.0 * qij;
        if (quad <= 0) quad = kTau;
        const double delta = (grad[i] - grad[j]) / quad;
        const double sum = alpha[i] + alpha[j];
        alpha[i] -= delta;
        alpha[j] += delta;
        if (sum > c) {
          if (alpha[i] > c) { alpha[i] = c; alpha[j] = sum - c; }
        } else if (alpha[j] < 0) {
          alpha[j] = 0;
          alpha[i] = sum;
        }
        if (sum > c) {
          if (alpha[j] > c) { alpha[j] = c; alpha[i] = sum - c; }
        } else if (alpha[i] < 0) {
          alpha[i] = 0;
          alpha[j] = sum;
        }
      }
      const double di = alpha[i] - old_i, dj = alpha[j] - old_j;
      for (std::size_t t = 0; t < nn; ++t) grad[t] += q(t, i) * di + q(t, j) * dj;
    }

    // Intercept: mean over free vectors, else midpoint of the feasible range.
    double ub = std::numeric_limits<double>::infinity();
    double lb = -std::numeric_limits<double>::infinity();
    double sum_free = 0.0;
    std::size_t free = 0;
    for (std::size_t t = 0; t < nn; ++t) {
      const double yg = yv[t] * grad[t];
      if (upper(t)) {
        if (yv[t] < 0) ub = std::min(ub, yg);
        else lb = std::max(lb, yg);
      } else if (lower(t)) {
        if (yv[t] > 0) ub = std::min(ub, yg);
        else lb = std::max(lb, yg);
      } else {
        ++free;
        sum_free += yg;
      }
    }
    double rho = free ? sum_free / static_cast<double>(free) : 0.5 * (ub + lb);
    if (!std::isfinite(rho)) rho = 0.0;
    for (std::size_t t = 0; t < nn; ++t) dual(static_cast<Eigen::Index>(t), cls) = alpha[t] * yv[t];
    m.bias(cls) = -rho;
  }

  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (dual.row(i).cwiseAbs().maxCoeff() > 0) keep.push_back(i);
  }
  m.support.resize(static_cast<Eigen::Index>(keep.size()), x.cols());
  m.dual.resize(static_cast<Eigen::Index>(keep.size()), k);
  for (std::size_t r = 0; r < keep.size(); ++r) {
    m.support.row(static_cast<Eigen::Index>(r)) = x.row(keep[r]);
    m.dual.row(static_cast<Eigen::Index>(r)) = dual.row(keep[r]);
  }
}

}  // namespace detail

inline ClassifierModel train_classifier(const Eigen::MatrixXd& x, std::span<const int> labels,
                                        ClassifierKind kind, const ClassifierParams& params) {
  if (static_cast<std::size_t>(x.rows()) != labels.size()) {
    throw InvalidArgument("train_classifier: rows and labels differ in length");
  }
  if (!(params.c >= 0) || !std::isfinite(params.c)) {
    throw InvalidArgument("train_classifier: c must be finite and >= 0");
  }
  if (kind == ClassifierKind::kRbfSvm && !(params.gamma > 0)) {
    throw InvalidArgument("train_classifier: gamma must be > 0");
  }
  ClassifierModel m;
  m.kind = kind;
  m.params = params;
  std::map<int, std::size_t> counts;
  for (int l : labels) ++counts[l];
  if (counts.size() < 2) {
    throw InvalidArgument("train_classifier: need at least 2 classes, got " +
                          std::to_string(counts.size()));
  }
  std::map<int, std::size_t> index;
  for (const auto& [label, n] : counts) {
    index[label] = m.classes.size();
    m.classes.push_back(label);
    m.class_counts.push_back(n);
  }
  std::vector<std::size_t> y;
  y.reserve(labels.size());
  for (int l : labels) y.push_back(index.at(l));
  switch (kind) {
    case ClassifierKind::kLassoLogistic: detail::fit_logistic(m, x, y, true); break;
    case ClassifierKind::kRidgeLogistic: detail::fit_logistic(m, x, y, false); break;
    case ClassifierKind::kLinearSvm: detail::fit_linear_svm(m, x, y); break;
    case ClassifierKind::kRbfSvm: detail::fit_rbf_svm(m, x, y); break;
  }
  return m;
}

inline ClassifierModel train_classifier(const Eigen::MatrixXd& x, const std::vector<int>& labels,
                                        ClassifierKind kind, const ClassifierParams& params) {
  return train_classifier(x, std::span<const int>(labels), kind, params);
}

// Per-column z-score fit on training rows. Constant columns keep scale 1.
struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  static Standardizer fit(const Eigen::MatrixXd& x) {
    if (x.rows() < 1) throw InvalidArgument("Standardizer: no rows");
    Standardizer s;
    s.mean = x.colwise().mean();
    const Eigen::MatrixXd c = x.rowwise() - s.mean;
    s.scale = (c.colwise().squaredNorm() / static_cast<double>(x.rows())).cwiseSqrt();
    for (Eigen::Index j = 0; j < s.scale.size(); ++j) {
      if (!(s.scale(j) > 1e-12)) s.scale(j) = 1.0;
    }
    return s;
  }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
    if (x.cols() != mean.size()) throw InvalidArgument("Standardizer: column mismatch");
    return (x.rowwise() - mean).array().rowwise() / scale.array();
  }
};

// ---------------------------------------------------------------------------
// Cross-validation.

// Fold id per sample: each class is shuffled with `seed` and dealt
// round-robin, so every fold sees every class when support allows.
inline std::vector<std::size_t> stratified_folds(std::span<const int> labels, std::size_t folds,
                                                 std::uint64_t seed) {
  if (folds < 2) throw InvalidArgument("stratified_folds: folds must be >= 2");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::vector<std::size_t> fold(labels.size());
  Rng rng(seed);
  std::size_t offset = 0;
  for (auto& [label, idx] : by_class) {
    rng.shuffle(idx);
    for (std::size_t r = 0; r < idx.size(); ++r) fold[idx[r]] = (offset + r) % folds;
    offset += idx.size();
  }
  return fold;
}

namespace detail {

inline Eigen::MatrixXd select_rows(const Eigen::MatrixXd& x, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(rows[r]));
  }
  return out;
}

}  // namespace detail

// Out-of-fold predictions. A training split with a single class predicts
// that class.
inline std::vector<int> cross_val_predict(const Eigen::MatrixXd& x, std::span<const int> labels,
                                          ClassifierKind kind, const ClassifierParams& params,
                                          std::size_t folds = 5) {
  const std::size_t n = labels.size();
  folds = std::min(folds, n);
  const auto fold = stratified_folds(labels, folds, params.seed);
  std::vector<int> pred(n);
  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<std::size_t> train_rows, test_rows;
    std::vector<int> train_labels;
    for (std::size_t i = 0; i < n; ++i) {
      if (fold[i] == f) {
        test_rows.push_back(i);
      } else {
        train_rows.push_back(i);
        train_labels.push_back(labels[i]);
      }
    }
    if (test_rows.empty()) continue;
    std::map<int, std::size_t> seen;
    for (int l : train_labels) ++seen[l];
    if (seen.size() < 2) {
      const int only = train_labels.empty() ? labels[test_rows[0]] : train_labels[0];
      for (std::size_t i : test_rows) pred[i] = only;
      continue;
    }
    const auto model = train_classifier(detail::select_rows(x, train_rows), train_labels, kind, params);
    const auto p = model.predict(detail::select_rows(x, test_rows));
    for (std::size_t r = 0; r < test_rows.size(); ++r) pred[test_rows[r]] = p[r];
  }
  return pred;
}

struct GridSearchResult {
  ClassifierParams best;
  double best_f1 = -1;
  std::vector<std::pair<ClassifierParams, double>> scores;
};

// Picks the first (c, gamma) in grid order with the highest out-of-fold
// weighted F1. An empty gamma grid keeps base.gamma.
inline GridSearchResult grid_search(const Eigen::MatrixXd& x, std::span<const int> labels,
                                    ClassifierKind kind, const ClassifierParams& base,
                                    std::span<const double> c_grid,
                                    std::span<const double> gamma_grid = {},
                                    std::size_t folds = 5) {
  if (c_grid.empty()) throw InvalidArgument("grid_search: empty C grid");
  GridSearchResult r;
  const std::vector<double> gammas = gamma_grid.empty() ? std::vector<double>{base.gamma}
                                                        : std::vector<double>(gamma_grid.begin(), gamma_grid.end());
  const std::vector<int> gold(labels.begin(), labels.end());
  for (double c : c_grid) {
    for (double g : gammas) {
      ClassifierParams p = base;
      p.c = c;
      p.gamma = g;
      const auto pred = cross_val_predict(x, labels, kind, p, folds);
      const double f1 = evaluate_weighted_prf(pred, gold).f1;
      r.scores.emplace_back(p, f1);
      if (f1 > r.best_f1) {
        r.best_f1 = f1;
        r.best = p;
      }
    }
  }
  return r;
}

}  // namespace selbias

#endif  // SELBIAS_CLASSIFIER_HPP_
