#include <gtest/gtest.h>

#include "selbias/classifier.hpp"
#include "selbias/metrics.hpp"

namespace selbias {
namespace {

double accuracy(const std::vector<int>& a, const std::vector<int>& b) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < a.size(); ++i) hit += a[i] == b[i];
  return static_cast<double>(hit) / static_cast<double>(a.size());
}

struct Data {
  Eigen::MatrixXd x;
  std::vector<int> y;
};

Data separable(std::size_t per_class, std::uint64_t seed, int classes = 2) {
  Rng rng(seed);
  Data d;
  d.x.resize(static_cast<Eigen::Index>(per_class * classes), 2);
  for (int c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      const auto r = static_cast<Eigen::Index>(c * per_class + i);
      d.x(r, 0) = 4.0 * std::cos(2 * M_PI * c / classes) + 0.5 * rng.normal();
      d.x(r, 1) = 4.0 * std::sin(2 * M_PI * c / classes) + 0.5 * rng.normal();
      d.y.push_back(c);
    }
  }
  return d;
}

Data xor_data(std::size_t per_quadrant, std::uint64_t seed) {
  Rng rng(seed);
  Data d;
  d.x.resize(static_cast<Eigen::Index>(4 * per_quadrant), 2);
  Eigen::Index r = 0;
  for (int q = 0; q < 4; ++q) {
    const double sx = (q & 1) ? 1.0 : -1.0, sy = (q & 2) ? 1.0 : -1.0;
    for (std::size_t i = 0; i < per_quadrant; ++i, ++r) {
      d.x(r, 0) = sx * rng.uniform(0.3, 1.0);
      d.x(r, 1) = sy * rng.uniform(0.3, 1.0);
      d.y.push_back(sx * sy > 0 ? 1 : 0);
    }
  }
  return d;
}

TEST(WeightedPrf, PerfectPrediction) {
  const std::vector<int> gold = {0, 1, 2, 2, 1};
  const auto r = evaluate_weighted_prf(gold, gold);
  EXPECT_DOUBLE_EQ(r.precision, 100.0);
  EXPECT_DOUBLE_EQ(r.recall, 100.0);
  EXPECT_DOUBLE_EQ(r.f1, 100.0);
}

TEST(WeightedPrf, HandConfusionMatrix) {
  // gold L L R R, pred L R R R:
  //   P_L = 1, P_R = 2/3 -> P = 83.33; R_L = 1/2, R_R = 1 -> R = 75
  //   F1 = HM(P, R) = 78.947; class-wise weighted F1 = (2/3 + 4/5) / 2 = 73.33
  const std::vector<char> gold = {'L', 'L', 'R', 'R'};
  const std::vector<char> pred = {'L', 'R', 'R', 'R'};
  const auto r = evaluate_weighted_prf(pred, gold);
  EXPECT_NEAR(r.precision, 250.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.recall, 75.0, 1e-12);
  EXPECT_NEAR(r.f1, 2 * (250.0 / 3.0) * 75.0 / (250.0 / 3.0 + 75.0), 1e-12);
  EXPECT_NEAR(r.f1, 78.947368421, 1e-8);
  EXPECT_NEAR(r.f1_classwise, 220.0 / 3.0, 1e-12);
}

TEST(WeightedPrf, HarmonicMeanReproducesReportedTotals) {
  EXPECT_NEAR(harmonic_mean(84.50, 79.63), 81.99, 0.005);
  EXPECT_NEAR(harmonic_mean(80.49, 75.61), 77.97, 0.005);
}

TEST(WeightedPrf, AbsentGoldClassHasNoWeight) {
  const std::vector<int> gold = {0, 0, 1};
  const std::vector<int> pred = {0, 2, 1};
  const auto r = evaluate_weighted_prf(pred, gold);
  EXPECT_EQ(r.per_class.size(), 2u);
  EXPECT_NEAR(r.recall, 100.0 * (2.0 / 3.0 * 0.5 + 1.0 / 3.0), 1e-12);
}

TEST(WeightedPrf, LengthMismatch) {
  const std::vector<int> a = {1, 2}, b = {1};
  EXPECT_THROW(evaluate_weighted_prf(a, b), InvalidArgument);
}

TEST(Classifier, EveryKindFitsSeparableData) {
  const auto d = separable(20, 1, 3);
  for (ClassifierKind kind : kAllClassifierKinds) {
    auto p = default_params(kind);
    if (kind == ClassifierKind::kRbfSvm) p.gamma = 0.5;
    const auto m = train_classifier(d.x, d.y, kind, p);
    EXPECT_EQ(accuracy(m.predict(d.x), d.y), 1.0) << to_string(kind);
  }
}

TEST(Classifier, XorNeedsTheKernel) {
  const auto d = xor_data(15, 2);
  ClassifierParams rbf = default_params(ClassifierKind::kRbfSvm);
  rbf.gamma = 2.0;
  rbf.c = 10.0;
  const auto km = train_classifier(d.x, d.y, ClassifierKind::kRbfSvm, rbf);
  EXPECT_EQ(accuracy(km.predict(d.x), d.y), 1.0);
  const auto lm = train_classifier(d.x, d.y, ClassifierKind::kLinearSvm,
                                   default_params(ClassifierKind::kLinearSvm));
  EXPECT_LT(accuracy(lm.predict(d.x), d.y), 1.0);
}

TEST(Classifier, ZeroCPredictsMajorityClass) {
  auto d = separable(10, 3);
  d.x.conservativeResize(d.x.rows() + 4, Eigen::NoChange);
  for (int i = 0; i < 4; ++i) {
    d.x.row(d.x.rows() - 4 + i) << 4.0, 0.0;
    d.y.push_back(0);
  }
  ClassifierParams p;
  p.c = 0.0;
  const auto m = train_classifier(d.x, d.y, ClassifierKind::kLinearSvm, p);
  EXPECT_EQ(m.weights.norm(), 0.0);
  for (int label : m.predict(d.x)) EXPECT_EQ(label, 0);
  p.c = 1e-9;
  EXPECT_LT(train_classifier(d.x, d.y, ClassifierKind::kLinearSvm, p).weights.norm(), 1e-6);
}

TEST(Classifier, SingleClassIsAnError) {
  const Eigen::MatrixXd x = Eigen::MatrixXd::Ones(3, 2);
  const std::vector<int> y = {1, 1, 1};
  EXPECT_THROW(train_classifier(x, y, ClassifierKind::kLinearSvm, {}), InvalidArgument);
}

TEST(Classifier, PredictsOnlyTrainingClasses) {
  const auto d = separable(8, 4);
  std::vector<int> y = d.y;
  for (int& v : y) v = v == 0 ? 7 : 9;
  const auto m = train_classifier(d.x, y, ClassifierKind::kRidgeLogistic, {});
  for (int label : m.predict(Eigen::MatrixXd::Random(20, 2) * 10)) {
    EXPECT_TRUE(label == 7 || label == 9);
  }
}

TEST(Classifier, DeterministicGivenSeed) {
  const auto d = separable(15, 5, 3);
  for (ClassifierKind kind : kAllClassifierKinds) {
    const auto a = train_classifier(d.x, d.y, kind, default_params(kind));
    const auto b = train_classifier(d.x, d.y, kind, default_params(kind));
    EXPECT_EQ(a.decision_function(d.x), b.decision_function(d.x)) << to_string(kind);
  }
}

TEST(Classifier, LassoIsSparserThanRidge) {
  Rng rng(6);
  Eigen::MatrixXd x(60, 10);
  std::vector<int> y;
  for (Eigen::Index i = 0; i < 60; ++i) {
    for (Eigen::Index j = 0; j < 10; ++j) x(i, j) = rng.normal();
    y.push_back(x(i, 0) > 0 ? 1 : 0);
  }
  ClassifierParams p;
  p.c = 0.1;
  const auto lasso = train_classifier(x, y, ClassifierKind::kLassoLogistic, p);
  const auto ridge = train_classifier(x, y, ClassifierKind::kRidgeLogistic, p);
  const auto zeros = [](const Eigen::MatrixXd& w) { return (w.array() == 0.0).count(); };
  EXPECT_GT(zeros(lasso.weights), zeros(ridge.weights));
  EXPECT_GT(accuracy(lasso.predict(x), y), 0.9);
}

TEST(CrossValidation, StratifiedFoldsAndGridSearch) {
  const auto d = separable(10, 7, 3);
  const auto folds = stratified_folds(d.y, 5, 1);
  std::map<std::pair<std::size_t, int>, int> per;
  for (std::size_t i = 0; i < folds.size(); ++i) ++per[{folds[i], d.y[i]}];
  for (const auto& [key, n] : per) EXPECT_EQ(n, 2);

  const std::vector<double> grid = {1e-6, 0.1, 1.0};
  const auto r = grid_search(d.x, d.y, ClassifierKind::kLinearSvm,
                             default_params(ClassifierKind::kLinearSvm), grid);
  EXPECT_EQ(r.scores.size(), 3u);
  EXPECT_DOUBLE_EQ(r.best_f1, 100.0);
  // First grid point reaching the best score wins.
  for (const auto& [params, f1] : r.scores) {
    if (f1 == r.best_f1) {
      EXPECT_EQ(params.c, r.best.c);
      break;
    }
  }
}

}  // namespace
}  // namespace selbias
