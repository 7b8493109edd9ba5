#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "selbias/analytics.hpp"

namespace selbias {
namespace {

SourceEmbedding emb(std::string source, EntityPair pair, std::vector<double> v,
                    std::size_t support = 20) {
  SourceEmbedding e;
  e.source_id = std::move(source);
  e.pair = std::move(pair);
  e.vector = std::move(v);
  e.support = support;
  return e;
}

const EntityPair kP("Alpha", "Beta");
const EntityPair kQ("Gamma", "Delta");
const EntityPair kS("Epsilon", "Zeta");

TEST(MeanPool, SingleSentenceIsItself) {
  const std::vector<std::vector<double>> v = {{0.5, -2.0, 3.25}};
  const auto e = mean_pool("s", kP, v);
  EXPECT_EQ(e.vector, v[0]);
  EXPECT_EQ(e.support, 1u);
}

TEST(MeanPool, OppositeVectorsCancel) {
  const std::vector<std::vector<double>> v = {{1.5, -0.25}, {-1.5, 0.25}};
  for (double x : mean_pool("s", kP, v).vector) EXPECT_EQ(x, 0.0);
}

TEST(MeanPool, HandAverage) {
  const std::vector<std::vector<double>> v = {
      {1, 0, 2}, {3, 1, 0}, {0, 0, 1}, {4, -1, 1}, {2, 5, 1}};
  const auto e = mean_pool("s", kP, v);
  EXPECT_DOUBLE_EQ(e.vector[0], 2.0);
  EXPECT_DOUBLE_EQ(e.vector[1], 1.0);
  EXPECT_DOUBLE_EQ(e.vector[2], 1.0);
  EXPECT_EQ(e.support, 5u);
}

TEST(MeanPool, PermutationInvariant) {
  Rng rng(3);
  std::vector<std::vector<double>> v(12, std::vector<double>(6));
  for (auto& row : v) {
    for (double& x : row) x = rng.normal();
  }
  const auto a = mean_pool("s", kP, v);
  std::reverse(v.begin(), v.end());
  std::swap(v[2], v[7]);
  const auto b = mean_pool("s", kP, v);
  for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(a.vector[j], b.vector[j], 1e-12);
}

TEST(MeanPool, EmptyAndRaggedInputs) {
  const std::vector<std::vector<double>> none;
  EXPECT_THROW(mean_pool("s", kP, none), InvalidArgument);
  const std::vector<std::vector<double>> ragged = {{1, 2}, {1}};
  EXPECT_THROW(mean_pool("s", kP, ragged), InvalidArgument);
}

TEST(MeanPool, PoolsEncoderOutputs) {
  EncoderConfig cfg;
  cfg.dim = 4;
  cfg.buckets = 64;
  const auto enc = ContextEncoder<double>::initialized(cfg);
  ContextSet set;
  set.source_id = "s";
  set.pair = kP;
  for (const char* t : {"[ENT] [R1] met [ENT] [R2] today .", "[ENT] [R2] and [ENT] [R1] spoke ."}) {
    ContextSentence c;
    c.masked_text = t;
    set.sentences.push_back(c);
  }
  const auto e = pool_source_embedding(set, enc);
  const auto a = enc.embed(set.sentences[0]);
  const auto b = enc.embed(set.sentences[1]);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(e.vector[j], 0.5 * (a[j] + b[j]), 1e-12);
}

TEST(Embeddings, JsonlRoundTrip) {
  const std::vector<SourceEmbedding> es = {emb("a", kP, {0.1, 1e-17, -3.5}, 4),
                                           emb("b", kQ, {1.0 / 3.0, 2, 7}, 11)};
  const std::string text = embeddings_to_jsonl(es);
  EXPECT_EQ(text.rfind("{\"schema\":\"selbias.embeddings\"", 0), 0u);
  EXPECT_EQ(embeddings_from_jsonl(text), es);
  EXPECT_THROW(embeddings_from_jsonl("{\"source\":\"a\"}\n"), ParseError);
  EXPECT_THROW(embeddings_from_jsonl("nope\n"), ParseError);
}

TEST(FeatureMatrix, SinglePairIsTheEmbedding) {
  const std::vector<SourceEmbedding> es = {emb("b", kP, {1, 2}), emb("a", kP, {3, 4}),
                                           emb("a", kQ, {9, 9})};
  const std::vector<EntityPair> ranked = {kP, kQ};
  const auto fm = build_feature_matrix(es, ranked, 1);
  ASSERT_EQ(fm.rows.size(), 2u);
  EXPECT_EQ(fm.rows[0].source_id, "a");
  EXPECT_EQ(fm.rows[0].features, (std::vector<double>{3, 4}));
  EXPECT_EQ(fm.rows[1].features, (std::vector<double>{1, 2}));
}

TEST(FeatureMatrix, GoldenThreeBlocks) {
  const std::vector<EntityPair> ranked = {kQ, kP, kS};
  const std::vector<SourceEmbedding> es = {
      emb("s1", kP, {1, 2}),   emb("s1", kQ, {3, 4}), emb("s1", kS, {5, 6}),
      emb("s2", kQ, {7, 8}),   emb("s2", kS, {9, 10}),
      emb("s3", kP, {-1, -2}, 2),  // below min_support
      emb("s3", kS, {0.5, 0.25}),
      emb("s4", kP, {2, 2}, 1),  // nothing above min_support
  };
  const auto fm = build_feature_matrix(es, ranked, 3, 3);
  ASSERT_EQ(fm.rows.size(), 3u);
  Eigen::MatrixXd expected(3, 6);
  expected << 3, 4, 1, 2, 5, 6,  //
      7, 8, 0, 0, 9, 10,         //
      0, 0, 0, 0, 0.5, 0.25;
  EXPECT_EQ(fm.matrix(), expected);
  EXPECT_EQ(fm.rows[1].missing, (std::vector<bool>{false, true, false}));
  EXPECT_EQ(fm.rows[2].missing, (std::vector<bool>{true, true, false}));
}

TEST(FeatureMatrix, KBeyondRankedPairs) {
  const std::vector<EntityPair> ranked = {kP};
  const std::vector<SourceEmbedding> es = {emb("a", kP, {1})};
  EXPECT_EQ(build_feature_matrix(es, ranked, 10).pairs.size(), 1u);
}

TEST(RankPairs, BySupport) {
  const std::vector<SourceEmbedding> es = {emb("a", kP, {1}, 3), emb("b", kP, {1}, 3),
                                           emb("a", kQ, {1}, 10), emb("a", kS, {1}, 6)};
  EXPECT_EQ(rank_pairs_by_support(es), (std::vector<EntityPair>{kQ, kP, kS}));
}

// Left/right clouds for pair P well apart; for Q identical across sides.
std::vector<SourceEmbedding> aep_fixture(std::map<std::string, Rating5>& labels) {
  Rng rng(17);
  std::vector<SourceEmbedding> es;
  for (int i = 0; i < 8; ++i) {
    const bool left = i < 4;
    const std::string id = (left ? "l" : "r") + std::to_string(i);
    labels[id] = left ? Rating5::kLeft : Rating5::kRight;
    std::vector<double> p(3), q(3);
    for (int j = 0; j < 3; ++j) {
      p[j] = (left ? 3.0 : -3.0) + rng.normal();
      q[j] = rng.normal();
    }
    es.push_back(emb(id, kP, p));
    es.push_back(emb(id, kQ, q));
  }
  labels["c0"] = Rating5::kCenter;
  es.push_back(emb("c0", kP, {100, 100, 100}));
  return es;
}

TEST(RankAeps, SeparatedPairRanksFirst) {
  std::map<std::string, Rating5> labels;
  const auto es = aep_fixture(labels);
  const std::vector<EntityPair> ranked = {kQ, kP};
  const auto r = rank_aeps(es, labels, ranked, 2);
  ASSERT_EQ(r.scores.size(), 2u);
  EXPECT_EQ(r.scores[0].pair, kP);
  EXPECT_GT(r.scores[0].divergence, 10 * r.scores[1].divergence);
  EXPECT_EQ(r.scores[0].n_left, 4u);
  EXPECT_EQ(r.scores[0].n_right, 4u);
  EXPECT_TRUE(r.ineligible.empty());
}

TEST(RankAeps, IdenticalSidesNearZero) {
  std::map<std::string, Rating5> labels;
  std::vector<SourceEmbedding> es;
  Rng rng(5);
  std::vector<std::vector<double>> cloud(4, std::vector<double>(3));
  for (auto& v : cloud) {
    for (double& x : v) x = rng.normal();
  }
  for (int i = 0; i < 4; ++i) {
    es.push_back(emb("l" + std::to_string(i), kP, cloud[i]));
    es.push_back(emb("r" + std::to_string(i), kP, cloud[i]));
    labels["l" + std::to_string(i)] = Rating5::kLeanLeft;
    labels["r" + std::to_string(i)] = Rating5::kLeanRight;
  }
  const std::vector<EntityPair> ranked = {kP};
  AepOptions opts;
  opts.reduce = false;
  const auto r = rank_aeps(es, labels, ranked, 1, opts);
  ASSERT_EQ(r.scores.size(), 1u);
  EXPECT_NEAR(r.scores[0].divergence, 0.0, 1e-9);
  opts.include_lean = false;
  EXPECT_EQ(rank_aeps(es, labels, ranked, 1, opts).ineligible.size(), 1u);
}

TEST(RankAeps, SmallGroupsAreIneligible) {
  std::map<std::string, Rating5> labels;
  auto es = aep_fixture(labels);
  std::erase_if(es, [](const SourceEmbedding& e) {
    return e.pair == kQ && (e.source_id == "l0" || e.source_id == "l1");
  });
  const std::vector<EntityPair> ranked = {kP, kQ, kS};
  const auto r = rank_aeps(es, labels, ranked, 3);
  ASSERT_EQ(r.scores.size(), 1u);
  ASSERT_EQ(r.ineligible.size(), 2u);
  EXPECT_EQ(r.ineligible[0].pair, kQ);
  EXPECT_EQ(r.ineligible[0].n_left, 2u);
  EXPECT_EQ(r.ineligible[0].n_right, 4u);
  EXPECT_EQ(r.ineligible[1].n_left, 0u);
}

TEST(RankAeps, InputOrderDoesNotMatter) {
  std::map<std::string, Rating5> labels;
  auto es = aep_fixture(labels);
  const std::vector<EntityPair> ranked = {kQ, kP};
  const auto a = rank_aeps(es, labels, ranked, 2);
  std::reverse(es.begin(), es.end());
  const auto b = rank_aeps(es, labels, ranked, 2);
  EXPECT_EQ(aeps_to_csv(a), aeps_to_csv(b));
}

TEST(Heatmap, DuplicateOfLeftSourceIsLeft) {
  std::map<std::string, Rating3> labels;
  std::vector<SourceEmbedding> es;
  Rng rng(8);
  for (int i = 0; i < 5; ++i) {
    const std::string l = "l" + std::to_string(i), r = "r" + std::to_string(i);
    labels[l] = Rating3::kLeft;
    labels[r] = Rating3::kRight;
    es.push_back(emb(l, kP, {2 + 0.3 * rng.normal(), 0.3 * rng.normal()}));
    es.push_back(emb(r, kP, {-2 + 0.3 * rng.normal(), 0.3 * rng.normal()}));
  }
  // Only two left sources cover Q.
  es.push_back(emb("l0", kQ, {1, 1}));
  es.push_back(emb("l1", kQ, {1, 1}));
  for (int i = 0; i < 4; ++i) es.push_back(emb("r" + std::to_string(i), kQ, {-1, -1}));

  labels["dup"] = Rating3::kLeft;
  labels["thin"] = Rating3::kRight;
  es.push_back(emb("dup", kP, es[0].vector, 12));
  es.push_back(emb("dup", kQ, {-1, -1}, 30));
  es.push_back(emb("thin", kP, {-2, 0}, 10));

  const std::vector<EntityPair> pairs = {kP, kQ, kS};
  const std::vector<std::string> holdout = {"dup", "thin"};
  const auto h = per_pair_polarity(es, labels, pairs, holdout);
  EXPECT_EQ(h.trained, (std::vector<bool>{true, false, false}));
  ASSERT_TRUE(h.cells[0][0].has_value());
  EXPECT_EQ(*h.cells[0][0], Rating3::kLeft);
  EXPECT_FALSE(h.cells[0][1].has_value());
  EXPECT_FALSE(h.cells[1][0].has_value());  // exactly 10 sentences
  EXPECT_EQ(h.covered(), 1u);
  const std::string csv = heatmap_to_csv(h);
  EXPECT_NE(csv.find("dup,left,n/a,n/a"), std::string::npos) << csv;
}

TEST(DefaultHoldout, MostArticlesFirst) {
  std::vector<Article> arts;
  int id = 0;
  for (const auto& [src, n] : std::vector<std::pair<std::string, int>>{
           {"a", 2}, {"b", 5}, {"c", 3}, {"d", 9}}) {
    for (int i = 0; i < n; ++i) {
      Article a;
      a.article_id = "x" + std::to_string(id++);
      a.source_id = src;
      arts.push_back(a);
    }
  }
  const CorpusHandle h(arts);
  const std::map<std::string, Rating3> labels = {
      {"a", Rating3::kLeft}, {"b", Rating3::kLeft}, {"c", Rating3::kRight}};
  EXPECT_EQ(default_holdout(h, labels, 2), (std::vector<std::string>{"b", "c"}));
}

TEST(Pca, RankOneLineExplainsEverything) {
  Eigen::MatrixXd x(10, 3);
  for (int i = 0; i < 10; ++i) x.row(i) << i, 2.0 * i, -1.0 * i;
  const auto r = pca_project(x, 2);
  EXPECT_NEAR(r.explained_ratio[0], 1.0, 1e-12);
  EXPECT_NEAR(r.explained_ratio[1], 0.0, 1e-12);
  const Eigen::Vector3d dir = Eigen::Vector3d(1, 2, -1).normalized();
  EXPECT_NEAR(std::abs(r.components.col(0).dot(dir)), 1.0, 1e-12);
  EXPECT_GT(r.components(1, 0), 0.0);  // largest loading positive
}

TEST(Pca, IsotropicCloudHasEqualRatios) {
  Rng rng(21);
  Eigen::MatrixXd x(40000, 3);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (int j = 0; j < 3; ++j) x(i, j) = rng.normal();
  }
  const auto r = pca_project(x, 3);
  for (double v : r.explained_ratio) EXPECT_NEAR(v, 1.0 / 3.0, 0.02);
}

TEST(Pca, FullRankReconstructsAndIsOrthonormal) {
  Rng rng(22);
  Eigen::MatrixXd x(30, 5);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (int j = 0; j < 5; ++j) x(i, j) = rng.normal() * (j + 1);
  }
  const auto r = pca_project(x, 5);
  EXPECT_LT((r.reconstruct(r.projected) - x).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((r.components.transpose() * r.components - Eigen::MatrixXd::Identity(5, 5))
                .cwiseAbs()
                .maxCoeff(),
            1e-9);
  EXPECT_LT((r.transform(x) - r.projected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Pca, TopComponentMatchesPowerIteration) {
  Rng rng(23);
  Eigen::MatrixXd x(50, 4);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double t = rng.normal();
    x.row(i) << 3 * t + 0.2 * rng.normal(), -t + 0.2 * rng.normal(), rng.normal() * 0.5,
        0.1 * rng.normal();
  }
  const Eigen::MatrixXd c = x.rowwise() - x.colwise().mean();
  const Eigen::MatrixXd cov = c.transpose() * c / 49.0;
  Eigen::VectorXd v = Eigen::VectorXd::Ones(4);
  for (int it = 0; it < 500; ++it) v = (cov * v).normalized();
  const auto r = pca_project(x, 1);
  EXPECT_NEAR(std::abs(r.components.col(0).dot(v)), 1.0, 1e-9);
  EXPECT_NEAR(r.explained_ratio[0], v.dot(cov * v) / cov.trace(), 1e-9);
}

TEST(Pca, InvalidRequests) {
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 2);
  EXPECT_THROW(pca_project(x, 0), InvalidArgument);
  EXPECT_THROW(pca_project(x, 3), InvalidArgument);
  EXPECT_THROW(pca_project(x.topRows(2), 2), InvalidArgument);
}

TEST(Pca, PairPlotData) {
  std::vector<SourceEmbedding> es = {emb("b", kP, {1, 0, 0}), emb("a", kP, {0, 1, 0}),
                                     emb("c", kP, {0, 0, 1}), emb("a", kQ, {1, 1, 1})};
  const std::map<std::string, Rating3> labels = {{"a", Rating3::kLeft}};
  const auto p = pca_for_pair(es, labels, kP);
  ASSERT_TRUE(p.has_value());
  ASSERT_EQ(p->points.size(), 3u);
  EXPECT_EQ(p->points[0].source_id, "a");
  EXPECT_EQ(*p->points[0].label, Rating3::kLeft);
  EXPECT_FALSE(p->points[1].label.has_value());
  EXPECT_FALSE(pca_for_pair(es, labels, kQ).has_value());
  EXPECT_NE(pca_to_csv(*p).find("b,unlabeled,"), std::string::npos);
}

}  // namespace
}  // namespace selbias
