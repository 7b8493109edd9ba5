#include <gtest/gtest.h>

#include <filesystem>
#include <map>

#include "selbias/encoder.hpp"

namespace selbias {
namespace {

namespace fs = std::filesystem;

EncoderConfig small_config(std::size_t buckets = 1024, std::size_t dim = 8) {
  EncoderConfig c;
  c.buckets = buckets;
  c.dim = dim;
  c.window = 4;
  c.seed = 3;
  return c;
}

ContextSentence sentence(std::string source, EntityPair pair, std::string masked,
                         std::size_t idx = 0) {
  ContextSentence c;
  c.source_id = std::move(source);
  c.pair = std::move(pair);
  c.masked_text = std::move(masked);
  c.article_id = "a" + std::to_string(idx);
  c.sentence_index = idx;
  return c;
}

// Pairs whose sentences use disjoint context words.
std::vector<ContextSet> separable_sets(std::size_t pairs, std::size_t per_pair,
                                       std::uint64_t seed) {
  Rng rng(seed);
  std::vector<ContextSet> out;
  for (std::size_t p = 0; p < pairs; ++p) {
    ContextSet set;
    set.source_id = "src";
    set.pair = EntityPair("E" + std::to_string(2 * p), "E" + std::to_string(2 * p + 1));
    for (std::size_t i = 0; i < per_pair; ++i) {
      std::string text = "[ENT] [R1]";
      for (int w = 0; w < 3; ++w) {
        text += " w" + std::to_string(p) + "x" + std::to_string(rng.index(6));
      }
      text += " [ENT] [R2]";
      text += " v" + std::to_string(p) + "x" + std::to_string(rng.index(6)) + " .";
      set.sentences.push_back(sentence("src", set.pair, text, i));
    }
    out.push_back(std::move(set));
  }
  return out;
}

TEST(EncoderConfig, Validates) {
  EncoderConfig c;
  EXPECT_NO_THROW(c.validate());
  c.dim = 1;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.epochs = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.margin = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  EXPECT_EQ(EncoderConfig::from_json(EncoderConfig{}.to_json()).to_json(),
            EncoderConfig{}.to_json());
}

TEST(EncoderTokens, SplitsMarkersAndPunctuation) {
  EXPECT_EQ(encoder_tokens("In [ENT] [R2], [ENT] [R1] Signed."),
            (std::vector<std::string>{"in", "[ENT]", "[R2]", ",", "[ENT]", "[R1]", "signed",
                                      "."}));
}

TEST(Embed, ZeroWeightsGiveZeroVector) {
  const auto enc = ContextEncoder<float>::zeros(small_config());
  for (float x : enc.embed("The [ENT] [R1] met [ENT] [R2] today.")) EXPECT_EQ(x, 0.0f);
}

TEST(Embed, RejectsMalformedText) {
  const auto enc = ContextEncoder<float>::zeros(small_config());
  EXPECT_THROW(enc.embed("no markers"), MalformedInput);
  EXPECT_THROW(enc.embed("[ENT] [R1] and [ENT] [R1]"), MalformedInput);
  EXPECT_THROW(enc.embed("[R1] then [ENT] [R2]"), MalformedInput);
}

TEST(Embed, IdenticalMaskedTextIdenticalEmbedding) {
  const auto enc = ContextEncoder<float>::initialized(small_config());
  // Built from "Biden met Iran" and "Joe Biden met Tehran": same after masking.
  const auto a = enc.embed(sentence("x", {"A", "B"}, "[ENT] [R1] met [ENT] [R2] ."));
  const auto b = enc.embed(sentence("y", {"C", "D"}, "[ENT] [R1] met [ENT] [R2] ."));
  EXPECT_EQ(a, b);
}

TEST(Embed, FourBucketHandProduct) {
  EncoderConfig c = small_config(4, 2);
  c.window = 1;
  // Tokens: [ENT] [R1] beat [ENT] [R2]
  // R1 window -> u:[ENT], u:beat (no bigram avoids the center); each 1/sqrt(2)
  // R2 window -> u:[ENT] alone, weight 1, offset by 4.
  const auto b_ent = hash64("u:[ENT]", c.hash_seed) % 4;
  const auto b_beat = hash64("u:beat", c.hash_seed) % 4;
  std::vector<double> h(8, 0.0);
  const double r = 1.0 / std::sqrt(2.0);
  if (b_ent == b_beat) {
    h[b_ent] = 1.0;  // both land in one bucket: count 2, normalized to 1
  } else {
    h[b_ent] = r;
    h[b_beat] = r;
  }
  h[4 + b_ent] = 1.0;

  auto enc = ContextEncoder<double>::zeros(c);
  for (std::size_t i = 0; i < enc.weights().size(); ++i) {
    enc.weights()[i] = 0.5 * static_cast<double>(i) - 1.0;
  }
  std::vector<double> want(2, 0.0);
  for (std::size_t row = 0; row < 8; ++row) {
    for (std::size_t j = 0; j < 2; ++j) want[j] += h[row] * (0.5 * (2 * row + j) - 1.0);
  }
  const auto got = enc.embed("[ENT] [R1] beat [ENT] [R2]");
  ASSERT_EQ(got.size(), 2u);
  EXPECT_NEAR(got[0], want[0], 1e-12);
  EXPECT_NEAR(got[1], want[1], 1e-12);
}

TEST(TripletLoss, HandExamples) {
  const std::vector<double> zero = {0, 0}, p = {3, 4}, n = {6, 8}, two = {2, 0};
  EXPECT_DOUBLE_EQ(triplet_loss<double>(zero, zero, two, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(triplet_loss<double>(zero, two, two, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(triplet_loss<double>(zero, p, n, 1.0), 0.0);
  const std::vector<double> three = {1, 2, 3};
  EXPECT_THROW(triplet_loss<double>(zero, zero, three, 1.0), InvalidArgument);
}

TEST(TripletLoss, NonNegativeAndZeroIffSeparated) {
  Rng rng(8);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> a(4), p(4), n(4);
    for (auto* v : {&a, &p, &n}) {
      for (double& x : *v) x = rng.normal();
    }
    const double loss = triplet_loss<double>(a, p, n, 1.0);
    EXPECT_GE(loss, 0.0);
    const bool separated = l2_distance<double>(a, n) >= l2_distance<double>(a, p) + 1.0;
    EXPECT_EQ(loss == 0.0, separated);
    // Distance symmetry and triangle inequality.
    EXPECT_DOUBLE_EQ(l2_distance<double>(a, p), l2_distance<double>(p, a));
    EXPECT_LE(l2_distance<double>(a, n),
              l2_distance<double>(a, p) + l2_distance<double>(p, n) + 1e-12);
  }
}

// Analytic dL/dW from the embedding gradient, against central differences
// on W entries.
TEST(TripletLoss, GradientMatchesFiniteDifferences) {
  EncoderConfig c = small_config(16, 4);
  c.window = 2;
  auto enc = ContextEncoder<double>::initialized(c);
  for (double& w : enc.weights()) w *= 8.0;  // make the hinge active
  const std::string sa = "the [ENT] [R1] beat [ENT] [R2] again";
  const std::string sp = "a [ENT] [R1] lost to [ENT] [R2] .";
  const std::string sn = "[ENT] [R2] praised [ENT] [R1] loudly";
  const SparseVector<double> h[3] = {enc.features(sa), enc.features(sp), enc.features(sn)};
  auto loss_at = [&](const ContextEncoder<double>& e) {
    const auto a = e.embed_features(h[0]), p = e.embed_features(h[1]),
               n = e.embed_features(h[2]);
    return triplet_loss<double>(a, p, n, 1.0);
  };
  const auto a = enc.embed_features(h[0]), p = enc.embed_features(h[1]),
             n = enc.embed_features(h[2]);
  const auto g = triplet_loss_gradient<double>(a, p, n, 1.0);
  ASSERT_GT(g.loss, 0.0);
  const std::vector<double>* dirs[3] = {&g.d_anchor, &g.d_positive, &g.d_negative};
  std::map<std::size_t, double> analytic;  // flat weight index -> gradient
  for (int k = 0; k < 3; ++k) {
    for (const auto& [row, v] : h[k]) {
      for (std::size_t j = 0; j < c.dim; ++j) analytic[row * c.dim + j] += v * (*dirs[k])[j];
    }
  }
  const double eps = 1e-5;
  for (const auto& [idx, want] : analytic) {
    auto plus = enc, minus = enc;
    plus.weights()[idx] += eps;
    minus.weights()[idx] -= eps;
    const double fd = (loss_at(plus) - loss_at(minus)) / (2 * eps);
    EXPECT_LE(std::abs(fd - want), 1e-4 * std::max(1.0, std::abs(want))) << idx;
  }
}

TEST(SampleTriplets, TwoPairsNegativeFromOther) {
  const auto sets = separable_sets(2, 2, 1);
  const auto triplets = sample_triplets(sets, {.per_anchor = 3});
  EXPECT_EQ(triplets.size(), 12u);
  for (const Triplet& t : triplets) {
    EXPECT_EQ(t.anchor->pair, t.positive->pair);
    EXPECT_NE(t.anchor, t.positive);
    EXPECT_NE(t.negative->pair, t.anchor->pair);
  }
}

TEST(SampleTriplets, SinglePairIsAnError) {
  const auto sets = separable_sets(1, 5, 1);
  EXPECT_THROW(sample_triplets(sets, {}), InsufficientData);
}

TEST(SampleTriplets, SameSeedSameStream) {
  const auto sets = separable_sets(5, 4, 2);
  SamplerOptions opts;
  opts.per_anchor = 2;
  opts.seed = 99;
  const auto a = sample_triplets(sets, opts), b = sample_triplets(sets, opts);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].anchor, b[i].anchor);
    EXPECT_EQ(a[i].positive, b[i].positive);
    EXPECT_EQ(a[i].negative, b[i].negative);
  }
}

TEST(SampleTriplets, SameSourceAndStrictModes) {
  std::vector<ContextSet> sets = {
      {"s1", {"A", "B"}, {sentence("s1", {"A", "B"}, "[ENT] [R1] x [ENT] [R2]", 0)}},
      {"s2", {"A", "B"}, {sentence("s2", {"A", "B"}, "[ENT] [R1] y [ENT] [R2]", 1)}},
      {"s1", {"A", "C"},
       {sentence("s1", {"A", "C"}, "[ENT] [R1] z [ENT] [R2]", 2),
        sentence("s1", {"A", "C"}, "[ENT] [R1] q [ENT] [R2]", 3)}},
      {"s1", {"D", "E"},
       {sentence("s1", {"D", "E"}, "[ENT] [R1] r [ENT] [R2]", 4),
        sentence("s1", {"D", "E"}, "[ENT] [R1] t [ENT] [R2]", 5)}},
  };
  SamplerOptions same;
  same.positives = PositiveMode::kSameSource;
  for (const Triplet& t : sample_triplets(sets, same)) {
    EXPECT_EQ(t.anchor->source_id, t.positive->source_id);
  }
  SamplerOptions pooled;
  pooled.per_anchor = 4;
  bool cross_source = false;
  for (const Triplet& t : sample_triplets(sets, pooled)) {
    cross_source |= t.anchor->source_id != t.positive->source_id;
  }
  EXPECT_TRUE(cross_source);
  SamplerOptions strict;
  strict.strict_negatives = true;
  strict.per_anchor = 4;
  for (const Triplet& t : sample_triplets(sets, strict)) {
    EXPECT_FALSE(t.negative->pair.shares_entity(t.anchor->pair));
  }
}

TEST(Train, ZeroLearningRateLeavesWeights) {
  const auto sets = separable_sets(3, 4, 5);
  const auto triplets = sample_triplets(sets, {});
  EncoderConfig c = small_config();
  c.learning_rate = 0.0;
  auto enc = ContextEncoder<float>::initialized(c);
  const std::vector<float> before(enc.weights().begin(), enc.weights().end());
  const auto r = train(enc, triplets, c);
  EXPECT_TRUE(std::equal(before.begin(), before.end(), enc.weights().begin()));
  ASSERT_EQ(r.epoch_loss.size(), 3u);
  EXPECT_EQ(r.epoch_loss[0], r.epoch_loss[1]);
  EXPECT_EQ(r.epoch_loss[1], r.epoch_loss[2]);
}

TEST(Train, SeparablePairsDriveLossDown) {
  const auto sets = separable_sets(6, 12, 7);
  SamplerOptions so;
  so.per_anchor = 3;
  const auto triplets = sample_triplets(sets, so);
  EncoderConfig c = small_config(4096, 16);
  c.learning_rate = 0.05;
  c.epochs = 15;
  auto enc = ContextEncoder<float>::initialized(c);
  const auto r = train(enc, triplets, c);
  EXPECT_LT(r.epoch_loss.back(), 0.1 * r.epoch_loss.front())
      << r.epoch_loss.front() << " -> " << r.epoch_loss.back();
}

TEST(Train, DeterministicAcrossThreadCounts) {
  const auto sets = separable_sets(4, 6, 9);
  const auto triplets = sample_triplets(sets, {});
  EncoderConfig c = small_config();
  c.learning_rate = 0.05;
  c.batch_size = 4;
  auto one = ContextEncoder<float>::initialized(c);
  auto many = one;
  train(one, triplets, c);
  c.threads = 4;
  train(many, triplets, c);
  EXPECT_TRUE(std::equal(one.weights().begin(), one.weights().end(), many.weights().begin()));
}

TEST(Train, NonFiniteLossAborts) {
  const auto sets = separable_sets(2, 3, 1);
  const auto triplets = sample_triplets(sets, {});
  EncoderConfig c = small_config();
  auto enc = ContextEncoder<float>::initialized(c);
  for (float& w : enc.weights()) w = std::numeric_limits<float>::infinity();
  EXPECT_THROW(train(enc, triplets, c), TrainingError);
}

TEST(Checkpoint, RoundTrips) {
  const fs::path path = fs::temp_directory_path() / "selbias_enc_rt" / "encoder.bin";
  EncoderConfig c = small_config(64, 4);
  const auto enc = ContextEncoder<float>::initialized(c);
  save_checkpoint(enc, path);
  const auto back = load_checkpoint<float>(path);
  EXPECT_EQ(back.config().to_json(), c.to_json());
  EXPECT_TRUE(std::equal(enc.weights().begin(), enc.weights().end(), back.weights().begin()));
  EXPECT_EQ(checkpoint_bytes(back), read_file(path));
  write_file(path, "garbage");
  EXPECT_THROW(load_checkpoint<float>(path), ParseError);
}

TEST(LossCurve, Csv) {
  TrainResult r;
  r.epoch_loss = {0.5, 0.25};
  EXPECT_EQ(loss_curve_csv(r),
            "# selbias-schema: loss_curve/1\nepoch,mean_loss\n1,0.5\n2,0.25\n");
}

}  // namespace
}  // namespace selbias
