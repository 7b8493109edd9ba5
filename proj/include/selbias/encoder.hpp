#ifndef SELBIAS_ENCODER_HPP_
#define SELBIAS_ENCODER_HPP_

#include <json.hpp>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "selbias/common.hpp"
#include "selbias/context.hpp"
#include "selbias/csv.hpp"
#include "selbias/text.hpp"

namespace selbias {

class MalformedInput : public Error {
 public:
  using Error::Error;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

enum class PositiveMode { kPooled, kSameSource };

inline std::string_view to_string(PositiveMode m) {
  return m == PositiveMode::kPooled ? "pooled" : "same-source";
}

inline PositiveMode parse_positive_mode(std::string_view s) {
  if (s == "pooled") return PositiveMode::kPooled;
  if (s == "same-source") return PositiveMode::kSameSource;
  throw InvalidArgument("positives must be 'pooled' or 'same-source', got '" +
                        std::string(s) + "'");
}

struct EncoderConfig {
  std::size_t dim = 64;
  std::size_t buckets = std::size_t{1} << 18;
  std::size_t window = 8;
  double margin = 1.0;
  double learning_rate = 1e-3;
  std::size_t epochs = 3;
  std::size_t batch_size = 1;
  std::uint64_t seed = 13;
  std::uint64_t hash_seed = kDefaultHashSeed;
  unsigned threads = 1;

  void validate() const {
    if (dim < 2) throw InvalidArgument("encoder: dim must be >= 2");
    if (buckets < 1) throw InvalidArgument("encoder: buckets must be >= 1");
    if (!(margin > 0)) throw InvalidArgument("encoder: margin must be > 0");
    if (epochs < 1) throw InvalidArgument("encoder: epochs must be >= 1");
    if (batch_size < 1) throw InvalidArgument("encoder: batch_size must be >= 1");
    if (!(learning_rate >= 0) || !std::isfinite(learning_rate)) {
      throw InvalidArgument("encoder: learning_rate must be finite and >= 0");
    }
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["dim"] = dim;
    j["buckets"] = buckets;
    j["window"] = window;
    j["margin"] = margin;
    j["learning_rate"] = learning_rate;
    j["epochs"] = epochs;
    j["batch_size"] = batch_size;
    j["seed"] = seed;
    j["hash_seed"] = hash_seed;
    return j;
  }

  static EncoderConfig from_json(const nlohmann::json& j) {
    EncoderConfig c;
    c.dim = j.at("dim").get<std::size_t>();
    c.buckets = j.at("buckets").get<std::size_t>();
    c.window = j.at("window").get<std::size_t>();
    c.margin = j.at("margin").get<double>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.batch_size = j.value("batch_size", std::size_t{1});
    c.seed = j.at("seed").get<std::uint64_t>();
    c.hash_seed = j.at("hash_seed").get<std::uint64_t>();
    return c;
  }
};

// ---------------------------------------------------------------------------
// Featurization.

// Encoder tokens: role markers verbatim, lowercased words, and single
// punctuation characters.
inline std::vector<std::string> encoder_tokens(std::string_view masked) {
  static constexpr std::array<std::string_view, 3> kMarkers = {kEntMask, kRole1,
                                                               kRole2};
  std::vector<std::string> out;
  for (std::string_view piece : text::split_spaces(masked)) {
    bool again = true;
    while (again && !piece.empty()) {
      again = false;
      for (std::string_view m : kMarkers) {
        if (piece.starts_with(m)) {
          out.emplace_back(m);
          piece.remove_prefix(m.size());
          again = true;
          break;
        }
      }
    }
    if (piece.empty()) continue;
    const auto cps = text::decode(piece);
    std::size_t i = 0;
    while (i < cps.size()) {
      if (text::is_alnum(cps[i].value)) {
        std::string word;
        while (i < cps.size() && text::is_alnum(cps[i].value)) {
          text::append_utf8(word, text::to_lower(cps[i].value));
          ++i;
        }
        out.push_back(std::move(word));
      } else {
        out.emplace_back(piece.substr(cps[i].begin, cps[i].end - cps[i].begin));
        ++i;
      }
    }
  }
  return out;
}

template <typename Real>
using SparseVector = std::vector<std::pair<std::uint32_t, Real>>;

namespace detail {

template <typename Real>
SparseVector<Real> hashed_window(const std::vector<std::string>& tokens,
                                 std::size_t center, std::size_t radius,
                                 std::size_t buckets, std::uint64_t seed,
                                 std::uint32_t offset) {
  const std::size_t lo = center >= radius ? center - radius : 0;
  const std::size_t hi = std::min(tokens.size(), center + radius + 1);
  std::map<std::uint32_t, double> counts;
  auto bump = [&](const std::string& feature) {
    counts[offset + static_cast<std::uint32_t>(hash64(feature, seed) % buckets)] += 1.0;
  };
  for (std::size_t i = lo; i < hi; ++i) {
    if (i == center) continue;
    bump("u:" + tokens[i]);
    if (i + 1 < hi && i + 1 != center) bump("b:" + tokens[i] + " " + tokens[i + 1]);
  }
  double norm = 0.0;
  for (const auto& [idx, v] : counts) norm += v * v;
  norm = std::sqrt(norm);
  SparseVector<Real> out;
  out.reserve(counts.size());
  for (const auto& [idx, v] : counts) {
    out.emplace_back(idx, static_cast<Real>(v / norm));
  }
  return out;
}

}  // namespace detail

// [h_R1, h_R2]: hashed unigram + bigram bags over the `window` tokens on
// either side of each role marker, each channel L2-normalized. Indices of the
// second channel are offset by `buckets`. Throws MalformedInput unless the
// text has exactly one [R1] and one [R2], each right after an [ENT].
template <typename Real>
SparseVector<Real> context_features(std::string_view masked,
                                    const EncoderConfig& config) {
  const auto tokens = encoder_tokens(masked);
  std::size_t r1 = tokens.size(), r2 = tokens.size();
  std::size_t n1 = 0, n2 = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] == kRole1 || tokens[i] == kRole2) {
      if (i == 0 || tokens[i - 1] != kEntMask) {
        throw MalformedInput("role marker " + tokens[i] +
                             " not preceded by [ENT]: " + std::string(masked));
      }
      if (tokens[i] == kRole1) {
        r1 = i;
        ++n1;
      } else {
        r2 = i;
        ++n2;
      }
    }
  }
  if (n1 != 1 || n2 != 1) {
    throw MalformedInput("expected exactly one [R1] and one [R2]: " +
                         std::string(masked));
  }
  auto out = detail::hashed_window<Real>(tokens, r1, config.window, config.buckets,
                                         config.hash_seed, 0);
  auto second = detail::hashed_window<Real>(
      tokens, r2, config.window, config.buckets, config.hash_seed,
      static_cast<std::uint32_t>(config.buckets));
  out.insert(out.end(), second.begin(), second.end());
  return out;
}

// r(c) = W^T [h_R1, h_R2] with W stored row-major, (2 * buckets) x dim.
template <typename Real = float>
class ContextEncoder {
 public:
  using Vector = std::vector<Real>;

  ContextEncoder() = default;

  static ContextEncoder zeros(const EncoderConfig& config) {
    config.validate();
    ContextEncoder enc;
    enc.config_ = config;
    enc.weights_.assign(2 * config.buckets * config.dim, Real{0});
    return enc;
  }

  // Uniform(-1/sqrt(buckets), 1/sqrt(buckets)) from config.seed.
  static ContextEncoder initialized(const EncoderConfig& config) {
    ContextEncoder enc = zeros(config);
    Rng rng(splitmix64(config.seed ^ 0x1d1e5eedULL));
    const double scale = 1.0 / std::sqrt(static_cast<double>(config.buckets));
    for (Real& w : enc.weights_) w = static_cast<Real>(rng.uniform(-scale, scale));
    return enc;
  }

  const EncoderConfig& config() const { return config_; }
  std::size_t dim() const { return config_.dim; }
  std::size_t rows() const { return 2 * config_.buckets; }
  std::span<Real> weights() { return weights_; }
  std::span<const Real> weights() const { return weights_; }
  std::span<Real> row(std::size_t i) {
    return std::span<Real>(weights_).subspan(i * config_.dim, config_.dim);
  }
  std::span<const Real> row(std::size_t i) const {
    return std::span<const Real>(weights_).subspan(i * config_.dim, config_.dim);
  }

  SparseVector<Real> features(std::string_view masked) const {
    return context_features<Real>(masked, config_);
  }

  Vector embed_features(const SparseVector<Real>& h) const {
    Vector r(config_.dim, Real{0});
    for (const auto& [idx, v] : h) {
      const auto w = row(idx);
      for (std::size_t j = 0; j < config_.dim; ++j) r[j] += v * w[j];
    }
    return r;
  }

  Vector embed(std::string_view masked) const { return embed_features(features(masked)); }
  Vector embed(const ContextSentence& c) const { return embed(c.masked_text); }

  template <typename Other>
  ContextEncoder<Other> cast() const {
    ContextEncoder<Other> out = ContextEncoder<Other>::zeros(config_);
    auto w = out.weights();
    for (std::size_t i = 0; i < weights_.size(); ++i) w[i] = static_cast<Other>(weights_[i]);
    return out;
  }

 private:
  EncoderConfig config_;
  std::vector<Real> weights_;
};

template <typename Real>
std::vector<std::vector<double>> embed_all(const ContextEncoder<Real>& encoder,
                                           std::span<const ContextSentence* const> sentences,
                                           unsigned threads = 1) {
  std::vector<std::vector<double>> out(sentences.size());
  parallel_for(sentences.size(), threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const auto r = encoder.embed(*sentences[i]);
      out[i].assign(r.begin(), r.end());
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Triplet margin loss.

template <typename Real>
Real l2_distance(std::span<const Real> a, std::span<const Real> b) {
  if (a.size() != b.size()) throw InvalidArgument("l2_distance: dimension mismatch");
  Real s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

// max(|a - p| - |a - n| + margin, 0)
template <typename Real>
Real triplet_loss(std::span<const Real> a, std::span<const Real> p,
                  std::span<const Real> n, Real margin) {
  if (a.size() != p.size() || a.size() != n.size()) {
    throw InvalidArgument("triplet_loss: dimension mismatch");
  }
  return std::max(l2_distance(a, p) - l2_distance(a, n) + margin, Real{0});
}

template <typename Real>
struct TripletGradient {
  Real loss = 0;
  std::vector<Real> d_anchor, d_positive, d_negative;
};

// Loss and its (sub)gradient w.r.t. the three embeddings. A zero distance
// contributes a zero subgradient for its term.
template <typename Real>
TripletGradient<Real> triplet_loss_gradient(std::span<const Real> a,
                                            std::span<const Real> p,
                                            std::span<const Real> n, Real margin) {
  TripletGradient<Real> g;
  g.loss = triplet_loss(a, p, n, margin);
  const std::size_t d = a.size();
  g.d_anchor.assign(d, Real{0});
  g.d_positive.assign(d, Real{0});
  g.d_negative.assign(d, Real{0});
  if (g.loss <= 0) return g;
  const Real dap = l2_distance(a, p);
  const Real dan = l2_distance(a, n);
  for (std::size_t i = 0; i < d; ++i) {
    const Real uap = dap > 0 ? (a[i] - p[i]) / dap : Real{0};
    const Real uan = dan > 0 ? (a[i] - n[i]) / dan : Real{0};
    g.d_anchor[i] = uap - uan;
    g.d_positive[i] = -uap;
    g.d_negative[i] = uan;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Triplet sampling.

struct Triplet {
  const ContextSentence* anchor = nullptr;
  const ContextSentence* positive = nullptr;
  const ContextSentence* negative = nullptr;
};

struct SamplerOptions {
  std::size_t per_anchor = 1;
  PositiveMode positives = PositiveMode::kPooled;
  // When set, negatives come only from pairs sharing no entity with the
  // anchor pair; otherwise any other pair qualifies.
  bool strict_negatives = false;
  std::uint64_t seed = 13;
};

// Triplets referencing sentences inside `sets`, which must outlive them.
// Anchors are sentences with at least one other sentence in their positive
// pool (the pair across all sources, or the anchor's own set). Negatives:
// a uniformly chosen other pair, then a uniform sentence in it.
inline std::vector<Triplet> sample_triplets(std::span<const ContextSet> sets,
                                            const SamplerOptions& opts) {
  std::map<EntityPair, std::vector<const ContextSentence*>> pools;
  std::map<EntityPair, bool> pair_has_two;
  for (const ContextSet& s : sets) {
    auto& pool = pools[s.pair];
    for (const ContextSentence& c : s.sentences) pool.push_back(&c);
    if (opts.positives == PositiveMode::kSameSource && s.sentences.size() >= 2) {
      pair_has_two[s.pair] = true;
    }
  }
  if (opts.positives == PositiveMode::kPooled) {
    for (const auto& [pair, pool] : pools) {
      if (pool.size() >= 2) pair_has_two[pair] = true;
    }
  }
  if (pair_has_two.size() < 2) {
    throw InsufficientData(
        "sample_triplets: need at least two entity pairs with >= 2 context "
        "sentences (found " + std::to_string(pair_has_two.size()) + ")");
  }
  std::vector<EntityPair> pairs;
  for (const auto& [pair, pool] : pools) pairs.push_back(pair);

  Rng rng(opts.seed);
  std::vector<Triplet> out;
  std::vector<const EntityPair*> negatives;
  for (const ContextSet& s : sets) {
    negatives.clear();
    for (const EntityPair& q : pairs) {
      if (q == s.pair) continue;
      if (opts.strict_negatives && q.shares_entity(s.pair)) continue;
      negatives.push_back(&q);
    }
    if (negatives.empty()) continue;
    const auto& pool = pools.at(s.pair);
    for (const ContextSentence& anchor : s.sentences) {
      std::vector<const ContextSentence*> positives;
      if (opts.positives == PositiveMode::kPooled) {
        for (const ContextSentence* c : pool) {
          if (c != &anchor) positives.push_back(c);
        }
      } else {
        for (const ContextSentence& c : s.sentences) {
          if (&c != &anchor) positives.push_back(&c);
        }
      }
      if (positives.empty()) continue;
      for (std::size_t r = 0; r < opts.per_anchor; ++r) {
        Triplet t;
        t.anchor = &anchor;
        t.positive = positives[rng.index(positives.size())];
        const auto& neg_pool = pools.at(*negatives[rng.index(negatives.size())]);
        t.negative = neg_pool[rng.index(neg_pool.size())];
        out.push_back(t);
      }
    }
  }
  if (out.empty()) {
    throw InsufficientData("sample_triplets: no anchor has both a positive and a negative");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training.

struct TrainResult {
  std::vector<double> epoch_loss;  // mean pre-update loss per epoch
  std::size_t steps = 0;
};

namespace detail {

template <typename Real>
struct SparseGradient {
  Real loss = 0;
  // (row, coefficient, direction index into dirs)
  std::vector<std::pair<std::uint32_t, Real>> rows[3];
  std::vector<Real> dirs[3];
};

}  // namespace detail

// Stochastic gradient descent on the triplet loss. Each epoch visits the
// triplets in a seeded shuffled order, in mini-batches of
// config.batch_size whose per-triplet gradients are summed in triplet order
// (so the result does not depend on config.threads). Throws TrainingError on
// a non-finite loss.
template <typename Real>
TrainResult train(ContextEncoder<Real>& encoder, std::span<const Triplet> triplets,
                  const EncoderConfig& config) {
  config.validate();
  if (triplets.empty()) throw InvalidArgument("train: empty triplet stream");
  if (encoder.dim() != config.dim || encoder.config().buckets != config.buckets) {
    throw InvalidArgument("train: encoder shape does not match config");
  }
  std::unordered_map<const ContextSentence*, std::size_t> slot;
  std::vector<const ContextSentence*> unique;
  for (const Triplet& t : triplets) {
    for (const ContextSentence* c : {t.anchor, t.positive, t.negative}) {
      if (slot.emplace(c, unique.size()).second) unique.push_back(c);
    }
  }
  std::vector<SparseVector<Real>> feats(unique.size());
  parallel_for(unique.size(), config.threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) feats[i] = encoder.features(unique[i]->masked_text);
  });

  const std::size_t d = config.dim;
  const Real margin = static_cast<Real>(config.margin);
  const Real lr = static_cast<Real>(config.learning_rate);
  std::vector<std::size_t> order(triplets.size());
  TrainResult result;

  auto gradient_of = [&](const Triplet& t) {
    detail::SparseGradient<Real> g;
    const SparseVector<Real>* h[3] = {&feats[slot.at(t.anchor)],
                                      &feats[slot.at(t.positive)],
                                      &feats[slot.at(t.negative)]};
    const auto a = encoder.embed_features(*h[0]);
    const auto p = encoder.embed_features(*h[1]);
    const auto n = encoder.embed_features(*h[2]);
    auto tg = triplet_loss_gradient<Real>(a, p, n, margin);
    g.loss = tg.loss;
    if (tg.loss > 0) {
      g.dirs[0] = std::move(tg.d_anchor);
      g.dirs[1] = std::move(tg.d_positive);
      g.dirs[2] = std::move(tg.d_negative);
      for (int k = 0; k < 3; ++k) g.rows[k] = *h[k];
    }
    return g;
  };

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(splitmix64(config.seed + 0x9e37ULL * (epoch + 1)));
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::vector<detail::SparseGradient<Real>> batch;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      batch.assign(stop - start, {});
      parallel_for(batch.size(), config.threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) batch[i] = gradient_of(triplets[order[start + i]]);
      });
      const Real scale = lr / static_cast<Real>(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& g = batch[i];
        if (!std::isfinite(static_cast<double>(g.loss))) {
          double wnorm = 0.0;
          for (Real w : encoder.weights()) wnorm += static_cast<double>(w) * w;
          throw TrainingError("non-finite loss at epoch " + std::to_string(epoch + 1) +
                              ", step " + std::to_string(result.steps + i) +
                              " (|W|_F = " + std::to_string(std::sqrt(wnorm)) + ")");
        }
        loss_sum += static_cast<double>(g.loss);
      }
      if (lr != Real{0}) {
        for (const auto& g : batch) {
          if (g.loss <= 0) continue;
          for (int k = 0; k < 3; ++k) {
            for (const auto& [idx, v] : g.rows[k]) {
              auto w = encoder.row(idx);
              const Real c = scale * v;
              for (std::size_t j = 0; j < d; ++j) w[j] -= c * g.dirs[k][j];
            }
          }
        }
      }
      result.steps += batch.size();
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(order.size()));
  }
  return result;
}

inline std::string loss_curve_csv(const TrainResult& r) {
  std::string out = csv::schema_line("loss_curve", 1);
  out += "epoch,mean_loss\n";
  char buf[64];
  for (std::size_t i = 0; i < r.epoch_loss.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g\n", i + 1, r.epoch_loss[i]);
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint: 8 magic bytes "SBENC" 0 <major> <minor>, a little-endian
// uint32 header length, the JSON header, then the weights as row-major
// little-endian float32.

inline constexpr std::array<char, 8> kCheckpointMagic = {'S', 'B', 'E', 'N',
                                                         'C', '\0', 1, 0};

template <typename Real>
std::string checkpoint_bytes(const ContextEncoder<Real>& encoder) {
  nlohmann::ordered_json header;
  header["format"] = "selbias.encoder";
  header["version"] = 1;
  header["config"] = encoder.config().to_json();
  header["rows"] = encoder.rows();
  header["cols"] = encoder.dim();
  header["dtype"] = "float32-le";
  const std::string h = header.dump();
  std::string out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  const auto len = static_cast<std::uint32_t>(h.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((len >> (8 * i)) & 0xff));
  out += h;
  const auto w = encoder.weights();
  out.reserve(out.size() + 4 * w.size());
  for (Real x : w) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(x));
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
  return out;
}

template <typename Real>
void save_checkpoint(const ContextEncoder<Real>& encoder,
                     const std::filesystem::path& path) {
  write_file(path, checkpoint_bytes(encoder));
}

template <typename Real = float>
ContextEncoder<Real> load_checkpoint(const std::filesystem::path& path) {
  const std::string data = read_file(path);
  if (data.size() < 12 || !std::equal(kCheckpointMagic.begin(), kCheckpointMagic.begin() + 6,
                                      data.begin())) {
    throw ParseError("checkpoint: bad magic in " + path.string());
  }
  if (data[6] != kCheckpointMagic[6]) {
    throw ParseError("checkpoint: unsupported major version " +
                     std::to_string(static_cast<int>(data[6])));
  }
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) {
    len |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[8 + i])) << (8 * i);
  }
  if (12 + static_cast<std::size_t>(len) > data.size()) {
    throw ParseError("checkpoint: truncated header");
  }
  const auto header = nlohmann::json::parse(data.substr(12, len));
  const EncoderConfig config = EncoderConfig::from_json(header.at("config"));
  auto encoder = ContextEncoder<Real>::zeros(config);
  const std::size_t count = encoder.weights().size();
  const std::size_t offset = 12 + len;
  if (data.size() != offset + 4 * count) throw ParseError("checkpoint: weight block size mismatch");
  auto w = encoder.weights();
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) {
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[offset + 4 * i + b]))
              << (8 * b);
    }
    w[i] = static_cast<Real>(std::bit_cast<float>(bits));
  }
  return encoder;
}

}  // namespace selbias

#endif  // SELBIAS_ENCODER_HPP_
