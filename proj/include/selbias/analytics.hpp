#ifndef SELBIAS_ANALYTICS_HPP_
#define SELBIAS_ANALYTICS_HPP_

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "selbias/classifier.hpp"
#include "selbias/common.hpp"
#include "selbias/context.hpp"
#include "selbias/corpus.hpp"
#include "selbias/csv.hpp"
#include "selbias/encoder.hpp"
#include "selbias/gaussian.hpp"
#include "selbias/pca.hpp"

namespace selbias {

struct SourceEmbedding {
  std::string source_id;
  EntityPair pair;
  std::vector<double> vector;
  std::size_t support = 0;

  friend bool operator==(const SourceEmbedding&, const SourceEmbedding&) = default;
};

inline SourceEmbedding mean_pool(std::string source_id, EntityPair pair,
                                 std::span<const std::vector<double>> vectors) {
  if (vectors.empty()) throw InvalidArgument("mean_pool: empty context set");
  SourceEmbedding e;
  e.source_id = std::move(source_id);
  e.pair = std::move(pair);
  e.support = vectors.size();
  e.vector.assign(vectors.front().size(), 0.0);
  for (const auto& v : vectors) {
    if (v.size() != e.vector.size()) throw InvalidArgument("mean_pool: ragged vectors");
    for (std::size_t j = 0; j < v.size(); ++j) e.vector[j] += v[j];
  }
  for (double& x : e.vector) x /= static_cast<double>(vectors.size());
  return e;
}

template <typename Real>
SourceEmbedding pool_source_embedding(const ContextSet& set, const ContextEncoder<Real>& encoder) {
  if (set.sentences.empty()) throw InvalidArgument("pool_source_embedding: empty context set");
  std::vector<std::vector<double>> vs;
  vs.reserve(set.sentences.size());
  for (const ContextSentence& c : set.sentences) {
    const auto r = encoder.embed(c);
    vs.emplace_back(r.begin(), r.end());
  }
  return mean_pool(set.source_id, set.pair, vs);
}

// One SourceEmbedding per ContextSet, in input order.
template <typename Real>
std::vector<SourceEmbedding> pool_embeddings(std::span<const ContextSet> sets,
                                             const ContextEncoder<Real>& encoder,
                                             unsigned threads = 1) {
  std::vector<SourceEmbedding> out(sets.size());
  parallel_for(sets.size(), threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) out[i] = pool_source_embedding(sets[i], encoder);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Embedding table persistence.

inline std::string embeddings_to_jsonl(std::span<const SourceEmbedding> embeddings) {
  nlohmann::ordered_json header;
  header["schema"] = "selbias.embeddings";
  header["version"] = 1;
  header["dim"] = embeddings.empty() ? 0 : embeddings.front().vector.size();
  std::string out = header.dump() + "\n";
  for (const SourceEmbedding& e : embeddings) {
    nlohmann::ordered_json obj;
    obj["source"] = e.source_id;
    obj["e1"] = e.pair.first();
    obj["e2"] = e.pair.second();
    obj["support"] = e.support;
    obj["vector"] = e.vector;
    out += obj.dump();
    out += '\n';
  }
  return out;
}

inline std::vector<SourceEmbedding> embeddings_from_jsonl(std::string_view data) {
  std::vector<SourceEmbedding> out;
  std::size_t line_no = 0, start = 0;
  while (start < data.size()) {
    auto end = data.find('\n', start);
    if (end == std::string_view::npos) end = data.size();
    const std::string_view line = data.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (text::trim(line).empty()) continue;
    const auto obj = nlohmann::json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) {
      throw ParseError("embeddings line " + std::to_string(line_no) + ": invalid JSON");
    }
    if (obj.contains("schema")) continue;
    try {
      SourceEmbedding e;
      e.source_id = obj.at("source").get<std::string>();
      e.pair = EntityPair(obj.at("e1").get<std::string>(), obj.at("e2").get<std::string>());
      e.support = obj.at("support").get<std::size_t>();
      e.vector = obj.at("vector").get<std::vector<double>>();
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw ParseError("embeddings line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return out;
}

// (source, pair) -> embedding
using EmbeddingIndex = std::map<std::pair<std::string, EntityPair>, const SourceEmbedding*>;

inline EmbeddingIndex index_embeddings(std::span<const SourceEmbedding> embeddings) {
  EmbeddingIndex idx;
  for (const SourceEmbedding& e : embeddings) idx[{e.source_id, e.pair}] = &e;
  return idx;
}

// Pairs ordered by total support across sources, descending; ties by pair.
inline std::vector<EntityPair> rank_pairs_by_support(std::span<const SourceEmbedding> embeddings) {
  std::map<EntityPair, std::size_t> counts;
  for (const SourceEmbedding& e : embeddings) counts[e.pair] += e.support;
  std::vector<std::pair<EntityPair, std::size_t>> v(counts.begin(), counts.end());
  std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<EntityPair> out;
  for (auto& [p, n] : v) out.push_back(p);
  return out;
}

// ---------------------------------------------------------------------------
// Source feature rows.

struct SourceFeatureRow {
  std::string source_id;
  std::vector<double> features;  // k blocks of dim d, in pair order
  std::vector<bool> missing;     // one flag per block
};

struct FeatureMatrix {
  std::vector<EntityPair> pairs;
  std::size_t dim = 0;
  std::vector<SourceFeatureRow> rows;  // sorted by source_id

  Eigen::MatrixXd matrix() const {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(pairs.size() * dim));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = 0; j < rows[i].features.size(); ++j) {
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i].features[j];
      }
    }
    return m;
  }
};

// Concatenates each source's embeddings for the first k of `ranked_pairs`.
// Embeddings below min_support count as missing; a source gets a row if at
// least one block is present. Missing blocks are zero.
inline FeatureMatrix build_feature_matrix(std::span<const SourceEmbedding> embeddings,
                                          std::span<const EntityPair> ranked_pairs,
                                          std::size_t k, std::size_t min_support = 1) {
  FeatureMatrix fm;
  fm.pairs.assign(ranked_pairs.begin(),
                  ranked_pairs.begin() + static_cast<std::ptrdiff_t>(std::min(k, ranked_pairs.size())));
  for (const SourceEmbedding& e : embeddings) {
    if (fm.dim == 0) fm.dim = e.vector.size();
    if (e.vector.size() != fm.dim) throw InvalidArgument("build_feature_matrix: mixed dimensions");
  }
  std::map<EntityPair, std::size_t> block;
  for (std::size_t b = 0; b < fm.pairs.size(); ++b) block[fm.pairs[b]] = b;
  std::map<std::string, SourceFeatureRow> rows;
  for (const SourceEmbedding& e : embeddings) {
    const auto it = block.find(e.pair);
    if (it == block.end() || e.support < min_support) continue;
    auto& row = rows[e.source_id];
    if (row.features.empty()) {
      row.source_id = e.source_id;
      row.features.assign(fm.pairs.size() * fm.dim, 0.0);
      row.missing.assign(fm.pairs.size(), true);
    }
    std::copy(e.vector.begin(), e.vector.end(),
              row.features.begin() + static_cast<std::ptrdiff_t>(it->second * fm.dim));
    row.missing[it->second] = false;
  }
  for (auto& [source, row] : rows) fm.rows.push_back(std::move(row));
  return fm;
}

// ---------------------------------------------------------------------------
// Archetypical entity pairs.

struct AepOptions {
  double lambda = 1e-3;       // relative shrinkage: lambda * tr(S) / p
  std::size_t min_group = 3;  // sources per side
  bool reduce = true;         // PCA to min(d, n / 3) dims first
  bool symmetrized = false;   // Jeffreys instead of D(L || R)
  bool include_lean = true;   // lean-left in L, lean-right in R
  unsigned threads = 1;
};

struct AepScore {
  EntityPair pair;
  double divergence = 0;
  std::size_t n_left = 0, n_right = 0;
  std::size_t fit_dim = 0;
};

struct IneligiblePair {
  EntityPair pair;
  std::size_t n_left = 0, n_right = 0;
};

struct AepRanking {
  std::vector<AepScore> scores;  // descending divergence
  std::vector<IneligiblePair> ineligible;
};

inline std::optional<bool> side_of(Rating5 r, bool include_lean) {
  switch (r) {
    case Rating5::kLeft: return true;
    case Rating5::kRight: return false;
    case Rating5::kLeanLeft: return include_lean ? std::optional<bool>(true) : std::nullopt;
    case Rating5::kLeanRight: return include_lean ? std::optional<bool>(false) : std::nullopt;
    case Rating5::kCenter: return std::nullopt;
  }
  return std::nullopt;
}

// Divergence between the left and right Gaussian fits over one pair's
// source embeddings.
inline AepScore pair_divergence(const EntityPair& pair, const std::vector<std::vector<double>>& left,
                                const std::vector<std::vector<double>>& right,
                                const AepOptions& opts) {
  AepScore s;
  s.pair = pair;
  s.n_left = left.size();
  s.n_right = right.size();
  std::vector<std::vector<double>> all = left;
  all.insert(all.end(), right.begin(), right.end());
  Eigen::MatrixXd x = to_matrix(all);
  const auto n = static_cast<std::size_t>(x.rows());
  const auto d = static_cast<std::size_t>(x.cols());
  if (opts.reduce) {
    const std::size_t p = std::max<std::size_t>(1, std::min(d, n / 3));
    if (p < d) x = pca_project(x, p).projected;
  }
  s.fit_dim = static_cast<std::size_t>(x.cols());
  const auto nl = static_cast<Eigen::Index>(left.size());
  const Eigen::MatrixXd xl = x.topRows(nl);
  const Eigen::MatrixXd xr = x.bottomRows(x.rows() - nl);
  const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  const double trace = centered.squaredNorm() / static_cast<double>(n - 1);
  const double lam = trace > 0 ? opts.lambda * trace / static_cast<double>(s.fit_dim) : opts.lambda;
  const auto gl = fit_gaussian(xl, lam);
  const auto gr = fit_gaussian(xr, lam);
  const double v = opts.symmetrized ? symmetrized_kl(gl, gr) : kl_divergence(gl, gr);
  s.divergence = std::max(0.0, v);
  return s;
}

// Scores the first `top_pairs` of `ranked_pairs`. Center sources never
// enter either side.
inline AepRanking rank_aeps(std::span<const SourceEmbedding> embeddings,
                            const std::map<std::string, Rating5>& labels,
                            std::span<const EntityPair> ranked_pairs, std::size_t top_pairs,
                            const AepOptions& opts = {}) {
  if (opts.min_group < 2) throw InvalidArgument("rank_aeps: min_group must be >= 2");
  const std::size_t m = std::min(top_pairs, ranked_pairs.size());
  std::map<EntityPair, std::pair<std::vector<std::vector<double>>, std::vector<std::vector<double>>>> sides;
  std::set<EntityPair> wanted(ranked_pairs.begin(), ranked_pairs.begin() + static_cast<std::ptrdiff_t>(m));
  // Sources enter in id order so results do not depend on input order.
  std::vector<const SourceEmbedding*> sorted;
  for (const SourceEmbedding& e : embeddings) sorted.push_back(&e);
  std::sort(sorted.begin(), sorted.end(), [](const SourceEmbedding* a, const SourceEmbedding* b) {
    return std::tie(a->pair, a->source_id) < std::tie(b->pair, b->source_id);
  });
  for (const SourceEmbedding* e : sorted) {
    if (!wanted.contains(e->pair)) continue;
    const auto it = labels.find(e->source_id);
    if (it == labels.end()) continue;
    const auto side = side_of(it->second, opts.include_lean);
    if (!side) continue;
    auto& [l, r] = sides[e->pair];
    (*side ? l : r).push_back(e->vector);
  }
  std::vector<EntityPair> eligible;
  AepRanking out;
  for (std::size_t i = 0; i < m; ++i) {
    const EntityPair& p = ranked_pairs[i];
    const auto& [l, r] = sides[p];
    if (l.size() < opts.min_group || r.size() < opts.min_group) {
      out.ineligible.push_back({p, l.size(), r.size()});
    } else {
      eligible.push_back(p);
    }
  }
  out.scores.resize(eligible.size());
  parallel_for(eligible.size(), opts.threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const auto& [l, r] = sides.at(eligible[i]);
      out.scores[i] = pair_divergence(eligible[i], l, r, opts);
    }
  });
  std::stable_sort(out.scores.begin(), out.scores.end(), [](const AepScore& a, const AepScore& b) {
    return a.divergence > b.divergence;
  });
  return out;
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::string aeps_to_csv(const AepRanking& r) {
  std::string out = csv::schema_line("aeps", 1);
  out += "rank,e1,e2,divergence,n_left,n_right\n";
  for (std::size_t i = 0; i < r.scores.size(); ++i) {
    const AepScore& s = r.scores[i];
    out += csv::format_row({std::to_string(i + 1), s.pair.first(), s.pair.second(),
                            format_double(s.divergence), std::to_string(s.n_left),
                            std::to_string(s.n_right)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Per-pair polarity (heatmap).

struct HeatmapOptions {
  std::size_t min_group = 3;
  std::size_t min_sentences = 10;  // held-out cells need strictly more
  bool standardize = true;         // z-score on each pair's training rows
  ClassifierParams svm = default_params(ClassifierKind::kLinearSvm);
};

struct Heatmap {
  std::vector<std::string> sources;
  std::vector<EntityPair> pairs;
  std::vector<std::vector<std::optional<Rating3>>> cells;  // [source][pair]
  std::vector<bool> trained;                               // per pair

  std::size_t covered() const {
    std::size_t n = 0;
    for (const auto& row : cells) {
      for (const auto& c : row) n += c.has_value();
    }
    return n;
  }
};

// One linear SVM per pair, trained on labeled non-held-out sources. A
// pair trains when at least two classes have min_group sources; a cell is
// predicted only when that held-out source has more than min_sentences
// context sentences for the pair.
inline Heatmap per_pair_polarity(std::span<const SourceEmbedding> embeddings,
                                 const std::map<std::string, Rating3>& labels,
                                 std::span<const EntityPair> pairs,
                                 std::span<const std::string> holdout,
                                 const HeatmapOptions& opts = {}) {
  Heatmap h;
  h.sources.assign(holdout.begin(), holdout.end());
  h.pairs.assign(pairs.begin(), pairs.end());
  h.cells.assign(h.sources.size(), std::vector<std::optional<Rating3>>(h.pairs.size()));
  h.trained.assign(h.pairs.size(), false);
  const std::set<std::string> held(holdout.begin(), holdout.end());
  const auto idx = index_embeddings(embeddings);

  for (std::size_t pi = 0; pi < h.pairs.size(); ++pi) {
    const EntityPair& pair = h.pairs[pi];
    std::vector<std::vector<double>> rows;
    std::vector<int> y;
    std::map<int, std::size_t> per_class;
    for (const auto& [source, label] : labels) {
      if (held.contains(source)) continue;
      const auto it = idx.find({source, pair});
      if (it == idx.end()) continue;
      rows.push_back(it->second->vector);
      y.push_back(static_cast<int>(label));
      ++per_class[static_cast<int>(label)];
    }
    std::size_t big = 0;
    for (const auto& [c, n] : per_class) big += n >= opts.min_group;
    if (big < 2) continue;
    h.trained[pi] = true;
    Eigen::MatrixXd x = to_matrix(rows);
    std::optional<Standardizer> z;
    if (opts.standardize) {
      z = Standardizer::fit(x);
      x = z->apply(x);
    }
    const auto model = train_classifier(x, y, ClassifierKind::kLinearSvm, opts.svm);
    for (std::size_t si = 0; si < h.sources.size(); ++si) {
      const auto it = idx.find({h.sources[si], pair});
      if (it == idx.end() || it->second->support <= opts.min_sentences) continue;
      const std::vector<std::vector<double>> one = {it->second->vector};
      const Eigen::MatrixXd q = z ? z->apply(to_matrix(one)) : to_matrix(one);
      h.cells[si][pi] = static_cast<Rating3>(model.predict(q)[0]);
    }
  }
  return h;
}

inline std::string heatmap_to_csv(const Heatmap& h) {
  std::string out = csv::schema_line("heatmap", 1);
  csv::Row header = {"source"};
  for (const EntityPair& p : h.pairs) header.push_back(to_string(p));
  out += csv::format_row(header);
  for (std::size_t si = 0; si < h.sources.size(); ++si) {
    csv::Row row = {h.sources[si]};
    for (const auto& c : h.cells[si]) row.emplace_back(c ? to_string(*c) : "n/a");
    out += csv::format_row(row);
  }
  return out;
}

// Default held-out set: the `count` labeled sources with the most articles,
// ties by id.
inline std::vector<std::string> default_holdout(const CorpusHandle& handle,
                                                const std::map<std::string, Rating3>& labels,
                                                std::size_t count) {
  std::vector<std::pair<std::string, std::size_t>> v;
  for (const auto& [source, ids] : handle.source_index()) {
    if (labels.contains(source)) v.emplace_back(source, ids.size());
  }
  std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < v.size() && i < count; ++i) out.push_back(v[i].first);
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// PCA plot data.

struct PcaPoint {
  std::string source_id;
  std::optional<Rating3> label;
  double pc1 = 0, pc2 = 0;
};

struct PairPca {
  EntityPair pair;
  std::vector<PcaPoint> points;
  std::vector<double> explained_ratio;
};

// Sources are projected in id order. Needs at least 3 sources on the pair.
inline std::optional<PairPca> pca_for_pair(std::span<const SourceEmbedding> embeddings,
                                           const std::map<std::string, Rating3>& labels,
                                           const EntityPair& pair) {
  std::vector<const SourceEmbedding*> members;
  for (const SourceEmbedding& e : embeddings) {
    if (e.pair == pair) members.push_back(&e);
  }
  std::sort(members.begin(), members.end(), [](const auto* a, const auto* b) {
    return a->source_id < b->source_id;
  });
  if (members.size() < 3 || members.front()->vector.size() < 2) return std::nullopt;
  std::vector<std::vector<double>> vs;
  for (const auto* e : members) vs.push_back(e->vector);
  const auto r = pca_project(to_matrix(vs), 2);
  PairPca out;
  out.pair = pair;
  out.explained_ratio = r.explained_ratio;
  for (std::size_t i = 0; i < members.size(); ++i) {
    PcaPoint p;
    p.source_id = members[i]->source_id;
    if (const auto it = labels.find(p.source_id); it != labels.end()) p.label = it->second;
    p.pc1 = r.projected(static_cast<Eigen::Index>(i), 0);
    p.pc2 = r.projected(static_cast<Eigen::Index>(i), 1);
    out.points.push_back(std::move(p));
  }
  return out;
}

inline std::string pca_to_csv(const PairPca& p) {
  std::string out = csv::schema_line("pca", 1);
  out += "source,label3,pc1,pc2\n";
  for (const PcaPoint& pt : p.points) {
    out += csv::format_row({pt.source_id, pt.label ? std::string(to_string(*pt.label)) : "unlabeled",
                            format_double(pt.pc1), format_double(pt.pc2)});
  }
  return out;
}

}  // namespace selbias

#endif  // SELBIAS_ANALYTICS_HPP_
