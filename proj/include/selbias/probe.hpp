#ifndef SELBIAS_PROBE_HPP_
#define SELBIAS_PROBE_HPP_

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "selbias/analytics.hpp"
#include "selbias/common.hpp"
#include "selbias/corpus.hpp"
#include "selbias/csv.hpp"
#include "selbias/encoder.hpp"
#include "selbias/text.hpp"

namespace selbias {

struct LexiconEntry {
  std::string verb;
  int polarity = 1;  // +1 positive, -1 negative
};

struct PredicateEntry {
  std::string verb;
  int polarity = 1;
  std::uint64_t frequency = 0;

  friend bool operator==(const PredicateEntry&, const PredicateEntry&) = default;
};

struct LexiconLoadResult {
  std::vector<LexiconEntry> entries;
  std::vector<RecordError> errors;
};

inline std::optional<int> parse_polarity(std::string_view s) {
  const std::string v = text::lower(text::trim(s));
  if (v == "positive" || v == "+1" || v == "1") return 1;
  if (v == "negative" || v == "-1") return -1;
  return std::nullopt;
}

// CSV `verb,polarity` with polarity positive|negative. Duplicate verbs keep
// the first row.
inline LexiconLoadResult parse_lexicon(std::string_view data) {
  const csv::Table t = csv::parse(data);
  const std::size_t cv = csv::column(t, "verb");
  const std::size_t cp = csv::column(t, "polarity");
  LexiconLoadResult r;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    const std::size_t line = t.line_numbers[i];
    if (row.size() <= std::max(cv, cp)) {
      r.errors.push_back({line, "missing columns"});
      continue;
    }
    const std::string verb = text::lower(text::trim(row[cv]));
    const auto pol = parse_polarity(row[cp]);
    if (verb.empty() || verb.find(' ') != std::string::npos) {
      r.errors.push_back({line, "verb must be a single token"});
      continue;
    }
    if (!pol) {
      r.errors.push_back({line, "polarity must be positive or negative, got '" + row[cp] + "'"});
      continue;
    }
    if (!seen.insert(verb).second) {
      r.errors.push_back({line, "duplicate verb '" + verb + "'"});
      continue;
    }
    r.entries.push_back({verb, *pol});
  }
  return r;
}

inline std::string lexicon_to_csv(std::span<const LexiconEntry> entries) {
  std::string out = csv::schema_line("lexicon", 1);
  out += "verb,polarity\n";
  for (const auto& e : entries) {
    out += csv::format_row({e.verb, e.polarity > 0 ? "positive" : "negative"});
  }
  return out;
}

struct PredicateSelection {
  std::vector<PredicateEntry> predicates;  // positives then negatives
  std::vector<std::string> warnings;
};

// Body token counts of each lexicon verb; the n_per_class most frequent per
// polarity, ties by verb.
inline PredicateSelection select_predicates(std::span<const LexiconEntry> lexicon,
                                            const CorpusHandle& handle, std::size_t n_per_class,
                                            unsigned threads = 1) {
  if (lexicon.empty()) throw InvalidArgument("select_predicates: empty lexicon");
  std::map<std::string, std::uint64_t> wanted;
  for (const auto& e : lexicon) wanted[e.verb] = 0;
  const auto articles = handle.articles();
  std::vector<std::map<std::string, std::uint64_t>> partial(articles.size());
  parallel_for(articles.size(), threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      for (const std::string& tok : text::word_tokens(articles[i].body)) {
        if (wanted.contains(tok)) ++partial[i][tok];
      }
    }
  });
  for (const auto& p : partial) {
    for (const auto& [verb, n] : p) wanted[verb] += n;
  }
  PredicateSelection sel;
  for (int pol : {1, -1}) {
    std::vector<PredicateEntry> cls;
    for (const auto& e : lexicon) {
      if (e.polarity == pol) cls.push_back({e.verb, pol, wanted[e.verb]});
    }
    std::sort(cls.begin(), cls.end(), [](const PredicateEntry& a, const PredicateEntry& b) {
      if (a.frequency != b.frequency) return a.frequency > b.frequency;
      return a.verb < b.verb;
    });
    if (cls.size() < n_per_class) {
      sel.warnings.push_back("lexicon has " + std::to_string(cls.size()) + " " +
                             (pol > 0 ? "positive" : "negative") + " verbs, fewer than the " +
                             std::to_string(n_per_class) + " requested; using all");
    } else {
      cls.resize(n_per_class);
    }
    sel.predicates.insert(sel.predicates.end(), cls.begin(), cls.end());
  }
  return sel;
}

// "[ENT] [R1] <verb> [ENT] [R2] ."; `swapped` puts [R2] in the subject slot.
inline std::string build_prompt(std::string_view verb, bool swapped = false) {
  const auto v = text::trim(verb);
  if (v.empty()) throw InvalidArgument("build_prompt: empty verb");
  const std::string_view a = swapped ? kRole2 : kRole1;
  const std::string_view b = swapped ? kRole1 : kRole2;
  std::string out;
  out.append(kEntMask).append(" ").append(a).append(" ").append(v).append(" ");
  out.append(kEntMask).append(" ").append(b).append(" .");
  return out;
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidArgument("cosine: dimension mismatch");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) throw InvalidArgument("cosine: zero-norm vector");
  return dot / std::sqrt(na * nb);
}

struct ProbeOptions {
  std::size_t top_k = 10;
  double temperature = 1.0;
  bool both_orderings = false;
};

struct ProbeResult {
  std::string source_id;
  EntityPair pair;
  double score = 0;
  std::vector<std::pair<std::string, double>> top;  // (verb, weight)
};

// Top-k by similarity (ties by verb), softmax(sim / temperature) weights,
// score = sum of weight * polarity.
inline ProbeResult probe_from_similarities(std::span<const double> sims,
                                           std::span<const PredicateEntry> predicates,
                                           std::size_t top_k, double temperature = 1.0) {
  if (sims.size() != predicates.size()) throw InvalidArgument("probe: size mismatch");
  if (top_k < 1 || predicates.size() < top_k) {
    throw InvalidArgument("probe: need at least top_k (" + std::to_string(top_k) +
                          ") predicates, have " + std::to_string(predicates.size()));
  }
  if (!(temperature > 0)) throw InvalidArgument("probe: temperature must be > 0");
  std::vector<std::size_t> order(sims.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (sims[a] != sims[b]) return sims[a] > sims[b];
    return predicates[a].verb < predicates[b].verb;
  });
  order.resize(top_k);
  const double mx = sims[order[0]];
  std::vector<double> w(top_k);
  double z = 0;
  for (std::size_t i = 0; i < top_k; ++i) {
    w[i] = std::exp((sims[order[i]] - mx) / temperature);
    z += w[i];
  }
  // Numerator and normalizer summed in the same order: an all-positive
  // neighborhood gives exactly 1 and flipping polarities exactly negates.
  ProbeResult r;
  double num = 0;
  for (std::size_t i = 0; i < top_k; ++i) {
    num += w[i] * predicates[order[i]].polarity;
    r.top.emplace_back(predicates[order[i]].verb, w[i] / z);
  }
  r.score = std::clamp(num / z, -1.0, 1.0);
  return r;
}

// Prompt embeddings, computed once per predicate.
struct PromptBank {
  std::vector<PredicateEntry> predicates;
  std::vector<std::vector<double>> forward;  // [R1] subject
  std::vector<std::vector<double>> swapped;  // [R2] subject
};

template <typename Real>
PromptBank build_prompt_bank(std::span<const PredicateEntry> predicates,
                             const ContextEncoder<Real>& encoder) {
  PromptBank bank;
  bank.predicates.assign(predicates.begin(), predicates.end());
  for (const auto& p : predicates) {
    const auto f = encoder.embed(build_prompt(p.verb));
    const auto s = encoder.embed(build_prompt(p.verb, true));
    bank.forward.emplace_back(f.begin(), f.end());
    bank.swapped.emplace_back(s.begin(), s.end());
  }
  return bank;
}

inline ProbeResult probe_score(const SourceEmbedding& embedding, const PromptBank& bank,
                               const ProbeOptions& opts = {}) {
  std::vector<double> sims(bank.predicates.size());
  for (std::size_t i = 0; i < sims.size(); ++i) {
    sims[i] = cosine(embedding.vector, bank.forward[i]);
    if (opts.both_orderings) sims[i] = 0.5 * (sims[i] + cosine(embedding.vector, bank.swapped[i]));
  }
  ProbeResult r = probe_from_similarities(sims, bank.predicates, opts.top_k, opts.temperature);
  r.source_id = embedding.source_id;
  r.pair = embedding.pair;
  return r;
}

inline std::string probe_to_csv(std::span<const ProbeResult> results,
                                const std::map<std::string, Rating3>& labels) {
  std::string out = csv::schema_line("probe", 1);
  out += "source,label3,e1,e2,score,top_predicates\n";
  for (const ProbeResult& r : results) {
    std::string top;
    for (const auto& [verb, w] : r.top) {
      if (!top.empty()) top += ';';
      top += verb + ":" + format_double(w);
    }
    const auto it = labels.find(r.source_id);
    out += csv::format_row({r.source_id,
                            it == labels.end() ? "unlabeled" : std::string(to_string(it->second)),
                            r.pair.first(), r.pair.second(), format_double(r.score), top});
  }
  return out;
}

}  // namespace selbias

#endif  // SELBIAS_PROBE_HPP_
