#ifndef SELBIAS_CONTEXT_HPP_
#define SELBIAS_CONTEXT_HPP_

#include <json.hpp>

#include <algorithm>
#include <compare>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "selbias/common.hpp"
#include "selbias/corpus.hpp"
#include "selbias/entity_linking.hpp"
#include "selbias/sentences.hpp"
#include "selbias/text.hpp"
#include "selbias/time.hpp"

namespace selbias {

inline constexpr std::string_view kEntMask = "[ENT]";
inline constexpr std::string_view kRole1 = "[R1]";
inline constexpr std::string_view kRole2 = "[R2]";

// Unordered entity pair stored canonically (first < second).
class EntityPair {
 public:
  EntityPair() = default;
  EntityPair(std::string a, std::string b) {
    if (a == b) throw InvalidArgument("EntityPair: entities must differ: " + a);
    if (b < a) std::swap(a, b);
    first_ = std::move(a);
    second_ = std::move(b);
  }

  const std::string& first() const { return first_; }
  const std::string& second() const { return second_; }
  bool contains(std::string_view e) const { return e == first_ || e == second_; }
  bool shares_entity(const EntityPair& o) const {
    return contains(o.first_) || contains(o.second_);
  }

  friend auto operator<=>(const EntityPair&, const EntityPair&) = default;
  friend bool operator==(const EntityPair&, const EntityPair&) = default;

 private:
  std::string first_;
  std::string second_;
};

inline std::string to_string(const EntityPair& p) {
  return p.first() + " | " + p.second();
}

struct ContextSentence {
  std::string source_id;
  EntityPair pair;
  std::string masked_text;
  std::string article_id;
  Timestamp published_at = 0;
  std::size_t sentence_index = 0;  // index among article_sentences()
  bool from_title = false;

  friend bool operator==(const ContextSentence&, const ContextSentence&) = default;
};

// All context sentences one source wrote about one pair.
struct ContextSet {
  std::string source_id;
  EntityPair pair;
  std::vector<ContextSentence> sentences;
};

// Replaces both mentions by `[ENT]`, appends `[R1]` to the mask of the
// pair's canonical first entity and `[R2]` to the other, and masks every
// further mention in `others` that resolves to either entity with a bare
// `[ENT]`. Throws on overlapping spans or unresolved/equal entities.
inline std::string mask_pair(std::string_view sentence,
                             const EntityMention& mention1,
                             const EntityMention& mention2,
                             std::span<const EntityMention> others = {}) {
  if (!mention1.entity || !mention2.entity) {
    throw InvalidArgument("mask_pair: both mentions must be resolved");
  }
  const EntityPair pair(*mention1.entity, *mention2.entity);

  struct Edit {
    std::size_t begin, end;
    std::string_view role;  // empty for a bare mask
  };
  std::vector<Edit> edits;
  for (const EntityMention* m : {&mention1, &mention2}) {
    if (m->begin > m->end || m->end > sentence.size()) {
      throw InvalidArgument("mask_pair: mention span outside sentence");
    }
    edits.push_back({m->begin, m->end,
                     *m->entity == pair.first() ? kRole1 : kRole2});
  }
  for (const EntityMention& m : others) {
    if (!m.entity || !pair.contains(*m.entity)) continue;
    if ((m.begin == mention1.begin && m.end == mention1.end) ||
        (m.begin == mention2.begin && m.end == mention2.end)) {
      continue;
    }
    if (m.end > sentence.size()) {
      throw InvalidArgument("mask_pair: mention span outside sentence");
    }
    edits.push_back({m.begin, m.end, {}});
  }
  std::sort(edits.begin(), edits.end(),
            [](const Edit& a, const Edit& b) { return a.begin < b.begin; });
  for (std::size_t i = 1; i < edits.size(); ++i) {
    if (edits[i].begin < edits[i - 1].end) {
      throw InvalidArgument("mask_pair: overlapping mention spans");
    }
  }
  std::string out;
  std::size_t pos = 0;
  for (const Edit& e : edits) {
    out.append(sentence.substr(pos, e.begin - pos));
    out += kEntMask;
    if (!e.role.empty()) {
      out += ' ';
      out += e.role;
    }
    pos = e.end;
  }
  out.append(sentence.substr(pos));
  return out;
}

struct ExtractOptions {
  std::size_t max_entities_per_sentence = 10;
  std::size_t min_masked_tokens = 5;
  bool include_titles = true;
  unsigned threads = 1;
};

namespace detail {

// Context sentences from one article, in (sentence, pair) order.
inline std::vector<ContextSentence> extract_from_article(
    const Article& article, const std::set<std::string, std::less<>>& topics,
    const AnchorTable& table, const ExtractOptions& opts) {
  std::vector<ContextSentence> out;
  std::vector<std::string> sentences;
  if (opts.include_titles && !article.title.empty()) {
    sentences.push_back(article.title);
  }
  const std::size_t body_offset = sentences.size();
  for (auto& s : split_sentences(article.body)) sentences.push_back(std::move(s));

  for (std::size_t si = 0; si < sentences.size(); ++si) {
    const std::string& sentence = sentences[si];
    std::vector<EntityMention> mentions;
    for (EntityMention& m : detect_mentions(sentence, table)) {
      if (m.entity && topics.contains(*m.entity)) mentions.push_back(std::move(m));
    }
    // First mention of each distinct entity, in textual order.
    std::vector<std::size_t> firsts;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < mentions.size(); ++i) {
      if (seen.insert(*mentions[i].entity).second) firsts.push_back(i);
    }
    if (firsts.size() > opts.max_entities_per_sentence) {
      firsts.resize(opts.max_entities_per_sentence);
    }
    for (std::size_t a = 0; a < firsts.size(); ++a) {
      for (std::size_t b = a + 1; b < firsts.size(); ++b) {
        const EntityMention& m1 = mentions[firsts[a]];
        const EntityMention& m2 = mentions[firsts[b]];
        ContextSentence c;
        c.masked_text = mask_pair(sentence, m1, m2, mentions);
        if (text::split_spaces(c.masked_text).size() < opts.min_masked_tokens) {
          continue;
        }
        c.source_id = article.source_id;
        c.pair = EntityPair(*m1.entity, *m2.entity);
        c.article_id = article.article_id;
        c.published_at = article.published_at;
        c.sentence_index = si;
        c.from_title = si < body_offset;
        out.push_back(std::move(c));
      }
    }
  }
  return out;
}

}  // namespace detail

// Every sentence with >= 2 distinct resolved catalog entities yields one
// ContextSentence per unordered entity pair (first mention of each masked).
// Output is grouped by (source, pair) and sorted by (source, pair,
// article_id, sentence index).
inline std::vector<ContextSet> extract_context_sentences(
    const CorpusHandle& handle, const EntityCatalog& catalog,
    const AnchorTable& table, const ExtractOptions& opts = {}) {
  if (catalog.entries.empty()) {
    throw InvalidArgument("extract_context_sentences: empty entity catalog");
  }
  std::set<std::string, std::less<>> topics;
  for (const auto& e : catalog.entries) topics.insert(e.title);

  const auto articles = handle.articles();
  std::vector<std::vector<ContextSentence>> per_article(articles.size());
  parallel_for(articles.size(), opts.threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      per_article[i] = detail::extract_from_article(articles[i], topics, table, opts);
    }
  });

  std::map<std::pair<std::string, EntityPair>, std::vector<ContextSentence>> grouped;
  for (auto& sentences : per_article) {
    for (ContextSentence& c : sentences) {
      grouped[{c.source_id, c.pair}].push_back(std::move(c));
    }
  }
  std::vector<ContextSet> out;
  out.reserve(grouped.size());
  for (auto& [key, sentences] : grouped) {
    std::stable_sort(sentences.begin(), sentences.end(),
                     [](const ContextSentence& a, const ContextSentence& b) {
                       return std::tie(a.article_id, a.sentence_index) <
                              std::tie(b.article_id, b.sentence_index);
                     });
    out.push_back({key.first, key.second, std::move(sentences)});
  }
  return out;
}

// Sentences per pair summed over sources.
inline std::map<EntityPair, std::size_t> pair_sentence_counts(
    std::span<const ContextSet> sets) {
  std::map<EntityPair, std::size_t> counts;
  for (const ContextSet& s : sets) counts[s.pair] += s.sentences.size();
  return counts;
}

// Pairs ordered by total sentence count descending, ties by pair order.
inline std::vector<EntityPair> rank_pairs_by_frequency(
    std::span<const ContextSet> sets) {
  std::vector<std::pair<EntityPair, std::size_t>> ranked;
  for (auto& [pair, n] : pair_sentence_counts(sets)) ranked.emplace_back(pair, n);
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<EntityPair> out;
  out.reserve(ranked.size());
  for (auto& [pair, n] : ranked) out.push_back(pair);
  return out;
}

// ---------------------------------------------------------------------------
// JSON Lines persistence: a schema header object, then one object per
// ContextSentence.

inline std::string contexts_to_jsonl(std::span<const ContextSet> sets) {
  std::string out = R"({"schema":"selbias.contexts","version":1})" "\n";
  for (const ContextSet& set : sets) {
    for (const ContextSentence& c : set.sentences) {
      nlohmann::ordered_json obj;
      obj["source"] = c.source_id;
      obj["e1"] = c.pair.first();
      obj["e2"] = c.pair.second();
      obj["masked_text"] = c.masked_text;
      obj["article_id"] = c.article_id;
      obj["date"] = format_timestamp(c.published_at);
      obj["sentence_index"] = c.sentence_index;
      obj["from_title"] = c.from_title;
      out += obj.dump();
      out += '\n';
    }
  }
  return out;
}

inline std::vector<ContextSet> contexts_from_jsonl(std::string_view data) {
  std::map<std::pair<std::string, EntityPair>, std::vector<ContextSentence>> grouped;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < data.size()) {
    auto end = data.find('\n', start);
    if (end == std::string_view::npos) end = data.size();
    const std::string_view line = data.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (text::trim(line).empty()) continue;
    const auto obj = nlohmann::json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) {
      throw ParseError("contexts line " + std::to_string(line_no) + ": invalid JSON");
    }
    if (obj.contains("schema")) continue;
    try {
      ContextSentence c;
      c.source_id = obj.at("source").get<std::string>();
      c.pair = EntityPair(obj.at("e1").get<std::string>(),
                          obj.at("e2").get<std::string>());
      c.masked_text = obj.at("masked_text").get<std::string>();
      c.article_id = obj.at("article_id").get<std::string>();
      const auto ts = parse_timestamp(obj.at("date").get<std::string>());
      if (!ts) throw ParseError("bad date");
      c.published_at = *ts;
      c.sentence_index = obj.value("sentence_index", std::size_t{0});
      c.from_title = obj.value("from_title", false);
      grouped[{c.source_id, c.pair}].push_back(std::move(c));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("contexts line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw ParseError("contexts line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  std::vector<ContextSet> out;
  for (auto& [key, sentences] : grouped) {
    out.push_back({key.first, key.second, std::move(sentences)});
  }
  return out;
}

}  // namespace selbias

#endif  // SELBIAS_CONTEXT_HPP_
