#ifndef SELBIAS_ENTITY_LINKING_HPP_
#define SELBIAS_ENTITY_LINKING_HPP_

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "selbias/common.hpp"
#include "selbias/corpus.hpp"
#include "selbias/csv.hpp"
#include "selbias/sentences.hpp"
#include "selbias/text.hpp"

namespace selbias {

// Mention -> (title -> link count) statistics. P(title | mention) is
// count / total(mention).
class AnchorTable {
 public:
  using Counts = std::map<std::string, std::uint64_t>;

  // Adds `count` links from `mention` to `title`. Zero counts are ignored.
  void add(std::string_view mention, std::string_view title,
           std::uint64_t count = 1) {
    if (count == 0) return;
    auto [it, inserted] = entries_.try_emplace(std::string(mention));
    it->second[std::string(title)] += count;
    totals_[it->first] += count;
    if (inserted) {
      folded_[text::lower(mention)].emplace_back(first_code_point(mention),
                                                 it->first);
      max_mention_chars_ =
          std::max(max_mention_chars_, text::decode(mention).size());
    }
  }

  // Sums another table into this one.
  void merge(const AnchorTable& other) {
    for (const auto& [mention, counts] : other.entries_) {
      for (const auto& [title, count] : counts) add(mention, title, count);
    }
  }

  // Drops mentions whose total is below `min_total`.
  AnchorTable pruned(std::uint64_t min_total) const {
    AnchorTable out;
    out.prune_threshold_ = std::max(prune_threshold_, min_total);
    for (const auto& [mention, counts] : entries_) {
      if (totals_.at(mention) < min_total) continue;
      for (const auto& [title, count] : counts) out.add(mention, title, count);
    }
    return out;
  }

  bool empty() const { return entries_.empty(); }
  std::size_t mention_count() const { return entries_.size(); }
  std::size_t entry_count() const {
    std::size_t n = 0;
    for (const auto& [m, counts] : entries_) n += counts.size();
    return n;
  }
  std::uint64_t prune_threshold() const { return prune_threshold_; }
  std::size_t max_mention_chars() const { return max_mention_chars_; }

  const Counts* find(std::string_view mention) const {
    auto it = entries_.find(std::string(mention));
    return it == entries_.end() ? nullptr : &it->second;
  }

  std::uint64_t total(std::string_view mention) const {
    auto it = totals_.find(std::string(mention));
    return it == totals_.end() ? 0 : it->second;
  }

  std::uint64_t count(std::string_view mention, std::string_view title) const {
    const Counts* counts = find(mention);
    if (!counts) return 0;
    auto it = counts->find(std::string(title));
    return it == counts->end() ? 0 : it->second;
  }

  double probability(std::string_view mention, std::string_view title) const {
    const std::uint64_t t = total(mention);
    return t == 0 ? 0.0 : static_cast<double>(count(mention, title)) / t;
  }

  // Table mentions equal to `surface` up to case on every code point but the
  // first, which must match exactly. Exact match comes first.
  std::vector<std::string_view> candidates(std::string_view surface) const {
    std::vector<std::string_view> out;
    if (surface.empty()) return out;
    auto it = folded_.find(text::lower(surface));
    if (it == folded_.end()) return out;
    const char32_t first = first_code_point(surface);
    for (const auto& [cp, m] : it->second) {
      if (cp == first) out.push_back(m);
    }
    std::sort(out.begin(), out.end(), [surface](std::string_view a, std::string_view b) {
      if ((a == surface) != (b == surface)) return a == surface;
      return a < b;
    });
    return out;
  }

  // Same test as candidates() on an already lowercased key.
  bool has_folded(const std::string& folded_key, char32_t first) const {
    auto it = folded_.find(folded_key);
    if (it == folded_.end()) return false;
    return std::any_of(it->second.begin(), it->second.end(),
                       [first](const auto& c) { return c.first == first; });
  }

  const std::map<std::string, Counts>& entries() const { return entries_; }

  static char32_t first_code_point(std::string_view s) {
    if (s.empty()) return 0;
    return text::decode(s.substr(0, std::min<std::size_t>(4, s.size())))
        .front()
        .value;
  }

  // Sorted `mention \t title \t count` lines behind a schema comment.
  std::string to_tsv() const {
    std::string out = csv::schema_line("anchors", 1);
    for (const auto& [mention, counts] : entries_) {
      for (const auto& [title, count] : counts) {
        out += mention;
        out += '\t';
        out += title;
        out += '\t';
        out += std::to_string(count);
        out += '\n';
      }
    }
    return out;
  }

  nlohmann::ordered_json manifest() const {
    nlohmann::ordered_json m;
    m["schema"] = "selbias.anchors";
    m["version"] = 1;
    m["entry_count"] = entry_count();
    m["mention_count"] = mention_count();
    m["prune_threshold"] = prune_threshold_;
    return m;
  }

  void set_prune_threshold(std::uint64_t t) { prune_threshold_ = t; }

 private:
  std::map<std::string, Counts> entries_;
  std::map<std::string, std::uint64_t, std::less<>> totals_;
  std::unordered_map<std::string, std::vector<std::pair<char32_t, std::string>>>
      folded_;
  std::size_t max_mention_chars_ = 0;
  std::uint64_t prune_threshold_ = 0;
};

struct LinkTriple {
  std::string source_page;
  std::string anchor;
  std::string target;
};

struct AnchorBuildResult {
  AnchorTable table;
  std::vector<RecordError> errors;
};

// Counts (anchor, target) co-occurrences; triples with an empty anchor or
// target are reported by position (1-based) and skipped.
inline AnchorBuildResult build_anchor_table(std::span<const LinkTriple> triples) {
  AnchorBuildResult result;
  for (std::size_t i = 0; i < triples.size(); ++i) {
    const std::string anchor = text::normalize(triples[i].anchor);
    const std::string target = text::normalize(triples[i].target);
    if (anchor.empty() || target.empty()) {
      result.errors.push_back(
          {i + 1, anchor.empty() ? "empty anchor text" : "empty target title"});
      continue;
    }
    result.table.add(anchor, target, 1);
  }
  return result;
}

namespace detail {

inline bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(),
                                   [](char c) { return c >= '0' && c <= '9'; });
}

}  // namespace detail

// Reads link TSV. Each line is either pre-aggregated `anchor \t target \t
// count` (third field all digits) or raw `source \t anchor \t target`.
// Lines starting with '#' are comments. Shards are counted in parallel and
// summed, so the result does not depend on `threads`.
inline AnchorBuildResult parse_link_tsv(std::string_view data,
                                        unsigned threads = 1) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < data.size()) {
    auto end = data.find('\n', start);
    if (end == std::string_view::npos) end = data.size();
    lines.push_back(data.substr(start, end - start));
    start = end + 1;
  }
  const unsigned shards = std::max(1u, threads);
  std::vector<AnchorBuildResult> partial(shards);
  const std::size_t chunk = (lines.size() + shards - 1) / shards;
  parallel_for(shards, threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t s = b; s < e; ++s) {
      const std::size_t lo = s * chunk;
      const std::size_t hi = std::min(lines.size(), lo + chunk);
      for (std::size_t i = lo; i < hi; ++i) {
        std::string_view line = lines[i];
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty() || line.front() == '#') continue;
        const auto fields = text::split(line, '\t');
        if (fields.size() != 3) {
          partial[s].errors.push_back({i + 1, "expected 3 tab-separated fields"});
          continue;
        }
        std::string anchor, target;
        std::uint64_t count = 1;
        if (detail::all_digits(fields[2])) {
          anchor = text::normalize(fields[0]);
          target = text::normalize(fields[1]);
          count = std::stoull(fields[2]);
        } else {
          anchor = text::normalize(fields[1]);
          target = text::normalize(fields[2]);
        }
        if (anchor.empty() || target.empty() || count == 0) {
          partial[s].errors.push_back(
              {i + 1, anchor.empty()   ? "empty anchor text"
                      : target.empty() ? "empty target title"
                                       : "zero count"});
          continue;
        }
        partial[s].table.add(anchor, target, count);
      }
    }
  });
  AnchorBuildResult result;
  for (auto& p : partial) {
    result.table.merge(p.table);
    result.errors.insert(result.errors.end(), p.errors.begin(), p.errors.end());
  }
  return result;
}

// Reads a table written by AnchorTable::to_tsv (all lines pre-aggregated).
inline AnchorTable load_anchor_table(const std::filesystem::path& tsv,
                                     std::uint64_t prune_threshold = 0) {
  AnchorBuildResult r = parse_link_tsv(read_file(tsv));
  if (!r.errors.empty()) {
    throw ParseError(tsv.string() + ":" + std::to_string(r.errors[0].line) +
                     ": " + r.errors[0].message);
  }
  r.table.set_prune_threshold(prune_threshold);
  return r.table;
}

inline void save_anchor_table(const AnchorTable& table,
                              const std::filesystem::path& tsv,
                              const std::filesystem::path& manifest) {
  write_file(tsv, table.to_tsv());
  write_file(manifest, table.manifest().dump(2) + "\n");
}

// argmax_t count(m, t), ties broken by the lexicographically smallest title.
// A surface absent from the table falls back to the smallest table mention
// that differs from it only in the case of non-initial characters.
inline std::optional<std::string> link_mention(std::string_view mention,
                                               const AnchorTable& table) {
  const AnchorTable::Counts* counts = table.find(mention);
  if (!counts) {
    const auto cands = table.candidates(mention);
    if (cands.empty()) return std::nullopt;
    counts = table.find(cands.front());
  }
  const std::string* best = nullptr;
  std::uint64_t best_count = 0;
  for (const auto& [title, count] : *counts) {
    if (count > best_count) {
      best = &title;
      best_count = count;
    }
  }
  if (!best) return std::nullopt;
  return *best;
}

struct EntityMention {
  std::string article_id;
  std::size_t sentence_index = 0;
  std::size_t begin = 0;  // byte offsets into the sentence
  std::size_t end = 0;
  std::string surface;
  std::optional<std::string> entity;
};

// Leftmost-longest, token-aligned gazetteer matches of anchor mentions. A
// match must start with an uppercase letter or digit that equals the
// table mention's first character; the rest matches case-insensitively.
inline std::vector<EntityMention> detect_mentions(std::string_view sentence,
                                                  const AnchorTable& table) {
  std::vector<EntityMention> out;
  if (table.empty() || sentence.empty()) return out;
  const auto cps = text::decode(sentence);
  const std::size_t n = cps.size();
  std::string folded;
  std::vector<std::size_t> offset(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    offset[i] = folded.size();
    text::append_utf8(folded, text::to_lower(cps[i].value));
  }
  offset[n] = folded.size();
  auto alnum = [&](std::size_t i) { return text::is_alnum(cps[i].value); };

  const std::size_t max_len = table.max_mention_chars();
  std::string key;
  std::size_t k = 0;
  while (k < n) {
    const bool token_start = alnum(k) && (k == 0 || !alnum(k - 1));
    const char32_t first = cps[k].value;
    if (!token_start || !(text::is_upper(first) || text::is_digit(first))) {
      ++k;
      continue;
    }
    bool matched = false;
    for (std::size_t e = std::min(n, k + max_len); e > k; --e) {
      if (e < n && alnum(e) && alnum(e - 1)) continue;  // mid-token end
      key.assign(folded, offset[k], offset[e] - offset[k]);
      if (!table.has_folded(key, first)) continue;
      const std::string_view surface =
          sentence.substr(cps[k].begin, cps[e - 1].end - cps[k].begin);
      EntityMention m;
      m.begin = cps[k].begin;
      m.end = cps[e - 1].end;
      m.surface = std::string(surface);
      m.entity = link_mention(surface, table);
      out.push_back(std::move(m));
      k = e;
      matched = true;
      break;
    }
    if (!matched) ++k;
  }
  return out;
}

struct CatalogEntry {
  std::string title;
  std::uint64_t frequency = 0;

  friend bool operator==(const CatalogEntry&, const CatalogEntry&) = default;
};

// Topic entities ordered by frequency descending, ties by title.
struct EntityCatalog {
  std::vector<CatalogEntry> entries;
  std::size_t cutoff = 0;

  bool contains(std::string_view title) const {
    return std::any_of(entries.begin(), entries.end(),
                       [&](const CatalogEntry& e) { return e.title == title; });
  }

  std::string to_csv() const {
    std::string out = csv::schema_line("catalog", 1);
    out += "rank,title,frequency\n";
    for (std::size_t i = 0; i < entries.size(); ++i) {
      out += csv::format_row({std::to_string(i + 1), entries[i].title,
                              std::to_string(entries[i].frequency)});
    }
    return out;
  }

  static EntityCatalog from_csv(std::string_view data) {
    const csv::Table t = csv::parse(data);
    const std::size_t c_title = csv::column(t, "title");
    const std::size_t c_freq = csv::column(t, "frequency");
    EntityCatalog catalog;
    for (const auto& row : t.rows) {
      catalog.entries.push_back({row.at(c_title), std::stoull(row.at(c_freq))});
    }
    catalog.cutoff = catalog.entries.size();
    return catalog;
  }
};

// Sentences the pipeline reads from an article: the title (if any) as a
// one-sentence prefix, then the body's sentences.
inline std::vector<std::string> article_sentences(const Article& a) {
  std::vector<std::string> out;
  if (!a.title.empty()) out.push_back(a.title);
  for (auto& s : split_sentences(a.body)) out.push_back(std::move(s));
  return out;
}

// Number of resolved mentions per entity across all article sentences.
inline std::map<std::string, std::uint64_t> entity_frequencies(
    const CorpusHandle& handle, const AnchorTable& table, unsigned threads = 1) {
  const auto articles = handle.articles();
  std::vector<std::map<std::string, std::uint64_t>> partial(articles.size());
  parallel_for(articles.size(), threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      for (const std::string& s : article_sentences(articles[i])) {
        for (const EntityMention& m : detect_mentions(s, table)) {
          if (m.entity) ++partial[i][*m.entity];
        }
      }
    }
  });
  std::map<std::string, std::uint64_t> freq;
  for (const auto& p : partial) {
    for (const auto& [title, n] : p) freq[title] += n;
  }
  return freq;
}

inline EntityCatalog top_k_entities(const CorpusHandle& handle,
                                    const AnchorTable& table, std::size_t k,
                                    unsigned threads = 1) {
  if (k < 1) throw InvalidArgument("top_k_entities: k must be >= 1");
  EntityCatalog catalog;
  catalog.cutoff = k;
  for (const auto& [title, n] : entity_frequencies(handle, table, threads)) {
    catalog.entries.push_back({title, n});
  }
  std::stable_sort(catalog.entries.begin(), catalog.entries.end(),
                   [](const CatalogEntry& a, const CatalogEntry& b) {
                     if (a.frequency != b.frequency) return a.frequency > b.frequency;
                     return a.title < b.title;
                   });
  if (catalog.entries.size() > k) catalog.entries.resize(k);
  return catalog;
}

}  // namespace selbias

#endif  // SELBIAS_ENTITY_LINKING_HPP_
