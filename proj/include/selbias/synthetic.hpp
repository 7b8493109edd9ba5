#ifndef SELBIAS_SYNTHETIC_HPP_
#define SELBIAS_SYNTHETIC_HPP_

#include <algorithm>
#include <array>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "selbias/common.hpp"
#include "selbias/context.hpp"
#include "selbias/corpus.hpp"
#include "selbias/csv.hpp"
#include "selbias/entity_linking.hpp"
#include "selbias/probe.hpp"

// Generated corpora with planted selection bias: a few entity pairs are
// described with group-specific context words, the rest with words every
// group shares.
namespace selbias::synthetic {

struct Options {
  std::size_t left = 15, right = 15, center = 10;
  std::size_t planted = 5, shared = 25;
  std::size_t planted_min = 14, planted_max = 18;  // sentences per source
  std::size_t shared_min = 4, shared_max = 9;
  std::size_t vocab_size = 12;  // words per (pair, group) vocabulary
  std::size_t articles_per_source = 0;  // 0: sentences_per_article decides
  std::size_t sentences_per_article = 6;
  // Two classes only; planted pairs 0 and 1 each get two vocabulary
  // variants and a source is left when its variant bits agree.
  bool xor_labels = false;
  std::uint64_t seed = 7;
};

struct Corpus {
  std::vector<Article> articles;
  std::vector<SourceLabel> labels;
  std::map<std::string, Rating3> groups;
  std::vector<std::string> entities;  // titles
  std::vector<EntityPair> planted, shared;
  std::vector<LinkTriple> links;
  std::vector<LexiconEntry> lexicon;
  std::vector<std::string> holdout;  // 3 left, 3 right, 2 center when available

  std::string articles_jsonl() const {
    std::vector<Article> sorted = articles;
    std::sort(sorted.begin(), sorted.end(),
              [](const Article& a, const Article& b) { return a.article_id < b.article_id; });
    std::string out;
    for (const Article& a : sorted) out += article_to_jsonl(a);
    return out;
  }

  std::string labels_csv() const {
    std::string out = "source_id,rating5,provenance\n";
    for (const SourceLabel& l : labels) {
      out += csv::format_row({l.source_id, std::string(to_string(l.rating5)),
                              std::string(to_string(l.provenance))});
    }
    return out;
  }

  std::string links_tsv() const {
    std::string out = "# source_page\tanchor\ttarget\n";
    for (const LinkTriple& t : links) out += t.source_page + "\t" + t.anchor + "\t" + t.target + "\n";
    return out;
  }

  std::string lexicon_csv() const {
    std::string out = "verb,polarity\n";
    for (const auto& e : lexicon) out += e.verb + "," + (e.polarity > 0 ? "positive" : "negative") + "\n";
    return out;
  }

  CorpusHandle handle() const { return CorpusHandle(articles); }

  std::map<std::string, Rating5> ratings() const {
    std::map<std::string, Rating5> out;
    for (const SourceLabel& l : labels) out[l.source_id] = l.rating5;
    return out;
  }
};

inline constexpr std::array<std::string_view, 10> kNameSyllables = {
    "ka", "lo", "mi", "ren", "dor", "vex", "tal", "sur", "bin", "mo"};
inline constexpr std::array<std::string_view, 20> kWordSyllables = {
    "ba", "be", "bi", "bo", "bu", "da", "de", "di", "fo", "fu",
    "ga", "ge", "ku", "la", "ne", "pi", "po", "ru", "se", "ti"};
inline constexpr std::array<std::string_view, 10> kPositiveVerbs = {
    "praise", "support", "defend", "welcome", "endorse",
    "applaud", "help", "protect", "honor", "thank"};
inline constexpr std::array<std::string_view, 10> kNegativeVerbs = {
    "attack", "blame", "condemn", "criticize", "accuse",
    "reject", "slam", "oppose", "denounce", "threaten"};

inline std::string entity_name(std::size_t i) {
  if (i >= 100) throw InvalidArgument("synthetic: at most 100 entities");
  std::string s = std::string(kNameSyllables[i / 10]) + std::string(kNameSyllables[i % 10]) + "an";
  s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

// Distinct lowercase three-syllable pseudo-word per id.
inline std::string context_word(std::size_t id) {
  std::string s;
  for (int k = 0; k < 3; ++k) {
    s += kWordSyllables[id % kWordSyllables.size()];
    id /= kWordSyllables.size();
  }
  if (id > 0) throw InvalidArgument("synthetic: context word id out of range");
  return s;
}

namespace detail {

class WordPool {
 public:
  std::vector<std::string> take(std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(context_word(next_++));
    return out;
  }

 private:
  std::size_t next_ = 0;
};

inline std::string sentence(const std::string& e1, const std::string& e2,
                            const std::vector<std::string>& vocab, Rng& rng) {
  auto w = [&] { return vocab[rng.index(vocab.size())]; };
  const bool flip = rng.index(2) == 1;
  std::string s = flip ? e2 : e1;
  for (int i = 0; i < 3; ++i) s += " " + w();
  s += " " + (flip ? e1 : e2);
  for (int i = 0; i < 3; ++i) s += " " + w();
  return s + ".";
}

}  // namespace detail

inline Corpus generate(const Options& o) {
  if (o.xor_labels && o.planted < 2) throw InvalidArgument("synthetic: xor needs 2 planted pairs");
  const std::size_t n_pairs = o.planted + o.shared;
  if (2 * n_pairs > 100) throw InvalidArgument("synthetic: too many pairs");
  if (o.planted_min > o.planted_max || o.shared_min > o.shared_max || o.shared_min < 1) {
    throw InvalidArgument("synthetic: bad sentence ranges");
  }
  Rng rng(o.seed);
  Corpus c;
  for (std::size_t i = 0; i < 2 * n_pairs; ++i) c.entities.push_back(entity_name(i));
  for (std::size_t i = 0; i < n_pairs; ++i) {
    (i < o.planted ? c.planted : c.shared).emplace_back(c.entities[2 * i], c.entities[2 * i + 1]);
  }
  for (std::size_t i = 0; i < c.entities.size(); ++i) {
    const std::string& e = c.entities[i];
    for (int k = 0; k < 5; ++k) c.links.push_back({"Page_" + std::to_string(i * 7 + k), e, e});
    c.links.push_back({"Page_" + std::to_string(i * 7 + 5), e, e + "_(disambiguation)"});
  }

  // Sources, interleaved so id order does not follow group.
  struct Src {
    std::string id;
    Rating3 group;
    int bit_a = 0, bit_b = 0;
  };
  std::vector<Src> sources;
  std::vector<Rating3> groups;
  if (o.xor_labels) {
    groups.assign(o.left + o.right + o.center, Rating3::kLeft);  // relabelled below
  } else {
    groups.insert(groups.end(), o.left, Rating3::kLeft);
    groups.insert(groups.end(), o.right, Rating3::kRight);
    groups.insert(groups.end(), o.center, Rating3::kCenter);
  }
  std::vector<std::size_t> order(groups.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  for (std::size_t i = 0; i < groups.size(); ++i) {
    Src s;
    char buf[32];
    std::snprintf(buf, sizeof buf, "outlet-%02zu", i + 1);
    s.id = buf;
    const std::size_t slot = order[i];
    s.group = groups[slot];
    if (o.xor_labels) {
      s.bit_a = static_cast<int>(slot % 2);
      s.bit_b = static_cast<int>((slot / 2) % 2);
      s.group = s.bit_a == s.bit_b ? Rating3::kLeft : Rating3::kRight;
    }
    sources.push_back(s);
  }

  // Vocabularies. Planted pairs: one per group (or per xor variant).
  // Shared pairs: one per pair.
  detail::WordPool pool;
  std::map<std::pair<std::size_t, int>, std::vector<std::string>> vocab;
  for (std::size_t p = 0; p < n_pairs; ++p) {
    const bool xor_pair = o.xor_labels && p < 2;
    const bool planted = p < o.planted && (!o.xor_labels || xor_pair);
    if (!planted) {
      vocab[{p, -1}] = pool.take(o.vocab_size);
      continue;
    }
    for (int g = 0; g < (xor_pair ? 2 : 3); ++g) {
      auto words = pool.take(o.vocab_size);
      if (!xor_pair && g != 1) {
        const auto& verbs = g == 0 ? kPositiveVerbs : kNegativeVerbs;
        words[0] = std::string(verbs[(2 * p) % 8]);
        words[1] = std::string(verbs[(2 * p + 1) % 8]);
      }
      vocab[{p, g}] = std::move(words);
    }
  }
  const std::vector<std::string> filler = pool.take(8);

  Timestamp day0 = *parse_timestamp("2020-01-01");
  for (const Src& s : sources) {
    std::vector<std::string> sents;
    for (std::size_t p = 0; p < n_pairs; ++p) {
      const bool is_planted = p < o.planted;
      const std::size_t lo = is_planted ? o.planted_min : o.shared_min;
      const std::size_t hi = is_planted ? o.planted_max : o.shared_max;
      const std::size_t n = lo + rng.index(hi - lo + 1);
      const std::vector<std::string>* v = nullptr;
      if (o.xor_labels && p < 2) {
        v = &vocab.at({p, p == 0 ? s.bit_a : s.bit_b});
      } else if (vocab.contains({p, -1})) {
        v = &vocab.at({p, -1});
      } else {
        v = &vocab.at({p, static_cast<int>(s.group)});
      }
      for (std::size_t k = 0; k < n; ++k) {
        sents.push_back(detail::sentence(c.entities[2 * p], c.entities[2 * p + 1], *v, rng));
      }
    }
    rng.shuffle(sents);
    const std::size_t n_articles =
        o.articles_per_source > 0
            ? o.articles_per_source
            : std::max<std::size_t>(1, (sents.size() + o.sentences_per_article - 1) /
                                           o.sentences_per_article);
    if (n_articles > sents.size()) throw InvalidArgument("synthetic: more articles than sentences");
    for (std::size_t a = 0; a < n_articles; ++a) {
      Article art;
      char buf[64];
      std::snprintf(buf, sizeof buf, "%s-%04zu", s.id.c_str(), a + 1);
      art.article_id = buf;
      art.source_id = s.id;
      art.published_at = day0 + static_cast<Timestamp>(rng.index(366)) * 86400;
      art.title = "daily bulletin number " + std::to_string(a + 1);
      const std::size_t b = a * sents.size() / n_articles;
      const std::size_t e = (a + 1) * sents.size() / n_articles;
      std::string body;
      for (std::size_t i = b; i < e; ++i) {
        if (!body.empty()) body += ' ';
        body += sents[i];
      }
      body += " the " + filler[rng.index(filler.size())] + " " + filler[rng.index(filler.size())] +
              " went on.";
      art.body = std::move(body);
      c.articles.push_back(std::move(art));
    }
    c.groups[s.id] = s.group;
  }

  // Labels: a third of each side is "lean".
  std::map<Rating3, std::size_t> seen;
  for (const Src& s : sources) {
    const std::size_t k = seen[s.group]++;
    Rating5 r = embed_rating3(s.group);
    if (k % 3 == 2 && s.group == Rating3::kLeft) r = Rating5::kLeanLeft;
    if (k % 3 == 2 && s.group == Rating3::kRight) r = Rating5::kLeanRight;
    c.labels.push_back({s.id, r, Provenance::kAllSides});
  }
  std::map<Rating3, std::size_t> want = {
      {Rating3::kLeft, 3}, {Rating3::kRight, 3}, {Rating3::kCenter, 2}};
  for (const Src& s : sources) {
    if (want[s.group] > 0) {
      --want[s.group];
      c.holdout.push_back(s.id);
    }
  }
  std::sort(c.holdout.begin(), c.holdout.end());

  for (auto v : kPositiveVerbs) c.lexicon.push_back({std::string(v), 1});
  for (auto v : kNegativeVerbs) c.lexicon.push_back({std::string(v), -1});
  return c;
}

// Masked context sentences for `pairs` pairs, `per_pair` each, split evenly
// across `sources` sources. With disjoint vocabularies every pair has its
// own words; otherwise all pairs draw from one pool.
inline std::vector<ContextSet> masked_sets(std::size_t pairs, std::size_t per_pair,
                                           bool disjoint, std::uint64_t seed,
                                           std::size_t sources = 1, std::size_t vocab_size = 12) {
  Rng rng(seed);
  detail::WordPool pool;
  std::vector<std::vector<std::string>> vocab;
  const auto common = pool.take(vocab_size * pairs);
  for (std::size_t p = 0; p < pairs; ++p) vocab.push_back(disjoint ? pool.take(vocab_size) : common);
  std::vector<ContextSet> out;
  for (std::size_t p = 0; p < pairs; ++p) {
    const EntityPair pair(entity_name(2 * p), entity_name(2 * p + 1));
    for (std::size_t s = 0; s < sources; ++s) {
      ContextSet set;
      set.source_id = "outlet-" + std::to_string(s + 1);
      set.pair = pair;
      const std::size_t n = per_pair / sources + (s < per_pair % sources ? 1 : 0);
      for (std::size_t k = 0; k < n; ++k) {
        ContextSentence c;
        c.source_id = set.source_id;
        c.pair = pair;
        const auto& v = vocab[p];
        std::string t = rng.index(2) ? "[ENT] [R1]" : "[ENT] [R2]";
        const std::string other = t == "[ENT] [R1]" ? "[ENT] [R2]" : "[ENT] [R1]";
        for (int i = 0; i < 3; ++i) t += " " + v[rng.index(v.size())];
        t += " " + other;
        for (int i = 0; i < 3; ++i) t += " " + v[rng.index(v.size())];
        c.masked_text = t + " .";
        c.article_id = set.source_id + "-" + std::to_string(k);
        set.sentences.push_back(std::move(c));
      }
      if (!set.sentences.empty()) out.push_back(std::move(set));
    }
  }
  return out;
}

}  // namespace selbias::synthetic

#endif  // SELBIAS_SYNTHETIC_HPP_
