#include <gtest/gtest.h>

#include <map>
#include <set>
#include <sstream>

#include "selbias/context.hpp"

namespace selbias {
namespace {

EntityMention mention(std::string_view sentence, std::string_view surface,
                      std::string entity, std::size_t from = 0) {
  EntityMention m;
  m.begin = sentence.find(surface, from);
  m.end = m.begin + surface.size();
  m.surface = std::string(surface);
  m.entity = std::move(entity);
  return m;
}

AnchorTable toy_table() {
  AnchorTable t;
  t.add("Senate", "Senate", 5);
  t.add("House", "House", 5);
  t.add("Biden", "Joe_Biden", 5);
  t.add("Joe Biden", "Joe_Biden", 5);
  t.add("Trump", "Donald_Trump", 5);
  t.add("Iran", "Iran", 5);
  t.add("Paris", "Paris", 5);
  return t;
}

EntityCatalog catalog_of(std::initializer_list<const char*> titles) {
  EntityCatalog c;
  for (const char* t : titles) c.entries.push_back({t, 1});
  c.cutoff = c.entries.size();
  return c;
}

Article article(std::string id, std::string source, std::string body,
                std::string title = "") {
  Article a;
  a.article_id = std::move(id);
  a.source_id = std::move(source);
  a.body = std::move(body);
  a.title = std::move(title);
  return a;
}

TEST(EntityPair, Canonicalizes) {
  const EntityPair p("Senate", "House");
  EXPECT_EQ(p.first(), "House");
  EXPECT_EQ(p.second(), "Senate");
  EXPECT_EQ(p, EntityPair("House", "Senate"));
  EXPECT_THROW(EntityPair("A", "A"), InvalidArgument);
}

TEST(MaskPair, RoleFollowsCanonicalOrder) {
  const std::string s = "Senate passed the bill House wrote.";
  const auto out = mask_pair(s, mention(s, "Senate", "Senate"), mention(s, "House", "House"));
  EXPECT_EQ(out, "[ENT] [R2] passed the bill [ENT] [R1] wrote.");
}

TEST(MaskPair, RepeatMentionGetsBareMask) {
  const std::string s = "Iran warned Paris and Iran waited.";
  const auto m1 = mention(s, "Iran", "Iran");
  const auto m2 = mention(s, "Paris", "Paris");
  const auto again = mention(s, "Iran", "Iran", 5);
  const std::vector<EntityMention> all = {m1, m2, again};
  EXPECT_EQ(mask_pair(s, m1, m2, all), "[ENT] [R1] warned [ENT] [R2] and [ENT] waited.");
}

TEST(MaskPair, OverlapThrows) {
  const std::string s = "Joe Biden spoke.";
  auto a = mention(s, "Joe Biden", "Joe_Biden");
  auto b = mention(s, "Biden", "Other");
  EXPECT_THROW(mask_pair(s, a, b), InvalidArgument);
  b.entity.reset();
  EXPECT_THROW(mask_pair(s, a, b), InvalidArgument);
}

TEST(MaskPair, FiveSentenceGoldenSet) {
  // Hand-masked.
  const AnchorTable t = toy_table();
  const std::vector<std::pair<std::string, std::string>> golden = {
      {"Joe Biden met Trump at the summit.", "[ENT] [R2] met [ENT] [R1] at the summit."},
      {"Trump said Biden and Biden's team lied.",
       "[ENT] [R1] said [ENT] [R2] and [ENT]'s team lied."},
      {"In Paris, Iran signed nothing new today.",
       "In [ENT] [R2], [ENT] [R1] signed nothing new today."},
      {"The Senate and the House disagreed again.",
       "The [ENT] [R2] and the [ENT] [R1] disagreed again."},
      {"Iran (not Paris) hosted it, Iran said.",
       "[ENT] [R1] (not [ENT] [R2]) hosted it, [ENT] said."},
  };
  for (const auto& [sentence, want] : golden) {
    const auto ms = detect_mentions(sentence, t);
    ASSERT_GE(ms.size(), 2u) << sentence;
    std::size_t second = 1;
    while (*ms[second].entity == *ms[0].entity) ++second;
    EXPECT_EQ(mask_pair(sentence, ms[0], ms[second], ms), want);
  }
}

TEST(MaskPair, EntitySurfaceIndependence) {
  const std::string a = "Joe Biden told Iran to wait a while.";
  const std::string b = "Biden told Iran to wait a while.";
  const auto t = toy_table();
  const auto ma = detect_mentions(a, t);
  const auto mb = detect_mentions(b, t);
  EXPECT_EQ(mask_pair(a, ma[0], ma[1], ma), mask_pair(b, mb[0], mb[1], mb));
}

TEST(Extract, OnePairSentence) {
  const CorpusHandle h({article("a1", "s", "The Senate told the House to hurry up.")});
  const auto sets = extract_context_sentences(h, catalog_of({"Senate", "House"}), toy_table());
  ASSERT_EQ(sets.size(), 1u);
  EXPECT_EQ(sets[0].pair, EntityPair("House", "Senate"));
  ASSERT_EQ(sets[0].sentences.size(), 1u);
  EXPECT_EQ(sets[0].sentences[0].masked_text, "The [ENT] [R2] told the [ENT] [R1] to hurry up.");
}

TEST(Extract, ThreeEntitiesGiveThreePairs) {
  const CorpusHandle h({article("a1", "s", "Trump, Biden and Iran met in a room.")});
  const auto sets = extract_context_sentences(
      h, catalog_of({"Donald_Trump", "Joe_Biden", "Iran"}), toy_table());
  std::set<EntityPair> pairs;
  for (const auto& s : sets) pairs.insert(s.pair);
  EXPECT_EQ(pairs, (std::set<EntityPair>{{"Donald_Trump", "Iran"},
                                         {"Donald_Trump", "Joe_Biden"},
                                         {"Iran", "Joe_Biden"}}));
}

TEST(Extract, IgnoresNonCatalogAndShortSentences) {
  const CorpusHandle h({article("a1", "s", "Iran met Paris. Iran, Paris. Senate and Iran met today.")});
  const auto sets = extract_context_sentences(h, catalog_of({"Iran", "Paris"}), toy_table());
  ASSERT_EQ(sets.size(), 1u);
  EXPECT_EQ(sets[0].sentences.size(), 1u);  // only the 5-token "[ENT] [R1] met [ENT] [R2]."
  EXPECT_THROW(extract_context_sentences(h, EntityCatalog{}, toy_table()), InvalidArgument);
}

TEST(Extract, TitlesAreFlagged) {
  const CorpusHandle h({article("a1", "s", "Nothing here at all.", "Trump and Iran clash over oil")});
  const auto sets = extract_context_sentences(h, catalog_of({"Donald_Trump", "Iran"}), toy_table());
  ASSERT_EQ(sets.size(), 1u);
  EXPECT_TRUE(sets[0].sentences[0].from_title);
  ExtractOptions no_titles;
  no_titles.include_titles = false;
  EXPECT_TRUE(extract_context_sentences(h, catalog_of({"Donald_Trump", "Iran"}), toy_table(),
                                        no_titles)
                  .empty());
}

// 50 synthetic sentences built from single-token names; an independent
// word-scan counts C(n_distinct, 2) per sentence and per pair.
class FiftySentences : public ::testing::Test {
 protected:
  void SetUp() override {
    for (int i = 0; i < 8; ++i) {
      names_.push_back("Name" + std::string(1, static_cast<char>('A' + i)) + "q");
      table_.add(names_.back(), "E" + std::to_string(i), 1);
      catalog_.entries.push_back({"E" + std::to_string(i), 1});
    }
    Rng rng(17);
    std::vector<Article> articles;
    for (int a = 0; a < 10; ++a) {
      std::string body;
      for (int s = 0; s < 5; ++s) {
        body += "Report";
        const std::size_t k = rng.index(5);
        for (std::size_t w = 0; w < k; ++w) body += " " + names_[rng.index(names_.size())];
        body += " said words here today. ";
      }
      articles.push_back(article("a" + std::to_string(a), "s" + std::to_string(a % 3),
                                 std::string(text::trim(body))));
    }
    handle_ = CorpusHandle(articles);
    for (const Article& a : articles) {
      for (const std::string& sentence : split_sentences(a.body)) {
        ++sentence_count_;
        std::set<int> present;
        std::istringstream in(sentence);
        std::string word;
        while (in >> word) {
          for (int i = 0; i < 8; ++i) {
            if (word == names_[i]) present.insert(i);
          }
        }
        const std::vector<int> v(present.begin(), present.end());
        expected_total_ += v.size() * (v.size() - (v.empty() ? 0 : 1)) / 2;
        for (std::size_t x = 0; x < v.size(); ++x) {
          for (std::size_t y = x + 1; y < v.size(); ++y) {
            ++oracle_[EntityPair("E" + std::to_string(v[x]), "E" + std::to_string(v[y]))];
          }
        }
      }
    }
  }
  std::vector<std::string> names_;
  AnchorTable table_;
  EntityCatalog catalog_;
  CorpusHandle handle_;
  std::size_t sentence_count_ = 0;
  std::size_t expected_total_ = 0;
  std::map<EntityPair, std::size_t> oracle_;
};

TEST_F(FiftySentences, PairCountsMatchBruteForce) {
  EXPECT_EQ(sentence_count_, 50u);
  ExtractOptions opts;
  opts.min_masked_tokens = 0;
  for (unsigned threads : {1u, 4u}) {
    opts.threads = threads;
    const auto sets = extract_context_sentences(handle_, catalog_, table_, opts);
    EXPECT_EQ(pair_sentence_counts(sets), oracle_);
    std::size_t total = 0;
    for (const auto& s : sets) total += s.sentences.size();
    EXPECT_EQ(total, expected_total_);
  }
}

TEST_F(FiftySentences, InvariantsHold) {
  const auto sets = extract_context_sentences(handle_, catalog_, table_);
  std::set<std::pair<std::string, EntityPair>> keys;
  for (const auto& s : sets) {
    EXPECT_LT(s.pair.first(), s.pair.second());
    EXPECT_TRUE(keys.insert({s.source_id, s.pair}).second);
    EXPECT_FALSE(s.sentences.empty());
    for (const auto& c : s.sentences) {
      EXPECT_EQ(c.source_id, s.source_id);
      EXPECT_EQ(c.pair, s.pair);
      const auto& m = c.masked_text;
      EXPECT_EQ(m.find("[ENT] [R1]"), m.rfind("[R1]") - 6);
      EXPECT_EQ(m.find("[R1]"), m.rfind("[R1]"));
      EXPECT_EQ(m.find("[R2]"), m.rfind("[R2]"));
      EXPECT_NE(m.find("[ENT] [R2]"), std::string::npos);
      for (const auto& name : names_) {
        // A pair entity's surface never survives masking.
        const std::string title = "E" + std::to_string(name[4] - 'A');
        if (s.pair.contains(title)) EXPECT_EQ(m.find(name), std::string::npos) << m;
      }
    }
  }
}

TEST_F(FiftySentences, JsonlRoundTrip) {
  const auto sets = extract_context_sentences(handle_, catalog_, table_);
  const std::string data = contexts_to_jsonl(sets);
  const auto back = contexts_from_jsonl(data);
  ASSERT_EQ(back.size(), sets.size());
  for (std::size_t i = 0; i < sets.size(); ++i) {
    EXPECT_EQ(back[i].sentences, sets[i].sentences);
  }
  EXPECT_EQ(contexts_to_jsonl(back), data);
}

TEST(RankPairs, ByCountThenPairOrder) {
  std::vector<ContextSet> sets(3);
  sets[0] = {"s1", EntityPair("A", "B"), std::vector<ContextSentence>(2)};
  sets[1] = {"s2", EntityPair("A", "B"), std::vector<ContextSentence>(1)};
  sets[2] = {"s1", EntityPair("C", "D"), std::vector<ContextSentence>(3)};
  const auto ranked = rank_pairs_by_frequency(sets);
  EXPECT_EQ(ranked, (std::vector<EntityPair>{{"A", "B"}, {"C", "D"}}));
}

}  // namespace
}  // namespace selbias
