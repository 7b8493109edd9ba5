#ifndef SELBIAS_CORPUS_HPP_
#define SELBIAS_CORPUS_HPP_

#include <json.hpp>

#include <algorithm>
#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "selbias/common.hpp"
#include "selbias/csv.hpp"
#include "selbias/text.hpp"
#include "selbias/time.hpp"

namespace selbias {

// ---------------------------------------------------------------------------
// Ideology ratings.

enum class Rating5 { kLeft, kLeanLeft, kCenter, kLeanRight, kRight };
enum class Rating3 { kLeft, kCenter, kRight };
enum class Provenance { kAllSides, kMbfc, kOther };

inline constexpr std::array<Rating3, 3> kAllRating3 = {
    Rating3::kLeft, Rating3::kCenter, Rating3::kRight};

// left/lean-left -> left, center -> center, lean-right/right -> right.
constexpr Rating3 aggregate_labels(Rating5 r) {
  switch (r) {
    case Rating5::kLeft:
    case Rating5::kLeanLeft:
      return Rating3::kLeft;
    case Rating5::kCenter:
      return Rating3::kCenter;
    case Rating5::kLeanRight:
    case Rating5::kRight:
      return Rating3::kRight;
  }
  return Rating3::kCenter;
}

// The 3-way scale viewed as a subset of the 5-way one.
constexpr Rating5 embed_rating3(Rating3 r) {
  switch (r) {
    case Rating3::kLeft:
      return Rating5::kLeft;
    case Rating3::kCenter:
      return Rating5::kCenter;
    case Rating3::kRight:
      return Rating5::kRight;
  }
  return Rating5::kCenter;
}

constexpr std::string_view to_string(Rating5 r) {
  switch (r) {
    case Rating5::kLeft: return "left";
    case Rating5::kLeanLeft: return "lean-left";
    case Rating5::kCenter: return "center";
    case Rating5::kLeanRight: return "lean-right";
    case Rating5::kRight: return "right";
  }
  return "center";
}

constexpr std::string_view to_string(Rating3 r) {
  switch (r) {
    case Rating3::kLeft: return "left";
    case Rating3::kCenter: return "center";
    case Rating3::kRight: return "right";
  }
  return "center";
}

constexpr std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::kAllSides: return "allsides";
    case Provenance::kMbfc: return "mbfc";
    case Provenance::kOther: return "other";
  }
  return "other";
}

inline std::optional<Rating5> parse_rating5(std::string_view s) {
  const std::string v = text::lower(text::trim(s));
  if (v == "left") return Rating5::kLeft;
  if (v == "lean-left" || v == "lean left" || v == "left-center")
    return Rating5::kLeanLeft;
  if (v == "center" || v == "centre") return Rating5::kCenter;
  if (v == "lean-right" || v == "lean right" || v == "right-center")
    return Rating5::kLeanRight;
  if (v == "right") return Rating5::kRight;
  return std::nullopt;
}

inline std::optional<Rating3> parse_rating3(std::string_view s) {
  const std::string v = text::lower(text::trim(s));
  if (v == "left") return Rating3::kLeft;
  if (v == "center") return Rating3::kCenter;
  if (v == "right") return Rating3::kRight;
  return std::nullopt;
}

inline std::optional<Provenance> parse_provenance(std::string_view s) {
  const std::string v = text::lower(text::trim(s));
  if (v == "allsides") return Provenance::kAllSides;
  if (v == "mbfc") return Provenance::kMbfc;
  if (v == "other") return Provenance::kOther;
  return std::nullopt;
}

struct SourceLabel {
  std::string source_id;
  Rating5 rating5 = Rating5::kCenter;
  Provenance provenance = Provenance::kOther;

  Rating3 rating3() const { return aggregate_labels(rating5); }
};

// Labels keyed by (source_id, provenance); at most one per key.
class LabelSet {
 public:
  LabelSet() = default;

  // Returns false (and keeps the existing label) on a duplicate key.
  bool add(SourceLabel label) {
    auto key = std::make_pair(label.source_id, label.provenance);
    return labels_.emplace(std::move(key), std::move(label)).second;
  }

  std::size_t size() const { return labels_.size(); }

  std::vector<SourceLabel> all() const {
    std::vector<SourceLabel> out;
    out.reserve(labels_.size());
    for (const auto& [key, label] : labels_) out.push_back(label);
    return out;
  }

  std::optional<SourceLabel> find(std::string_view source,
                                  Provenance provenance) const {
    auto it = labels_.find(std::make_pair(std::string(source), provenance));
    if (it == labels_.end()) return std::nullopt;
    return it->second;
  }

  // One 5-way rating per source, taking the first provenance in `preference`
  // that labels it.
  std::map<std::string, Rating5> resolve(
      std::span<const Provenance> preference) const {
    std::map<std::string, Rating5> out;
    for (Provenance p : preference) {
      for (const auto& [key, label] : labels_) {
        if (key.second == p) out.emplace(key.first, label.rating5);
      }
    }
    return out;
  }

  std::map<std::string, Rating5> resolve() const {
    static constexpr std::array kOrder = {
        Provenance::kAllSides, Provenance::kMbfc, Provenance::kOther};
    return resolve(kOrder);
  }

  std::string to_csv() const {
    std::string out = csv::schema_line("labels", 1);
    out += "source_id,rating5,provenance\n";
    for (const auto& [key, label] : labels_) {
      out += csv::format_row({label.source_id, std::string(to_string(label.rating5)),
                              std::string(to_string(label.provenance))});
    }
    return out;
  }

 private:
  std::map<std::pair<std::string, Provenance>, SourceLabel> labels_;
};

struct LabelLoadResult {
  LabelSet labels;
  std::vector<RecordError> errors;
};

// CSV with header `source_id,rating5,provenance`. rating3 is always derived.
inline LabelLoadResult parse_labels(std::string_view data) {
  const csv::Table table = csv::parse(data);
  const std::size_t c_source = csv::column(table, "source_id");
  const std::size_t c_rating = csv::column(table, "rating5");
  const std::size_t c_prov = csv::column(table, "provenance");
  LabelLoadResult result;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const csv::Row& row = table.rows[i];
    const std::size_t line = table.line_numbers[i];
    if (row.size() != table.header.size()) {
      result.errors.push_back({line, "wrong number of fields"});
      continue;
    }
    const std::string source = text::normalize(row[c_source]);
    if (source.empty()) {
      result.errors.push_back({line, "empty source_id"});
      continue;
    }
    const auto rating = parse_rating5(row[c_rating]);
    if (!rating) {
      result.errors.push_back({line, "unknown rating5 '" + row[c_rating] + "'"});
      continue;
    }
    const auto prov = parse_provenance(row[c_prov]);
    if (!prov) {
      result.errors.push_back({line, "unknown provenance '" + row[c_prov] + "'"});
      continue;
    }
    if (!result.labels.add({source, *rating, *prov})) {
      result.errors.push_back(
          {line, "duplicate label for (" + source + ", " +
                     std::string(to_string(*prov)) + ")"});
    }
  }
  return result;
}

inline LabelLoadResult load_labels(const std::filesystem::path& path) {
  return parse_labels(read_file(path));
}

// ---------------------------------------------------------------------------
// Articles.

struct Article {
  std::string article_id;
  std::string source_id;
  Timestamp published_at = 0;
  std::string title;
  std::string body;

  friend bool operator==(const Article&, const Article&) = default;
};

// Immutable view over a validated article set, sorted by article_id.
class CorpusHandle {
 public:
  CorpusHandle() : articles_(std::make_shared<const std::vector<Article>>()) {}

  // Sorts by article_id. Throws InvalidArgument on duplicate ids.
  explicit CorpusHandle(std::vector<Article> articles) {
    std::sort(articles.begin(), articles.end(),
              [](const Article& a, const Article& b) {
                return a.article_id < b.article_id;
              });
    for (std::size_t i = 1; i < articles.size(); ++i) {
      if (articles[i].article_id == articles[i - 1].article_id) {
        throw InvalidArgument("duplicate article_id " + articles[i].article_id);
      }
    }
    for (const Article& a : articles) {
      source_index_[a.source_id].push_back(a.article_id);
      if (!time_range_) {
        time_range_ = std::make_pair(a.published_at, a.published_at);
      } else {
        time_range_->first = std::min(time_range_->first, a.published_at);
        time_range_->second = std::max(time_range_->second, a.published_at);
      }
    }
    articles_ = std::make_shared<const std::vector<Article>>(std::move(articles));
  }

  std::size_t size() const { return articles_->size(); }
  bool empty() const { return articles_->empty(); }
  std::span<const Article> articles() const { return *articles_; }
  const std::map<std::string, std::vector<std::string>>& source_index() const {
    return source_index_;
  }
  // (min, max) published_at; empty corpus has none.
  std::optional<std::pair<Timestamp, Timestamp>> time_range() const {
    return time_range_;
  }

 private:
  std::shared_ptr<const std::vector<Article>> articles_;
  std::map<std::string, std::vector<std::string>> source_index_;
  std::optional<std::pair<Timestamp, Timestamp>> time_range_;
};

struct CorpusLoadResult {
  CorpusHandle handle;
  std::vector<RecordError> errors;
};

namespace detail {

inline std::optional<std::string> string_field(const nlohmann::json& obj,
                                               std::initializer_list<const char*> names) {
  for (const char* name : names) {
    auto it = obj.find(name);
    if (it == obj.end() || it->is_null()) continue;
    if (it->is_string()) return it->get<std::string>();
    if (it->is_number_integer()) return std::to_string(it->get<long long>());
    return std::nullopt;
  }
  return std::nullopt;
}

// Parses one JSON Lines record; returns the article or an error message.
inline std::variant<Article, std::string> parse_article_line(std::string_view line) {
  nlohmann::json obj = nlohmann::json::parse(line, nullptr, false);
  if (obj.is_discarded()) return std::string("invalid JSON");
  if (!obj.is_object()) return std::string("record is not a JSON object");
  Article a;
  const auto id = string_field(obj, {"id", "article_id"});
  if (!id || text::trim(*id).empty()) return std::string("missing required field 'id'");
  const auto source = string_field(obj, {"source", "source_id"});
  if (!source || text::trim(*source).empty())
    return std::string("missing required field 'source'");
  const auto date = string_field(obj, {"date", "published_at"});
  if (!date) return std::string("missing required field 'date'");
  const auto body = string_field(obj, {"content", "body"});
  if (!body) return std::string("missing required field 'content'");

  a.article_id = text::normalize(*id);
  a.source_id = text::normalize(*source);
  const auto ts = parse_timestamp(text::trim(*date));
  if (!ts) return "unparseable date '" + *date + "'";
  if (*ts < 0) return "date before epoch '" + *date + "'";
  a.published_at = *ts;
  a.title = text::normalize(string_field(obj, {"title"}).value_or(""));
  a.body = text::normalize(*body);
  if (a.body.empty()) return std::string("empty content after normalization");
  return a;
}

}  // namespace detail

// Parses JSON Lines article records (fields id, source, date, title,
// content). Blank lines are ignored. Invalid records are reported with their
// 1-based line number; a repeated id is an error on its later line.
inline CorpusLoadResult parse_articles(std::string_view data,
                                       unsigned threads = 1) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= data.size()) {
    auto end = data.find('\n', start);
    if (end == std::string_view::npos) end = data.size();
    lines.push_back(data.substr(start, end - start));
    start = end + 1;
    if (end == data.size()) break;
  }

  std::vector<std::optional<std::variant<Article, std::string>>> parsed(lines.size());
  parallel_for(lines.size(), threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      std::string_view line = lines[i];
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      if (text::trim(line).empty()) continue;
      parsed[i] = detail::parse_article_line(line);
    }
  });

  CorpusLoadResult result;
  std::vector<Article> articles;
  std::map<std::string, std::size_t> seen;
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    if (!parsed[i]) continue;
    if (auto* msg = std::get_if<std::string>(&*parsed[i])) {
      result.errors.push_back({i + 1, *msg});
      continue;
    }
    Article& a = std::get<Article>(*parsed[i]);
    auto [it, inserted] = seen.emplace(a.article_id, i + 1);
    if (!inserted) {
      result.errors.push_back({i + 1, "duplicate id '" + a.article_id +
                                          "' (first seen on line " +
                                          std::to_string(it->second) + ")"});
      continue;
    }
    articles.push_back(std::move(a));
  }
  result.handle = CorpusHandle(std::move(articles));
  return result;
}

// Unreadable file -> IoError.
inline CorpusLoadResult load_articles(const std::filesystem::path& path,
                                      unsigned threads = 1) {
  if (!std::filesystem::is_directory(path)) return parse_articles(read_file(path), threads);
  // a directory: every *.jsonl inside, in name order
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(path)) {
    if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no .jsonl files in " + path.string());
  std::string data;
  for (const auto& f : files) {
    data += read_file(f);
    if (!data.empty() && data.back() != '\n') data += '\n';
  }
  return parse_articles(data, threads);
}

// Articles with start <= published_at < end.
inline CorpusHandle filter_time_window(const CorpusHandle& handle,
                                       Timestamp start, Timestamp end) {
  if (start > end) {
    throw InvalidArgument("filter_time_window: start after end");
  }
  std::vector<Article> kept;
  for (const Article& a : handle.articles()) {
    if (a.published_at >= start && a.published_at < end) kept.push_back(a);
  }
  return CorpusHandle(std::move(kept));
}

// ---------------------------------------------------------------------------
// Persisted corpus directory: articles.jsonl + corpus.json manifest.

inline std::string article_to_jsonl(const Article& a) {
  nlohmann::ordered_json obj;
  obj["id"] = a.article_id;
  obj["source"] = a.source_id;
  obj["date"] = format_timestamp(a.published_at);
  obj["title"] = a.title;
  obj["content"] = a.body;
  return obj.dump() + "\n";
}

inline nlohmann::ordered_json corpus_manifest(const CorpusHandle& handle,
                                              std::string_view checksum) {
  nlohmann::ordered_json m;
  m["schema"] = "selbias.corpus";
  m["version"] = 1;
  m["article_count"] = handle.size();
  m["source_count"] = handle.source_index().size();
  if (auto range = handle.time_range()) {
    m["time_range"] = {format_timestamp(range->first),
                       format_timestamp(range->second)};
  } else {
    m["time_range"] = nullptr;
  }
  m["checksum"] = std::string(checksum);
  return m;
}

inline void persist_corpus(const CorpusHandle& handle,
                           const std::filesystem::path& dir) {
  std::string jsonl;
  for (const Article& a : handle.articles()) jsonl += article_to_jsonl(a);
  write_file(dir / "articles.jsonl", jsonl);
  write_file(dir / "corpus.json",
             corpus_manifest(handle, sha256_hex(jsonl)).dump(2) + "\n");
}

// Reopens a persisted corpus and checks it against its manifest.
inline CorpusHandle open_corpus(const std::filesystem::path& dir) {
  const std::string jsonl = read_file(dir / "articles.jsonl");
  const auto manifest = nlohmann::json::parse(read_file(dir / "corpus.json"));
  if (manifest.value("checksum", "") != sha256_hex(jsonl)) {
    throw IoError("corpus checksum mismatch in " + dir.string());
  }
  CorpusLoadResult loaded = parse_articles(jsonl);
  if (!loaded.errors.empty()) {
    throw IoError("persisted corpus has invalid records: line " +
                  std::to_string(loaded.errors.front().line) + ": " +
                  loaded.errors.front().message);
  }
  if (manifest.value("article_count", std::size_t{0}) != loaded.handle.size()) {
    throw IoError("corpus manifest count mismatch in " + dir.string());
  }
  return loaded.handle;
}

}  // namespace selbias

#endif  // SELBIAS_CORPUS_HPP_
