#ifndef SELBIAS_PIPELINE_HPP_
#define SELBIAS_PIPELINE_HPP_

#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "selbias/analytics.hpp"
#include "selbias/classifier.hpp"
#include "selbias/common.hpp"
#include "selbias/context.hpp"
#include "selbias/corpus.hpp"
#include "selbias/encoder.hpp"
#include "selbias/entity_linking.hpp"
#include "selbias/metrics.hpp"
#include "selbias/probe.hpp"
#include "selbias/time.hpp"

namespace selbias {

namespace fs = std::filesystem;

// Usage errors: unknown subcommand, bad key or value.
class UsageError : public Error {
 public:
  using Error::Error;
};

// An upstream artifact is missing; names the subcommand to run first.
class MissingArtifact : public Error {
 public:
  MissingArtifact(const std::string& what, const std::string& producer)
      : Error("requires " + what + "; run " + producer), producer_(producer) {}
  const std::string& producer() const { return producer_; }

 private:
  std::string producer_;
};

inline constexpr std::array<std::string_view, 12> kSubcommands = {
    "ingest", "build-anchors", "link-stats", "extract", "train-encoder", "embed",
    "classify", "rank-aeps", "heatmap", "probe", "pca", "report"};

// Flat `section.key` -> value store. Every key has a default; unknown keys
// are rejected.
class PipelineConfig {
 public:
  PipelineConfig() {
    for (const auto& [k, v] : defaults()) values_[k] = v;
  }

  static const std::vector<std::pair<std::string, std::string>>& defaults() {
    static const std::vector<std::pair<std::string, std::string>> d = {
        {"seed", "13"},
        {"threads", "1"},
        {"paths.corpus", ""},
        {"paths.labels", ""},
        {"paths.anchors", ""},
        {"paths.lexicon", ""},
        {"paths.workdir", "selbias-work"},
        {"corpus.start", ""},
        {"corpus.end", ""},
        {"linking.prune", "2"},
        {"linking.top_entities", "1000"},
        {"extract.max_entities", "10"},
        {"extract.min_tokens", "5"},
        {"extract.include_titles", "true"},
        {"encoder.dim", "64"},
        {"encoder.buckets", "262144"},
        {"encoder.window", "8"},
        {"encoder.margin", "1.0"},
        {"encoder.learning_rate", "0.001"},
        {"encoder.epochs", "3"},
        {"encoder.batch_size", "1"},
        {"encoder.per_anchor", "1"},
        {"encoder.positives", "pooled"},
        {"encoder.strict_negatives", "false"},
        {"encoder.hash_seed", std::to_string(kDefaultHashSeed)},
        {"analytics.k", "20"},
        {"analytics.top_pairs", "100"},
        {"analytics.lambda", "0.001"},
        {"analytics.min_group", "3"},
        {"analytics.min_support", "1"},
        {"analytics.reduce", "true"},
        {"analytics.symmetrized", "false"},
        {"analytics.include_lean", "true"},
        {"classify.kinds", "lasso-logistic,ridge-logistic,linear-svm,rbf-svm"},
        {"classify.test_sources", ""},
        {"classify.folds", "5"},
        {"classify.standardize", "true"},
        {"heatmap.pairs", "10"},
        {"heatmap.min_sentences", "10"},
        {"heatmap.holdout", ""},
        {"heatmap.holdout_count", "5"},
        {"probe.pairs", "3"},
        {"probe.n_per_class", "200"},
        {"probe.top_k", "10"},
        {"probe.temperature", "1.0"},
        {"probe.both_orderings", "false"},
        {"pca.pairs", "3"},
    };
    return d;
  }

  // Accepts a full key or an unambiguous last component (`dim` for
  // `encoder.dim`).
  std::string resolve_key(std::string_view key) const {
    if (values_.contains(std::string(key))) return std::string(key);
    std::string found;
    for (const auto& [k, v] : values_) {
      const auto dot = k.rfind('.');
      if (dot != std::string::npos && k.substr(dot + 1) == key) {
        if (!found.empty()) throw UsageError("ambiguous key '" + std::string(key) + "'");
        found = k;
      }
    }
    if (found.empty()) throw UsageError("unknown config key '" + std::string(key) + "'");
    return found;
  }

  void set(std::string_view key, std::string value) { values_[resolve_key(key)] = std::move(value); }

  // TOML-style subset: `[section]`, `key = value`, `#` comments, optional
  // double quotes around values. Relative paths resolve against the file's
  // directory.
  void load_file(const fs::path& path) {
    const std::string data = read_file(path);
    std::string section;
    std::size_t line_no = 0;
    for (const std::string& raw : text::split(data, '\n')) {
      ++line_no;
      std::string line = raw;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      line = text::trim(line);
      if (line.empty()) continue;
      const auto where = path.string() + ":" + std::to_string(line_no) + ": ";
      if (line.front() == '[') {
        if (line.back() != ']') throw UsageError(where + "bad section header");
        section = text::trim(line.substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw UsageError(where + "expected key = value");
      std::string key = text::trim(line.substr(0, eq));
      std::string value = text::trim(line.substr(eq + 1));
      if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
        value = value.substr(1, value.size() - 2);
      }
      const std::string full = section.empty() ? key : section + "." + key;
      if (!values_.contains(full)) throw UsageError(where + "unknown key '" + full + "'");
      if (full.starts_with("paths.") && !value.empty() && fs::path(value).is_relative()) {
        value = (path.parent_path() / value).lexically_normal().string();
      }
      values_[full] = value;
    }
  }

  const std::string& str(std::string_view key) const {
    const auto it = values_.find(std::string(key));
    if (it == values_.end()) throw UsageError("unknown config key '" + std::string(key) + "'");
    return it->second;
  }

  std::uint64_t u64(std::string_view key) const {
    const std::string& v = str(key);
    try {
      std::size_t pos = 0;
      if (v.empty() || v.front() == '-') throw std::invalid_argument("negative");
      const auto x = std::stoull(v, &pos);
      if (pos != v.size()) throw std::invalid_argument("trailing");
      return x;
    } catch (const std::exception&) {
      throw UsageError("config " + std::string(key) + ": expected a non-negative integer, got '" + v + "'");
    }
  }
  std::size_t size(std::string_view key) const { return static_cast<std::size_t>(u64(key)); }

  double real(std::string_view key) const {
    const std::string& v = str(key);
    try {
      std::size_t pos = 0;
      const double x = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument("trailing");
      return x;
    } catch (const std::exception&) {
      throw UsageError("config " + std::string(key) + ": expected a number, got '" + v + "'");
    }
  }

  bool flag(std::string_view key) const {
    const std::string v = text::lower(str(key));
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw UsageError("config " + std::string(key) + ": expected true or false, got '" + v + "'");
  }

  std::vector<std::string> list(std::string_view key) const {
    std::vector<std::string> out;
    for (const auto& part : text::split(str(key), ',')) {
      const auto t = text::trim(part);
      if (!t.empty()) out.push_back(t);
    }
    return out;
  }

  fs::path workdir() const { return fs::path(str("paths.workdir")); }
  unsigned threads() const { return static_cast<unsigned>(std::max<std::uint64_t>(1, u64("threads"))); }

  EncoderConfig encoder() const {
    EncoderConfig c;
    c.dim = size("encoder.dim");
    c.buckets = size("encoder.buckets");
    c.window = size("encoder.window");
    c.margin = real("encoder.margin");
    c.learning_rate = real("encoder.learning_rate");
    c.epochs = size("encoder.epochs");
    c.batch_size = size("encoder.batch_size");
    c.seed = u64("seed");
    c.hash_seed = u64("encoder.hash_seed");
    c.threads = threads();
    return c;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [k, v] : values_) j[k] = v;
    return j;
  }

 private:
  std::map<std::string, std::string> values_;
};

// Defaults, then the config file, then SELBIAS_WORKDIR, then `--key=value`
// overrides.
inline PipelineConfig make_config(const std::optional<fs::path>& file,
                                  const std::vector<std::pair<std::string, std::string>>& overrides) {
  PipelineConfig c;
  if (file) c.load_file(*file);
  if (const char* env = std::getenv("SELBIAS_WORKDIR"); env && *env) c.set("paths.workdir", env);
  for (const auto& [k, v] : overrides) c.set(k, v);
  return c;
}

// ---------------------------------------------------------------------------
// Workdir layout.

namespace artifact {
inline constexpr const char* kCorpusDir = "corpus";
inline constexpr const char* kLabels = "labels.csv";
inline constexpr const char* kAnchors = "anchors.tsv";
inline constexpr const char* kAnchorsManifest = "anchors.json";
inline constexpr const char* kEntities = "entities.csv";
inline constexpr const char* kContexts = "contexts.jsonl";
inline constexpr const char* kPairs = "pairs.csv";
inline constexpr const char* kEncoder = "encoder.bin";
inline constexpr const char* kLoss = "loss.csv";
inline constexpr const char* kEmbeddings = "embeddings.jsonl";
inline constexpr const char* kMetrics = "metrics.json";
inline constexpr const char* kPredictions = "predictions.csv";
inline constexpr const char* kAeps = "aeps.csv";
inline constexpr const char* kHeatmap = "heatmap.csv";
inline constexpr const char* kProbe = "probe.csv";
inline constexpr const char* kPca = "pca.csv";
inline constexpr const char* kReport = "report.json";
}  // namespace artifact

namespace detail {

class Run {
 public:
  Run(std::string command, const PipelineConfig& config, std::ostream& log)
      : command_(std::move(command)), config_(config), log_(log), dir_(config.workdir()) {
    fs::create_directories(dir_);
  }

  const PipelineConfig& config() const { return config_; }
  fs::path path(std::string_view rel) const { return dir_ / rel; }
  std::ostream& log() { return log_; }

  // Path of a workdir artifact, gated on its existence.
  fs::path need(std::string_view rel, const std::string& what, const std::string& producer) {
    const fs::path p = path(rel);
    if (!fs::exists(p)) throw MissingArtifact(what, producer);
    input(p, std::string(rel));
    return p;
  }

  // Path of a user-supplied input file.
  fs::path need_input(std::string_view key) {
    const std::string& v = config_.str(key);
    if (v.empty()) throw UsageError(command_ + ": config " + std::string(key) + " is not set");
    const fs::path p(v);
    if (!fs::exists(p)) throw IoError(command_ + ": " + std::string(key) + " not found: " + v);
    input(p, std::string(key));
    return p;
  }

  void input(const fs::path& p, const std::string& name) {
    if (fs::is_directory(p)) {
      for (const auto& e : fs::directory_iterator(p)) {
        if (e.is_regular_file()) inputs_[name + "/" + e.path().filename().string()] = file_sha256(e.path());
      }
    } else {
      inputs_[name] = file_sha256(p);
    }
  }

  void write(std::string_view rel, std::string_view data) {
    write_file(path(rel), data);
    outputs_[std::string(rel)] = sha256_hex(data);
  }

  void note(const std::string& key, nlohmann::ordered_json value) { extra_[key] = std::move(value); }

  void seed(const std::string& stage, std::uint64_t s) {
    seeds_[stage] = s;
    log_ << command_ << ": " << stage << " seed " << s << "\n";
  }

  void finish() {
    nlohmann::ordered_json m;
    m["schema"] = "selbias.manifest";
    m["version"] = 1;
    m["command"] = command_;
    m["tool_version"] = std::string(kVersion);
    m["seed"] = config_.u64("seed");
    m["seeds"] = seeds_.empty() ? nlohmann::ordered_json::object() : seeds_;
    m["config"] = config_.to_json();
    m["inputs"] = inputs_.empty() ? nlohmann::ordered_json::object() : inputs_;
    m["outputs"] = outputs_.empty() ? nlohmann::ordered_json::object() : outputs_;
    for (auto& [k, v] : extra_.items()) m[k] = v;
    // The only field that changes between identical runs.
    m["timestamp"] = format_timestamp(static_cast<Timestamp>(
        std::chrono::duration_cast<std::chrono::seconds>(
            std::chrono::system_clock::now().time_since_epoch())
            .count()));
    write_file(dir_ / "manifests" / (command_ + ".json"), m.dump(2) + "\n");
  }

 private:
  std::string command_;
  const PipelineConfig& config_;
  std::ostream& log_;
  fs::path dir_;
  nlohmann::ordered_json inputs_ = nlohmann::ordered_json::object();
  nlohmann::ordered_json outputs_ = nlohmann::ordered_json::object();
  nlohmann::ordered_json seeds_ = nlohmann::ordered_json::object();
  nlohmann::ordered_json extra_ = nlohmann::ordered_json::object();
};

inline nlohmann::ordered_json errors_json(std::span<const RecordError> errors, std::size_t limit = 100) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < errors.size() && i < limit; ++i) {
    arr.push_back({{"line", errors[i].line}, {"message", errors[i].message}});
  }
  return arr;
}

inline CorpusHandle open_workdir_corpus(Run& r) {
  return open_corpus(r.need(artifact::kCorpusDir, "ingested corpus", "ingest"));
}

inline LabelSet open_labels(Run& r) {
  const auto loaded = parse_labels(read_file(r.need(artifact::kLabels, "source labels", "ingest")));
  if (!loaded.errors.empty()) throw ParseError("labels.csv: " + loaded.errors.front().message);
  return loaded.labels;
}

inline std::map<std::string, Rating3> ratings3(const std::map<std::string, Rating5>& r5) {
  std::map<std::string, Rating3> out;
  for (const auto& [s, r] : r5) out[s] = aggregate_labels(r);
  return out;
}

inline AnchorTable open_anchors(Run& r) {
  r.need(artifact::kAnchors, "anchor table", "build-anchors");
  return load_anchor_table(r.path(artifact::kAnchors), r.config().u64("linking.prune"));
}

inline std::vector<ContextSet> open_contexts(Run& r) {
  return contexts_from_jsonl(read_file(r.need(artifact::kContexts, "context sentences", "extract")));
}

inline std::vector<EntityPair> open_pairs(Run& r) {
  const csv::Table t = csv::parse(read_file(r.need(artifact::kPairs, "pair ranking", "extract")));
  const auto c1 = csv::column(t, "e1"), c2 = csv::column(t, "e2");
  std::vector<EntityPair> out;
  for (const auto& row : t.rows) out.emplace_back(row.at(c1), row.at(c2));
  return out;
}

inline std::vector<SourceEmbedding> open_embeddings(Run& r) {
  return embeddings_from_jsonl(read_file(r.need(artifact::kEmbeddings, "source embeddings", "embed")));
}

inline std::vector<EntityPair> open_aep_pairs(Run& r) {
  const csv::Table t = csv::parse(read_file(r.need(artifact::kAeps, "AEP ranking", "rank-aeps")));
  const auto c1 = csv::column(t, "e1"), c2 = csv::column(t, "e2");
  std::vector<EntityPair> out;
  for (const auto& row : t.rows) out.emplace_back(row.at(c1), row.at(c2));
  return out;
}

inline std::vector<EntityPair> head(const std::vector<EntityPair>& v, std::size_t n) {
  return {v.begin(), v.begin() + static_cast<std::ptrdiff_t>(std::min(n, v.size()))};
}

// --- subcommands -----------------------------------------------------------

inline void cmd_ingest(Run& r) {
  const auto& cfg = r.config();
  CorpusLoadResult loaded = load_articles(r.need_input("paths.corpus"), cfg.threads());
  CorpusHandle handle = loaded.handle;
  const std::string start = cfg.str("corpus.start"), end = cfg.str("corpus.end");
  if (!start.empty() || !end.empty()) {
    const auto parse = [](const std::string& s, Timestamp fallback) {
      if (s.empty()) return fallback;
      const auto t = parse_timestamp(s);
      if (!t) throw UsageError("unparseable corpus window bound '" + s + "'");
      return *t;
    };
    handle = filter_time_window(handle, parse(start, 0),
                                parse(end, std::numeric_limits<Timestamp>::max()));
  }
  if (handle.empty()) throw InvalidArgument("ingest: no valid articles");
  persist_corpus(handle, r.path(artifact::kCorpusDir));
  for (const char* f : {"articles.jsonl", "corpus.json"}) {
    r.input(r.path(artifact::kCorpusDir) / f, std::string("out:") + f);
  }
  r.note("articles", handle.size());
  r.note("sources", handle.source_index().size());
  r.note("record_errors", loaded.errors.size());
  r.note("first_record_errors", errors_json(loaded.errors));
  if (!loaded.errors.empty()) {
    r.log() << "ingest: skipped " << loaded.errors.size() << " invalid records (first: line "
            << loaded.errors.front().line << ": " << loaded.errors.front().message << ")\n";
  }
  if (!cfg.str("paths.labels").empty()) {
    const auto labels = load_labels(r.need_input("paths.labels"));
    r.write(artifact::kLabels, labels.labels.to_csv());
    r.note("label_errors", errors_json(labels.errors));
  }
  r.log() << "ingest: " << handle.size() << " articles from " << handle.source_index().size()
          << " sources\n";
}

inline void cmd_build_anchors(Run& r) {
  const auto& cfg = r.config();
  AnchorBuildResult built = parse_link_tsv(read_file(r.need_input("paths.anchors")), cfg.threads());
  const AnchorTable table = built.table.pruned(cfg.u64("linking.prune"));
  if (table.empty()) throw InvalidArgument("build-anchors: anchor table is empty after pruning");
  r.write(artifact::kAnchors, table.to_tsv());
  r.write(artifact::kAnchorsManifest, table.manifest().dump(2) + "\n");
  r.note("record_errors", built.errors.size());
  r.note("first_record_errors", errors_json(built.errors));
  r.log() << "build-anchors: " << table.mention_count() << " mentions, " << table.entry_count()
          << " entries\n";
}

inline void cmd_link_stats(Run& r) {
  const auto& cfg = r.config();
  const CorpusHandle handle = open_workdir_corpus(r);
  const AnchorTable table = open_anchors(r);
  const auto catalog = top_k_entities(handle, table, cfg.size("linking.top_entities"), cfg.threads());
  r.write(artifact::kEntities, catalog.to_csv());
  r.log() << "link-stats: " << catalog.entries.size() << " topic entities\n";
}

inline void cmd_extract(Run& r) {
  const auto& cfg = r.config();
  const CorpusHandle handle = open_workdir_corpus(r);
  const AnchorTable table = open_anchors(r);
  const auto catalog = EntityCatalog::from_csv(
      read_file(r.need(artifact::kEntities, "entity catalog", "link-stats")));
  ExtractOptions opts;
  opts.max_entities_per_sentence = cfg.size("extract.max_entities");
  opts.min_masked_tokens = cfg.size("extract.min_tokens");
  opts.include_titles = cfg.flag("extract.include_titles");
  opts.threads = cfg.threads();
  const auto sets = extract_context_sentences(handle, catalog, table, opts);
  r.write(artifact::kContexts, contexts_to_jsonl(sets));
  const auto counts = pair_sentence_counts(sets);
  std::map<EntityPair, std::size_t> sources;
  for (const ContextSet& s : sets) ++sources[s.pair];
  std::string pairs = csv::schema_line("pairs", 1) + "rank,e1,e2,sentences,sources\n";
  const auto ranked = rank_pairs_by_frequency(sets);
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    pairs += csv::format_row({std::to_string(i + 1), ranked[i].first(), ranked[i].second(),
                              std::to_string(counts.at(ranked[i])),
                              std::to_string(sources.at(ranked[i]))});
  }
  r.write(artifact::kPairs, pairs);
  std::size_t n = 0;
  for (const auto& [p, c] : counts) n += c;
  r.log() << "extract: " << n << " context sentences over " << ranked.size() << " pairs\n";
}

inline void cmd_train_encoder(Run& r) {
  const auto& cfg = r.config();
  const auto sets = open_contexts(r);
  const EncoderConfig ec = cfg.encoder();
  SamplerOptions so;
  so.per_anchor = cfg.size("encoder.per_anchor");
  so.positives = parse_positive_mode(cfg.str("encoder.positives"));
  so.strict_negatives = cfg.flag("encoder.strict_negatives");
  so.seed = splitmix64(cfg.u64("seed") ^ 0x7319ULL);
  r.seed("sampler", so.seed);
  r.seed("init", ec.seed);
  const auto triplets = sample_triplets(sets, so);
  auto enc = ContextEncoder<float>::initialized(ec);
  const TrainResult tr = train(enc, triplets, ec);
  r.write(artifact::kEncoder, checkpoint_bytes(enc));
  r.write(artifact::kLoss, loss_curve_csv(tr));
  r.note("triplets", triplets.size());
  r.note("steps", tr.steps);
  r.log() << "train-encoder: " << triplets.size() << " triplets, final epoch loss "
          << format_double(tr.epoch_loss.back()) << "\n";
}

inline void cmd_embed(Run& r) {
  const auto sets = open_contexts(r);
  const auto enc = load_checkpoint<float>(r.need(artifact::kEncoder, "trained encoder", "train-encoder"));
  const auto emb = pool_embeddings(std::span<const ContextSet>(sets), enc, r.config().threads());
  r.write(artifact::kEmbeddings, embeddings_to_jsonl(emb));
  r.log() << "embed: " << emb.size() << " source embeddings\n";
}

inline void cmd_rank_aeps(Run& r) {
  const auto& cfg = r.config();
  const auto emb = open_embeddings(r);
  const auto labels = open_labels(r).resolve();
  const auto pairs = open_pairs(r);
  AepOptions o;
  o.lambda = cfg.real("analytics.lambda");
  o.min_group = cfg.size("analytics.min_group");
  o.reduce = cfg.flag("analytics.reduce");
  o.symmetrized = cfg.flag("analytics.symmetrized");
  o.include_lean = cfg.flag("analytics.include_lean");
  o.threads = cfg.threads();
  const std::size_t min_support = cfg.size("analytics.min_support");
  std::vector<SourceEmbedding> kept;
  for (const auto& e : emb) {
    if (e.support >= min_support) kept.push_back(e);
  }
  const auto ranking = rank_aeps(kept, labels, pairs, cfg.size("analytics.top_pairs"), o);
  r.write(artifact::kAeps, aeps_to_csv(ranking));
  nlohmann::ordered_json inel = nlohmann::ordered_json::array();
  for (const auto& p : ranking.ineligible) {
    inel.push_back({{"e1", p.pair.first()}, {"e2", p.pair.second()}, {"n_left", p.n_left},
                    {"n_right", p.n_right}});
  }
  r.note("ineligible_pairs", inel);
  nlohmann::ordered_json fit = nlohmann::ordered_json::object();
  fit["pca_reduced"] = o.reduce;
  fit["fit_dims"] = nlohmann::ordered_json::array();
  for (const auto& s : ranking.scores) fit["fit_dims"].push_back(s.fit_dim);
  r.note("gaussian_fit", fit);
  r.log() << "rank-aeps: " << ranking.scores.size() << " pairs scored, "
          << ranking.ineligible.size() << " ineligible\n";
}

inline void cmd_classify(Run& r) {
  const auto& cfg = r.config();
  const auto emb = open_embeddings(r);
  const LabelSet labelset = open_labels(r);
  const auto labels = ratings3(labelset.resolve());
  const auto pairs = open_pairs(r);
  const auto fm = build_feature_matrix(emb, pairs, cfg.size("analytics.k"), cfg.size("analytics.min_support"));

  const auto listed = cfg.list("classify.test_sources");
  std::set<std::string> test(listed.begin(), listed.end());
  std::string protocol = "holdout";
  if (test.empty()) {
    // Sources rated only by MBFC are the test set when there are any.
    for (const auto& l : labelset.all()) {
      if (l.provenance == Provenance::kMbfc && !labelset.find(l.source_id, Provenance::kAllSides)) {
        test.insert(l.source_id);
      }
    }
    protocol = test.empty() ? "cross-validation" : "mbfc-holdout";
  }
  std::vector<std::size_t> tr_rows, te_rows;
  std::vector<int> y_tr, y_te;
  std::vector<std::string> te_ids, tr_ids;
  for (std::size_t i = 0; i < fm.rows.size(); ++i) {
    const auto it = labels.find(fm.rows[i].source_id);
    if (it == labels.end()) continue;
    if (test.contains(fm.rows[i].source_id)) {
      te_rows.push_back(i);
      y_te.push_back(static_cast<int>(it->second));
      te_ids.push_back(fm.rows[i].source_id);
    } else {
      tr_rows.push_back(i);
      y_tr.push_back(static_cast<int>(it->second));
      tr_ids.push_back(fm.rows[i].source_id);
    }
  }
  if (protocol != "cross-validation" && te_rows.empty()) {
    throw InvalidArgument("classify: no labeled test source has features");
  }
  const Eigen::MatrixXd all = fm.matrix();
  Eigen::MatrixXd x_tr = detail::select_rows(all, tr_rows);
  Eigen::MatrixXd x_te = detail::select_rows(all, te_rows);
  if (cfg.flag("classify.standardize") && x_tr.rows() > 0) {
    const auto z = Standardizer::fit(x_tr);
    x_tr = z.apply(x_tr);
    if (x_te.rows() > 0) x_te = z.apply(x_te);
  }
  nlohmann::ordered_json metrics;
  metrics["schema"] = "selbias.metrics";
  metrics["version"] = 1;
  metrics["protocol"] = protocol;
  metrics["k"] = fm.pairs.size();
  metrics["n_train"] = tr_rows.size();
  metrics["n_test"] = protocol == "cross-validation" ? tr_rows.size() : te_rows.size();
  metrics["classifiers"] = nlohmann::ordered_json::object();
  std::string preds = csv::schema_line("predictions", 1) + "classifier,source,gold,predicted\n";
  const std::uint64_t seed = cfg.u64("seed");
  r.seed("classifier", seed);
  for (const std::string& name : cfg.list("classify.kinds")) {
    const ClassifierKind kind = parse_classifier_kind(name);
    ClassifierParams p = default_params(kind);
    p.seed = seed;
    std::vector<int> pred, gold;
    const std::vector<std::string>* ids = nullptr;
    if (protocol == "cross-validation") {
      pred = cross_val_predict(x_tr, y_tr, kind, p, cfg.size("classify.folds"));
      gold = y_tr;
      ids = &tr_ids;
    } else {
      pred = train_classifier(x_tr, y_tr, kind, p).predict(x_te);
      gold = y_te;
      ids = &te_ids;
    }
    const auto prf = evaluate_weighted_prf(pred, gold);
    metrics["classifiers"][std::string(to_string(kind))] = {
        {"precision", prf.precision}, {"recall", prf.recall}, {"f1", prf.f1},
        {"f1_classwise", prf.f1_classwise}, {"params", p.to_json()}};
    for (std::size_t i = 0; i < pred.size(); ++i) {
      preds += csv::format_row({std::string(to_string(kind)), (*ids)[i],
                                std::string(to_string(static_cast<Rating3>(gold[i]))),
                                std::string(to_string(static_cast<Rating3>(pred[i])))});
    }
    r.log() << "classify: " << to_string(kind) << " F1 " << format_double(prf.f1) << "\n";
  }
  r.write(artifact::kMetrics, metrics.dump(2) + "\n");
  r.write(artifact::kPredictions, preds);
}

inline void cmd_heatmap(Run& r) {
  const auto& cfg = r.config();
  const auto emb = open_embeddings(r);
  const auto labels = ratings3(open_labels(r).resolve());
  const auto pairs = head(open_aep_pairs(r), cfg.size("heatmap.pairs"));
  std::vector<std::string> holdout = cfg.list("heatmap.holdout");
  if (holdout.empty()) {
    holdout = default_holdout(open_workdir_corpus(r), labels, cfg.size("heatmap.holdout_count"));
  }
  HeatmapOptions o;
  o.min_group = cfg.size("analytics.min_group");
  o.min_sentences = cfg.size("heatmap.min_sentences");
  o.svm.seed = cfg.u64("seed");
  r.seed("classifier", o.svm.seed);
  const auto h = per_pair_polarity(emb, labels, pairs, holdout, o);
  r.write(artifact::kHeatmap, heatmap_to_csv(h));
  r.note("holdout", holdout);
  r.log() << "heatmap: " << h.covered() << " of " << h.sources.size() * h.pairs.size()
          << " cells covered\n";
}

inline void cmd_probe(Run& r) {
  const auto& cfg = r.config();
  const auto emb = open_embeddings(r);
  const auto labels = ratings3(open_labels(r).resolve());
  const auto pairs = head(open_aep_pairs(r), cfg.size("probe.pairs"));
  const auto enc = load_checkpoint<float>(r.need(artifact::kEncoder, "trained encoder", "train-encoder"));
  const auto lex = parse_lexicon(read_file(r.need_input("paths.lexicon")));
  if (!lex.errors.empty()) {
    throw ParseError("lexicon line " + std::to_string(lex.errors.front().line) + ": " +
                     lex.errors.front().message);
  }
  const auto sel = select_predicates(lex.entries, open_workdir_corpus(r), cfg.size("probe.n_per_class"),
                                     cfg.threads());
  for (const auto& w : sel.warnings) r.log() << "probe: warning: " << w << "\n";
  const auto bank = build_prompt_bank(std::span<const PredicateEntry>(sel.predicates), enc);
  ProbeOptions o;
  o.top_k = cfg.size("probe.top_k");
  o.temperature = cfg.real("probe.temperature");
  o.both_orderings = cfg.flag("probe.both_orderings");
  const std::set<EntityPair> wanted(pairs.begin(), pairs.end());
  std::vector<ProbeResult> results;
  for (const auto& e : emb) {
    if (wanted.contains(e.pair) && e.support >= cfg.size("analytics.min_support")) {
      results.push_back(probe_score(e, bank, o));
    }
  }
  std::stable_sort(results.begin(), results.end(), [&](const ProbeResult& a, const ProbeResult& b) {
    const auto ra = std::find(pairs.begin(), pairs.end(), a.pair) - pairs.begin();
    const auto rb = std::find(pairs.begin(), pairs.end(), b.pair) - pairs.begin();
    return std::tie(ra, a.source_id) < std::tie(rb, b.source_id);
  });
  r.write(artifact::kProbe, probe_to_csv(results, labels));
  r.note("predicate_warnings", sel.warnings);
  r.log() << "probe: " << results.size() << " source-pair scores\n";
}

inline void cmd_pca(Run& r) {
  const auto& cfg = r.config();
  const auto emb = open_embeddings(r);
  const auto labels = ratings3(open_labels(r).resolve());
  const auto pairs = head(open_aep_pairs(r), cfg.size("pca.pairs"));
  std::string out = csv::schema_line("pca", 1) + "e1,e2,source,label3,pc1,pc2\n";
  nlohmann::ordered_json ratios = nlohmann::ordered_json::array();
  for (const EntityPair& p : pairs) {
    const auto res = pca_for_pair(emb, labels, p);
    if (!res) continue;
    for (const PcaPoint& pt : res->points) {
      out += csv::format_row({p.first(), p.second(), pt.source_id,
                              pt.label ? std::string(to_string(*pt.label)) : "unlabeled",
                              format_double(pt.pc1), format_double(pt.pc2)});
    }
    ratios.push_back({{"e1", p.first()}, {"e2", p.second()}, {"explained_ratio", res->explained_ratio}});
  }
  r.write(artifact::kPca, out);
  r.note("explained_ratio", ratios);
  r.log() << "pca: " << ratios.size() << " pairs projected\n";
}

inline nlohmann::ordered_json csv_as_json(const std::string& data) {
  const csv::Table t = csv::parse(data);
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& row : t.rows) {
    nlohmann::ordered_json obj;
    for (std::size_t i = 0; i < t.header.size() && i < row.size(); ++i) obj[t.header[i]] = row[i];
    rows.push_back(obj);
  }
  return rows;
}

inline void cmd_report(Run& r) {
  nlohmann::ordered_json rep;
  rep["schema"] = "selbias.report";
  rep["version"] = 1;
  rep["tool_version"] = std::string(kVersion);
  rep["seed"] = r.config().u64("seed");
  rep["classification"] = nlohmann::json::parse(read_file(r.need(artifact::kMetrics, "classification metrics", "classify")));
  rep["aeps"] = csv_as_json(read_file(r.need(artifact::kAeps, "AEP ranking", "rank-aeps")));
  rep["heatmap"] = csv_as_json(read_file(r.need(artifact::kHeatmap, "polarity heatmap", "heatmap")));
  rep["probe"] = csv_as_json(read_file(r.need(artifact::kProbe, "probe scores", "probe")));
  rep["pca"] = csv_as_json(read_file(r.need(artifact::kPca, "PCA plot data", "pca")));
  nlohmann::ordered_json files = nlohmann::ordered_json::object();
  for (const char* f : {artifact::kMetrics, artifact::kAeps, artifact::kHeatmap, artifact::kProbe,
                        artifact::kPca}) {
    files[f] = file_sha256(r.path(f));
  }
  rep["artifacts"] = files;
  r.write(artifact::kReport, rep.dump(2) + "\n");
  r.log() << "report: " << r.path(artifact::kReport).string() << "\n";
}

}  // namespace detail

// Runs one subcommand. Returns the process exit status: 0 ok, 2 usage,
// 3 missing upstream artifact, 1 anything else. Failures print one JSON
// object on `err`.
inline int run_subcommand(std::string_view name, const PipelineConfig& config, std::ostream& log,
                          std::ostream& err) {
  const auto fail = [&](int code, std::string_view kind, const std::string& message,
                        const std::string& run_first = "") {
    nlohmann::ordered_json e;
    e["error"] = {{"command", std::string(name)}, {"kind", std::string(kind)}, {"message", message}};
    if (!run_first.empty()) e["error"]["run_first"] = run_first;
    err << e.dump() << "\n";
    return code;
  };
  using Fn = void (*)(detail::Run&);
  static const std::map<std::string, Fn, std::less<>> table = {
      {"ingest", detail::cmd_ingest},
      {"build-anchors", detail::cmd_build_anchors},
      {"link-stats", detail::cmd_link_stats},
      {"extract", detail::cmd_extract},
      {"train-encoder", detail::cmd_train_encoder},
      {"embed", detail::cmd_embed},
      {"classify", detail::cmd_classify},
      {"rank-aeps", detail::cmd_rank_aeps},
      {"heatmap", detail::cmd_heatmap},
      {"probe", detail::cmd_probe},
      {"pca", detail::cmd_pca},
      {"report", detail::cmd_report},
  };
  const auto it = table.find(name);
  if (it == table.end()) return fail(2, "usage", "unknown subcommand '" + std::string(name) + "'");
  try {
    detail::Run run(std::string(name), config, log);
    it->second(run);
    run.finish();
    return 0;
  } catch (const MissingArtifact& e) {
    return fail(3, "missing_artifact", e.what(), e.producer());
  } catch (const UsageError& e) {
    return fail(2, "usage", e.what());
  } catch (const Error& e) {
    return fail(1, "error", e.what());
  } catch (const std::exception& e) {
    return fail(1, "internal", e.what());
  }
}

}  // namespace selbias

#endif  // SELBIAS_PIPELINE_HPP_
