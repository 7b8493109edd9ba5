#include <CLI11.hpp>

#include <iostream>

#include "selbias/pipeline.hpp"

namespace {

const char* describe(std::string_view cmd) {
  if (cmd == "ingest") return "Validate and persist the article corpus and source labels";
  if (cmd == "build-anchors") return "Aggregate link triples into the anchor table";
  if (cmd == "link-stats") return "Count linked entities and write the topic catalog";
  if (cmd == "extract") return "Extract masked context sentences per (source, pair)";
  if (cmd == "train-encoder") return "Train the context encoder on sampled triplets";
  if (cmd == "embed") return "Mean-pool context embeddings per (source, pair)";
  if (cmd == "classify") return "Source polarity classification over top-k pair features";
  if (cmd == "rank-aeps") return "Rank entity pairs by left/right Gaussian divergence";
  if (cmd == "heatmap") return "Per-pair polarity predictions for held-out sources";
  if (cmd == "probe") return "Sentiment probe scores for the top pairs";
  if (cmd == "pca") return "Two-component PCA plot data for the top pairs";
  if (cmd == "report") return "Combine metrics, rankings and plot data into one JSON";
  return "";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"selbias: entity-pair selection bias analysis for news sources"};
  app.set_version_flag("--version", std::string(selbias::kVersion));
  app.require_subcommand(1, 1);

  std::string config_path;
  unsigned threads = 0;
  app.add_option("-c,--config", config_path, "TOML-style config file")->check(CLI::ExistingFile);
  app.add_option("--threads", threads, "Worker thread cap (overrides config)");
  app.footer(
      "Any config key can be overridden with --key=value, e.g. --encoder.dim=32 or --dim=32.\n"
      "SELBIAS_WORKDIR overrides paths.workdir from the config file.");

  for (std::string_view cmd : selbias::kSubcommands) {
    app.add_subcommand(std::string(cmd), describe(cmd))->allow_extras();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    nlohmann::ordered_json err;
    err["error"] = {{"command", nullptr}, {"kind", "usage"}, {"message", e.what()}};
    std::cerr << err.dump() << "\n";
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  std::vector<std::pair<std::string, std::string>> overrides;
  const auto usage = [&](const std::string& message) {
    nlohmann::ordered_json err;
    err["error"] = {{"command", name}, {"kind", "usage"}, {"message", message}};
    std::cerr << err.dump() << "\n";
    return 2;
  };
  const auto extras = sub->remaining();
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& a = extras[i];
    if (!a.starts_with("--")) return usage("unexpected argument '" + a + "'");
    const auto eq = a.find('=');
    if (eq != std::string::npos) {
      overrides.emplace_back(a.substr(2, eq - 2), a.substr(eq + 1));
    } else if (i + 1 < extras.size() && !extras[i + 1].starts_with("--")) {
      overrides.emplace_back(a.substr(2), extras[i + 1]);
      ++i;
    } else {
      return usage("option '" + a + "' needs a value (--key=value)");
    }
  }
  // --config / --threads may also come after the subcommand
  std::erase_if(overrides, [&](const auto& kv) {
    if (kv.first == "config" || kv.first == "c") {
      config_path = kv.second;
      return true;
    }
    if (kv.first == "threads" && threads == 0) {
      try {
        threads = static_cast<unsigned>(std::stoul(kv.second));
      } catch (const std::exception&) {
        threads = 0;
      }
    }
    return false;
  });
  if (!config_path.empty() && !std::filesystem::is_regular_file(config_path)) {
    return usage("config file not found: " + config_path);
  }
  if (threads > 0) overrides.emplace_back("threads", std::to_string(threads));

  selbias::PipelineConfig config;
  try {
    config = selbias::make_config(
        config_path.empty() ? std::nullopt : std::optional<std::filesystem::path>(config_path),
        overrides);
  } catch (const selbias::Error& e) {
    return usage(e.what());
  }
  return selbias::run_subcommand(name, config, std::cerr, std::cerr);
}
