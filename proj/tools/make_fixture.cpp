// Regenerates the synthetic pipeline fixture under data/fixture/.
// The golden linking files there are hand-written and left alone.
#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "selbias/synthetic.hpp"

namespace fs = std::filesystem;

namespace {

void put(const fs::path& p, const std::string& data) {
  std::ofstream out(p, std::ios::binary);
  out << data;
  if (!out) throw std::runtime_error("cannot write " + p.string());
  std::cout << p.string() << " (" << data.size() << " bytes)\n";
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : ",") + x;
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Write the synthetic fixture corpus"};
  std::string out_dir = "data/fixture";
  std::uint64_t seed = 7;
  app.add_option("-o,--out", out_dir, "Output directory");
  app.add_option("--seed", seed, "Generator seed");
  CLI11_PARSE(app, argc, argv);

  selbias::synthetic::Options o;
  o.left = 8;
  o.right = 8;
  o.center = 4;
  o.planted = 3;
  o.shared = 5;
  o.articles_per_source = 10;
  o.seed = seed;
  const auto c = selbias::synthetic::generate(o);

  const fs::path dir(out_dir);
  fs::create_directories(dir / "corpus");
  put(dir / "corpus" / "articles.jsonl", c.articles_jsonl());
  put(dir / "labels.csv", c.labels_csv());
  put(dir / "links.tsv", c.links_tsv());
  put(dir / "lexicon.csv", c.lexicon_csv());

  std::string cfg;
  cfg += "# small settings so the whole pipeline runs in a few seconds\n";
  cfg += "seed = 13\n\n[paths]\n";
  cfg += "corpus = \"corpus\"\nlabels = \"labels.csv\"\nanchors = \"links.tsv\"\nlexicon = \"lexicon.csv\"\n\n";
  cfg += "[encoder]\ndim = 16\nbuckets = 4096\nepochs = 2\nlearning_rate = 0.01\npositives = \"same-source\"\n\n";
  cfg += "[analytics]\nk = 5\ntop_pairs = 8\n\n";
  cfg += "[classify]\nkinds = \"lasso-logistic,linear-svm,rbf-svm\"\nfolds = 4\n\n";
  cfg += "[heatmap]\npairs = 4\nholdout = \"" + join(c.holdout) + "\"\n\n";
  cfg += "[probe]\npairs = 2\nn_per_class = 5\n\n[pca]\npairs = 2\n";
  put(dir / "config.toml", cfg);
  return 0;
}
