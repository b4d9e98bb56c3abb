#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "geoprompt/pipeline.hpp"

namespace geoprompt::cli {

enum ExitCode : int { kOk = 0, kInputError = 1, kPartial = 2 };

struct DataPaths {
  std::string dir = "data";
  std::string classes = "classes.json";
  std::string manifest = "manifest.jsonl";
  std::string features = "features.tsv";
  std::string descriptors = "descriptors.jsonl";
  std::string vocab = "vocab.tsv";
};

struct KnowledgeSection {
  KnowledgeMode mode = KnowledgeMode::CountryInPromptLLM;
  std::vector<std::string> geographies;         // probe grid; empty = every manifest country
  std::vector<std::string> target_geographies;  // G_t; empty = countries picked by `target_source`
  GeographySet::Role target_source = GeographySet::Role::Target;
  bool general = true;                          // also acquire D(c)
  std::size_t parallelism = 4;
  std::string model = "text-davinci-003";
  int max_tokens = 100;
  double temperature = 0.7;
};

struct EvalSection {
  std::vector<PromptStrategy> strategies = {PromptStrategy::Default, PromptStrategy::CountryLLM};
  std::vector<Split> splits = {Split::SourceTest, Split::Target};
  std::vector<std::size_t> ks = {1, 3};
  std::vector<double> thresholds = kDefaultStrataThresholds;
  std::vector<std::string> group_keys = {"continent", "country", "income_bucket"};
  double tau = 1.0;
  std::string checkpoint = "runs/train/checkpoint.json";
  std::string baseline_recalls;  // optional
};

struct FewShotSection {
  std::vector<std::size_t> shots = {1, 2, 4, 8, 12, 16};
  KnowledgeMode reference_mode = KnowledgeMode::CountryInPromptLLM;
  bool svg = false;
};

struct AnalysisSection {
  std::string stats;       // country statistics CSV
  std::string continents;  // optional CSV country,continent; default from the manifest
  std::vector<PromptStrategy> strategies = {PromptStrategy::CountryInPrompt, PromptStrategy::CountryLLM,
                                            PromptStrategy::CountryInPromptPlusLLM};
  std::vector<std::string> statistics;  // empty = every column of the stats file
  std::vector<std::string> keywords;
};

struct RunConfig {
  DataPaths data;
  std::string output = "runs";
  std::optional<std::uint64_t> seed;  // when set, overrides every section's seed
  KnowledgeSection knowledge;
  TrainConfig train;
  EvalSection eval;
  FewShotSection fewshot;
  AnalysisSection analysis;
  SynthConfig synth;

  // Applies `seed` to the sections and validates everything. Throws InvalidConfig.
  void resolve();

  nlohmann::ordered_json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);  // unknown keys rejected
};

RunConfig load_run_config(const std::filesystem::path& path);

struct Context {
  RunConfig config;
  std::filesystem::path workdir;
  std::optional<std::filesystem::path> mock_fixtures;

  std::filesystem::path data_path(const std::string& name) const;
  std::filesystem::path input_path(const std::string& p) const;
  // Output directory for a command; must stay inside the workdir.
  std::filesystem::path output_dir(const std::string& command) const;
};

int cmd_probe(const Context& ctx);
int cmd_zeroshot(const Context& ctx);
int cmd_train(const Context& ctx);
int cmd_eval(const Context& ctx);
int cmd_fewshot_curve(const Context& ctx);
int cmd_analyze(const Context& ctx);
int cmd_synth(const Context& ctx);

// Parses argv, runs the subcommand, maps errors to exit codes.
int run(int argc, char** argv);

}  // namespace geoprompt::cli
