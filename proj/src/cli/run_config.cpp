#include "geoprompt/cli.hpp"

#include <set>

#include "geoprompt/io_util.hpp"

namespace geoprompt::cli {

namespace {

using ojson = nlohmann::ordered_json;

constexpr std::pair<GeographySet::Role, const char*> kRoles[] = {
    {GeographySet::Role::Target, "target"}, {GeographySet::Role::Source, "source"}, {GeographySet::Role::All, "all"}};

GeographySet::Role parse_role(const std::string& name) {
  for (const auto& [role, n] : kRoles) {
    if (name == n) return role;
  }
  throw Error(ErrorKind::InvalidConfig, "target_source must be target, source or all");
}

std::string role_name(GeographySet::Role r) {
  for (const auto& [role, n] : kRoles) {
    if (role == r) return n;
  }
  return "target";
}

[[noreturn]] void reject(const std::string& where, const std::string& key) {
  throw Error(ErrorKind::InvalidConfig, "unknown key '" + key + "' in " + where);
}

template <typename T>
std::vector<std::string> names_of(const std::vector<T>& xs) {
  std::vector<std::string> out;
  for (const auto& x : xs) out.emplace_back(to_string(x));
  return out;
}

template <typename T, typename Parse>
std::vector<T> parse_names(const nlohmann::json& j, Parse parse) {
  std::vector<T> out;
  for (const auto& s : j) out.push_back(parse(s.get<std::string>()));
  return out;
}

DataPaths data_from_json(const nlohmann::json& j) {
  DataPaths d;
  for (const auto& [k, v] : j.items()) {
    if (k == "dir") d.dir = v.get<std::string>();
    else if (k == "classes") d.classes = v.get<std::string>();
    else if (k == "manifest") d.manifest = v.get<std::string>();
    else if (k == "features") d.features = v.get<std::string>();
    else if (k == "descriptors") d.descriptors = v.get<std::string>();
    else if (k == "vocab") d.vocab = v.get<std::string>();
    else reject("data", k);
  }
  return d;
}

KnowledgeSection knowledge_from_json(const nlohmann::json& j) {
  KnowledgeSection s;
  for (const auto& [k, v] : j.items()) {
    if (k == "mode") s.mode = parse_knowledge_mode(v.get<std::string>());
    else if (k == "geographies") s.geographies = v.get<std::vector<std::string>>();
    else if (k == "target_geographies") s.target_geographies = v.get<std::vector<std::string>>();
    else if (k == "target_source") s.target_source = parse_role(v.get<std::string>());
    else if (k == "general") s.general = v.get<bool>();
    else if (k == "parallelism") s.parallelism = v.get<std::size_t>();
    else if (k == "model") s.model = v.get<std::string>();
    else if (k == "max_tokens") s.max_tokens = v.get<int>();
    else if (k == "temperature") s.temperature = v.get<double>();
    else reject("knowledge", k);
  }
  return s;
}

EvalSection eval_from_json(const nlohmann::json& j) {
  EvalSection s;
  for (const auto& [k, v] : j.items()) {
    if (k == "strategies") s.strategies = parse_names<PromptStrategy>(v, parse_strategy);
    else if (k == "splits") s.splits = parse_names<Split>(v, parse_split);
    else if (k == "ks") s.ks = v.get<std::vector<std::size_t>>();
    else if (k == "thresholds") s.thresholds = v.get<std::vector<double>>();
    else if (k == "group_keys") s.group_keys = v.get<std::vector<std::string>>();
    else if (k == "tau") s.tau = v.get<double>();
    else if (k == "checkpoint") s.checkpoint = v.get<std::string>();
    else if (k == "baseline_recalls") s.baseline_recalls = v.get<std::string>();
    else reject("eval", k);
  }
  return s;
}

FewShotSection fewshot_from_json(const nlohmann::json& j) {
  FewShotSection s;
  for (const auto& [k, v] : j.items()) {
    if (k == "shots") s.shots = v.get<std::vector<std::size_t>>();
    else if (k == "reference_mode") s.reference_mode = parse_knowledge_mode(v.get<std::string>());
    else if (k == "svg") s.svg = v.get<bool>();
    else reject("fewshot", k);
  }
  return s;
}

AnalysisSection analysis_from_json(const nlohmann::json& j) {
  AnalysisSection s;
  for (const auto& [k, v] : j.items()) {
    if (k == "stats") s.stats = v.get<std::string>();
    else if (k == "continents") s.continents = v.get<std::string>();
    else if (k == "strategies") s.strategies = parse_names<PromptStrategy>(v, parse_strategy);
    else if (k == "statistics") s.statistics = v.get<std::vector<std::string>>();
    else if (k == "keywords") s.keywords = v.get<std::vector<std::string>>();
    else reject("analysis", k);
  }
  return s;
}

}  // namespace

void RunConfig::resolve() {
  if (seed) {
    train.seed = *seed;
    synth.seed = *seed;
  }
  train.validate();
  synth.validate();
  const auto fail = [](const std::string& m) { throw Error(ErrorKind::InvalidConfig, m); };
  if (knowledge.parallelism < 1) fail("knowledge.parallelism must be >= 1");
  if (eval.ks.empty()) fail("eval.ks is empty");
  for (const auto k : eval.ks) {
    if (k < 1) fail("eval.ks entries must be >= 1");
  }
  for (const auto& g : eval.group_keys) {
    if (g != "continent" && g != "country" && g != "income_bucket") {
      throw Error(ErrorKind::UnknownGroupKey, g);
    }
  }
  for (const double t : eval.thresholds) {
    if (!(t > 0.0 && t <= 100.0)) fail("eval.thresholds must lie in (0, 100]");
  }
  if (!(eval.tau > 0.0)) fail("eval.tau must be > 0");
  if (fewshot.shots.empty()) fail("fewshot.shots is empty");
  for (const auto k : fewshot.shots) {
    if (k < 1) fail("fewshot.shots entries must be >= 1");
  }
  if (output.empty()) fail("output is empty");
}

ojson RunConfig::to_json() const {
  ojson j;
  ojson d;
  d["dir"] = data.dir;
  d["classes"] = data.classes;
  d["manifest"] = data.manifest;
  d["features"] = data.features;
  d["descriptors"] = data.descriptors;
  d["vocab"] = data.vocab;
  j["data"] = std::move(d);
  j["output"] = output;
  if (seed) j["seed"] = *seed;

  ojson k;
  k["mode"] = std::string(to_string(knowledge.mode));
  k["geographies"] = knowledge.geographies;
  k["target_geographies"] = knowledge.target_geographies;
  k["target_source"] = role_name(knowledge.target_source);
  k["general"] = knowledge.general;
  k["parallelism"] = knowledge.parallelism;
  k["model"] = knowledge.model;
  k["max_tokens"] = knowledge.max_tokens;
  k["temperature"] = knowledge.temperature;
  j["knowledge"] = std::move(k);

  j["train"] = train.to_json();

  ojson e;
  e["strategies"] = names_of(eval.strategies);
  e["splits"] = names_of(eval.splits);
  e["ks"] = eval.ks;
  e["thresholds"] = eval.thresholds;
  e["group_keys"] = eval.group_keys;
  e["tau"] = eval.tau;
  e["checkpoint"] = eval.checkpoint;
  e["baseline_recalls"] = eval.baseline_recalls;
  j["eval"] = std::move(e);

  ojson f;
  f["shots"] = fewshot.shots;
  f["reference_mode"] = std::string(to_string(fewshot.reference_mode));
  f["svg"] = fewshot.svg;
  j["fewshot"] = std::move(f);

  ojson a;
  a["stats"] = analysis.stats;
  a["continents"] = analysis.continents;
  a["strategies"] = names_of(analysis.strategies);
  a["statistics"] = analysis.statistics;
  a["keywords"] = analysis.keywords;
  j["analysis"] = std::move(a);

  j["synth"] = synth.to_json();
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorKind::InvalidConfig, "config must be a JSON object");
  RunConfig c;
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "data") c.data = data_from_json(v);
      else if (k == "output") c.output = v.get<std::string>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "knowledge") c.knowledge = knowledge_from_json(v);
      else if (k == "train") c.train = TrainConfig::from_json(v);
      else if (k == "eval") c.eval = eval_from_json(v);
      else if (k == "fewshot") c.fewshot = fewshot_from_json(v);
      else if (k == "analysis") c.analysis = analysis_from_json(v);
      else if (k == "synth") c.synth = SynthConfig::from_json(v);
      else reject("config", k);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("config: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ParseError) throw Error(ErrorKind::InvalidConfig, e.what());
    throw;
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  try {
    return RunConfig::from_json(nlohmann::json::parse(io::read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::InvalidConfig, path.string() + ": " + e.what());
  }
}

std::filesystem::path Context::input_path(const std::string& p) const {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : workdir / path;
}

std::filesystem::path Context::data_path(const std::string& name) const {
  return input_path((std::filesystem::path(config.data.dir) / name).string());
}

std::filesystem::path Context::output_dir(const std::string& command) const {
  const auto root = std::filesystem::weakly_canonical(workdir);
  const auto dir = std::filesystem::weakly_canonical(workdir / config.output / command);
  const auto rel = dir.lexically_relative(root);
  if (rel.empty() || *rel.begin() == "..") {
    throw Error(ErrorKind::InvalidConfig, "output " + dir.string() + " is outside the workdir");
  }
  return dir;
}

}  // namespace geoprompt::cli
