#include <CLI11.hpp>

#include <iostream>
#include <memory>
#include <set>

#include "geoprompt/analysis.hpp"
#include "geoprompt/cli.hpp"
#include "geoprompt/io_util.hpp"

namespace geoprompt::cli {

namespace {

struct Dataset {
  std::vector<ClassInfo> classes;
  std::vector<SampleMeta> manifest;
  EmbeddingStore store;
  TextEncoder text;
};

Dataset load_dataset(const Context& ctx, bool with_features = true, bool with_vocab = true) {
  const auto& d = ctx.config.data;
  Dataset ds;
  ds.classes = load_class_config(ctx.data_path(d.classes));
  ds.manifest = load_manifest(ctx.data_path(d.manifest));
  if (with_features) ds.store = load_embedding_store(ctx.data_path(d.features));
  if (with_vocab) ds.text = load_vocab_encoder(ctx.data_path(d.vocab));
  if (with_features && with_vocab && ds.store.dim() != ds.text.model.output_dim()) {
    throw Error(ErrorKind::DimensionMismatch, "features have dim " + std::to_string(ds.store.dim()) +
                                                  ", encoder outputs " +
                                                  std::to_string(ds.text.model.output_dim()));
  }
  return ds;
}

DescriptorSet load_descriptors(const Context& ctx) {
  const auto path = ctx.data_path(ctx.config.data.descriptors);
  if (!std::filesystem::exists(path)) return {};
  return load_descriptor_cache(path);
}

void write_resolved(const std::filesystem::path& dir, const RunConfig& config) {
  io::write_file(dir / "resolved_config.json", config.to_json().dump(2) + "\n");
}

void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
  io::write_file(path, j.dump(2) + "\n");
}

std::vector<std::string> all_countries(const std::vector<SampleMeta>& manifest) {
  std::set<std::string> s;
  for (const auto& m : manifest) s.insert(m.country);
  return {s.begin(), s.end()};
}

GeographySet target_geographies(const Context& ctx, const std::vector<SampleMeta>& manifest) {
  const auto role = ctx.config.knowledge.target_source;
  auto ids = ctx.config.knowledge.target_geographies;
  if (ids.empty()) {
    std::set<std::string> s;
    for (const auto& m : manifest) {
      const bool target = m.split == Split::Target;
      if (role == GeographySet::Role::All || target == (role == GeographySet::Role::Target)) s.insert(m.country);
    }
    ids.assign(s.begin(), s.end());
  }
  if (ids.empty()) throw Error(ErrorKind::InvalidConfig, "no geographies for the knowledge targets");
  return GeographySet(std::move(ids), role);
}

struct SplitEval {
  EvalReport global;
  std::map<std::string, std::map<std::string, EvalReport>> groups;
};

SplitEval evaluate_split(const std::vector<Ranking>& ranks, const std::vector<std::size_t>& labels,
                         const std::vector<SampleMeta>& metas, const std::vector<ClassInfo>& classes,
                         const EvalSection& eval) {
  SplitEval out;
  const auto names = class_names(classes);
  out.global = evaluate(ranks, labels, names, eval.ks);
  for (const auto& key : eval.group_keys) out.groups[key] = group_report(ranks, labels, metas, names, key, eval.ks);
  return out;
}

CellTable prefixed_cells(const std::string& prefix, const SplitEval& e) {
  CellTable out;
  for (const auto& [k, v] : report_cells(e.global, e.groups, 1)) out[prefix + "/" + k] = v;
  return out;
}

std::string summary_line(const std::string& label, const EvalReport& r) {
  std::string s = label + ":";
  for (const auto k : r.ks) s += " top" + std::to_string(k) + "=" + format_percent(r.at(k));
  return s + " (n=" + std::to_string(r.num_samples) + ")";
}

}  // namespace

int cmd_probe(const Context& ctx) {
  const auto& cfg = ctx.config;
  const auto classes = load_class_config(ctx.data_path(cfg.data.classes));
  std::vector<std::string> geos = cfg.knowledge.geographies;
  if (geos.empty()) geos = all_countries(load_manifest(ctx.data_path(cfg.data.manifest)));

  LlmClientConfig client = LlmClientConfig::from_env();
  client.model = cfg.knowledge.model;
  client.max_tokens = cfg.knowledge.max_tokens;
  client.temperature = cfg.knowledge.temperature;
  std::unique_ptr<Transport> transport;
  if (ctx.mock_fixtures) {
    transport = std::make_unique<MockTransport>(*ctx.mock_fixtures);
  } else {
    if (client.endpoint.empty()) {
      throw Error(ErrorKind::InvalidConfig, "set GEOPROMPT_LLM_ENDPOINT or pass --mock-fixtures");
    }
    transport = std::make_unique<HttpTransport>(client);
  }
  client.validate();

  const auto cache_path = ctx.data_path(cfg.data.descriptors);
  DescriptorCache cache(cache_path);
  AcquireOptions options;
  options.parallelism = cfg.knowledge.parallelism;
  if (ctx.mock_fixtures) options.sleep = [](std::chrono::milliseconds) {};

  const GeographySet grid(geos, GeographySet::Role::All);
  AcquireResult result = acquire(classes, grid, *transport, client, cache, options);
  if (cfg.knowledge.general) {
    AcquireResult general = acquire_general(classes, *transport, client, cache, options);
    result.failures.insert(result.failures.end(), general.failures.begin(), general.failures.end());
    result.requests += general.requests;
  }
  // The cache appends while probing; rewrite it in canonical order.
  save_descriptor_cache(cache_path, cache.snapshot());

  const auto out = ctx.output_dir("probe");
  nlohmann::ordered_json failures = nlohmann::ordered_json::array();
  for (const auto& f : result.failures) {
    nlohmann::ordered_json j;
    j["class"] = f.class_name;
    j["country"] = f.country;
    j["kind"] = std::string(to_string(f.kind));
    j["message"] = f.message;
    failures.push_back(std::move(j));
  }
  write_json(out / "failures.json", failures);
  write_resolved(out, cfg);

  std::cout << "probed " << classes.size() << " classes x " << geos.size() << " geographies, " << result.requests
            << " requests, " << result.failures.size() << " failures\n";
  for (const auto& f : result.failures) {
    std::cerr << "failed: " << f.class_name << " / " << (f.country.empty() ? "(general)" : f.country) << ": "
              << f.message << "\n";
  }
  return result.failures.empty() ? kOk : kPartial;
}

int cmd_zeroshot(const Context& ctx) {
  const auto& cfg = ctx.config;
  const Dataset ds = load_dataset(ctx);
  const DescriptorSet dset = load_descriptors(ctx);
  ZeroShotOptions options;
  options.tau = cfg.eval.tau;

  std::vector<PromptStrategy> strategies = cfg.eval.strategies;
  if (std::find(strategies.begin(), strategies.end(), PromptStrategy::Default) == strategies.end()) {
    strategies.insert(strategies.begin(), PromptStrategy::Default);
  }
  const auto out = ctx.output_dir("zeroshot");
  std::map<PromptStrategy, CellTable> cells;
  for (const auto strategy : strategies) {
    nlohmann::ordered_json doc;
    doc["strategy"] = std::string(to_string(strategy));
    nlohmann::ordered_json splits;
    for (const auto split : cfg.eval.splits) {
      const auto rows = rows_in_split(ds.manifest, split);
      if (rows.empty()) continue;
      const auto data = gather_features(ds.manifest, rows, ds.store, ds.classes);
      const auto metas = select(ds.manifest, rows);
      const auto ranks = zero_shot_rankings(data.features, metas, ds.classes, strategy, dset, ds.text, options);
      const SplitEval e = evaluate_split(ranks, data.labels, metas, ds.classes, cfg.eval);
      splits[std::string(to_string(split))] = report_json(e.global, e.groups);
      for (const auto& [k, v] : prefixed_cells(std::string(to_string(split)), e)) cells[strategy][k] = v;
      std::cout << summary_line(std::string(to_string(strategy)) + " " + std::string(to_string(split)), e.global)
                << "\n";
    }
    doc["splits"] = std::move(splits);
    write_json(out / (std::string(to_string(strategy)) + ".json"), doc);
  }
  for (const auto strategy : strategies) {
    if (strategy == PromptStrategy::Default) continue;
    const CellTable delta = delta_table(cells[PromptStrategy::Default], cells[strategy]);
    io::write_file(out / ("delta_" + std::string(to_string(strategy)) + ".csv"),
                   format_cells_csv(cells[strategy], delta));
  }
  write_resolved(out, cfg);
  return kOk;
}

int cmd_train(const Context& ctx) {
  const auto& cfg = ctx.config;
  const Dataset ds = load_dataset(ctx);
  const auto rows = rows_in_split(ds.manifest, Split::SourceTrain);
  if (rows.empty()) throw Error(ErrorKind::EmptyEvalSet, "manifest has no source-train rows");
  const auto data = gather_features(ds.manifest, rows, ds.store, ds.classes);

  std::optional<KnowledgeTargets> targets;
  if (cfg.knowledge.mode != KnowledgeMode::None) {
    const DescriptorSet dset = load_descriptors(ctx);
    targets = build_targets(cfg.knowledge.mode, ds.classes, target_geographies(ctx, ds.manifest), dset, ds.text);
  }
  const TrainedPrompt model = train_prompt(cfg.train, data, ds.text, ds.classes, targets);
  for (const auto& w : model.result.warnings) std::cerr << "warning: " << w << "\n";

  const auto out = ctx.output_dir("train");
  write_json(out / "checkpoint.json", checkpoint_json(cfg.train, class_names(ds.classes), model.result));
  io::write_file(out / "train_log.csv", format_training_log(model.result.history));
  write_resolved(out, cfg);
  const auto& last = model.result.history.back();
  std::cout << "trained " << cfg.train.epochs << " epochs on " << model.result.shot_indices.size()
            << " shots, mode=" << to_string(cfg.knowledge.mode) << ", final ce=" << io::format_fixed(last.ce, 4)
            << (last.gkr ? ", gkr=" + io::format_fixed(*last.gkr, 4) : std::string()) << "\n";
  return kOk;
}

int cmd_eval(const Context& ctx) {
  const auto& cfg = ctx.config;
  const Dataset ds = load_dataset(ctx);
  const LoadedCheckpoint ckpt = load_checkpoint(ctx.input_path(cfg.eval.checkpoint));
  if (ckpt.class_names != class_names(ds.classes)) {
    throw Error(ErrorKind::ClassSetMismatch, "checkpoint classes differ from the class config");
  }
  if (ckpt.state.context.cols() != ds.text.model.input_dim()) {
    throw Error(ErrorKind::DimensionMismatch, "checkpoint context width differs from the vocabulary");
  }
  const Matrix class_emb = class_embeddings(ckpt.state.context, class_tokens(ds.classes, ds.text.vocab), ds.text.model);
  std::optional<std::map<std::string, double>> baseline;
  if (!cfg.eval.baseline_recalls.empty()) baseline = load_baseline_recalls(ctx.input_path(cfg.eval.baseline_recalls));

  const auto out = ctx.output_dir("eval");
  nlohmann::ordered_json doc;
  for (const auto split : cfg.eval.splits) {
    const auto rows = rows_in_split(ds.manifest, split);
    if (rows.empty()) continue;
    const std::string name(to_string(split));
    const auto data = gather_features(ds.manifest, rows, ds.store, ds.classes);
    const auto metas = select(ds.manifest, rows);
    const auto ranks = rank_by_embeddings(class_emb, data.features, class_names(ds.classes));
    const SplitEval e = evaluate_split(ranks, data.labels, metas, ds.classes, cfg.eval);
    doc[name] = report_json(e.global, e.groups);
    io::write_file(out / (name + ".csv"), format_cells_csv(report_cells(e.global, e.groups, 1), std::nullopt));
    io::write_file(out / ("recalls_" + name + ".csv"), format_baseline_recalls(e.global));
    if (baseline) {
      io::write_file(out / ("strata_" + name + ".csv"),
                     format_strata_csv(difficulty_strata(*baseline, e.global, cfg.eval.thresholds)));
    }
    std::cout << summary_line(name, e.global) << "\n";
  }
  if (doc.empty()) throw Error(ErrorKind::EmptyEvalSet, "no rows in the requested splits");
  write_json(out / "report.json", doc);
  write_resolved(out, cfg);
  return kOk;
}

int cmd_fewshot_curve(const Context& ctx) {
  const auto& cfg = ctx.config;
  const Dataset ds = load_dataset(ctx);
  const DescriptorSet dset = load_descriptors(ctx);
  FewShotConfig fc;
  fc.shots = cfg.fewshot.shots;
  fc.reference_mode = cfg.fewshot.reference_mode;
  fc.seed = cfg.train.seed;
  const FewShotCurve curve = fewshot_curve(ds.manifest, ds.store, ds.classes, dset, ds.text, cfg.train, fc);

  const auto out = ctx.output_dir("fewshot");
  io::write_file(out / "curve.csv", format_fewshot_csv(curve));
  if (cfg.fewshot.svg) io::write_file(out / "curve.svg", fewshot_svg(curve));
  write_resolved(out, cfg);
  for (const auto& [k, acc] : curve.points) std::cout << k << "-shot target CoOp: " << format_percent(acc) << "\n";
  std::cout << "source-only reference (" << to_string(fc.reference_mode) << "): " << format_percent(curve.reference)
            << "\n";
  return kOk;
}

int cmd_analyze(const Context& ctx) {
  const auto& cfg = ctx.config;
  const Dataset ds = load_dataset(ctx, /*with_features=*/false);
  const DescriptorSet dset = load_descriptors(ctx);
  std::vector<std::string> countries = cfg.knowledge.geographies;
  if (countries.empty()) countries = all_countries(ds.manifest);

  const auto out = ctx.output_dir("analyze");
  std::vector<ExportRow> exports;
  std::vector<std::pair<std::string, StatCorrelation>> correlations;
  std::optional<CountryStatsTable> stats;
  if (!cfg.analysis.stats.empty()) stats = load_country_stats(ctx.input_path(cfg.analysis.stats));
  for (const auto strategy : cfg.analysis.strategies) {
    const auto emb = country_class_embeddings(ds.classes, countries, strategy, dset, ds.text);
    for (const auto& [country, per_class] : emb) {
      for (const auto& [cls, v] : per_class) exports.push_back({cls, country, std::string(to_string(strategy)), v});
    }
    if (stats) {
      const auto& names = cfg.analysis.statistics.empty() ? stats->statistics : cfg.analysis.statistics;
      StatCorrelation corr = stat_correlation(countries, stats->values, emb, names);
      for (const auto& w : corr.warnings) std::cerr << "warning: " << to_string(strategy) << ": " << w << "\n";
      std::cout << to_string(strategy) << ": " << corr.rows.size() << " statistics over " << corr.pairs
                << " country pairs\n";
      correlations.emplace_back(std::string(to_string(strategy)), std::move(corr));
    }
  }
  if (stats) io::write_file(out / "correlation.csv", format_correlation_csv(correlations));
  export_embeddings(exports, out / "embeddings.tsv");

  if (!cfg.analysis.keywords.empty()) {
    std::map<std::string, std::string> continent_of;
    if (!cfg.analysis.continents.empty()) {
      for (const auto& line : io::read_lines(ctx.input_path(cfg.analysis.continents))) {
        const auto cells = io::split(line, ',');
        if (cells.size() != 2 || io::trim(cells[0]) == "country") continue;
        continent_of[std::string(io::trim(cells[0]))] = std::string(io::trim(cells[1]));
      }
    } else {
      for (const auto& m : ds.manifest) continent_of[m.country] = m.continent;
    }
    io::write_file(out / "topics.csv", format_topic_csv(topic_counts(dset, cfg.analysis.keywords, continent_of)));
  }
  write_resolved(out, cfg);
  return kOk;
}

int cmd_synth(const Context& ctx) {
  const auto& cfg = ctx.config;
  const SynthWorld world = generate(cfg.synth);
  const auto root = std::filesystem::weakly_canonical(ctx.workdir);
  const auto dir = std::filesystem::weakly_canonical(ctx.workdir / cfg.data.dir);
  const auto rel = dir.lexically_relative(root);
  if (rel.empty() || *rel.begin() == "..") throw Error(ErrorKind::InvalidConfig, "data.dir is outside the workdir");
  WorldFiles names;
  names.classes = cfg.data.classes;
  names.manifest = cfg.data.manifest;
  names.features = cfg.data.features;
  names.descriptors = cfg.data.descriptors;
  names.vocab = cfg.data.vocab;
  write_world(world, dir, names);
  write_resolved(ctx.output_dir("synth"), cfg);

  std::map<Split, std::size_t> counts;
  for (const auto& m : world.manifest) ++counts[m.split];
  std::cout << "synthetic world: " << cfg.synth.num_classes << " classes, " << cfg.synth.geographies.size()
            << " geographies, " << world.manifest.size() << " samples, dim " << cfg.synth.dim << "\n";
  for (const auto& g : cfg.synth.geographies) {
    std::cout << "  " << g.name << (g.target ? " (target)" : " (source)") << " delta=" << io::format_double(g.delta)
              << "\n";
  }
  for (const auto& [split, n] : counts) std::cout << "  " << to_string(split) << ": " << n << "\n";
  std::cout << "  training shots: " << world.training.size() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

int run(int argc, char** argv) {
  CLI::App app{"Geography-aware prompting and soft-prompt training toolkit"};
  app.require_subcommand(1);
  std::string config_path, workdir = ".", mock;
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "JSON run config");
  app.add_option("--workdir", workdir, "root for every relative path");
  app.add_option("--seed", seed, "seed for training, sampling and synthesis");
  app.add_option("--mock-fixtures", mock, "directory of canned LLM completions");

  std::optional<std::string> mode, checkpoint, baseline;
  std::optional<double> lambda;
  std::vector<std::string> strategies;
  bool svg = false;

  auto* probe = app.add_subcommand("probe", "acquire descriptors for the class x geography grid");
  auto* zeroshot = app.add_subcommand("zeroshot", "zero-shot evaluation per prompt strategy");
  zeroshot->add_option("--strategies", strategies, "prompt strategies");
  auto* train = app.add_subcommand("train", "train soft prompts on source shots");
  train->add_option("--mode", mode, "none|kgcoop|country_in_prompt|country_llm|country_in_prompt_llm");
  train->add_option("--lambda", lambda, "regularization weight");
  auto* eval = app.add_subcommand("eval", "evaluate a trained checkpoint");
  eval->add_option("--checkpoint", checkpoint, "checkpoint JSON");
  eval->add_option("--baseline-recalls", baseline, "CSV class,recall for difficulty strata");
  auto* fewshot = app.add_subcommand("fewshot-curve", "target few-shot curve vs source-only reference");
  fewshot->add_flag("--svg", svg, "also write curve.svg");
  auto* analyze = app.add_subcommand("analyze", "distance/statistic correlation, topics, embedding export");
  auto* synth = app.add_subcommand("synth", "generate a synthetic geo-shift dataset");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInputError;
  }

  try {
    Context ctx;
    ctx.workdir = workdir;
    if (!config_path.empty()) ctx.config = load_run_config(config_path);
    if (seed) ctx.config.seed = seed;
    if (!mock.empty()) ctx.mock_fixtures = mock;
    if (mode) ctx.config.knowledge.mode = parse_knowledge_mode(*mode);
    if (lambda) ctx.config.train.lambda = *lambda;
    if (checkpoint) ctx.config.eval.checkpoint = *checkpoint;
    if (baseline) ctx.config.eval.baseline_recalls = *baseline;
    if (!strategies.empty()) {
      ctx.config.eval.strategies.clear();
      for (const auto& s : strategies) ctx.config.eval.strategies.push_back(parse_strategy(s));
    }
    if (svg) ctx.config.fewshot.svg = true;
    ctx.config.resolve();

    if (*probe) return cmd_probe(ctx);
    if (*zeroshot) return cmd_zeroshot(ctx);
    if (*train) return cmd_train(ctx);
    if (*eval) return cmd_eval(ctx);
    if (*fewshot) return cmd_fewshot_curve(ctx);
    if (*analyze) return cmd_analyze(ctx);
    if (*synth) return cmd_synth(ctx);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  }
  return kInputError;
}

}  // namespace geoprompt::cli
