#include "geoprompt/pipeline.hpp"

#include <algorithm>
#include <set>

#include "geoprompt/io_util.hpp"

namespace geoprompt {

std::vector<std::size_t> rows_in_split(const std::vector<SampleMeta>& manifest, Split split) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    if (manifest[i].split == split) rows.push_back(i);
  }
  return rows;
}

std::vector<std::size_t> label_indices(const std::vector<SampleMeta>& manifest, const std::vector<std::size_t>& rows,
                                       const std::vector<ClassInfo>& classes) {
  std::map<std::string, std::size_t> index;
  for (std::size_t c = 0; c < classes.size(); ++c) index[classes[c].name] = c;
  std::vector<std::size_t> out;
  out.reserve(rows.size());
  for (const std::size_t r : rows) {
    const auto it = index.find(manifest.at(r).label);
    if (it == index.end()) {
      throw Error(ErrorKind::NotFound, "sample " + manifest[r].id + " has unknown class '" + manifest[r].label + "'");
    }
    out.push_back(it->second);
  }
  return out;
}

LabeledFeatures gather_features(const std::vector<SampleMeta>& manifest, const std::vector<std::size_t>& rows,
                                const EmbeddingStore& store, const std::vector<ClassInfo>& classes) {
  LabeledFeatures out;
  out.labels = label_indices(manifest, rows, classes);
  out.features.resize(static_cast<Eigen::Index>(rows.size()), store.dim());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = store.at(manifest[rows[i]].id).transpose();
  }
  return out;
}

LabeledFeatures gather_features(const SynthWorld& world, const std::vector<std::size_t>& rows) {
  LabeledFeatures out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), world.features.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = world.features.row(static_cast<Eigen::Index>(rows[i]));
    out.labels.push_back(world.labels.at(rows[i]));
  }
  return out;
}

std::vector<SampleMeta> select(const std::vector<SampleMeta>& manifest, const std::vector<std::size_t>& rows) {
  std::vector<SampleMeta> out;
  out.reserve(rows.size());
  for (const std::size_t r : rows) out.push_back(manifest.at(r));
  return out;
}

std::vector<Ranking> zero_shot_rankings(const Matrix& features, const std::vector<SampleMeta>& metas,
                                        const std::vector<ClassInfo>& classes, PromptStrategy strategy,
                                        const DescriptorSet& dset, const TextEncoder& text,
                                        const ZeroShotOptions& options) {
  if (static_cast<std::size_t>(features.rows()) != metas.size()) {
    throw Error(ErrorKind::DimensionMismatch, "features vs metadata");
  }
  PromptCache prompts(text);
  std::vector<Ranking> out;
  out.reserve(metas.size());
  for (std::size_t i = 0; i < metas.size(); ++i) {
    const GeoContext geo{metas[i].country, metas[i].continent};
    const EmbeddingVec img = features.row(static_cast<Eigen::Index>(i)).transpose();
    out.push_back(predict(img, classes, strategy, geo, dset, prompts, options).ranked);
  }
  return out;
}

std::vector<Ranking> rank_by_embeddings(const Matrix& class_emb, const Matrix& features,
                                        const std::vector<std::string>& class_names) {
  std::vector<Ranking> out;
  out.reserve(static_cast<std::size_t>(features.rows()));
  std::vector<double> scores(static_cast<std::size_t>(class_emb.rows()));
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    for (Eigen::Index c = 0; c < class_emb.rows(); ++c) {
      scores[static_cast<std::size_t>(c)] = cosine_sim(class_emb.row(c), features.row(i));
    }
    out.push_back(rank_scores(scores, class_names).ranked);
  }
  return out;
}

namespace {

constexpr std::string_view kModeNames[] = {"none", "kgcoop", "country_in_prompt", "country_llm",
                                           "country_in_prompt_llm"};

}  // namespace

std::string_view to_string(KnowledgeMode m) { return kModeNames[static_cast<int>(m)]; }

KnowledgeMode parse_knowledge_mode(std::string_view name) {
  for (int i = 0; i < 5; ++i) {
    if (kModeNames[i] == name) return static_cast<KnowledgeMode>(i);
  }
  throw Error(ErrorKind::InvalidConfig, "unknown knowledge mode '" + std::string(name) + "'");
}

std::optional<KnowledgeTargets> build_targets(KnowledgeMode mode, const std::vector<ClassInfo>& classes,
                                              const GeographySet& targets, const DescriptorSet& dset,
                                              const TextEncoder& text) {
  switch (mode) {
    case KnowledgeMode::None:
      return std::nullopt;
    case KnowledgeMode::KgCoop:
      return kgcoop_targets(classes, text);
    case KnowledgeMode::CountryInPrompt:
      return geo_knowledge_targets(classes, targets, PromptStrategy::CountryInPrompt, dset, text);
    case KnowledgeMode::CountryLLM:
      return geo_knowledge_targets(classes, targets, PromptStrategy::CountryLLM, dset, text);
    case KnowledgeMode::CountryInPromptLLM:
      return geo_knowledge_targets(classes, targets, PromptStrategy::CountryInPromptPlusLLM, dset, text);
  }
  throw Error(ErrorKind::InvalidConfig, "knowledge mode");
}

TrainedPrompt train_prompt(const TrainConfig& config, const LabeledFeatures& data, const TextEncoder& text,
                           const std::vector<ClassInfo>& classes, const std::optional<KnowledgeTargets>& targets) {
  TrainProblem problem;
  problem.encoder = &text.model;
  problem.classes = class_tokens(classes, text.vocab);
  problem.targets = targets ? &*targets : nullptr;
  TrainedPrompt out;
  out.result = train_auto(config, data, problem, class_names(classes));
  out.class_embeddings = class_embeddings(out.result.state.context, problem.classes, text.model);
  return out;
}

double prompt_accuracy(const Matrix& class_emb, const LabeledFeatures& data, const std::vector<ClassInfo>& classes) {
  const auto ranks = rank_by_embeddings(class_emb, data.features, class_names(classes));
  return balanced_accuracy(ranks, data.labels, classes.size(), 1);
}

FewShotCurve fewshot_curve(const std::vector<SampleMeta>& manifest, const EmbeddingStore& store,
                           const std::vector<ClassInfo>& classes, const DescriptorSet& dset, const TextEncoder& text,
                           const TrainConfig& train_config, const FewShotConfig& curve) {
  if (curve.shots.empty()) throw Error(ErrorKind::InvalidConfig, "few-shot list is empty");
  const std::size_t pool = *std::max_element(curve.shots.begin(), curve.shots.end());
  if (pool < 1) throw Error(ErrorKind::InvalidConfig, "shots must be >= 1");

  const auto target_rows = rows_in_split(manifest, Split::Target);
  const auto target_labels = label_indices(manifest, target_rows, classes);
  std::vector<std::vector<std::size_t>> by_class(classes.size());
  for (std::size_t i = 0; i < target_rows.size(); ++i) by_class[target_labels[i]].push_back(target_rows[i]);

  const Rng root = Rng(curve.seed).derive(30);
  std::vector<std::vector<std::size_t>> train_pool(classes.size());
  std::vector<std::size_t> test_rows;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    auto& rows = by_class[c];
    if (rows.size() <= pool) {
      throw Error(ErrorKind::InsufficientSamples, "class '" + classes[c].name + "' has " +
                                                      std::to_string(rows.size()) + " target samples, need > " +
                                                      std::to_string(pool));
    }
    Rng rng = root.derive(c);
    shuffle(rows, rng);
    train_pool[c].assign(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(pool));
    test_rows.insert(test_rows.end(), rows.begin() + static_cast<std::ptrdiff_t>(pool), rows.end());
  }
  std::sort(test_rows.begin(), test_rows.end());
  const LabeledFeatures test = gather_features(manifest, test_rows, store, classes);

  FewShotCurve out;
  out.test_samples = test_rows.size();
  for (const std::size_t k : curve.shots) {
    std::vector<std::size_t> rows;
    for (const auto& p : train_pool) rows.insert(rows.end(), p.begin(), p.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(rows.begin(), rows.end());
    TrainConfig cfg = train_config;
    cfg.shots = k;
    const auto model = train_prompt(cfg, gather_features(manifest, rows, store, classes), text, classes, std::nullopt);
    out.points.emplace_back(k, prompt_accuracy(model.class_embeddings, test, classes));
  }

  const GeographySet target_geos(countries_in(manifest, Split::Target), GeographySet::Role::Target);
  const auto targets = build_targets(curve.reference_mode, classes, target_geos, dset, text);
  const auto source = gather_features(manifest, rows_in_split(manifest, Split::SourceTrain), store, classes);
  const auto reference = train_prompt(train_config, source, text, classes, targets);
  out.reference = prompt_accuracy(reference.class_embeddings, test, classes);
  return out;
}

std::string format_fewshot_csv(const FewShotCurve& curve) {
  std::string out = "series,shots,acc\n";
  for (const auto& [k, acc] : curve.points) out += "target_coop," + std::to_string(k) + "," + io::format_double(acc) + "\n";
  out += "source_reference,," + io::format_double(curve.reference) + "\n";
  return out;
}

std::string fewshot_svg(const FewShotCurve& curve) {
  constexpr double kW = 480, kH = 320, kPad = 40;
  double max_k = 1;
  for (const auto& p : curve.points) max_k = std::max(max_k, double(p.first));
  const auto sx = [&](double k) { return kPad + (kW - 2 * kPad) * k / max_k; };
  const auto sy = [&](double acc) { return kH - kPad - (kH - 2 * kPad) * acc; };
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"320\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
  for (const auto& [k, acc] : curve.points) {
    out += io::format_fixed(sx(double(k)), 1) + "," + io::format_fixed(sy(acc), 1) + " ";
  }
  out += "\"/>\n";
  const std::string y = io::format_fixed(sy(curve.reference), 1);
  out += "<line x1=\"" + io::format_fixed(kPad, 1) + "\" x2=\"" + io::format_fixed(kW - kPad, 1) + "\" y1=\"" + y +
         "\" y2=\"" + y + "\" stroke=\"firebrick\" stroke-dasharray=\"6 4\"/>\n";
  out += "<text x=\"" + io::format_fixed(kPad, 1) + "\" y=\"20\" font-size=\"12\">balanced accuracy vs target shots</text>\n";
  out += "</svg>\n";
  return out;
}

std::vector<std::string> countries_in(const std::vector<SampleMeta>& manifest, Split split) {
  std::set<std::string> s;
  for (const auto& m : manifest) {
    if (m.split == split) s.insert(m.country);
  }
  return {s.begin(), s.end()};
}

}  // namespace geoprompt
