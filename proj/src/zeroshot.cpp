#include "geoprompt/zeroshot.hpp"

#include <algorithm>
#include <numeric>

namespace geoprompt {

double descriptor_logit(const EmbeddingVec& img, const EmbeddingVec& prompt_emb, double tau) {
  if (!(tau > 0.0)) throw Error(ErrorKind::InvalidConfig, "zero-shot temperature must be > 0");
  return cosine_sim(img, prompt_emb) / tau;
}

const EmbeddingVec& PromptCache::get(const PromptSpec& spec) {
  std::string key = render_prompt(spec);
  auto it = cache_.find(key);
  if (it == cache_.end()) {
    EmbeddingVec e = encode_text(text_->model, to_rows(tokenize(key, text_->vocab)));
    it = cache_.emplace(std::move(key), std::move(e)).first;
  }
  return it->second;
}

namespace {

const DescriptorEntry* resolve_descriptors(const ClassInfo& cls, const GeoContext& geo, const DescriptorSet& dset,
                                           const ZeroShotOptions& options) {
  for (auto level : options.fallback) {
    if (level == GeoLevel::Country) {
      if (const auto* e = dset.find(cls.name, geo.country)) return e;
    } else if (geo.continent) {
      if (const auto* e = dset.find(cls.name, *geo.continent)) return e;
    }
  }
  return nullptr;
}

}  // namespace

std::vector<EmbeddingVec> class_prompt_embeddings(const ClassInfo& cls, PromptStrategy strategy,
                                                  const std::optional<GeoContext>& geo, const DescriptorSet& dset,
                                                  PromptCache& prompts, const ZeroShotOptions& options) {
  if (uses_country(strategy) && !geo) {
    throw Error(ErrorKind::MissingGeography, std::string(to_string(strategy)) + " needs the image's geography");
  }
  std::vector<EmbeddingVec> out;
  PromptSpec spec{strategy, cls.name, std::nullopt, std::nullopt, cls.plural};
  switch (strategy) {
    case PromptStrategy::Default:
      out.push_back(prompts.get(spec));
      break;
    case PromptStrategy::CountryInPrompt:
      spec.country = geo->country;
      out.push_back(prompts.get(spec));
      break;
    case PromptStrategy::GeneralLLM: {
      const auto* e = dset.find_general(cls.name);
      if (!e || e->descriptors.empty()) throw Error(ErrorKind::MissingDescriptors, cls.name + " (general)");
      for (const auto& d : e->descriptors) {
        spec.descriptor = d;
        out.push_back(prompts.get(spec));
      }
      break;
    }
    case PromptStrategy::CountryLLM:
    case PromptStrategy::CountryInPromptPlusLLM: {
      const auto* e = resolve_descriptors(cls, *geo, dset, options);
      if (!e || e->descriptors.empty()) throw Error(ErrorKind::MissingDescriptors, cls.name + " / " + geo->country);
      spec.country = geo->country;
      for (const auto& d : e->descriptors) {
        spec.descriptor = d;
        out.push_back(prompts.get(spec));
      }
      break;
    }
  }
  return out;
}

double class_score(const EmbeddingVec& img, const ClassInfo& cls, PromptStrategy strategy,
                   const std::optional<GeoContext>& geo, const DescriptorSet& dset, PromptCache& prompts,
                   const ZeroShotOptions& options) {
  const auto embeddings = class_prompt_embeddings(cls, strategy, geo, dset, prompts, options);
  double sum = 0.0;
  for (const auto& e : embeddings) sum += descriptor_logit(img, e, options.tau);
  return sum / double(embeddings.size());
}

Prediction rank_scores(const std::vector<double>& scores, const std::vector<std::string>& class_names) {
  if (scores.empty()) throw Error(ErrorKind::EmptyList, "no classes to rank");
  if (scores.size() != class_names.size()) throw Error(ErrorKind::DimensionMismatch, "scores vs class names");
  Prediction p;
  p.scores = scores;
  p.ranked.resize(scores.size());
  std::iota(p.ranked.begin(), p.ranked.end(), std::size_t{0});
  std::sort(p.ranked.begin(), p.ranked.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return class_names[a] < class_names[b];
  });
  return p;
}

Prediction predict(const EmbeddingVec& img, const std::vector<ClassInfo>& classes, PromptStrategy strategy,
                   const std::optional<GeoContext>& geo, const DescriptorSet& dset, PromptCache& prompts,
                   const ZeroShotOptions& options) {
  std::vector<double> scores;
  scores.reserve(classes.size());
  for (const auto& c : classes) scores.push_back(class_score(img, c, strategy, geo, dset, prompts, options));
  return rank_scores(scores, class_names(classes));
}

std::vector<std::string> class_names(const std::vector<ClassInfo>& classes) {
  std::vector<std::string> out;
  out.reserve(classes.size());
  for (const auto& c : classes) out.push_back(c.name);
  return out;
}

}  // namespace geoprompt
