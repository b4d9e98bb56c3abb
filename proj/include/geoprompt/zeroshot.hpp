#pragma once

#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "geoprompt/knowledge.hpp"

namespace geoprompt {

// cos(img, prompt) / tau.
double descriptor_logit(const EmbeddingVec& img, const EmbeddingVec& prompt_emb, double tau);

// Where an image's geography lives and how to fall back when a country has no
// descriptor entry.
struct GeoContext {
  std::string country;
  std::optional<std::string> continent;
};

enum class GeoLevel { Country, Continent };

// Memoized prompt embeddings keyed by the rendered prompt string.
class PromptCache {
 public:
  explicit PromptCache(const TextEncoder& text) : text_(&text) {}
  const EmbeddingVec& get(const PromptSpec& spec);
  const TextEncoder& text() const { return *text_; }
  std::size_t size() const { return cache_.size(); }

 private:
  const TextEncoder* text_;
  std::unordered_map<std::string, EmbeddingVec> cache_;
};

struct ZeroShotOptions {
  double tau = 1.0;
  // Descriptor lookup order for geography strategies.
  std::vector<GeoLevel> fallback = {GeoLevel::Country, GeoLevel::Continent};
};

// All prompt embeddings that class_score would average for (cls, strategy, geo).
std::vector<EmbeddingVec> class_prompt_embeddings(const ClassInfo& cls, PromptStrategy strategy,
                                                  const std::optional<GeoContext>& geo, const DescriptorSet& dset,
                                                  PromptCache& prompts, const ZeroShotOptions& options);

// Mean descriptor logit over D(c) (GeneralLLM) or D_g(c) (country strategies);
// Default and CountryInPrompt score their single bare prompt.
double class_score(const EmbeddingVec& img, const ClassInfo& cls, PromptStrategy strategy,
                   const std::optional<GeoContext>& geo, const DescriptorSet& dset, PromptCache& prompts,
                   const ZeroShotOptions& options);

struct Prediction {
  std::vector<std::size_t> ranked;  // class indices, best first
  std::vector<double> scores;       // per class index
};

// Descending score; exact ties broken by ascending class name.
Prediction rank_scores(const std::vector<double>& scores, const std::vector<std::string>& class_names);

Prediction predict(const EmbeddingVec& img, const std::vector<ClassInfo>& classes, PromptStrategy strategy,
                   const std::optional<GeoContext>& geo, const DescriptorSet& dset, PromptCache& prompts,
                   const ZeroShotOptions& options);

std::vector<std::string> class_names(const std::vector<ClassInfo>& classes);

}  // namespace geoprompt
