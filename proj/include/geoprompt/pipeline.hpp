#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "geoprompt/evalmetrics.hpp"
#include "geoprompt/softprompt.hpp"
#include "geoprompt/synthdata.hpp"
#include "geoprompt/zeroshot.hpp"

// Glue shared by the command line and the experiment harnesses: selecting
// manifest rows, turning predictions into rankings, building regularization
// targets, and the few-shot curve.
namespace geoprompt {

std::vector<std::size_t> rows_in_split(const std::vector<SampleMeta>& manifest, Split split);

// Class index for each listed row. Throws NotFound for an unknown class label.
std::vector<std::size_t> label_indices(const std::vector<SampleMeta>& manifest, const std::vector<std::size_t>& rows,
                                       const std::vector<ClassInfo>& classes);

LabeledFeatures gather_features(const std::vector<SampleMeta>& manifest, const std::vector<std::size_t>& rows,
                                const EmbeddingStore& store, const std::vector<ClassInfo>& classes);
LabeledFeatures gather_features(const SynthWorld& world, const std::vector<std::size_t>& rows);

std::vector<SampleMeta> select(const std::vector<SampleMeta>& manifest, const std::vector<std::size_t>& rows);

std::vector<Ranking> zero_shot_rankings(const Matrix& features, const std::vector<SampleMeta>& metas,
                                        const std::vector<ClassInfo>& classes, PromptStrategy strategy,
                                        const DescriptorSet& dset, const TextEncoder& text,
                                        const ZeroShotOptions& options = {});

// Cosine ranking of each feature row against fixed class embeddings.
std::vector<Ranking> rank_by_embeddings(const Matrix& class_emb, const Matrix& features,
                                        const std::vector<std::string>& class_names);

enum class KnowledgeMode { None, KgCoop, CountryInPrompt, CountryLLM, CountryInPromptLLM };
std::string_view to_string(KnowledgeMode m);
KnowledgeMode parse_knowledge_mode(std::string_view name);

// nullopt for KnowledgeMode::None.
std::optional<KnowledgeTargets> build_targets(KnowledgeMode mode, const std::vector<ClassInfo>& classes,
                                              const GeographySet& targets, const DescriptorSet& dset,
                                              const TextEncoder& text);

struct TrainedPrompt {
  TrainResult result;
  Matrix class_embeddings;  // final w_c rows
};

TrainedPrompt train_prompt(const TrainConfig& config, const LabeledFeatures& data, const TextEncoder& text,
                           const std::vector<ClassInfo>& classes, const std::optional<KnowledgeTargets>& targets);

// Balanced top-1 accuracy of a trained prompt on labeled features.
double prompt_accuracy(const Matrix& class_emb, const LabeledFeatures& data, const std::vector<ClassInfo>& classes);

struct FewShotConfig {
  std::vector<std::size_t> shots = {1, 2, 4, 8, 12, 16};
  KnowledgeMode reference_mode = KnowledgeMode::CountryInPromptLLM;
  std::uint64_t seed = 0;
};

struct FewShotCurve {
  std::vector<std::pair<std::size_t, double>> points;  // target-trained CoOp
  double reference = 0.0;  // regularized, source-only
  std::size_t test_samples = 0;
};

// Target rows are split per class by a seeded shuffle: the first max(shots)
// form the training pool (k-shot models use its first k), the rest are the
// held-out test set shared by every point and the reference.
FewShotCurve fewshot_curve(const std::vector<SampleMeta>& manifest, const EmbeddingStore& store,
                           const std::vector<ClassInfo>& classes, const DescriptorSet& dset, const TextEncoder& text,
                           const TrainConfig& train_config, const FewShotConfig& curve);

std::string format_fewshot_csv(const FewShotCurve& curve);
std::string fewshot_svg(const FewShotCurve& curve);

// Distinct countries of the given split, sorted.
std::vector<std::string> countries_in(const std::vector<SampleMeta>& manifest, Split split);

}  // namespace geoprompt
