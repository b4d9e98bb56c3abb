#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "geoprompt/knowledge.hpp"

namespace geoprompt {

enum class LrSchedule { Cosine, Constant };
std::string_view to_string(LrSchedule s);
LrSchedule parse_schedule(std::string_view name);

// Defaults follow the CoOp recipe (SGD, momentum 0.9, cosine lr 0.002) with
// 16 shots, M = 4, 100 epochs, batch 128, lambda = 4.
struct TrainConfig {
  std::size_t shots = 16;
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  std::size_t context_length = 4;
  double lambda = 4.0;
  double tau = 0.01;
  double learning_rate = 0.002;
  double momentum = 0.9;
  LrSchedule schedule = LrSchedule::Cosine;
  double init_std = 0.02;
  std::uint64_t seed = 1;

  void validate() const;
  double lr_at(std::size_t epoch) const;

  nlohmann::ordered_json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);  // rejects unknown keys
};

// Regularization anchors, one row per class; frozen during training.
class KnowledgeTargets {
 public:
  KnowledgeTargets() = default;
  explicit KnowledgeTargets(Matrix rows);

  const Matrix& rows() const { return rows_; }
  std::size_t num_classes() const { return static_cast<std::size_t>(rows_.rows()); }

 private:
  Matrix rows_;
};

// Per-class k_c^tgt through the knowledge module.
KnowledgeTargets geo_knowledge_targets(const std::vector<ClassInfo>& classes, const GeographySet& geographies,
                                       PromptStrategy strategy, const DescriptorSet& dset, const TextEncoder& text);

// KgCoOp-style anchors: the Default prompt embedding of each class.
KnowledgeTargets kgcoop_targets(const std::vector<ClassInfo>& classes, const TextEncoder& text);

using ClassTokens = std::vector<HardToken>;

// Hard tokens of the class name (whitespace and '/' separated).
ClassTokens class_tokens(const ClassInfo& cls, const Vocab& vocab);
std::vector<ClassTokens> class_tokens(const std::vector<ClassInfo>& classes, const Vocab& vocab);

// [V]_1 ... [V]_M [CLASS tokens]; context is M x D_in.
std::vector<TokenRow> build_class_prompt(const Matrix& context, const ClassTokens& cls);

// Row c = encode_text(build_class_prompt(context, c)).
Matrix class_embeddings(const Matrix& context, const std::vector<ClassTokens>& classes, const ToyTextEncoder& enc);

// -log softmax_j(cos(w_j, f) / tau) at the true class.
double ce_loss(const Matrix& class_emb, const EmbeddingVec& feature, std::size_t label, double tau);

// 1 - mean_c cos(w_c, k_c).
double gkr_loss(const Matrix& class_emb, const KnowledgeTargets& targets);

inline double total_loss(double ce, double gkr, double lambda) { return ce + lambda * gkr; }

// Whether the knowledge term exists in the objective at all. Disabled is the
// plain CoOp trainer; Enabled with lambda = 0 must match it exactly.
enum class GkrTerm { Enabled, Disabled };

// Labeled image features; row i of `features` has class `labels[i]`.
struct LabeledFeatures {
  Matrix features;
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
};

struct TrainProblem {
  const ToyTextEncoder* encoder = nullptr;
  std::vector<ClassTokens> classes;
  const KnowledgeTargets* targets = nullptr;  // required for GkrTerm::Enabled
};

struct LossRecord {
  double ce = 0.0;
  std::optional<double> gkr;
  double total = 0.0;
};

// Mean total loss over the batch and its exact gradient w.r.t. the context.
template <GkrTerm Term>
LossRecord loss_and_gradient(const Matrix& context, const TrainProblem& problem, const LabeledFeatures& data,
                             std::span<const std::size_t> batch, double lambda, double tau, Matrix* grad);

struct SoftPromptState {
  Matrix context;   // M x D_in
  Matrix velocity;  // momentum buffer, same shape
  double lambda = 0.0;
  double tau = 0.01;
  std::size_t epoch = 0;
  std::size_t step = 0;
  Rng rng;

  static SoftPromptState init(const TrainConfig& config, Eigen::Index input_dim);
};

// One SGD-with-momentum update on the batch. Throws NonFiniteLoss.
template <GkrTerm Term>
LossRecord grad_step(SoftPromptState& state, const TrainProblem& problem, const LabeledFeatures& data,
                     std::span<const std::size_t> batch, double learning_rate, double momentum);

struct EpochRecord {
  std::size_t epoch = 0;
  double ce = 0.0;
  std::optional<double> gkr;
  double total = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  SoftPromptState state;
  std::vector<EpochRecord> history;
  std::vector<std::size_t> shot_indices;  // rows of the training data used
  std::vector<std::string> warnings;
};

// Stratified shot selection without replacement, seeded per class. Classes with
// fewer samples than `shots` use all of them and add a warning.
std::vector<std::size_t> sample_shots(const std::vector<std::size_t>& labels, std::size_t num_classes,
                                      std::size_t shots, std::uint64_t seed, std::vector<std::string>* warnings,
                                      const std::vector<std::string>& class_names = {});

template <GkrTerm Term>
TrainResult train(const TrainConfig& config, const LabeledFeatures& source, const TrainProblem& problem,
                  const std::vector<std::string>& class_names);

// Convenience: GkrTerm::Disabled when no targets are given.
TrainResult train_auto(const TrainConfig& config, const LabeledFeatures& source, const TrainProblem& problem,
                       const std::vector<std::string>& class_names);

// Checkpoint: {"config","classes","context","velocity","epoch","step","rng_state","history"}.
nlohmann::ordered_json checkpoint_json(const TrainConfig& config, const std::vector<std::string>& class_names,
                                       const TrainResult& result);
std::string format_training_log(const std::vector<EpochRecord>& history);

struct LoadedCheckpoint {
  TrainConfig config;
  std::vector<std::string> class_names;
  SoftPromptState state;
  std::vector<EpochRecord> history;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace geoprompt
