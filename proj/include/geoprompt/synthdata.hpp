#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "geoprompt/evalmetrics.hpp"
#include "geoprompt/knowledge.hpp"

namespace geoprompt {

struct SynthGeography {
  std::string name;
  double delta = 0.0;  // shift magnitude
  bool target = false;
};

struct SynthConfig {
  std::size_t num_classes = 5;
  std::vector<SynthGeography> geographies = {
      {"Geo0", 0.0, false}, {"Geo1", 0.0, false}, {"Geo2", 2.0, true}, {"Geo3", 2.0, true}};
  std::size_t samples_per_cell = 25;
  double sigma = 0.3;
  Eigen::Index dim = 32;
  Eigen::Index input_dim = 32;  // must equal dim: the synthetic encoder is the identity
  std::size_t shots = 16;
  // Weight of the geography-wide component in every shift direction. At 0 the
  // shifts are orthogonal to all class directions and Default ranking is
  // unaffected by delta.
  double shared_shift = 0.5;
  std::uint64_t seed = 0;

  void validate() const;  // InvalidConfig / DimensionTooSmall
  nlohmann::ordered_json to_json() const;
  static SynthConfig from_json(const nlohmann::json& j);

  // Every geography with target=true gets the given delta.
  SynthConfig with_target_delta(double delta) const;
  std::vector<std::string> source_names() const;
  std::vector<std::string> target_names() const;
};

struct SynthWorld {
  SynthConfig config;
  Matrix class_dirs;                // N_c x D, rows u_c
  std::vector<Matrix> shift_dirs;   // per geography, N_c x D, rows v_{g,c}
  std::vector<ClassInfo> classes;
  std::vector<SampleMeta> manifest;
  Matrix features;                  // row i belongs to manifest[i]
  std::vector<std::size_t> labels;  // class index per row
  DescriptorSet descriptors;
  TextEncoder text;
  std::vector<std::size_t> training;  // manifest rows of the seeded shot subset

  EmbeddingStore store() const;
};

// Builds the world and assigns splits. Throws DimensionTooSmall when
// D < N_c + N_c * N_geo, SpecInvariantViolated if a generated direction or the
// knowledge-fidelity check fails.
SynthWorld generate(const SynthConfig& config);

struct SplitResult {
  std::vector<Split> assignment;      // per manifest row
  std::vector<std::size_t> training;  // source-train rows chosen as shots
  std::vector<std::string> warnings;
};

// Source rows per class 64/16/20 (train/val/test); all target rows -> target.
// Throws InsufficientSamples.
SplitResult split(const std::vector<SampleMeta>& manifest, const std::vector<std::size_t>& labels,
                  const std::vector<bool>& is_target, std::size_t num_classes, std::size_t shots, std::uint64_t seed);

// Synthetic descriptor strings.
std::string synth_descriptor(std::size_t geo, std::size_t cls);
std::string synth_general_descriptor(std::size_t cls);

struct WorldFiles {
  std::filesystem::path classes = "classes.json";
  std::filesystem::path manifest = "manifest.jsonl";
  std::filesystem::path features = "features.tsv";
  std::filesystem::path descriptors = "descriptors.jsonl";
  std::filesystem::path vocab = "vocab.tsv";
  std::filesystem::path config = "synth_config.json";
};

void write_world(const SynthWorld& world, const std::filesystem::path& dir, const WorldFiles& names = {});

}  // namespace geoprompt
