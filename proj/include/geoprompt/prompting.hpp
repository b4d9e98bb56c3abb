#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "geoprompt/encoder.hpp"

namespace geoprompt {

enum class PromptStrategy { Default, GeneralLLM, CountryInPrompt, CountryLLM, CountryInPromptPlusLLM };

// Stable snake_case names used in files and on the command line.
std::string_view to_string(PromptStrategy s);
PromptStrategy parse_strategy(std::string_view name);

bool uses_descriptors(PromptStrategy s);
bool uses_country(PromptStrategy s);  // country selects descriptors and/or is rendered
bool renders_country(PromptStrategy s);

struct ClassInfo {
  std::string name;
  bool plural = false;
  std::vector<std::string> aliases;
};

// Class config: JSON array of {"name", "plural", "aliases"}.
std::vector<ClassInfo> load_class_config(const std::filesystem::path& path);
std::string format_class_config(const std::vector<ClassInfo>& classes);

struct PromptSpec {
  PromptStrategy strategy = PromptStrategy::Default;
  std::string class_name;
  std::optional<std::string> country;
  std::optional<std::string> descriptor;
  bool plural = false;
};

std::string_view article_for(std::string_view class_name, bool plural);

// "which" connective: empty when the descriptor already starts with a verb-ish
// word, otherwise "has ".
std::string_view connective_for(std::string_view descriptor);

std::string render_prompt(const PromptSpec& spec);

std::vector<std::string> split_words(std::string_view s);
std::vector<HardToken> tokenize(std::string_view s, const Vocab& vocab);
void add_to_vocab(std::string_view s, Vocab& vocab);

std::vector<TokenRow> to_rows(const std::vector<HardToken>& tokens);

// render -> tokenize -> encode. The one pathway used by zero-shot scoring and
// knowledge building.
EmbeddingVec embed_prompt(const PromptSpec& spec, const TextEncoder& text);

}  // namespace geoprompt
