#include "geoprompt/prompting.hpp"

#include <array>
#include <cctype>
#include <json.hpp>

#include "geoprompt/io_util.hpp"

namespace geoprompt {

std::string_view to_string(PromptStrategy s) {
  switch (s) {
    case PromptStrategy::Default: return "default";
    case PromptStrategy::GeneralLLM: return "general_llm";
    case PromptStrategy::CountryInPrompt: return "country_in_prompt";
    case PromptStrategy::CountryLLM: return "country_llm";
    case PromptStrategy::CountryInPromptPlusLLM: return "country_in_prompt_llm";
  }
  return "default";
}

PromptStrategy parse_strategy(std::string_view name) {
  for (auto s : {PromptStrategy::Default, PromptStrategy::GeneralLLM, PromptStrategy::CountryInPrompt,
                 PromptStrategy::CountryLLM, PromptStrategy::CountryInPromptPlusLLM}) {
    if (to_string(s) == name) return s;
  }
  throw Error(ErrorKind::InvalidConfig, "unknown prompt strategy '" + std::string(name) + "'");
}

bool uses_descriptors(PromptStrategy s) {
  return s == PromptStrategy::GeneralLLM || s == PromptStrategy::CountryLLM ||
         s == PromptStrategy::CountryInPromptPlusLLM;
}

bool uses_country(PromptStrategy s) {
  return s == PromptStrategy::CountryInPrompt || s == PromptStrategy::CountryLLM ||
         s == PromptStrategy::CountryInPromptPlusLLM;
}

bool renders_country(PromptStrategy s) {
  return s == PromptStrategy::CountryInPrompt || s == PromptStrategy::CountryInPromptPlusLLM;
}

std::vector<ClassInfo> load_class_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
  }
  if (!j.is_array()) throw Error(ErrorKind::ParseError, path.string() + ": expected a JSON array");
  std::vector<ClassInfo> out;
  for (const auto& item : j) {
    if (!item.is_object() || !item.contains("name") || !item["name"].is_string()) {
      throw Error(ErrorKind::ParseError, path.string() + ": every class needs a string \"name\"");
    }
    for (const auto& [key, _] : item.items()) {
      if (key != "name" && key != "plural" && key != "aliases") {
        throw Error(ErrorKind::ParseError, path.string() + ": unknown class key '" + key + "'");
      }
    }
    ClassInfo c;
    c.name = item["name"].get<std::string>();
    if (io::trim(c.name).empty()) throw Error(ErrorKind::EmptyField, path.string() + ": empty class name");
    c.plural = item.value("plural", false);
    if (item.contains("aliases")) c.aliases = item["aliases"].get<std::vector<std::string>>();
    for (const auto& prev : out) {
      if (prev.name == c.name) throw Error(ErrorKind::DuplicateId, "class '" + c.name + "'");
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::string format_class_config(const std::vector<ClassInfo>& classes) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& c : classes) {
    j.push_back({{"name", c.name}, {"plural", c.plural}, {"aliases", c.aliases}});
  }
  return j.dump(2) + "\n";
}

std::string_view article_for(std::string_view class_name, bool plural) {
  if (plural) return "";
  if (class_name.empty()) return "a";
  const char first = static_cast<char>(std::tolower(static_cast<unsigned char>(class_name.front())));
  switch (first) {
    case 'a': case 'e': case 'i': case 'o': case 'u': return "an";
    default: return "a";
  }
}

std::string_view connective_for(std::string_view descriptor) {
  static constexpr std::array<std::string_view, 13> kVerbs = {
      "is", "has", "are", "have", "made", "used", "often", "typically", "usually", "can", "may", "comes", "with"};
  descriptor = io::trim(descriptor);
  const auto end = descriptor.find_first_of(" \t");
  std::string first(descriptor.substr(0, end));
  for (auto& ch : first) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  for (auto v : kVerbs) {
    if (first == v) return "";
  }
  return "has ";
}

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorKind::SpecInvariantViolated, what);
}

bool nonblank(const std::optional<std::string>& s) { return s && !io::trim(*s).empty(); }

}  // namespace

std::string render_prompt(const PromptSpec& spec) {
  const auto strategy = spec.strategy;
  require(!io::trim(spec.class_name).empty(), "empty class name");
  require(uses_country(strategy) == spec.country.has_value(),
          std::string("country must be ") + (uses_country(strategy) ? "set" : "absent") + " for " +
              std::string(to_string(strategy)));
  require(uses_descriptors(strategy) == spec.descriptor.has_value(),
          std::string("descriptor must be ") + (uses_descriptors(strategy) ? "set" : "absent") + " for " +
              std::string(to_string(strategy)));
  if (spec.country) require(nonblank(spec.country), "blank country");
  if (spec.descriptor) require(nonblank(spec.descriptor), "blank descriptor");

  std::string out = "a photo of ";
  const auto article = article_for(spec.class_name, spec.plural);
  if (!article.empty()) {
    out += article;
    out += ' ';
  }
  out += io::trim(spec.class_name);
  if (renders_country(strategy)) {
    out += " in ";
    out += io::trim(*spec.country);
  }
  if (uses_descriptors(strategy)) {
    const auto d = io::trim(*spec.descriptor);
    out += ", which ";
    out += connective_for(d);
    out += d;
  }
  // Collapse internal whitespace runs coming from class or descriptor text.
  std::string collapsed;
  collapsed.reserve(out.size());
  for (char ch : out) {
    const bool space = std::isspace(static_cast<unsigned char>(ch)) != 0;
    if (space) {
      if (!collapsed.empty() && collapsed.back() != ' ') collapsed += ' ';
    } else {
      collapsed += ch;
    }
  }
  while (!collapsed.empty() && collapsed.back() == ' ') collapsed.pop_back();
  return collapsed;
}

std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> words;
  std::string cur;
  const auto flush = [&] {
    if (!cur.empty()) words.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : s) {
    const auto uc = static_cast<unsigned char>(ch);
    if (std::isspace(uc) || ch == '/') {
      flush();
    } else if (uc < 0x80 && std::ispunct(uc) && ch != '-') {
      continue;
    } else {
      cur += static_cast<char>(uc < 0x80 ? std::tolower(uc) : uc);
    }
  }
  flush();
  return words;
}

std::vector<HardToken> tokenize(std::string_view s, const Vocab& vocab) {
  if (io::trim(s).empty()) throw Error(ErrorKind::EmptyInput, "tokenize: empty input");
  std::vector<HardToken> out;
  for (const auto& w : split_words(s)) out.push_back(HardToken{vocab.id_of(w)});
  if (out.empty()) out.push_back(HardToken{Vocab::kUnkId});
  return out;
}

void add_to_vocab(std::string_view s, Vocab& vocab) {
  for (const auto& w : split_words(s)) vocab.add(w);
}

std::vector<TokenRow> to_rows(const std::vector<HardToken>& tokens) {
  return {tokens.begin(), tokens.end()};
}

EmbeddingVec embed_prompt(const PromptSpec& spec, const TextEncoder& text) {
  return encode_text(text.model, to_rows(tokenize(render_prompt(spec), text.vocab)));
}

}  // namespace geoprompt
