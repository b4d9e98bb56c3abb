#include <doctest.h>

#include <regex>

#include "geoprompt/knowledge.hpp"
#include "geoprompt/zeroshot.hpp"

using namespace geoprompt;

TEST_CASE("article_for") {
  CHECK(article_for("oven", false) == "an");
  CHECK(article_for("stove", false) == "a");
  CHECK(article_for("tools", true) == "");
}

TEST_CASE("render_prompt templates") {
  CHECK(render_prompt({PromptStrategy::Default, "stove", {}, {}, false}) == "a photo of a stove");
  CHECK(render_prompt({PromptStrategy::CountryInPrompt, "stove", "Burundi", {}, false}) ==
        "a photo of a stove in Burundi");
  CHECK(render_prompt({PromptStrategy::CountryLLM, "bathtub", "Japan", "square shape", false}) ==
        "a photo of a bathtub, which has square shape");
  CHECK(render_prompt({PromptStrategy::CountryInPromptPlusLLM, "bathtub", "Japan", "made of wood", false}) ==
        "a photo of a bathtub in Japan, which made of wood");
  CHECK(render_prompt({PromptStrategy::GeneralLLM, "oven", {}, "is  made of   steel", false}) ==
        "a photo of an oven, which is made of steel");
  CHECK(render_prompt({PromptStrategy::Default, "tools", {}, {}, true}) == "a photo of tools");
}

TEST_CASE("render_prompt rejects inconsistent specs") {
  CHECK_THROWS_AS(render_prompt({PromptStrategy::Default, "stove", "Japan", {}, false}), Error);
  CHECK_THROWS_AS(render_prompt({PromptStrategy::CountryLLM, "stove", "Japan", {}, false}), Error);
  CHECK_THROWS_AS(render_prompt({PromptStrategy::CountryInPrompt, "stove", {}, {}, false}), Error);
  CHECK_THROWS_AS(render_prompt({PromptStrategy::Default, "  ", {}, {}, false}), Error);
}

TEST_CASE("rendered prompts never carry double or trailing spaces") {
  const std::regex bad("  | $");
  for (const auto* cls : {"stove", " oven ", "light  source"}) {
    for (const auto* d : {"square shape", "  benches on side ", "is white"}) {
      const std::string p = render_prompt({PromptStrategy::CountryInPromptPlusLLM, cls, " Japan", d, false});
      CHECK_FALSE(std::regex_search(p, bad));
    }
  }
}

TEST_CASE("tokenize") {
  Vocab vocab;
  add_to_vocab("a photo of a stove hob", vocab);
  const auto toks = tokenize("Stove/hob", vocab);
  REQUIRE(toks.size() == 2);
  CHECK(toks[0].id == vocab.id_of("stove"));
  CHECK(toks[1].id == vocab.id_of("hob"));
  const auto photo = tokenize("a photo of a stove", vocab);
  CHECK(photo.size() == 5);
  for (const auto& t : photo) CHECK(t.id != Vocab::kUnkId);
  CHECK(tokenize("zebra", vocab).front().id == Vocab::kUnkId);
  CHECK(split_words("Hello, World! x-ray") == std::vector<std::string>{"hello", "world", "x-ray"});
  CHECK_THROWS_AS(tokenize("   ", vocab), Error);
}

TEST_CASE("zero-shot and knowledge share one embedding pathway") {
  Vocab vocab;
  add_to_vocab("a photo of a stove in Burundi which has clay", vocab);
  Rng rng(1);
  TextEncoder text{vocab, ToyTextEncoder::random(vocab.size(), 6, 5, rng)};
  DescriptorSet dset;
  dset.set("stove", "Burundi", DescriptorEntry{{"clay"}, "m", "h", "t"});
  const ClassInfo stove{"stove", false, {}};
  const PromptSpec spec{PromptStrategy::CountryInPromptPlusLLM, "stove", "Burundi", "clay", false};
  const EmbeddingVec direct = embed_prompt(spec, text);
  PromptCache cache(text);
  const GeoContext geo{"Burundi", std::nullopt};
  const auto from_zero_shot =
      class_prompt_embeddings(stove, PromptStrategy::CountryInPromptPlusLLM, geo, dset, cache, {});
  const EmbeddingVec from_knowledge =
      class_knowledge(stove, "Burundi", PromptStrategy::CountryInPromptPlusLLM, dset, text);
  REQUIRE(from_zero_shot.size() == 1);
  CHECK(from_zero_shot[0] == direct);
  CHECK(from_knowledge == direct);
}

TEST_CASE("strategy names round-trip") {
  for (auto s : {PromptStrategy::Default, PromptStrategy::GeneralLLM, PromptStrategy::CountryInPrompt,
                 PromptStrategy::CountryLLM, PromptStrategy::CountryInPromptPlusLLM}) {
    CHECK(parse_strategy(to_string(s)) == s);
  }
  CHECK_THROWS_AS(parse_strategy("nope"), Error);
}
