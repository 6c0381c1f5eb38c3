#include <doctest.h>

#include "report_kg/concept_extractor.hpp"
#include "report_kg/errors.hpp"
#include "report_kg/text.hpp"
#include "support.hpp"

using namespace rkg;
using namespace rkg::testing;

using Sentences = std::vector<std::vector<std::string>>;

TEST_SUITE("concept_extractor") {
  TEST_CASE("sentence splitting") {
    CHECK(split_sentences("No edema. Heart size normal.") ==
          Sentences{{"no", "edema"}, {"heart", "size", "normal"}});
    CHECK(split_sentences("").empty());
    CHECK(split_sentences("opacities,  left lung") == Sentences{{"opacities", "left", "lung"}});
    CHECK(split_sentences("a!b?\n\nc") == Sentences{{"a"}, {"b"}, {"c"}});
    CHECK(split_sentences("...  .") .empty());
  }

  TEST_CASE("tokenizer lowercases accented letters and drops Spanish punctuation") {
    CHECK(tokenize("¿Derrame PLEURAL? ÁREA «Ñ»") ==
          std::vector<std::string>{"derrame", "pleural", "área", "ñ"});
    CHECK(lowercase("ÉDEMA") == "édema");
    CHECK(join_tokens({"a", "b"}) == "a b");
  }

  TEST_CASE("leftmost-longest match") {
    const Ontology o = tiny_ontology();
    const DictionaryExtractor ex(o);
    const auto m = ex.match_sentence("en", {"small", "pleural", "effusion"}, 0);
    REQUIRE(m.size() == 1);
    CHECK(m[0].concept_id == kPleuralEffusion);
    CHECK(m[0].start == 1);
    CHECK(m[0].end == 3);
    CHECK(ex.match_sentence("en", {"heart", "size", "normal"}, 0).empty());
  }

  TEST_CASE("repeated concept in two sentences yields two mentions") {
    const Ontology o = tiny_ontology();
    const Report r{"r1", "en", "Effusion present. Heart normal. New effusion.", std::nullopt};
    const auto m = extract_concepts(o, r);
    REQUIRE(m.size() == 2);
    CHECK(m[0].concept_id == kEffusion);
    CHECK(m[1].concept_id == kEffusion);
    CHECK(m[0].sentence_index == 0);
    CHECK(m[1].sentence_index == 2);
  }

  TEST_CASE("negation is not handled") {
    const Ontology o = tiny_ontology();
    const auto m = extract_concepts(o, Report{"r", "en", "No effusion.", std::nullopt});
    REQUIRE(m.size() == 1);
    CHECK(m[0].concept_id == kEffusion);
  }

  TEST_CASE("matched tokens are consumed") {
    const Ontology o = tiny_ontology();
    const DictionaryExtractor ex(o);
    const auto m = ex.match_sentence("en", {"alpha", "opacity", "alpha"}, 3);
    REQUIRE(m.size() == 2);
    CHECK(m[0].start == 0);
    CHECK(m[0].end == 2);
    CHECK(m[1].start == 2);
    CHECK(m[1].sentence_index == 3);
  }

  TEST_CASE("Spanish phrases map to the same concepts") {
    const Ontology o = tiny_ontology();
    const auto en = extract_concepts(o, Report{"a", "en", "Pleural effusion. Beta and gamma.", std::nullopt});
    const auto es = extract_concepts(o, Report{"b", "es", "Derrame pleural. Beta y gamma.", std::nullopt});
    REQUIRE(en.size() == es.size());
    for (std::size_t i = 0; i < en.size(); ++i) {
      CHECK(en[i].concept_id == es[i].concept_id);
      CHECK(en[i].sentence_index == es[i].sentence_index);
    }
  }

  TEST_CASE("unknown language is a data error") {
    const Ontology o = tiny_ontology();
    CHECK_THROWS_AS(extract_concepts(o, Report{"r", "de", "Erguss.", std::nullopt}), DataError);
  }

  TEST_CASE("extraction counts non-empty sentences") {
    const Ontology o = tiny_ontology();
    const DictionaryExtractor ex(o);
    const auto e = ex.extract(Report{"r", "en", "Beta. . Nothing here.", std::nullopt});
    CHECK(e.n_sentences == 2);
    CHECK(e.mentions.size() == 1);
  }
}
