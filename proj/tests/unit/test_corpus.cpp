#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>

#include "report_kg/concept_extractor.hpp"
#include "report_kg/corpus.hpp"
#include "report_kg/errors.hpp"
#include "support.hpp"

using namespace rkg;
using namespace rkg::testing;

namespace {

GeneratorSpec small_spec(std::size_t n) {
  GeneratorSpec spec = shipped_spec();
  spec.n_reports = n;
  return spec;
}

std::multiset<std::pair<std::string, std::size_t>> mention_multiset(const std::vector<Mention>& ms) {
  std::multiset<std::pair<std::string, std::size_t>> out;
  for (const auto& m : ms) out.insert({m.concept_id.str(), m.sentence_index});
  return out;
}

}  // namespace

TEST_SUITE("corpus_kit") {
  TEST_CASE("report lines round-trip with escapes") {
    Report r{"r1", "en", "a\tb\\c\nd", Labels{}};
    (*r.labels)[3] = 1;
    const std::string line = format_report_line(r);
    CHECK(line.find('\n') == std::string::npos);
    CHECK(parse_report_line(line) == r);
    const Report unlabeled{"r2", "es", "derrame pleural", std::nullopt};
    CHECK(parse_corpus(serialize_corpus({r, unlabeled})) == Corpus{r, unlabeled});
    CHECK_THROWS_AS(parse_report_line("id=x\tlang=en"), DataError);
    CHECK_THROWS_AS(parse_labels("1,0"), DataError);
  }

  TEST_CASE("generator is deterministic") {
    const GeneratorSpec spec = small_spec(100);
    const Corpus a = generate_corpus(shipped_ontology(), spec);
    const Corpus b = generate_corpus(shipped_ontology(), spec);
    CHECK(a.size() == 100);
    CHECK(a == b);
    GeneratorSpec other = spec;
    other.seed += 1;
    CHECK(generate_corpus(shipped_ontology(), other) != a);
  }

  TEST_CASE("labels follow the rules applied to extracted concepts") {
    const GeneratorSpec spec = small_spec(200);
    const Ontology& o = shipped_ontology();
    for (const auto& r : generate_corpus(o, spec)) {
      REQUIRE(r.labels.has_value());
      CHECK(apply_label_rules(spec, extract_concepts(o, r)) == *r.labels);
    }
  }

  TEST_CASE("effusion rule sets label 10") {
    GeneratorSpec spec;
    spec.rules = {LabelRule{10, {ConceptId("C0032227")}, false}};
    const std::vector<Mention> m{{ConceptId("C0032227"), 0, 0, 2}};
    const Labels y = apply_label_rules(spec, m);
    CHECK(y[10] == 1);
    CHECK(y[0] == 0);
    CHECK(apply_label_rules(spec, {})[0] == 1);
  }

  TEST_CASE("same-sentence rules need co-occurrence") {
    GeneratorSpec spec;
    spec.no_finding_label.reset();
    const ConceptId a("C0521530"), b("C0746934");
    spec.rules = {LabelRule{7, {a, b}, true}};
    const std::vector<Mention> together{{a, 1, 0, 1}, {b, 1, 2, 4}};
    const std::vector<Mention> apart{{a, 0, 0, 1}, {b, 1, 0, 2}};
    CHECK(apply_label_rules(spec, together)[7] == 1);
    CHECK(apply_label_rules(spec, apart)[7] == 0);
  }

  TEST_CASE("parallel en/es reports extract identically") {
    GeneratorSpec spec = small_spec(60);
    spec.languages = {"en", "es"};
    spec.parallel = true;
    const Ontology& o = shipped_ontology();
    const Corpus c = generate_corpus(o, spec);
    CHECK(c.size() == 120);
    std::map<std::string, std::vector<const Report*>> by_key;
    for (const auto& r : c) by_key[std::string(split_key(r.id))].push_back(&r);
    CHECK(by_key.size() == 60);
    for (const auto& [key, pair] : by_key) {
      REQUIRE(pair.size() == 2);
      CHECK(pair[0]->language != pair[1]->language);
      CHECK(pair[0]->text != pair[1]->text);
      CHECK(pair[0]->labels == pair[1]->labels);
      CHECK(mention_multiset(extract_concepts(o, *pair[0])) == mention_multiset(extract_concepts(o, *pair[1])));
    }
  }

  TEST_CASE("generator spec parsing and validation") {
    const GeneratorSpec spec = shipped_spec();
    CHECK(spec.n_reports == 2000);
    CHECK(parse_generator_spec(serialize_generator_spec(spec)).rules == spec.rules);
    CHECK_NOTHROW(validate_generator_spec(spec, shipped_ontology()));
    CHECK_THROWS_WITH_AS(parse_generator_spec("n_reports=10\nbogus=1\n"), doctest::Contains("line 2"), DataError);
    GeneratorSpec bad = spec;
    bad.rules.push_back(LabelRule{3, {ConceptId("C9999999")}, false});
    CHECK_THROWS_AS(validate_generator_spec(bad, shipped_ontology()), DataError);
    GeneratorSpec lang = spec;
    lang.languages = {"de"};
    CHECK_THROWS_AS(validate_generator_spec(lang, shipped_ontology()), DataError);
  }

  TEST_CASE("splits of ten reports are 7/1/2") {
    Corpus c;
    for (int i = 0; i < 10; ++i) c.push_back(Report{"r" + std::to_string(i), "en", "x", std::nullopt});
    const CorpusSplits s = split_corpus(c, SplitRatios{}, 3);
    CHECK(s.train.size() == 7);
    CHECK(s.val.size() == 1);
    CHECK(s.test.size() == 2);
    const CorpusSplits again = split_corpus(c, SplitRatios{}, 3);
    CHECK(again.train == s.train);
    CHECK(again.test == s.test);
    std::set<std::string> ids;
    for (const auto* part : {&s.train, &s.val, &s.test})
      for (const auto& r : *part) CHECK(ids.insert(r.id).second);
    CHECK(ids.size() == 10);
  }

  TEST_CASE("paired reports stay in the same split") {
    GeneratorSpec spec = small_spec(40);
    spec.languages = {"en", "es"};
    spec.parallel = true;
    const Corpus c = generate_corpus(shipped_ontology(), spec);
    const CorpusSplits s = split_corpus(c, SplitRatios{}, 9);
    std::map<std::string, int> where;
    int idx = 0;
    for (const auto* part : {&s.train, &s.val, &s.test}) {
      for (const auto& r : *part) {
        const auto [it, fresh] = where.emplace(std::string(split_key(r.id)), idx);
        CHECK(it->second == idx);
      }
      ++idx;
    }
    CHECK(split_key("r00001@es") == "r00001");
    CHECK(split_key("plain") == "plain");
  }

  TEST_CASE("too few reports for a split is an error") {
    Corpus c{Report{"a", "en", "x", std::nullopt}, Report{"b", "en", "x", std::nullopt}};
    CHECK_THROWS_AS(split_corpus(c, SplitRatios{}, 0), DataError);
  }

  TEST_CASE("corpus file round-trip") {
    const Corpus c = generate_corpus(shipped_ontology(), small_spec(20));
    const auto path = std::filesystem::temp_directory_path() / "rkg_unit_corpus.tsv";
    write_corpus(path, c);
    CHECK(read_corpus(path) == c);
    std::filesystem::remove(path);
  }
}
