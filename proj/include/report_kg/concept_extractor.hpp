#pragma once

#include <compare>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "report_kg/ontology.hpp"
#include "report_kg/report.hpp"

namespace rkg {

struct Mention {
  ConceptId concept_id;
  std::size_t sentence_index = 0;
  // Token offsets [start, end) within the sentence.
  std::size_t start = 0;
  std::size_t end = 0;

  auto operator<=>(const Mention&) const = default;
};

struct Extraction {
  std::vector<Mention> mentions;
  std::size_t n_sentences = 0;
};

// Sentences end at '.', '!', '?' and blank lines; each becomes a list of
// lowercased tokens. Empty sentences are dropped.
std::vector<std::vector<std::string>> split_sentences(std::string_view text);

// Backend-neutral NER interface: one report in, per-sentence mentions out.
class ConceptExtractor {
 public:
  virtual ~ConceptExtractor() = default;
  virtual Extraction extract(const Report& report) const = 0;
};

// Greedy leftmost-longest n-gram lookup (n <= 5) against the ontology's
// phrase index for the report language. Matched tokens are consumed.
// No negation handling: "no edema" still yields the edema concept.
class DictionaryExtractor final : public ConceptExtractor {
 public:
  explicit DictionaryExtractor(const Ontology& ontology) : ontology_(ontology) {}

  Extraction extract(const Report& report) const override;

  std::vector<Mention> match_sentence(std::string_view language,
                                      const std::vector<std::string>& tokens,
                                      std::size_t sentence_index) const;

 private:
  const Ontology& ontology_;
};

// Mentions ordered by (sentence_index, start). Throws DataError for a
// language the ontology has no terms in.
std::vector<Mention> extract_concepts(const Ontology& ontology, const Report& report);

}  // namespace rkg
