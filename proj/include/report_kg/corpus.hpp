#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "report_kg/concept_extractor.hpp"
#include "report_kg/ontology.hpp"
#include "report_kg/report.hpp"

namespace rkg {

// Label `label` fires when every concept in all_of is mentioned, within a
// single sentence when same_sentence is set.
struct LabelRule {
  std::size_t label = 0;
  std::vector<ConceptId> all_of;
  bool same_sentence = false;

  bool operator==(const LabelRule&) const = default;
};

// Synthetic corpus recipe. Text form: key=value lines, '#' comments, with
// repeatable `rule=<label>:<cui>+<cui>...[@sentence]` entries.
struct GeneratorSpec {
  std::size_t n_reports = 100;
  std::vector<std::string> languages{"en"};
  // Render every report in every language; ids become <base>@<lang>.
  bool parallel = false;
  std::vector<LabelRule> rules;
  // Label set when no rule fires (e.g. "No Finding"); disabled when unset.
  std::optional<std::size_t> no_finding_label = 0;
  std::size_t min_sentences = 2;
  std::size_t max_sentences = 5;
  std::size_t max_positive_labels = 3;
  // Probability of inserting filler sentences without concepts.
  double filler_prob = 0.3;
  // Probability of a deliberate near miss (rule concepts split across
  // sentences, or only part of a rule) per report.
  double near_miss_prob = 0.5;
  std::size_t max_distractors = 2;
  // Per-cell label flip probability, applied after the rules.
  double label_noise = 0.0;
  // Neutral concepts; empty means every concept no rule mentions.
  std::vector<ConceptId> distractors;
  std::uint64_t seed = 0;
};

GeneratorSpec parse_generator_spec(std::string_view text);
GeneratorSpec load_generator_spec(const std::filesystem::path& path);
std::string serialize_generator_spec(const GeneratorSpec& spec);
// Throws DataError for unknown concepts/languages or unreachable label indices.
void validate_generator_spec(const GeneratorSpec& spec, const Ontology& ontology);

// Rules (plus the no-finding rule) applied to extracted mentions.
Labels apply_label_rules(const GeneratorSpec& spec, std::span<const Mention> mentions);

// Deterministic for a given (ontology, spec). Labels are computed from the
// concepts actually extracted from the rendered text.
Corpus generate_corpus(const Ontology& ontology, const GeneratorSpec& spec);

struct SplitRatios {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
};

struct CorpusSplits {
  Corpus train;
  Corpus val;
  Corpus test;
};

// Text before the first '@' of a report id; reports sharing it stay together.
std::string_view split_key(std::string_view report_id);

// Hash-ordered partition of the distinct split keys: floor(n*val) to val,
// floor(n*test) to test, the remainder to train. Corpus order is kept within
// each split.
CorpusSplits split_corpus(const Corpus& corpus, const SplitRatios& ratios, std::uint64_t seed);

}  // namespace rkg
