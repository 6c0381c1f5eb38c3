#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace rkg {

// UMLS concept unique identifier: "C" followed by exactly seven digits.
class ConceptId {
 public:
  ConceptId() = default;
  // Throws DataError when the token does not have the CUI shape.
  explicit ConceptId(std::string cui);

  static bool is_valid(std::string_view cui);

  const std::string& str() const { return cui_; }
  auto operator<=>(const ConceptId&) const = default;

 private:
  std::string cui_;
};

struct Concept {
  ConceptId id;
  std::string snomed_id;
  // language code -> normalized surface phrases (lowercase, single spaces).
  std::map<std::string, std::vector<std::string>> terms;
  // language code -> first listed phrase.
  std::map<std::string, std::string> preferred_label;

  bool operator==(const Concept&) const = default;
};

struct Relation {
  ConceptId a;
  ConceptId b;
  std::string label;

  bool operator==(const Relation&) const = default;
};

inline constexpr std::size_t kMaxPhraseTokens = 5;

// Miniature multilingual concept base with an undirected relation set.
//
// File layout (UTF-8, tab separated, '#' starts a comment line):
//   C <cui> <snomed_id> <lang>:<phrase>|<phrase>... [<lang>:...]...
//   R <cui_a> <cui_b> <label>
//
// Relation labels are kept but edge derivation treats every relation alike.
// Immutable after construction; concurrent reads are safe.
class Ontology {
 public:
  static Ontology parse(std::string_view text);
  static Ontology load(const std::filesystem::path& path);

  void add_concept(Concept concept_record);
  void add_relation(Relation relation);

  bool contains(const ConceptId& id) const { return concepts_.count(id) > 0; }
  const Concept& concept_record(const ConceptId& id) const;
  const std::map<ConceptId, Concept>& concepts() const { return concepts_; }
  const std::vector<Relation>& relations() const { return relations_; }

  // True iff a stored relation joins a and b (either direction); false for a == b.
  bool related(const ConceptId& a, const ConceptId& b) const;
  // Path of at most `hops` relation edges between distinct concepts.
  bool related_within(const ConceptId& a, const ConceptId& b, std::size_t hops) const;
  const std::set<ConceptId>& neighbors(const ConceptId& id) const;

  std::optional<ConceptId> lookup(std::string_view language, std::string_view phrase) const;
  bool has_language(std::string_view language) const;
  std::set<std::string> languages() const;
  std::size_t phrase_count() const;

  // Canonical text form accepted by parse().
  std::string serialize() const;

  bool operator==(const Ontology& other) const;

 private:
  void require_known(const ConceptId& id) const;

  std::map<ConceptId, Concept> concepts_;
  std::vector<Relation> relations_;
  std::map<ConceptId, std::set<ConceptId>> adjacency_;
  std::map<std::string, std::unordered_map<std::string, ConceptId>, std::less<>> phrase_index_;
};

inline Ontology load_ontology(const std::filesystem::path& path) { return Ontology::load(path); }
inline bool related(const Ontology& o, const ConceptId& a, const ConceptId& b) {
  return o.related(a, b);
}

}  // namespace rkg

template <>
struct std::hash<rkg::ConceptId> {
  std::size_t operator()(const rkg::ConceptId& id) const noexcept {
    return std::hash<std::string>{}(id.str());
  }
};
