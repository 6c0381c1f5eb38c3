#include "report_kg/ontology.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <sstream>
#include <tuple>

#include "report_kg/errors.hpp"
#include "report_kg/text.hpp"

namespace rkg {

namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t p = s.find(sep, start);
    if (p == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, p - start));
    start = p + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::string normalize_phrase(std::string_view raw) {
  auto tokens = tokenize(raw);
  if (tokens.empty()) throw DataError("empty phrase");
  if (tokens.size() > kMaxPhraseTokens) {
    throw DataError("phrase '" + std::string(raw) + "' has more than " +
                    std::to_string(kMaxPhraseTokens) + " tokens");
  }
  return join_tokens(tokens);
}

}  // namespace

ConceptId::ConceptId(std::string cui) : cui_(std::move(cui)) {
  if (!is_valid(cui_)) throw DataError("malformed CUI '" + cui_ + "' (expected C + 7 digits)");
}

bool ConceptId::is_valid(std::string_view cui) {
  if (cui.size() != 8 || cui[0] != 'C') return false;
  return std::all_of(cui.begin() + 1, cui.end(), [](char c) { return c >= '0' && c <= '9'; });
}

void Ontology::add_concept(Concept c) {
  if (contains(c.id)) throw DataError("duplicate CUI " + c.id.str());
  bool any_phrase = false;
  for (auto& [lang, phrases] : c.terms) {
    if (lang.empty()) throw DataError("empty language code for " + c.id.str());
    for (auto& p : phrases) {
      p = normalize_phrase(p);
      any_phrase = true;
    }
  }
  if (!any_phrase) throw DataError("concept " + c.id.str() + " has no surface phrases");
  // Validate the whole record before touching the index.
  for (const auto& [lang, phrases] : c.terms) {
    auto it = phrase_index_.find(lang);
    std::set<std::string> local;
    for (const auto& p : phrases) {
      if (!local.insert(p).second) {
        throw DataError("duplicate phrase '" + p + "' for language '" + lang + "' within " +
                        c.id.str());
      }
      if (it != phrase_index_.end()) {
        if (auto hit = it->second.find(p); hit != it->second.end()) {
          throw DataError("duplicate phrase '" + p + "' for language '" + lang + "' (" +
                          hit->second.str() + " and " + c.id.str() + ")");
        }
      }
    }
  }
  for (const auto& [lang, phrases] : c.terms) {
    if (phrases.empty()) continue;
    auto& index = phrase_index_[lang];
    for (const auto& p : phrases) index.emplace(p, c.id);
    c.preferred_label[lang] = phrases.front();
  }
  adjacency_[c.id];
  const ConceptId id = c.id;
  concepts_.emplace(id, std::move(c));
}

void Ontology::add_relation(Relation r) {
  if (r.a == r.b) throw DataError("self relation on " + r.a.str());
  if (!contains(r.a)) throw DataError("unknown endpoint " + r.a.str());
  if (!contains(r.b)) throw DataError("unknown endpoint " + r.b.str());
  for (const auto& existing : relations_) {
    const bool same_pair = (existing.a == r.a && existing.b == r.b) ||
                           (existing.a == r.b && existing.b == r.a);
    if (same_pair && existing.label == r.label) return;
  }
  adjacency_[r.a].insert(r.b);
  adjacency_[r.b].insert(r.a);
  relations_.push_back(std::move(r));
}

Ontology Ontology::parse(std::string_view text) {
  Ontology o;
  struct PendingRelation {
    Relation relation;
    std::size_t line;
  };
  std::vector<PendingRelation> pending;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(start, nl - start);
    start = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty() || trim(line).front() == '#') {
      if (nl == text.size()) break;
      continue;
    }
    const auto where = "line " + std::to_string(line_no) + ": ";
    try {
      auto fields = split(line, '\t');
      if (fields[0] == "C") {
        if (fields.size() < 4) throw DataError("concept record needs cui, snomed_id and terms");
        Concept c;
        c.id = ConceptId(std::string(trim(fields[1])));
        c.snomed_id = std::string(trim(fields[2]));
        for (std::size_t i = 3; i < fields.size(); ++i) {
          auto field = trim(fields[i]);
          if (field.empty()) continue;
          const auto colon = field.find(':');
          if (colon == std::string_view::npos || colon == 0) {
            throw DataError("terms field '" + std::string(field) + "' lacks '<lang>:'");
          }
          std::string lang(field.substr(0, colon));
          if (c.terms.count(lang)) throw DataError("language '" + lang + "' listed twice");
          auto& phrases = c.terms[lang];
          for (auto p : split(field.substr(colon + 1), '|')) phrases.emplace_back(p);
        }
        o.add_concept(std::move(c));
      } else if (fields[0] == "R") {
        if (fields.size() != 4) throw DataError("relation record needs cui_a, cui_b and label");
        Relation r{ConceptId(std::string(trim(fields[1]))), ConceptId(std::string(trim(fields[2]))),
                   std::string(trim(fields[3]))};
        if (r.label.empty()) throw DataError("empty relation label");
        pending.push_back({std::move(r), line_no});
      } else {
        throw DataError("unknown record kind '" + std::string(fields[0]) + "'");
      }
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
    if (nl == text.size()) break;
  }
  for (auto& p : pending) {
    try {
      o.add_relation(std::move(p.relation));
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(p.line) + ": " + e.what());
    }
  }
  return o;
}

Ontology Ontology::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open ontology file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse(ss.str());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void Ontology::require_known(const ConceptId& id) const {
  if (!contains(id)) throw DataError("unknown concept " + id.str());
}

const Concept& Ontology::concept_record(const ConceptId& id) const {
  require_known(id);
  return concepts_.at(id);
}

bool Ontology::related(const ConceptId& a, const ConceptId& b) const {
  require_known(a);
  require_known(b);
  if (a == b) return false;
  return adjacency_.at(a).count(b) > 0;
}

bool Ontology::related_within(const ConceptId& a, const ConceptId& b, std::size_t hops) const {
  require_known(a);
  require_known(b);
  if (a == b || hops == 0) return false;
  if (hops == 1) return related(a, b);
  std::map<ConceptId, std::size_t> depth{{a, 0}};
  std::deque<ConceptId> queue{a};
  while (!queue.empty()) {
    ConceptId cur = queue.front();
    queue.pop_front();
    const std::size_t d = depth[cur];
    if (d == hops) continue;
    for (const auto& next : adjacency_.at(cur)) {
      if (next == b) return true;
      if (depth.emplace(next, d + 1).second) queue.push_back(next);
    }
  }
  return false;
}

const std::set<ConceptId>& Ontology::neighbors(const ConceptId& id) const {
  require_known(id);
  return adjacency_.at(id);
}

std::optional<ConceptId> Ontology::lookup(std::string_view language, std::string_view phrase) const {
  auto it = phrase_index_.find(language);
  if (it == phrase_index_.end()) return std::nullopt;
  auto hit = it->second.find(std::string(phrase));
  if (hit == it->second.end()) return std::nullopt;
  return hit->second;
}

bool Ontology::has_language(std::string_view language) const {
  return phrase_index_.find(language) != phrase_index_.end();
}

std::set<std::string> Ontology::languages() const {
  std::set<std::string> out;
  for (const auto& [lang, _] : phrase_index_) out.insert(lang);
  return out;
}

std::size_t Ontology::phrase_count() const {
  std::size_t n = 0;
  for (const auto& [_, index] : phrase_index_) n += index.size();
  return n;
}

std::string Ontology::serialize() const {
  std::string out = "# report-kg ontology\n";
  for (const auto& [id, c] : concepts_) {
    out += "C\t" + id.str() + '\t' + c.snomed_id;
    for (const auto& [lang, phrases] : c.terms) {
      if (phrases.empty()) continue;
      out += '\t' + lang + ':';
      for (std::size_t i = 0; i < phrases.size(); ++i) out += (i ? "|" : "") + phrases[i];
    }
    out += '\n';
  }
  for (const auto& r : relations_) out += "R\t" + r.a.str() + '\t' + r.b.str() + '\t' + r.label + '\n';
  return out;
}

bool Ontology::operator==(const Ontology& other) const {
  if (concepts_ != other.concepts_) return false;
  auto canonical = [](const std::vector<Relation>& rels) {
    std::set<std::tuple<ConceptId, ConceptId, std::string>> s;
    for (const auto& r : rels) s.emplace(std::min(r.a, r.b), std::max(r.a, r.b), r.label);
    return s;
  };
  return canonical(relations_) == canonical(other.relations_);
}

}  // namespace rkg
