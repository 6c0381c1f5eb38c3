#include "report_kg/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "report_kg/errors.hpp"
#include "report_kg/rng.hpp"

namespace rkg {

namespace {

constexpr int kMaxRenderAttempts = 16;

struct Phrasing {
  std::vector<std::pair<std::string_view, std::string_view>> frames;  // prefix, suffix
  std::vector<std::string_view> joiners;                               // between the last two
  std::vector<std::string_view> fillers;
};

const Phrasing& phrasing_for(std::string_view language) {
  static const Phrasing en{
      {{"there is ", ""},
       {"", " is seen"},
       {"", " is noted"},
       {"findings consistent with ", ""},
       {"evidence of ", ""},
       {"", " is present"},
       {"stable ", ""}},
      {" and ", " with "},
      {"comparison is made to the prior study", "the patient is rotated",
       "clinical correlation is recommended", "portable upright view was obtained",
       "study limited by patient positioning"}};
  static const Phrasing es{
      {{"se observa ", ""},
       {"hay ", ""},
       {"", " presente"},
       {"hallazgos compatibles con ", ""},
       {"signos de ", ""},
       {"se aprecia ", ""}},
      {" y ", " con "},
      {"se compara con el estudio previo", "paciente rotado", "se recomienda correlación clínica",
       "proyección portátil en bipedestación", "estudio limitado por la posición del paciente"}};
  static const Phrasing generic{{{"", ""}}, {" ; "}, {"see note"}};
  if (language == "en") return en;
  if (language == "es") return es;
  return generic;
}

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& items) {
  return items[rng.below(items.size())];
}

std::string capitalize(std::string s) {
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

struct PlannedSentence {
  std::vector<ConceptId> concepts;
  bool filler = false;
};

using MentionKey = std::vector<std::pair<ConceptId, std::size_t>>;

MentionKey mention_key(std::span<const Mention> mentions) {
  MentionKey key;
  for (const auto& m : mentions) key.emplace_back(m.concept_id, m.sentence_index);
  std::sort(key.begin(), key.end());
  return key;
}

MentionKey plan_key(const std::vector<PlannedSentence>& plan) {
  MentionKey key;
  for (std::size_t s = 0; s < plan.size(); ++s)
    for (const auto& c : plan[s].concepts) key.emplace_back(c, s);
  std::sort(key.begin(), key.end());
  return key;
}

std::string render(const Ontology& o, const std::vector<PlannedSentence>& plan,
                   std::string_view language, Rng& rng) {
  const Phrasing& ph = phrasing_for(language);
  std::string text;
  for (const auto& sentence : plan) {
    std::string body;
    if (sentence.filler || sentence.concepts.empty()) {
      body = std::string(pick(rng, ph.fillers));
    } else {
      std::vector<std::string> phrases;
      for (const auto& id : sentence.concepts) {
        const auto& terms = o.concept_record(id).terms.at(std::string(language));
        phrases.push_back(pick(rng, terms));
      }
      std::string joined = phrases[0];
      for (std::size_t k = 1; k < phrases.size(); ++k) {
        joined += (k + 1 == phrases.size()) ? std::string(pick(rng, ph.joiners)) : std::string(", ");
        joined += phrases[k];
      }
      const auto& [prefix, suffix] = pick(rng, ph.frames);
      body = std::string(prefix) + joined + std::string(suffix);
    }
    if (!text.empty()) text.push_back(' ');
    text += capitalize(body) + ".";
  }
  return text;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split_list(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t p = s.find(sep, start);
    if (p == std::string_view::npos) p = s.size();
    auto item = trim(s.substr(start, p - start));
    if (!item.empty()) out.emplace_back(item);
    start = p + 1;
  }
  return out;
}

template <typename T>
T parse_value(std::string_view key, std::string_view v) {
  T out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw DataError("bad value for " + std::string(key) + ": '" + std::string(v) + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw DataError("bad boolean for " + std::string(key) + ": '" + std::string(v) + "'");
}

LabelRule parse_rule(std::string_view v) {
  LabelRule rule;
  const auto colon = v.find(':');
  if (colon == std::string_view::npos) throw DataError("rule needs '<label>:<cui>+...'");
  rule.label = parse_value<std::size_t>("rule", trim(v.substr(0, colon)));
  auto rest = v.substr(colon + 1);
  if (const auto at = rest.find('@'); at != std::string_view::npos) {
    if (trim(rest.substr(at + 1)) != "sentence") throw DataError("rule scope must be '@sentence'");
    rule.same_sentence = true;
    rest = rest.substr(0, at);
  }
  for (auto& cui : split_list(rest, '+')) rule.all_of.emplace_back(cui);
  if (rule.all_of.empty()) throw DataError("rule without concepts");
  return rule;
}

}  // namespace

// ---- generator spec ---------------------------------------------------

GeneratorSpec parse_generator_spec(std::string_view text) {
  GeneratorSpec spec;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = trim(text.substr(start, nl - start));
    start = nl + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    try {
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) throw DataError("expected key=value");
      const auto key = trim(line.substr(0, eq));
      const auto value = trim(line.substr(eq + 1));
      if (key == "n_reports") spec.n_reports = parse_value<std::size_t>(key, value);
      else if (key == "languages") spec.languages = split_list(value, ',');
      else if (key == "parallel") spec.parallel = parse_bool(key, value);
      else if (key == "rule") spec.rules.push_back(parse_rule(value));
      else if (key == "no_finding") {
        if (value == "none") spec.no_finding_label.reset();
        else spec.no_finding_label = parse_value<std::size_t>(key, value);
      } else if (key == "sentences") {
        const auto dash = value.find('-');
        if (dash == std::string_view::npos) {
          spec.min_sentences = spec.max_sentences = parse_value<std::size_t>(key, value);
        } else {
          spec.min_sentences = parse_value<std::size_t>(key, trim(value.substr(0, dash)));
          spec.max_sentences = parse_value<std::size_t>(key, trim(value.substr(dash + 1)));
        }
      } else if (key == "max_positive_labels") spec.max_positive_labels = parse_value<std::size_t>(key, value);
      else if (key == "filler_prob") spec.filler_prob = parse_value<double>(key, value);
      else if (key == "near_miss_prob") spec.near_miss_prob = parse_value<double>(key, value);
      else if (key == "max_distractors") spec.max_distractors = parse_value<std::size_t>(key, value);
      else if (key == "label_noise") spec.label_noise = parse_value<double>(key, value);
      else if (key == "distractors") {
        spec.distractors.clear();
        for (auto& cui : split_list(value, ',')) spec.distractors.emplace_back(cui);
      } else if (key == "seed") spec.seed = parse_value<std::uint64_t>(key, value);
      else throw DataError("unknown key '" + std::string(key) + "'");
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return spec;
}

GeneratorSpec load_generator_spec(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open generator spec: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_generator_spec(ss.str());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string serialize_generator_spec(const GeneratorSpec& spec) {
  std::ostringstream os;
  os.precision(17);
  os << "n_reports=" << spec.n_reports << "\nlanguages=";
  for (std::size_t i = 0; i < spec.languages.size(); ++i) os << (i ? "," : "") << spec.languages[i];
  os << "\nparallel=" << (spec.parallel ? "true" : "false") << "\n";
  os << "no_finding=" << (spec.no_finding_label ? std::to_string(*spec.no_finding_label) : "none") << "\n";
  os << "sentences=" << spec.min_sentences << "-" << spec.max_sentences << "\n";
  os << "max_positive_labels=" << spec.max_positive_labels << "\n";
  os << "filler_prob=" << spec.filler_prob << "\nnear_miss_prob=" << spec.near_miss_prob << "\n";
  os << "max_distractors=" << spec.max_distractors << "\nlabel_noise=" << spec.label_noise << "\n";
  if (!spec.distractors.empty()) {
    os << "distractors=";
    for (std::size_t i = 0; i < spec.distractors.size(); ++i) os << (i ? "," : "") << spec.distractors[i].str();
    os << "\n";
  }
  os << "seed=" << spec.seed << "\n";
  for (const auto& r : spec.rules) {
    os << "rule=" << r.label << ":";
    for (std::size_t i = 0; i < r.all_of.size(); ++i) os << (i ? "+" : "") << r.all_of[i].str();
    if (r.same_sentence) os << "@sentence";
    os << "\n";
  }
  return os.str();
}

void validate_generator_spec(const GeneratorSpec& spec, const Ontology& o) {
  if (spec.languages.empty()) throw DataError("generator spec lists no languages");
  if (spec.min_sentences == 0 || spec.min_sentences > spec.max_sentences) {
    throw DataError("generator spec: invalid sentence range");
  }
  for (double p : {spec.filler_prob, spec.near_miss_prob, spec.label_noise}) {
    if (!(p >= 0.0 && p <= 1.0)) throw DataError("generator spec: probabilities must lie in [0, 1]");
  }
  for (const auto& lang : spec.languages)
    if (!o.has_language(lang)) throw DataError("generator spec: unknown language '" + lang + "'");
  auto check_concept = [&](const ConceptId& id) {
    if (!o.contains(id)) throw DataError("generator spec references unknown concept " + id.str());
    const auto& terms = o.concept_record(id).terms;
    for (const auto& lang : spec.languages) {
      auto it = terms.find(lang);
      if (it == terms.end() || it->second.empty()) {
        throw DataError("concept " + id.str() + " has no '" + lang + "' surface form");
      }
    }
  };
  std::set<std::size_t> reachable;
  for (const auto& r : spec.rules) {
    if (r.label >= kNumLabels) throw DataError("rule label index " + std::to_string(r.label) + " out of range");
    if (spec.no_finding_label && r.label == *spec.no_finding_label) {
      throw DataError("rule targets the no-finding label " + std::to_string(r.label));
    }
    for (const auto& id : r.all_of) check_concept(id);
    reachable.insert(r.label);
  }
  for (const auto& id : spec.distractors) check_concept(id);
  if (spec.no_finding_label) {
    if (*spec.no_finding_label >= kNumLabels) throw DataError("no_finding label out of range");
    reachable.insert(*spec.no_finding_label);
  }
  for (std::size_t k = 0; k < kNumLabels; ++k) {
    if (!reachable.count(k)) {
      throw DataError("label index " + std::to_string(k) + " (" + std::string(kLabelNames[k]) +
                      ") is not reachable by any rule");
    }
  }
}

Labels apply_label_rules(const GeneratorSpec& spec, std::span<const Mention> mentions) {
  Labels labels{};
  std::map<std::size_t, std::set<ConceptId>> by_sentence;
  std::set<ConceptId> all;
  for (const auto& m : mentions) {
    by_sentence[m.sentence_index].insert(m.concept_id);
    all.insert(m.concept_id);
  }
  auto covers = [](const std::set<ConceptId>& have, const std::vector<ConceptId>& need) {
    return std::all_of(need.begin(), need.end(), [&](const ConceptId& c) { return have.count(c) > 0; });
  };
  bool any = false;
  for (const auto& rule : spec.rules) {
    bool fires = false;
    if (rule.same_sentence) {
      for (const auto& [_, have] : by_sentence) fires = fires || covers(have, rule.all_of);
    } else {
      fires = covers(all, rule.all_of);
    }
    if (fires) {
      labels[rule.label] = 1;
      any = true;
    }
  }
  if (spec.no_finding_label && !any) labels[*spec.no_finding_label] = 1;
  return labels;
}

// ---- generation --------------------------------------------------------

Corpus generate_corpus(const Ontology& o, const GeneratorSpec& spec) {
  validate_generator_spec(spec, o);
  std::vector<ConceptId> distractors = spec.distractors;
  if (distractors.empty()) {
    std::set<ConceptId> used;
    for (const auto& r : spec.rules) used.insert(r.all_of.begin(), r.all_of.end());
    for (const auto& [id, c] : o.concepts()) {
      if (used.count(id)) continue;
      bool all_langs = std::all_of(spec.languages.begin(), spec.languages.end(),
                                   [&](const std::string& l) { return c.terms.count(l) > 0; });
      if (all_langs) distractors.push_back(id);
    }
  }
  std::vector<std::size_t> rule_labels;
  for (const auto& r : spec.rules)
    if (std::find(rule_labels.begin(), rule_labels.end(), r.label) == rule_labels.end())
      rule_labels.push_back(r.label);

  const DictionaryExtractor extractor(o);
  const Rng root(spec.seed);
  Corpus corpus;
  const int width = std::max<int>(5, static_cast<int>(std::to_string(spec.n_reports).size()));

  for (std::size_t i = 0; i < spec.n_reports; ++i) {
    Rng rng = root.split(i);
    const std::size_t n_content =
        spec.min_sentences + rng.below(spec.max_sentences - spec.min_sentences + 1);
    std::vector<PlannedSentence> plan(n_content);
    auto place = [&](const ConceptId& id, std::size_t s) {
      auto& cs = plan[s].concepts;
      if (std::find(cs.begin(), cs.end(), id) == cs.end()) cs.push_back(id);
    };

    // Positive findings.
    std::vector<std::size_t> labels = rule_labels;
    for (std::size_t k = labels.size(); k > 1; --k) std::swap(labels[k - 1], labels[rng.below(k)]);
    const std::size_t n_pos = std::min(labels.size(), rng.below(spec.max_positive_labels + 1));
    std::set<std::size_t> positive(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n_pos));
    for (std::size_t k = 0; k < n_pos; ++k) {
      std::vector<const LabelRule*> options;
      for (const auto& r : spec.rules)
        if (r.label == labels[k]) options.push_back(&r);
      const LabelRule& rule = *pick(rng, options);
      const std::size_t s0 = rng.below(n_content);
      for (const auto& id : rule.all_of) place(id, rule.same_sentence ? s0 : rng.below(n_content));
    }

    // Near miss: a multi-concept rule that must not fire.
    if (rng.bernoulli(spec.near_miss_prob)) {
      std::vector<const LabelRule*> options;
      for (const auto& r : spec.rules)
        if (r.all_of.size() >= 2 && !positive.count(r.label)) options.push_back(&r);
      if (!options.empty()) {
        const LabelRule& rule = *pick(rng, options);
        if (rule.same_sentence && n_content >= 2 && rng.bernoulli(0.5)) {
          const std::size_t s0 = rng.below(n_content);
          for (std::size_t j = 0; j < rule.all_of.size(); ++j) place(rule.all_of[j], (s0 + j) % n_content);
        } else {
          const std::size_t skip = rng.below(rule.all_of.size());
          for (std::size_t j = 0; j < rule.all_of.size(); ++j)
            if (j != skip) place(rule.all_of[j], rng.below(n_content));
        }
      }
    }

    if (!distractors.empty()) {
      const std::size_t n_dis = rng.below(spec.max_distractors + 1);
      for (std::size_t k = 0; k < n_dis; ++k) place(pick(rng, distractors), rng.below(n_content));
    }

    // Filler sentences at random positions.
    if (rng.bernoulli(spec.filler_prob)) {
      const std::size_t n_fill = 1 + rng.below(2);
      for (std::size_t k = 0; k < n_fill; ++k) {
        const std::size_t at = rng.below(plan.size() + 1);
        plan.insert(plan.begin() + static_cast<std::ptrdiff_t>(at), PlannedSentence{{}, true});
      }
    }
    for (auto& s : plan)
      for (std::size_t k = s.concepts.size(); k > 1; --k) std::swap(s.concepts[k - 1], s.concepts[rng.below(k)]);

    const MentionKey expected = plan_key(plan);
    char base[32];
    std::snprintf(base, sizeof(base), "r%0*zu", width, i);

    std::vector<std::string> langs;
    if (spec.parallel) langs = spec.languages;
    else langs.push_back(pick(rng, spec.languages));

    std::optional<Labels> report_labels;
    for (const auto& lang : langs) {
      Rng lang_rng = rng.split(lang);
      Report report;
      report.id = spec.parallel ? std::string(base) + "@" + lang : std::string(base);
      report.language = lang;
      bool ok = false;
      for (int attempt = 0; attempt < kMaxRenderAttempts && !ok; ++attempt) {
        report.text = render(o, plan, lang, lang_rng);
        const Extraction ex = extractor.extract(report);
        if (mention_key(ex.mentions) == expected && ex.n_sentences == plan.size()) {
          ok = true;
          if (!report_labels) {
            report_labels = apply_label_rules(spec, ex.mentions);
            if (spec.label_noise > 0.0) {
              Rng noise = rng.split("label-noise");
              for (auto& v : *report_labels)
                if (noise.bernoulli(spec.label_noise)) v = static_cast<std::uint8_t>(1 - v);
            }
          }
        }
      }
      if (!ok) {
        throw DataError("report " + report.id + ": rendered text does not extract to the planned concepts; "
                        "ontology phrases collide with the sentence templates");
      }
      report.labels = report_labels;
      corpus.push_back(std::move(report));
    }
  }
  return corpus;
}

// ---- splits ------------------------------------------------------------

std::string_view split_key(std::string_view report_id) {
  return report_id.substr(0, report_id.find('@'));
}

CorpusSplits split_corpus(const Corpus& corpus, const SplitRatios& ratios, std::uint64_t seed) {
  for (double r : {ratios.train, ratios.val, ratios.test})
    if (r < 0.0) throw DataError("split ratios must be non-negative");
  if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
    throw DataError("split ratios must sum to 1");
  }
  std::vector<std::string> keys;
  std::set<std::string, std::less<>> seen;
  for (const auto& r : corpus) {
    auto k = split_key(r.id);
    if (seen.insert(std::string(k)).second) keys.emplace_back(k);
  }
  std::vector<std::pair<std::uint64_t, std::string>> order;
  for (auto& k : keys) order.emplace_back(hash_string(k, seed), k);
  std::sort(order.begin(), order.end());
  const std::size_t n = order.size();
  const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios.val + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios.test + 1e-9));
  std::map<std::string, int, std::less<>> assignment;  // 0 train, 1 val, 2 test
  for (std::size_t i = 0; i < n; ++i)
    assignment[order[i].second] = i < n_val ? 1 : (i < n_val + n_test ? 2 : 0);

  CorpusSplits out;
  for (const auto& r : corpus) {
    switch (assignment.find(split_key(r.id))->second) {
      case 0: out.train.push_back(r); break;
      case 1: out.val.push_back(r); break;
      default: out.test.push_back(r); break;
    }
  }
  if (out.train.empty()) throw DataError("empty train split: corpus too small");
  if (ratios.val > 0.0 && out.val.empty()) throw DataError("empty validation split: corpus too small");
  if (ratios.test > 0.0 && out.test.empty()) throw DataError("empty test split: corpus too small");
  return out;
}

}  // namespace rkg
