#include "report_kg/concept_extractor.hpp"

#include <algorithm>

#include "report_kg/errors.hpp"
#include "report_kg/text.hpp"

namespace rkg {

std::vector<std::vector<std::string>> split_sentences(std::string_view text) {
  std::vector<std::vector<std::string>> sentences;
  auto emit = [&](std::string_view chunk) {
    auto tokens = tokenize(chunk);
    if (!tokens.empty()) sentences.push_back(std::move(tokens));
  };
  std::size_t begin = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '.' || c == '!' || c == '?') {
      emit(text.substr(begin, i - begin));
      begin = i + 1;
      continue;
    }
    if (c == '\n') {
      // A blank line (only whitespace between two newlines) ends a sentence.
      std::size_t j = i + 1;
      while (j < text.size() && (text[j] == ' ' || text[j] == '\t' || text[j] == '\r')) ++j;
      if (j < text.size() && text[j] == '\n') {
        emit(text.substr(begin, i - begin));
        begin = j + 1;
        i = j;
      }
    }
  }
  if (begin < text.size()) emit(text.substr(begin));
  return sentences;
}

std::vector<Mention> DictionaryExtractor::match_sentence(std::string_view language,
                                                         const std::vector<std::string>& tokens,
                                                         std::size_t sentence_index) const {
  std::vector<Mention> mentions;
  std::size_t pos = 0;
  std::string phrase;
  while (pos < tokens.size()) {
    const std::size_t max_len = std::min(kMaxPhraseTokens, tokens.size() - pos);
    bool matched = false;
    for (std::size_t len = max_len; len >= 1; --len) {
      phrase.clear();
      for (std::size_t k = 0; k < len; ++k) {
        if (k) phrase.push_back(' ');
        phrase += tokens[pos + k];
      }
      if (auto id = ontology_.lookup(language, phrase)) {
        mentions.push_back({*id, sentence_index, pos, pos + len});
        pos += len;
        matched = true;
        break;
      }
    }
    if (!matched) ++pos;
  }
  return mentions;
}

Extraction DictionaryExtractor::extract(const Report& report) const {
  if (!ontology_.has_language(report.language)) {
    throw DataError("report " + report.id + ": unknown language '" + report.language + "'");
  }
  Extraction out;
  const auto sentences = split_sentences(report.text);
  out.n_sentences = sentences.size();
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    auto found = match_sentence(report.language, sentences[s], s);
    out.mentions.insert(out.mentions.end(), found.begin(), found.end());
  }
  return out;
}

std::vector<Mention> extract_concepts(const Ontology& ontology, const Report& report) {
  return DictionaryExtractor(ontology).extract(report).mentions;
}

}  // namespace rkg
