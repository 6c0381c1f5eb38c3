#include "report_kg/report.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "report_kg/errors.hpp"

namespace rkg {

namespace {

std::string escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string unescape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\' || i + 1 == s.size()) {
      out.push_back(s[i]);
      continue;
    }
    const char n = s[++i];
    if (n == 'n') out.push_back('\n');
    else if (n == 't') out.push_back('\t');
    else if (n == '\\') out.push_back('\\');
    else throw DataError(std::string("unknown escape \\") + n);
  }
  return out;
}

}  // namespace

Labels parse_labels(std::string_view csv) {
  Labels labels{};
  std::size_t k = 0;
  std::size_t start = 0;
  while (start <= csv.size()) {
    std::size_t comma = csv.find(',', start);
    if (comma == std::string_view::npos) comma = csv.size();
    auto field = csv.substr(start, comma - start);
    if (k >= kNumLabels) throw DataError("more than 14 labels");
    if (field == "0") labels[k] = 0;
    else if (field == "1") labels[k] = 1;
    else throw DataError("label values must be 0 or 1, got '" + std::string(field) + "'");
    ++k;
    start = comma + 1;
    if (comma == csv.size()) break;
  }
  if (k != kNumLabels) throw DataError("expected 14 labels, got " + std::to_string(k));
  return labels;
}

std::string format_labels(const Labels& labels) {
  std::string out;
  for (std::size_t i = 0; i < kNumLabels; ++i) {
    if (i) out.push_back(',');
    out.push_back(labels[i] ? '1' : '0');
  }
  return out;
}

std::string format_report_line(const Report& r) {
  if (r.id.find_first_of("\t\n") != std::string::npos) throw DataError("report id contains tab/newline");
  std::string line = "id=" + r.id + "\tlang=" + r.language + "\ttext=" + escape(r.text);
  if (r.labels) line += "\tlabels=" + format_labels(*r.labels);
  return line;
}

Report parse_report_line(std::string_view line) {
  Report r;
  std::set<std::string> seen;
  std::size_t start = 0;
  while (start <= line.size()) {
    std::size_t tab = line.find('\t', start);
    if (tab == std::string_view::npos) tab = line.size();
    auto field = line.substr(start, tab - start);
    const auto eq = field.find('=');
    if (eq == std::string_view::npos) throw DataError("field without '=': '" + std::string(field) + "'");
    const std::string key(field.substr(0, eq));
    const auto value = field.substr(eq + 1);
    if (!seen.insert(key).second) throw DataError("field '" + key + "' repeated");
    if (key == "id") r.id = std::string(value);
    else if (key == "lang") r.language = std::string(value);
    else if (key == "text") r.text = unescape(value);
    else if (key == "labels") r.labels = parse_labels(value);
    else throw DataError("unknown field '" + key + "'");
    start = tab + 1;
    if (tab == line.size()) break;
  }
  if (r.id.empty()) throw DataError("report without id");
  if (r.language.empty()) throw DataError("report " + r.id + " without lang");
  if (!seen.count("text")) throw DataError("report " + r.id + " without text");
  return r;
}

Corpus parse_corpus(std::string_view text) {
  Corpus corpus;
  std::set<std::string> ids;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = text.substr(start, nl - start);
    start = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    try {
      Report r = parse_report_line(line);
      if (!ids.insert(r.id).second) throw DataError("duplicate report id " + r.id);
      corpus.push_back(std::move(r));
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return corpus;
}

std::string serialize_corpus(const Corpus& corpus) {
  std::string out;
  for (const auto& r : corpus) out += format_report_line(r) + '\n';
  return out;
}

Corpus read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_corpus(ss.str());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write corpus file: " + path.string());
  out << serialize_corpus(corpus);
}

}  // namespace rkg
