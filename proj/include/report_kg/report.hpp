#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rkg {

inline constexpr std::size_t kNumLabels = 14;

using Labels = std::array<std::uint8_t, kNumLabels>;

// CheXpert-style finding order used for every label vector.
inline constexpr std::array<std::string_view, kNumLabels> kLabelNames = {
    "No Finding",       "Enlarged Cardiomediastinum", "Cardiomegaly", "Lung Opacity",
    "Lung Lesion",      "Edema",                      "Consolidation", "Pneumonia",
    "Atelectasis",      "Pneumothorax",               "Pleural Effusion", "Pleural Other",
    "Fracture",         "Support Devices"};

struct Report {
  std::string id;
  std::string language;
  std::string text;
  std::optional<Labels> labels;

  bool operator==(const Report&) const = default;
};

using Corpus = std::vector<Report>;

// Corpus files hold one report per line as tab-separated key=value fields:
//
//   id=<id>  lang=<code>  text=<escaped text>  [labels=<14 comma-separated 0/1>]
//
// In text, backslash, tab and newline are written as \\, \t and \n. Blank
// lines and lines starting with '#' are ignored.
std::string format_report_line(const Report& report);
Report parse_report_line(std::string_view line);
Corpus parse_corpus(std::string_view text);
std::string serialize_corpus(const Corpus& corpus);
Corpus read_corpus(const std::filesystem::path& path);
void write_corpus(const std::filesystem::path& path, const Corpus& corpus);

Labels parse_labels(std::string_view csv);
std::string format_labels(const Labels& labels);

}  // namespace rkg
