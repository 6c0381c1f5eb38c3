#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "report_kg/report.hpp"

namespace rkg {

// Mann-Whitney AUC: P(score_pos > score_neg) + 0.5 P(tie). nullopt when
// either class is absent. Throws std::invalid_argument on length mismatch.
std::optional<double> roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Micro-averaged over every (report, label) cell; a cell is predicted
// positive when score >= threshold. 0/0 resolves to 0.
PrecisionRecall prf1(std::span<const double> scores, std::span<const std::uint8_t> labels,
                     double threshold = 0.5);
PrecisionRecall prf1_from_counts(std::size_t tp, std::size_t fp, std::size_t fn);

struct EvalReport {
  std::array<std::optional<double>, kNumLabels> per_label_auc{};
  double macro_auc = 0.0;   // mean of the defined per-label AUCs
  std::size_t defined_labels = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double threshold = 0.5;
  std::size_t n_reports = 0;
};

// probabilities[i] and labels[i] describe report i.
EvalReport evaluate_predictions(std::span<const std::array<double, kNumLabels>> probabilities,
                                std::span<const Labels> labels, double threshold = 0.5);

// Aligned human-readable table.
std::string format_eval_table(const EvalReport& report);
// One "key<TAB>value" record per line, machine-readable.
std::string format_eval_records(const EvalReport& report);

}  // namespace rkg
