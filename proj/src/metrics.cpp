#include "report_kg/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace rkg {

namespace {

std::string fmt(double v, const char* spec = "%.4f") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

}  // namespace

std::optional<double> roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("roc_auc: length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of midranks of the positives.
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) {
        rank_sum += midrank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  const double np = static_cast<double>(n_pos);
  const double nn = static_cast<double>(n_neg);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

PrecisionRecall prf1_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  PrecisionRecall out;
  out.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  out.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  out.f1 = out.precision + out.recall > 0.0
               ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
               : 0.0;
  return out;
}

PrecisionRecall prf1(std::span<const double> scores, std::span<const std::uint8_t> labels,
                     double threshold) {
  if (scores.size() != labels.size()) throw std::invalid_argument("prf1: length mismatch");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (predicted && labels[i]) ++tp;
    else if (predicted) ++fp;
    else if (labels[i]) ++fn;
  }
  return prf1_from_counts(tp, fp, fn);
}

EvalReport evaluate_predictions(std::span<const std::array<double, kNumLabels>> probabilities,
                                std::span<const Labels> labels, double threshold) {
  if (probabilities.size() != labels.size()) {
    throw std::invalid_argument("evaluate_predictions: length mismatch");
  }
  EvalReport report;
  report.threshold = threshold;
  report.n_reports = labels.size();
  std::vector<double> scores(labels.size());
  std::vector<std::uint8_t> truth(labels.size());
  double auc_sum = 0.0;
  for (std::size_t k = 0; k < kNumLabels; ++k) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      scores[i] = probabilities[i][k];
      truth[i] = labels[i][k];
    }
    report.per_label_auc[k] = roc_auc(scores, truth);
    if (report.per_label_auc[k]) {
      auc_sum += *report.per_label_auc[k];
      ++report.defined_labels;
    }
  }
  report.macro_auc = report.defined_labels ? auc_sum / static_cast<double>(report.defined_labels) : 0.0;

  std::vector<double> flat_scores;
  std::vector<std::uint8_t> flat_labels;
  flat_scores.reserve(labels.size() * kNumLabels);
  flat_labels.reserve(labels.size() * kNumLabels);
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (std::size_t k = 0; k < kNumLabels; ++k) {
      flat_scores.push_back(probabilities[i][k]);
      flat_labels.push_back(labels[i][k]);
    }
  const auto pr = prf1(flat_scores, flat_labels, threshold);
  report.precision = pr.precision;
  report.recall = pr.recall;
  report.f1 = pr.f1;
  return report;
}

std::string format_eval_table(const EvalReport& r) {
  std::string out;
  char line[128];
  std::snprintf(line, sizeof(line), "%-28s %8s\n", "label", "AUC");
  out += line;
  for (std::size_t k = 0; k < kNumLabels; ++k) {
    const std::string auc = r.per_label_auc[k] ? fmt(*r.per_label_auc[k], "%.3f") : "-";
    std::snprintf(line, sizeof(line), "%-28s %8s\n", std::string(kLabelNames[k]).c_str(), auc.c_str());
    out += line;
  }
  std::snprintf(line, sizeof(line), "%-28s %8.3f\n", "Average AUC", r.macro_auc);
  out += line;
  std::snprintf(line, sizeof(line), "%-28s %8.3f\n", "Recall", r.recall);
  out += line;
  std::snprintf(line, sizeof(line), "%-28s %8.3f\n", "Precision", r.precision);
  out += line;
  std::snprintf(line, sizeof(line), "%-28s %8.3f\n", "F1", r.f1);
  out += line;
  return out;
}

std::string format_eval_records(const EvalReport& r) {
  std::string out;
  out += "n_reports\t" + std::to_string(r.n_reports) + "\n";
  out += "threshold\t" + fmt(r.threshold, "%.6g") + "\n";
  for (std::size_t k = 0; k < kNumLabels; ++k) {
    out += "auc." + std::to_string(k) + "\t" +
           (r.per_label_auc[k] ? fmt(*r.per_label_auc[k], "%.17g") : std::string("nan")) + "\n";
  }
  out += "macro_auc\t" + fmt(r.macro_auc, "%.17g") + "\n";
  out += "precision\t" + fmt(r.precision, "%.17g") + "\n";
  out += "recall\t" + fmt(r.recall, "%.17g") + "\n";
  out += "f1\t" + fmt(r.f1, "%.17g") + "\n";
  return out;
}

}  // namespace rkg
