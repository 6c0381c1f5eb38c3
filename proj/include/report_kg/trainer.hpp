#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "report_kg/classifier.hpp"
#include "report_kg/corpus.hpp"
#include "report_kg/graph_builder.hpp"
#include "report_kg/ontology.hpp"
#include "report_kg/params.hpp"

namespace rkg {

struct TrainConfig {
  std::size_t n_layers = 1;
  std::size_t hidden = 512;
  double lr = 1e-4;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 100;
  // Relative improvement of validation macro-AUC that resets patience.
  double early_stop_tolerance = 0.01;
  std::size_t patience = 5;
  double dropout = 0.5;
  bool attn_dropout = false;
  double leaky_slope = 0.2;
  std::size_t workers = 1;
  std::uint64_t seed = 0;
};

void validate_train_config(const TrainConfig& config);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_macro_auc = 0.0;
  double wall_time = 0.0;  // seconds spent in this epoch
};

// Stop once `patience` consecutive epochs fail to beat the reference value
// by `tolerance` (relative). The reference moves only on such an improvement.
class EarlyStopping {
 public:
  EarlyStopping(double tolerance, std::size_t patience);

  // Feeds one epoch's value; returns true when training should stop.
  bool update(double value);

  std::size_t epochs_seen() const { return epochs_; }
  std::size_t stale_epochs() const { return stale_; }
  // Epoch (1-based) of the first occurrence of the best value so far.
  std::size_t best_epoch() const { return best_epoch_; }
  double best_value() const { return best_; }
  double reference() const { return reference_; }

 private:
  double tolerance_;
  std::size_t patience_;
  std::size_t epochs_ = 0;
  std::size_t stale_ = 0;
  std::size_t best_epoch_ = 0;
  double best_ = 0.0;
  double reference_ = 0.0;
};

// One report turned into model input.
struct Example {
  std::string id;
  GraphInput graph;
  Labels labels{};
};

using Dataset = std::vector<Example>;

// Extract, build and convert every report. Reports without labels are rejected
// unless require_labels is false.
Dataset prepare_dataset(const Corpus& corpus, const Ontology& ontology, const EmbeddingTable& embeddings,
                        const AblationConfig& ablation, bool require_labels = true);

struct TrainResult {
  ReportClassifier model;  // parameters of the best validation epoch
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_macro_auc = 0.0;
  bool stopped_early = false;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Mini-batch Adam on per-graph gradients. Each batch sums per-example gradients
// in a fixed order, so the result does not depend on config.workers. Throws
// NumericError on a non-finite loss. An empty validation set disables early
// stopping and keeps the last epoch.
TrainResult train(const TrainConfig& config, const Dataset& train_set, const Dataset& val_set,
                  const EpochCallback& on_epoch = {});

TrainResult train(const TrainConfig& config, const CorpusSplits& splits, const Ontology& ontology,
                  const EmbeddingTable& embeddings, const AblationConfig& ablation = {},
                  const EpochCallback& on_epoch = {});

// Eval-mode probabilities, one row per example.
std::vector<std::array<double, kNumLabels>> predict(const ReportClassifier& model, const Dataset& data,
                                                    std::size_t workers = 1);

std::vector<Labels> labels_of(const Dataset& data);

// Classifier checkpoint: architecture and graph settings go into the metadata.
Checkpoint classifier_checkpoint(const ReportClassifier& model, const AblationConfig& ablation);
ReportClassifier classifier_from_checkpoint(const Checkpoint& checkpoint);
AblationConfig ablation_from_checkpoint(const Checkpoint& checkpoint);

struct BenchmarkResult {
  std::vector<double> rates;  // reports per second, one per repetition
  double median_rate = 0.0;
  std::size_t n_reports = 0;
};

// Times the whole extract -> build -> encode -> classify pipeline.
BenchmarkResult benchmark_inference(const ReportClassifier& model, const Ontology& ontology,
                                    const EmbeddingTable& embeddings, const AblationConfig& ablation,
                                    const Corpus& corpus, std::size_t repetitions);

double median(std::vector<double> values);

}  // namespace rkg
