#include "report_kg/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "report_kg/concept_extractor.hpp"
#include "report_kg/errors.hpp"
#include "report_kg/metrics.hpp"
#include "report_kg/rng.hpp"
#include "minibatch.hpp"

namespace rkg {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

const std::string& meta_value(const Checkpoint& c, const std::string& key) {
  auto it = c.meta.find(key);
  if (it == c.meta.end()) throw DataError("checkpoint is missing metadata '" + key + "'");
  return it->second;
}

template <typename T>
T meta_number(const Checkpoint& c, const std::string& key) {
  const std::string& s = meta_value(c, key);
  T out{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DataError("checkpoint metadata '" + key + "' is not a number: " + s);
  }
  return out;
}

bool meta_flag(const Checkpoint& c, const std::string& key, bool fallback) {
  auto it = c.meta.find(key);
  if (it == c.meta.end()) return fallback;
  return it->second == "true";
}

double validation_auc(const ReportClassifier& model, const Dataset& val, std::size_t workers) {
  const auto probs = predict(model, val, workers);
  const auto labels = labels_of(val);
  return evaluate_predictions(probs, labels).macro_auc;
}

}  // namespace

void validate_train_config(const TrainConfig& c) {
  if (c.n_layers == 0) throw DataError("n_layers must be at least 1");
  if (c.hidden == 0) throw DataError("hidden must be positive");
  if (!(c.lr > 0.0) || !std::isfinite(c.lr)) throw DataError("lr must be positive");
  if (c.batch_size == 0) throw DataError("batch_size must be at least 1");
  if (!(c.early_stop_tolerance > 0.0)) throw DataError("early_stop_tolerance must be positive");
  if (c.patience == 0) throw DataError("patience must be at least 1");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw DataError("dropout must lie in [0, 1)");
  if (c.workers == 0) throw DataError("workers must be at least 1");
}

// ---- early stopping ----------------------------------------------------

EarlyStopping::EarlyStopping(double tolerance, std::size_t patience)
    : tolerance_(tolerance), patience_(patience) {
  if (!(tolerance > 0.0)) throw std::invalid_argument("early stopping tolerance must be positive");
  if (patience == 0) throw std::invalid_argument("early stopping patience must be at least 1");
}

bool EarlyStopping::update(double value) {
  ++epochs_;
  if (epochs_ == 1 || value > best_) {
    best_ = value;
    best_epoch_ = epochs_;
  }
  if (epochs_ == 1 || value >= reference_ * (1.0 + tolerance_)) {
    reference_ = value;
    stale_ = 0;
    return false;
  }
  ++stale_;
  return stale_ >= patience_;
}

// ---- data --------------------------------------------------------------

Dataset prepare_dataset(const Corpus& corpus, const Ontology& ontology, const EmbeddingTable& embeddings,
                        const AblationConfig& ablation, bool require_labels) {
  const DictionaryExtractor extractor(ontology);
  Dataset out;
  out.reserve(corpus.size());
  for (const auto& report : corpus) {
    if (require_labels && !report.labels) throw DataError("report " + report.id + " has no labels");
    const Extraction ex = extractor.extract(report);
    const ReportGraph graph = build_graph(ontology, ex.mentions, ex.n_sentences, embeddings, ablation);
    if (graph.nodes.empty()) throw DataError("report " + report.id + ": empty graph");
    out.push_back({report.id, make_graph_input(graph), report.labels.value_or(Labels{})});
  }
  return out;
}

std::vector<Labels> labels_of(const Dataset& data) {
  std::vector<Labels> out;
  out.reserve(data.size());
  for (const auto& e : data) out.push_back(e.labels);
  return out;
}

std::vector<std::array<double, kNumLabels>> predict(const ReportClassifier& model, const Dataset& data,
                                                    std::size_t workers) {
  std::vector<std::array<double, kNumLabels>> out(data.size());
  workers = std::max<std::size_t>(1, std::min(workers, data.size()));
  detail::run_parallel(workers, [&](std::size_t w) {
    for (std::size_t i = w; i < data.size(); i += workers) {
      out[i] = classify_report(model, data[i].graph).probabilities;
    }
  });
  return out;
}

// ---- training ----------------------------------------------------------

TrainResult train(const TrainConfig& config, const Dataset& train_set, const Dataset& val_set,
                  const EpochCallback& on_epoch) {
  validate_train_config(config);
  if (train_set.empty()) throw DataError("training split is empty");

  Rng root(config.seed);
  Rng init = root.split("init");
  const std::size_t input_dim = train_set.front().graph.features.cols();
  TrainResult result;
  result.model = make_report_classifier(config.n_layers, config.hidden, init, input_dim, config.leaky_slope);
  ParamSet params = result.model.params();
  ParamSet best = params.clone();

  // Accumulation order is fixed by report id, independent of input order.
  std::vector<std::size_t> by_id(train_set.size());
  for (std::size_t i = 0; i < by_id.size(); ++i) by_id[i] = i;
  std::sort(by_id.begin(), by_id.end(),
            [&](std::size_t a, std::size_t b) { return train_set[a].id < train_set[b].id; });

  auto replicas = detail::make_replicas(result.model, std::min(config.workers, config.batch_size));
  Adam adam(AdamConfig{.lr = config.lr});
  EarlyStopping stopper(config.early_stop_tolerance, config.patience);

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto t0 = Clock::now();
    Rng epoch_rng = root.split("epoch").split(epoch);
    std::vector<std::size_t> order = by_id;
    for (std::size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[epoch_rng.below(k)]);

    const double loss_sum = detail::run_epoch(
        params, adam, replicas, order, config.batch_size, [&](ReportClassifier& model, std::size_t i) {
          const Example& ex = train_set[i];
          ForwardOptions opts;
          opts.train = true;
          opts.dropout = config.dropout;
          opts.attn_dropout = config.attn_dropout;
          opts.seed = hash_combine(hash_combine(config.seed, epoch), hash_string(ex.id));
          return bce_loss(classifier_logits(model.encoder, model.head, ex.graph, opts), ex.labels);
        });
    if (!std::isfinite(loss_sum)) {
      throw NumericError("non-finite training loss in epoch " + std::to_string(epoch) +
                         " (lr " + format_double(config.lr) + ")");
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(order.size());
    bool stop = false;
    if (!val_set.empty()) {
      record.val_macro_auc = validation_auc(result.model, val_set, config.workers);
      stop = stopper.update(record.val_macro_auc);
      if (stopper.best_epoch() == epoch) best.copy_values_from(params);
    } else {
      best.copy_values_from(params);
    }
    record.wall_time = seconds_since(t0);
    result.history.push_back(record);
    if (on_epoch) on_epoch(record);
    if (stop) {
      result.stopped_early = epoch < config.max_epochs;
      break;
    }
  }

  params.copy_values_from(best);
  result.best_epoch = val_set.empty() ? result.history.size() : stopper.best_epoch();
  result.best_val_macro_auc = val_set.empty() ? 0.0 : stopper.best_value();
  return result;
}

TrainResult train(const TrainConfig& config, const CorpusSplits& splits, const Ontology& ontology,
                  const EmbeddingTable& embeddings, const AblationConfig& ablation,
                  const EpochCallback& on_epoch) {
  const Dataset train_set = prepare_dataset(splits.train, ontology, embeddings, ablation);
  const Dataset val_set = prepare_dataset(splits.val, ontology, embeddings, ablation);
  return train(config, train_set, val_set, on_epoch);
}

// ---- checkpoints -------------------------------------------------------

Checkpoint classifier_checkpoint(const ReportClassifier& model, const AblationConfig& ablation) {
  Checkpoint c;
  c.meta["model"] = "classifier";
  c.meta["n_layers"] = std::to_string(model.encoder.n_layers());
  c.meta["hidden"] = std::to_string(model.encoder.hidden);
  c.meta["input_dim"] = std::to_string(model.encoder.input_dim);
  c.meta["leaky_slope"] = format_double(model.encoder.layers.front().leaky_slope);
  c.meta["use_global"] = ablation.use_global ? "true" : "false";
  c.meta["use_sentence"] = ablation.use_sentence ? "true" : "false";
  c.meta["use_concept_edges"] = ablation.use_concept_edges ? "true" : "false";
  c.meta["concept_edge_hops"] = std::to_string(ablation.concept_edge_hops);
  c.params = model.params().clone();
  return c;
}

ReportClassifier classifier_from_checkpoint(const Checkpoint& c) {
  if (meta_value(c, "model") != "classifier") throw DataError("checkpoint does not hold a classifier");
  Rng unused(0);
  ReportClassifier model = make_report_classifier(
      meta_number<std::size_t>(c, "n_layers"), meta_number<std::size_t>(c, "hidden"), unused,
      meta_number<std::size_t>(c, "input_dim"), meta_number<double>(c, "leaky_slope"));
  ParamSet params = model.params();
  try {
    params.copy_values_from(c.params);
  } catch (const std::exception& e) {
    throw DataError(std::string("checkpoint tensors do not match the architecture: ") + e.what());
  }
  return model;
}

AblationConfig ablation_from_checkpoint(const Checkpoint& c) {
  AblationConfig a;
  a.use_global = meta_flag(c, "use_global", true);
  a.use_sentence = meta_flag(c, "use_sentence", true);
  a.use_concept_edges = meta_flag(c, "use_concept_edges", true);
  if (c.meta.count("concept_edge_hops")) a.concept_edge_hops = meta_number<std::size_t>(c, "concept_edge_hops");
  return a;
}

// ---- benchmark ---------------------------------------------------------

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

BenchmarkResult benchmark_inference(const ReportClassifier& model, const Ontology& ontology,
                                    const EmbeddingTable& embeddings, const AblationConfig& ablation,
                                    const Corpus& corpus, std::size_t repetitions) {
  if (corpus.size() < 10) throw DataError("benchmark needs at least 10 reports");
  if (repetitions == 0) throw DataError("benchmark needs at least one repetition");
  const DictionaryExtractor extractor(ontology);
  BenchmarkResult result;
  result.n_reports = corpus.size();
  double sink = 0.0;
  for (std::size_t r = 0; r < repetitions; ++r) {
    const auto t0 = Clock::now();
    for (const auto& report : corpus) {
      const Extraction ex = extractor.extract(report);
      const ReportGraph graph = build_graph(ontology, ex.mentions, ex.n_sentences, embeddings, ablation);
      sink += classify_report(model, make_graph_input(graph)).probabilities[0];
    }
    const double elapsed = std::max(seconds_since(t0), 1e-9);
    result.rates.push_back(static_cast<double>(corpus.size()) / elapsed);
  }
  if (!std::isfinite(sink)) throw NumericError("benchmark produced non-finite probabilities");
  result.median_rate = median(result.rates);
  return result;
}

}  // namespace rkg
