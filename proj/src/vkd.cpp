#include "report_kg/vkd.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <map>

#include "report_kg/concept_extractor.hpp"
#include "report_kg/errors.hpp"
#include "report_kg/metrics.hpp"
#include "report_kg/rng.hpp"
#include "minibatch.hpp"

namespace rkg {

namespace {

DenseLayer make_dense(std::size_t in, std::size_t out, Rng& rng) {
  return {glorot_uniform(in, out, {in, out}, rng), Tensor::zeros({1, out}, true)};
}

Tensor dense(const DenseLayer& layer, const Tensor& x) {
  return add_bias(matmul(x, layer.weight), layer.bias);
}

DenseLayer clone_dense(const DenseLayer& d) { return {d.weight.clone(), d.bias.clone()}; }

Tensor image_row(std::span<const double> image) {
  return Tensor::from_data({1, image.size()}, std::vector<double>(image.begin(), image.end()));
}

std::uint64_t example_seed(std::uint64_t seed, std::size_t epoch, const std::string& id) {
  return hash_combine(hash_combine(seed, epoch), hash_string(id));
}

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

template <typename T>
T meta_number(const Checkpoint& c, const std::string& key) {
  auto it = c.meta.find(key);
  if (it == c.meta.end()) throw DataError("checkpoint is missing metadata '" + key + "'");
  const std::string& s = it->second;
  T out{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DataError("checkpoint metadata '" + key + "' is not a number: " + s);
  }
  return out;
}

}  // namespace

// ---- Gaussians ---------------------------------------------------------

Tensor kl_gaussians(const GaussianParams& q, const GaussianParams& p) {
  if (q.mu.shape() != p.mu.shape() || q.log_var.shape() != p.log_var.shape() ||
      q.mu.shape() != q.log_var.shape()) {
    throw ShapeError("kl_gaussians: dimension mismatch " + shape_str(q.mu.shape()) + " vs " +
                     shape_str(p.mu.shape()));
  }
  // Per dimension (e^t - 1 - t) + diff^2 e^{-lv_p} with t = lv_q - lv_p. Both
  // parts are non-negative in floating point, so the sum is too.
  const Tensor t = sub(q.log_var, p.log_var);
  const Tensor diff = sub(q.mu, p.mu);
  const Tensor terms = add(sub(expm1(t), t), mul(mul(diff, diff), exp(scale(p.log_var, -1.0))));
  return scale(sum(terms), 0.5);
}

double kl_gaussians(std::span<const double> mu_q, std::span<const double> log_var_q,
                    std::span<const double> mu_p, std::span<const double> log_var_p) {
  const std::size_t d = mu_q.size();
  if (log_var_q.size() != d || mu_p.size() != d || log_var_p.size() != d) {
    throw ShapeError("kl_gaussians: dimension mismatch");
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double t = log_var_q[i] - log_var_p[i];
    const double diff = mu_q[i] - mu_p[i];
    kl += (std::expm1(t) - t) + diff * diff * std::exp(-log_var_p[i]);
  }
  return 0.5 * kl;
}

Tensor reparameterize(const GaussianParams& g, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> eps(g.mu.size());
  for (auto& e : eps) e = rng.normal();
  const Tensor noise = Tensor::from_data(g.mu.shape(), std::move(eps));
  return add(g.mu, mul(exp(scale(g.log_var, 0.5)), noise));
}

std::string_view vkd_mode_name(VkdMode mode) {
  return mode == VkdMode::ImageOnly ? "image_only" : "vkd";
}

VkdMode parse_vkd_mode(std::string_view name) {
  if (name == "image_only") return VkdMode::ImageOnly;
  if (name == "vkd") return VkdMode::Distilled;
  throw DataError("unknown distillation mode '" + std::string(name) + "' (expected image_only or vkd)");
}

void validate_vkd_config(const VkdConfig& c) {
  if (c.n_layers == 0 || c.hidden == 0 || c.latent == 0 || c.image_dim == 0 || c.image_hidden == 0 ||
      c.decoder_hidden == 0) {
    throw DataError("VKD layer sizes must be positive");
  }
  if (!(c.beta >= 0.0)) throw DataError("beta must be non-negative");
  if (!(c.beta_warmup >= 0.0 && c.beta_warmup <= 1.0)) throw DataError("beta_warmup must lie in [0, 1]");
  if (!(c.lr > 0.0)) throw DataError("lr must be positive");
  if (c.batch_size == 0) throw DataError("batch_size must be at least 1");
  if (!(c.early_stop_tolerance > 0.0)) throw DataError("early_stop_tolerance must be positive");
  if (c.patience == 0) throw DataError("patience must be at least 1");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw DataError("dropout must lie in [0, 1)");
  if (!(c.image_noise >= 0.0)) throw DataError("image_noise must be non-negative");
  if (c.workers == 0) throw DataError("workers must be at least 1");
}

// ---- synthetic images --------------------------------------------------

SyntheticImager::SyntheticImager(std::size_t dim, double signal, double noise, std::uint64_t map_seed)
    : dim_(dim), signal_(signal), noise_(noise), map_(kNumLabels * dim) {
  Rng rng = Rng(map_seed).split("image-map");
  for (auto& v : map_) v = rng.normal();
}

std::vector<double> SyntheticImager::features(const Labels& labels, std::uint64_t noise_seed) const {
  std::vector<double> out(dim_, 0.0);
  for (std::size_t k = 0; k < kNumLabels; ++k) {
    if (!labels[k]) continue;
    for (std::size_t j = 0; j < dim_; ++j) out[j] += signal_ * map_[k * dim_ + j];
  }
  Rng rng(noise_seed);
  for (auto& v : out) v += noise_ * rng.normal();
  return out;
}

// ---- model -------------------------------------------------------------

ParamSet VkdModel::params() const {
  ParamSet p;
  encoder.register_params(p, "gat");
  auto reg = [&](const std::string& name, const DenseLayer& d) {
    p.add(name + ".weight", d.weight);
    p.add(name + ".bias", d.bias);
  };
  reg("posterior.mu", posterior_mu);
  reg("posterior.log_var", posterior_log_var);
  reg("prior.hidden", prior_hidden);
  reg("prior.mu", prior_mu);
  reg("prior.log_var", prior_log_var);
  reg("decoder.hidden", decoder_hidden);
  reg("decoder.out", decoder_out);
  return p;
}

VkdModel VkdModel::clone() const {
  return {encoder.clone(),           clone_dense(posterior_mu),   clone_dense(posterior_log_var),
          clone_dense(prior_hidden), clone_dense(prior_mu),       clone_dense(prior_log_var),
          clone_dense(decoder_hidden), clone_dense(decoder_out)};
}

VkdModel make_vkd_model(const VkdConfig& c, Rng& rng, std::size_t input_dim) {
  Rng enc = rng.split("gat");
  Rng heads = rng.split("heads");
  VkdModel m;
  m.encoder = make_gat_stack(input_dim, c.hidden, c.n_layers, enc);
  m.posterior_mu = make_dense(c.hidden, c.latent, heads);
  m.posterior_log_var = make_dense(c.hidden, c.latent, heads);
  m.prior_hidden = make_dense(c.image_dim, c.image_hidden, heads);
  m.prior_mu = make_dense(c.image_hidden, c.latent, heads);
  m.prior_log_var = make_dense(c.image_hidden, c.latent, heads);
  m.decoder_hidden = make_dense(c.image_dim + c.latent, c.decoder_hidden, heads);
  m.decoder_out = make_dense(c.decoder_hidden, kNumLabels, heads);
  return m;
}

GaussianParams posterior(const VkdModel& model, const GraphInput& graph, const ForwardOptions& options) {
  if (graph.n_nodes() == 0) throw DataError("empty graph");
  const Tensor pooled = max_pool(encode_graph(model.encoder, graph, options), 0);
  return {dense(model.posterior_mu, pooled),
          clamp(dense(model.posterior_log_var, pooled), kLogVarMin, kLogVarMax)};
}

GaussianParams prior(const VkdModel& model, const Tensor& image) {
  if (image.cols() != model.image_dim()) {
    throw ShapeError("image has " + std::to_string(image.cols()) + " features, model expects " +
                     std::to_string(model.image_dim()));
  }
  const Tensor h = elu(dense(model.prior_hidden, image));
  return {dense(model.prior_mu, h), clamp(dense(model.prior_log_var, h), kLogVarMin, kLogVarMax)};
}

Tensor decode(const VkdModel& model, const Tensor& image, const Tensor& z, const ForwardOptions& options) {
  Tensor h = elu(dense(model.decoder_hidden, concat({image, z}, 1)));
  h = dropout(h, options.dropout, hash_combine(options.seed, 0x646563), options.train);
  return dense(model.decoder_out, h);
}

namespace {

// Negative log-likelihood of the whole label vector. Summing rather than
// averaging over labels keeps it on the same nat scale as the KL term.
Tensor label_nll(const Tensor& logits, const Labels& labels) {
  return scale(bce_loss(logits, labels), static_cast<double>(kNumLabels));
}

}  // namespace

ElboTerms elbo_loss(const VkdModel& model, const GraphInput& graph, const Tensor& image, const Labels& labels,
                    std::uint64_t seed, bool train, double beta, double dropout_rate) {
  ForwardOptions opts{.train = train, .dropout = dropout_rate, .attn_dropout = false, .seed = seed};
  const GaussianParams q = posterior(model, graph, opts);
  const GaussianParams p = prior(model, image);
  const Tensor z = reparameterize(q, hash_combine(seed, 0x7a));
  ElboTerms out;
  out.reconstruction = label_nll(decode(model, image, z, opts), labels);
  out.kl = kl_gaussians(q, p);
  out.loss = beta == 0.0 ? out.reconstruction : add(out.reconstruction, scale(out.kl, beta));
  return out;
}

Tensor image_only_loss(const VkdModel& model, const Tensor& image, const Labels& labels, std::uint64_t seed,
                       bool train, double dropout_rate) {
  ForwardOptions opts{.train = train, .dropout = dropout_rate, .attn_dropout = false, .seed = seed};
  const Tensor z = reparameterize(prior(model, image), hash_combine(seed, 0x7a));
  return label_nll(decode(model, image, z, opts), labels);
}

Prediction infer_image_only(const VkdModel& model, std::span<const double> image, std::uint64_t seed,
                            std::size_t n_samples) {
  if (n_samples == 0) throw std::invalid_argument("infer_image_only needs at least one sample");
  const Tensor x = image_row(image);
  const GaussianParams p = prior(model, x);
  if (n_samples == 1) return to_prediction(decode(model, x, p.mu, {}));
  Prediction avg;
  for (std::size_t s = 0; s < n_samples; ++s) {
    const Prediction one = to_prediction(decode(model, x, reparameterize(p, hash_combine(seed, s)), {}));
    for (std::size_t k = 0; k < kNumLabels; ++k) avg.probabilities[k] += one.probabilities[k];
  }
  for (std::size_t k = 0; k < kNumLabels; ++k) {
    const double pr = std::clamp(avg.probabilities[k] / static_cast<double>(n_samples), 1e-300, 1.0 - 1e-16);
    avg.probabilities[k] = pr;
    avg.logits[k] = std::log(pr) - std::log1p(-pr);
  }
  return avg;
}

// ---- data --------------------------------------------------------------

VkdDataset prepare_vkd_dataset(const Corpus& corpus, const Ontology& ontology, const EmbeddingTable& embeddings,
                               const SyntheticImager& imager, std::uint64_t image_seed) {
  const DictionaryExtractor extractor(ontology);
  VkdDataset out;
  out.reserve(corpus.size());
  std::map<std::string, std::vector<double>, std::less<>> images;
  for (const auto& report : corpus) {
    if (!report.labels) throw DataError("report " + report.id + " has no labels");
    const Extraction ex = extractor.extract(report);
    const ReportGraph graph = build_graph(ontology, ex.mentions, ex.n_sentences, embeddings, {});
    const auto key = split_key(report.id);
    auto it = images.find(key);
    if (it == images.end()) {
      it = images.emplace(std::string(key), imager.features(*report.labels, hash_string(key, image_seed))).first;
    }
    out.push_back({report.id, make_graph_input(graph), it->second, *report.labels});
  }
  return out;
}

std::vector<std::array<double, kNumLabels>> predict_image_only(const VkdModel& model, const VkdDataset& data,
                                                               std::size_t workers) {
  std::vector<std::array<double, kNumLabels>> out(data.size());
  workers = std::max<std::size_t>(1, std::min(workers, data.size()));
  detail::run_parallel(workers, [&](std::size_t w) {
    for (std::size_t i = w; i < data.size(); i += workers) {
      out[i] = infer_image_only(model, data[i].image, 0, 1).probabilities;
    }
  });
  return out;
}

// ---- training ----------------------------------------------------------

VkdTrainResult train_vkd(const VkdConfig& config, VkdMode mode, const VkdDataset& train_set,
                         const VkdDataset& val_set, const VkdEpochCallback& on_epoch) {
  validate_vkd_config(config);
  if (train_set.empty()) throw DataError("training split is empty");
  for (const auto& ex : train_set) {
    if (ex.image.size() != config.image_dim) {
      throw DataError("report " + ex.id + ": image has " + std::to_string(ex.image.size()) +
                      " features, config expects " + std::to_string(config.image_dim));
    }
  }

  Rng root(config.seed);
  Rng init = root.split("init");
  VkdTrainResult result;
  result.model = make_vkd_model(config, init, train_set.front().graph.features.cols());
  ParamSet params = result.model.params();
  ParamSet best = params.clone();

  std::vector<Tensor> images;
  images.reserve(train_set.size());
  for (const auto& ex : train_set) images.push_back(image_row(ex.image));

  std::vector<std::size_t> by_id(train_set.size());
  for (std::size_t i = 0; i < by_id.size(); ++i) by_id[i] = i;
  std::sort(by_id.begin(), by_id.end(),
            [&](std::size_t a, std::size_t b) { return train_set[a].id < train_set[b].id; });

  auto replicas = detail::make_replicas(result.model, std::min(config.workers, config.batch_size));
  Adam adam(AdamConfig{.lr = config.lr});
  EarlyStopping stopper(config.early_stop_tolerance, config.patience);
  const std::size_t steps_per_epoch = (train_set.size() + config.batch_size - 1) / config.batch_size;
  const double warmup_steps = config.beta_warmup * static_cast<double>(steps_per_epoch * config.max_epochs);
  std::vector<double> kl_of(train_set.size(), 0.0);

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng epoch_rng = root.split("epoch").split(epoch);
    std::vector<std::size_t> order = by_id;
    for (std::size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[epoch_rng.below(k)]);

    const double loss_sum = detail::run_epoch(
        params, adam, replicas, order, config.batch_size, [&](VkdModel& model, std::size_t i) {
          const VkdExample& ex = train_set[i];
          const std::uint64_t seed = example_seed(config.seed, epoch, ex.id);
          if (mode == VkdMode::ImageOnly) {
            return image_only_loss(model, images[i], ex.labels, seed, true, config.dropout);
          }
          const double t = static_cast<double>(adam.steps_taken() + 1);
          const double beta = warmup_steps > 0.0 ? config.beta * std::min(1.0, t / warmup_steps) : config.beta;
          ElboTerms terms = elbo_loss(model, ex.graph, images[i], ex.labels, seed, true, beta, config.dropout);
          kl_of[i] = terms.kl.item();
          return terms.loss;
        });
    if (!std::isfinite(loss_sum)) {
      throw NumericError("non-finite ELBO in epoch " + std::to_string(epoch) + " (lr " + format_double(config.lr) +
                         ")");
    }

    VkdEpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(order.size());
    if (mode == VkdMode::Distilled) {
      double kl = 0.0;
      for (std::size_t i : by_id) kl += kl_of[i];
      record.train_kl = kl / static_cast<double>(order.size());
    }
    bool stop = false;
    if (!val_set.empty()) {
      const auto probs = predict_image_only(result.model, val_set, config.workers);
      std::vector<Labels> labels;
      for (const auto& ex : val_set) labels.push_back(ex.labels);
      record.val_macro_auc = evaluate_predictions(probs, labels).macro_auc;
      stop = stopper.update(record.val_macro_auc);
      if (stopper.best_epoch() == epoch) best.copy_values_from(params);
    } else {
      best.copy_values_from(params);
    }
    record.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(record);
    if (on_epoch) on_epoch(record);
    if (stop) break;
  }

  params.copy_values_from(best);
  result.best_epoch = val_set.empty() ? result.history.size() : stopper.best_epoch();
  result.best_val_macro_auc = val_set.empty() ? 0.0 : stopper.best_value();
  return result;
}

// ---- checkpoints -------------------------------------------------------

Checkpoint vkd_checkpoint(const VkdModel& model, VkdMode mode) {
  Checkpoint c;
  c.meta["model"] = "vkd";
  c.meta["mode"] = std::string(vkd_mode_name(mode));
  c.meta["n_layers"] = std::to_string(model.encoder.n_layers());
  c.meta["hidden"] = std::to_string(model.encoder.hidden);
  c.meta["input_dim"] = std::to_string(model.encoder.input_dim);
  c.meta["latent"] = std::to_string(model.latent());
  c.meta["image_dim"] = std::to_string(model.image_dim());
  c.meta["image_hidden"] = std::to_string(model.prior_hidden.weight.cols());
  c.meta["decoder_hidden"] = std::to_string(model.decoder_hidden.weight.cols());
  c.params = model.params().clone();
  return c;
}

VkdModel vkd_from_checkpoint(const Checkpoint& c) {
  auto it = c.meta.find("model");
  if (it == c.meta.end() || it->second != "vkd") throw DataError("checkpoint does not hold a VKD model");
  VkdConfig cfg;
  cfg.n_layers = meta_number<std::size_t>(c, "n_layers");
  cfg.hidden = meta_number<std::size_t>(c, "hidden");
  cfg.latent = meta_number<std::size_t>(c, "latent");
  cfg.image_dim = meta_number<std::size_t>(c, "image_dim");
  cfg.image_hidden = meta_number<std::size_t>(c, "image_hidden");
  cfg.decoder_hidden = meta_number<std::size_t>(c, "decoder_hidden");
  Rng unused(0);
  VkdModel model = make_vkd_model(cfg, unused, meta_number<std::size_t>(c, "input_dim"));
  ParamSet params = model.params();
  try {
    params.copy_values_from(c.params);
  } catch (const std::exception& e) {
    throw DataError(std::string("checkpoint tensors do not match the architecture: ") + e.what());
  }
  return model;
}

}  // namespace rkg
