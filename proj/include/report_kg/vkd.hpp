#pragma once

// Variational knowledge distillation from report graphs into an image branch.
//
// Training maximizes  E_q[log p(y | I, z)] - beta * KL(q(z | R) || p(z | I)):
// the posterior q reads the report graph, the prior p reads image features,
// and the decoder sees the image concatenated with z. At test time z comes
// from the prior, so only the image is needed.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "report_kg/classifier.hpp"
#include "report_kg/corpus.hpp"
#include "report_kg/gat_encoder.hpp"
#include "report_kg/params.hpp"
#include "report_kg/trainer.hpp"

namespace rkg {

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;

// Diagonal Gaussian, both 1 x D.
struct GaussianParams {
  Tensor mu;
  Tensor log_var;

  std::size_t dim() const { return mu.cols(); }
};

// Sum over dims of KL(N(mu_q, e^lv_q) || N(mu_p, e^lv_p)); scalar tensor.
Tensor kl_gaussians(const GaussianParams& q, const GaussianParams& p);
double kl_gaussians(std::span<const double> mu_q, std::span<const double> log_var_q,
                    std::span<const double> mu_p, std::span<const double> log_var_p);

// z = mu + exp(log_var / 2) * eps with eps ~ N(0, I) drawn from seed.
Tensor reparameterize(const GaussianParams& g, std::uint64_t seed);

enum class VkdMode { ImageOnly, Distilled };
std::string_view vkd_mode_name(VkdMode mode);
VkdMode parse_vkd_mode(std::string_view name);

struct VkdConfig {
  std::size_t n_layers = 1;
  std::size_t hidden = 128;        // GAT width
  std::size_t latent = 32;         // D
  std::size_t image_dim = 256;
  std::size_t image_hidden = 128;  // prior encoder width
  std::size_t decoder_hidden = 128;
  double beta = 1.0;
  // Fraction of all optimizer steps over which beta ramps linearly from 0.
  double beta_warmup = 0.1;
  double lr = 1e-3;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 30;
  double early_stop_tolerance = 0.01;
  std::size_t patience = 5;
  double dropout = 0.1;
  // Synthetic image features: signal * (labels . A) + N(0, noise^2).
  double image_signal = 0.25;
  double image_noise = 1.0;
  std::size_t workers = 1;
  std::uint64_t seed = 0;
};

void validate_vkd_config(const VkdConfig& config);

// Toy stand-in for chest X-ray features: a fixed linear map of the labels,
// drawn from map_seed, plus Gaussian noise drawn from noise_seed.
class SyntheticImager {
 public:
  SyntheticImager(std::size_t dim, double signal, double noise, std::uint64_t map_seed);

  std::vector<double> features(const Labels& labels, std::uint64_t noise_seed) const;
  std::size_t dim() const { return dim_; }

 private:
  std::size_t dim_;
  double signal_;
  double noise_;
  std::vector<double> map_;  // kNumLabels x dim
};

struct VkdModel {
  GatStack encoder;
  DenseLayer posterior_mu;
  DenseLayer posterior_log_var;
  DenseLayer prior_hidden;
  DenseLayer prior_mu;
  DenseLayer prior_log_var;
  DenseLayer decoder_hidden;
  DenseLayer decoder_out;

  std::size_t latent() const { return prior_mu.weight.cols(); }
  std::size_t image_dim() const { return prior_hidden.weight.rows(); }
  ParamSet params() const;
  VkdModel clone() const;
};

VkdModel make_vkd_model(const VkdConfig& config, Rng& rng, std::size_t input_dim = kEmbeddingDim);

GaussianParams posterior(const VkdModel& model, const GraphInput& graph, const ForwardOptions& options);
GaussianParams prior(const VkdModel& model, const Tensor& image);
// 1 x 14 logits from the image (1 x image_dim) and a latent sample (1 x D).
Tensor decode(const VkdModel& model, const Tensor& image, const Tensor& z, const ForwardOptions& options);

struct ElboTerms {
  Tensor loss;            // reconstruction + beta * kl
  Tensor reconstruction;  // -log p(labels | image, z): BCE summed over the labels
  Tensor kl;
};

// Distilled objective. z is sampled from the posterior with `seed`.
ElboTerms elbo_loss(const VkdModel& model, const GraphInput& graph, const Tensor& image,
                    const Labels& labels, std::uint64_t seed, bool train, double beta = 1.0,
                    double dropout = 0.0);

// Baseline objective: z sampled from the prior, no report, no KL. Same
// summed BCE as the distilled reconstruction term.
Tensor image_only_loss(const VkdModel& model, const Tensor& image, const Labels& labels,
                       std::uint64_t seed, bool train, double dropout = 0.0);

// Test-time prediction from the image alone. n_samples == 1 decodes the
// prior mean; larger values average decoder probabilities over prior samples.
Prediction infer_image_only(const VkdModel& model, std::span<const double> image, std::uint64_t seed,
                            std::size_t n_samples = 1);

struct VkdExample {
  std::string id;
  GraphInput graph;
  std::vector<double> image;
  Labels labels{};
};

using VkdDataset = std::vector<VkdExample>;

// Graphs from the reports, images from their labels. Reports sharing a split
// key share one image.
VkdDataset prepare_vkd_dataset(const Corpus& corpus, const Ontology& ontology,
                               const EmbeddingTable& embeddings, const SyntheticImager& imager,
                               std::uint64_t image_seed);

struct VkdEpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_kl = 0.0;  // mean KL per example (0 for the baseline)
  double val_macro_auc = 0.0;
  double wall_time = 0.0;
};

struct VkdTrainResult {
  VkdModel model;
  std::vector<VkdEpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_macro_auc = 0.0;
};

using VkdEpochCallback = std::function<void(const VkdEpochRecord&)>;

// Early stopping and model selection use image-only validation AUC.
VkdTrainResult train_vkd(const VkdConfig& config, VkdMode mode, const VkdDataset& train_set,
                         const VkdDataset& val_set, const VkdEpochCallback& on_epoch = {});

std::vector<std::array<double, kNumLabels>> predict_image_only(const VkdModel& model, const VkdDataset& data,
                                                               std::size_t workers = 1);

Checkpoint vkd_checkpoint(const VkdModel& model, VkdMode mode);
VkdModel vkd_from_checkpoint(const Checkpoint& checkpoint);

}  // namespace rkg
