#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "report_kg/gat_encoder.hpp"
#include "report_kg/params.hpp"
#include "report_kg/report.hpp"

namespace rkg {

struct DenseLayer {
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out
};

// f_MLP: hidden -> 512 -> 256 -> 14 by default. ELU (and dropout while
// training) between layers, raw logits at the end.
struct MlpParams {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const { return layers.front().weight.rows(); }
  std::size_t output_dim() const { return layers.back().weight.cols(); }
  std::size_t parameter_count() const;
  void register_params(ParamSet& params, const std::string& prefix = "mlp") const;
  MlpParams clone() const;
};

inline constexpr std::array<std::size_t, 3> kMlpDims = {512, 256, kNumLabels};

MlpParams make_mlp(std::size_t input_dim, std::span<const std::size_t> dims, Rng& rng);
Tensor mlp_forward(const MlpParams& mlp, const Tensor& input, const ForwardOptions& options);

struct Prediction {
  std::array<double, kNumLabels> logits{};
  std::array<double, kNumLabels> probabilities{};
};

// Task-1 model: GAT encoder, max-pool readout, MLP head.
struct ReportClassifier {
  GatStack encoder;
  MlpParams head;

  ParamSet params() const;
  ReportClassifier clone() const;
};

ReportClassifier make_report_classifier(std::size_t n_layers, std::size_t hidden, Rng& rng,
                                        std::size_t input_dim = kEmbeddingDim,
                                        double leaky_slope = 0.2);

// 1 x 14 logits. Throws DataError("empty graph") for a graph without nodes.
Tensor classifier_logits(const GatStack& stack, const MlpParams& mlp, const GraphInput& graph,
                         const ForwardOptions& options);

Prediction to_prediction(const Tensor& logits);

Prediction classify_report(const GatStack& stack, const MlpParams& mlp, const ReportGraph& graph,
                           const ForwardOptions& options = {});
Prediction classify_report(const ReportClassifier& model, const GraphInput& graph,
                           const ForwardOptions& options = {});

// Mean over labels of sigmoid cross-entropy, computed from logits as
// softplus(x) - x*y so large |x| never overflows.
Tensor bce_loss(const Tensor& logits, const Labels& labels);
double bce_loss(const Prediction& prediction, const Labels& labels);

// Element count of every tensor in the encoder and the head.
std::size_t count_parameters(const GatStack& stack, const MlpParams& mlp);
// Same count in closed form: encoder layers carry W (F' x F) and a (2F'),
// no bias; MLP layers carry weight and bias.
std::size_t count_parameters(std::size_t n_layers, std::size_t hidden,
                             std::size_t input_dim = kEmbeddingDim);

}  // namespace rkg
