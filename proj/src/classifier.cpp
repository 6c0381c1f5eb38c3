#include "report_kg/classifier.hpp"

#include <cmath>

#include "report_kg/errors.hpp"

namespace rkg {

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

void MlpParams::register_params(ParamSet& params, const std::string& prefix) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    params.add(prefix + "." + std::to_string(i) + ".weight", layers[i].weight);
    params.add(prefix + "." + std::to_string(i) + ".bias", layers[i].bias);
  }
}

MlpParams MlpParams::clone() const {
  MlpParams out;
  for (const auto& l : layers) out.layers.push_back({l.weight.clone(), l.bias.clone()});
  return out;
}

MlpParams make_mlp(std::size_t input_dim, std::span<const std::size_t> dims, Rng& rng) {
  if (dims.empty()) throw std::invalid_argument("MLP needs at least one layer");
  MlpParams mlp;
  std::size_t in = input_dim;
  for (auto out : dims) {
    mlp.layers.push_back({glorot_uniform(in, out, {in, out}, rng), Tensor::zeros({1, out}, true)});
    in = out;
  }
  return mlp;
}

Tensor mlp_forward(const MlpParams& mlp, const Tensor& input, const ForwardOptions& options) {
  Tensor h = input;
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    h = add_bias(matmul(h, mlp.layers[i].weight), mlp.layers[i].bias);
    if (i + 1 < mlp.layers.size()) {
      h = dropout(elu(h), options.dropout, hash_combine(options.seed, 0x6d6c70 + i), options.train);
    }
  }
  return h;
}

ParamSet ReportClassifier::params() const {
  ParamSet p;
  encoder.register_params(p, "gat");
  head.register_params(p, "mlp");
  return p;
}

ReportClassifier ReportClassifier::clone() const { return {encoder.clone(), head.clone()}; }

ReportClassifier make_report_classifier(std::size_t n_layers, std::size_t hidden, Rng& rng,
                                        std::size_t input_dim, double leaky_slope) {
  Rng gat_rng = rng.split("gat");
  Rng mlp_rng = rng.split("mlp");
  ReportClassifier model;
  model.encoder = make_gat_stack(input_dim, hidden, n_layers, gat_rng, leaky_slope);
  model.head = make_mlp(hidden, kMlpDims, mlp_rng);
  return model;
}

Tensor classifier_logits(const GatStack& stack, const MlpParams& mlp, const GraphInput& graph,
                         const ForwardOptions& options) {
  if (graph.n_nodes() == 0) throw DataError("empty graph");
  Tensor encoded = encode_graph(stack, graph, options);
  Tensor pooled = max_pool(encoded, 0);
  return mlp_forward(mlp, pooled, options);
}

Prediction to_prediction(const Tensor& logits) {
  if (logits.size() != kNumLabels) throw ShapeError("expected 14 logits, got " + std::to_string(logits.size()));
  Prediction p;
  for (std::size_t k = 0; k < kNumLabels; ++k) {
    const double x = logits.data()[k];
    p.logits[k] = x;
    p.probabilities[k] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  return p;
}

Prediction classify_report(const GatStack& stack, const MlpParams& mlp, const ReportGraph& graph,
                           const ForwardOptions& options) {
  if (graph.nodes.empty()) throw DataError("empty graph");
  return to_prediction(classifier_logits(stack, mlp, make_graph_input(graph), options));
}

Prediction classify_report(const ReportClassifier& model, const GraphInput& graph,
                           const ForwardOptions& options) {
  return to_prediction(classifier_logits(model.encoder, model.head, graph, options));
}

Tensor bce_loss(const Tensor& logits, const Labels& labels) {
  if (logits.size() != kNumLabels) throw ShapeError("bce_loss: expected 14 logits");
  std::vector<double> y(kNumLabels);
  for (std::size_t k = 0; k < kNumLabels; ++k) y[k] = labels[k];
  Tensor target = Tensor::from_data(logits.shape(), std::move(y));
  return mean(sub(softplus(logits), mul(logits, target)));
}

double bce_loss(const Prediction& prediction, const Labels& labels) {
  double total = 0.0;
  for (std::size_t k = 0; k < kNumLabels; ++k) {
    const double x = prediction.logits[k];
    total += std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))) - x * labels[k];
  }
  return total / static_cast<double>(kNumLabels);
}

std::size_t count_parameters(const GatStack& stack, const MlpParams& mlp) {
  return stack.parameter_count() + mlp.parameter_count();
}

std::size_t count_parameters(std::size_t n_layers, std::size_t hidden, std::size_t input_dim) {
  if (n_layers == 0) return 0;
  std::size_t n = hidden * input_dim + 2 * hidden;
  n += (n_layers - 1) * (hidden * hidden + 2 * hidden);
  std::size_t in = hidden;
  for (auto out : kMlpDims) {
    n += in * out + out;
    in = out;
  }
  return n;
}

}  // namespace rkg
