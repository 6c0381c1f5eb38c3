#include "report_kg/gat_encoder.hpp"

#include <cmath>

#include "report_kg/errors.hpp"

namespace rkg {

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Shape shape, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> data(shape_size(shape));
  for (auto& x : data) x = (2.0 * rng.uniform() - 1.0) * limit;
  return Tensor::from_data(std::move(shape), std::move(data), true);
}

std::size_t GatStack::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.attention.size();
  return n;
}

void GatStack::register_params(ParamSet& params, const std::string& prefix) const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    params.add(prefix + "." + std::to_string(i) + ".weight", layers[i].weight);
    params.add(prefix + "." + std::to_string(i) + ".attention", layers[i].attention);
  }
}

GatStack GatStack::clone() const {
  GatStack out{{}, input_dim, hidden};
  for (const auto& l : layers) out.layers.push_back({l.weight.clone(), l.attention.clone(), l.leaky_slope});
  return out;
}

GatStack make_gat_stack(std::size_t input_dim, std::size_t hidden, std::size_t n_layers, Rng& rng,
                        double leaky_slope) {
  if (n_layers == 0) throw std::invalid_argument("GAT stack needs at least one layer");
  GatStack stack{{}, input_dim, hidden};
  for (std::size_t i = 0; i < n_layers; ++i) {
    const std::size_t in = i == 0 ? input_dim : hidden;
    GatLayerParams layer;
    layer.weight = glorot_uniform(in, hidden, {hidden, in}, rng);
    layer.attention = glorot_uniform(2 * hidden, 1, {2 * hidden, 1}, rng);
    layer.leaky_slope = leaky_slope;
    stack.layers.push_back(std::move(layer));
  }
  return stack;
}

GraphInput make_graph_input(const ReportGraph& graph) {
  GraphInput in;
  in.features = Tensor::from_data({graph.features.rows, graph.features.cols}, graph.features.data);
  in.mask = graph.adjacency_mask(true);
  return in;
}

namespace {

// Wh, attention logits and the masked softmax, shared by the public entry points.
struct AttentionParts {
  Tensor projected;  // N x F'
  Tensor alpha;      // N x N
};

AttentionParts attend(const GatLayerParams& layer, const Tensor& features,
                      std::span<const std::uint8_t> mask) {
  if (features.rank() != 2 || features.cols() != layer.in_dim()) {
    throw ShapeError("GAT layer expects N x " + std::to_string(layer.in_dim()) + " features, got " +
                     shape_str(features.shape()));
  }
  const std::size_t n = features.rows();
  const std::size_t f_out = layer.out_dim();
  if (layer.attention.size() != 2 * f_out) throw ShapeError("attention vector must have length 2F'");
  if (mask.size() != n * n) throw ShapeError("adjacency mask does not match node count");
  Tensor wh = matmul(features, transpose(layer.weight));
  Tensor self_score = matmul(wh, slice_rows(layer.attention, 0, f_out));           // N x 1
  Tensor neighbour_score = matmul(wh, slice_rows(layer.attention, f_out, 2 * f_out));  // N x 1
  Tensor ones_row = Tensor::full({1, n}, 1.0);
  Tensor ones_col = Tensor::full({n, 1}, 1.0);
  // logits[p][q] = self_score[p] + neighbour_score[q]
  Tensor logits = add(matmul(self_score, ones_row), matmul(ones_col, transpose(neighbour_score)));
  Tensor alpha = softmax(leaky_relu(logits, layer.leaky_slope), 1, mask);
  return {std::move(wh), std::move(alpha)};
}

}  // namespace

Tensor attention_scores(const GatLayerParams& layer, const Tensor& features,
                        std::span<const std::uint8_t> mask) {
  return attend(layer, features, mask).alpha;
}

Tensor gat_layer_forward(const GatLayerParams& layer, const Tensor& features,
                         std::span<const std::uint8_t> mask, const ForwardOptions& options,
                         std::uint64_t layer_tag) {
  auto [wh, alpha] = attend(layer, features, mask);
  const std::uint64_t seed = hash_combine(options.seed, layer_tag);
  if (options.attn_dropout) alpha = dropout(alpha, options.dropout, hash_combine(seed, 0xa77), options.train);
  Tensor out = elu(aggregate_neighbors(alpha, wh));
  return dropout(out, options.dropout, seed, options.train);
}

Tensor encode_graph(const GatStack& stack, const Tensor& features, std::span<const std::uint8_t> mask,
                    const ForwardOptions& options) {
  if (features.rank() != 2 || features.cols() != stack.input_dim) {
    throw ShapeError("encode_graph: features must be N x " + std::to_string(stack.input_dim));
  }
  Tensor h = features;
  for (std::size_t i = 0; i < stack.layers.size(); ++i) {
    h = gat_layer_forward(stack.layers[i], h, mask, options, i);
  }
  return h;
}

Tensor encode_graph(const GatStack& stack, const GraphInput& input, const ForwardOptions& options) {
  return encode_graph(stack, input.features, input.mask, options);
}

Tensor encode_graph(const GatStack& stack, const ReportGraph& graph, const ForwardOptions& options) {
  return encode_graph(stack, make_graph_input(graph), options);
}

}  // namespace rkg
