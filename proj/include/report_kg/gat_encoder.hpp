#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "report_kg/graph_builder.hpp"
#include "report_kg/params.hpp"
#include "report_kg/rng.hpp"
#include "report_kg/tensor.hpp"

namespace rkg {

// Training-time switches shared by every forward pass.
struct ForwardOptions {
  bool train = false;
  double dropout = 0.5;
  // Also drop attention coefficients (features only by default).
  bool attn_dropout = false;
  // Root of all dropout masks of this pass.
  std::uint64_t seed = 0;
};

// One single-head attention layer.
struct GatLayerParams {
  Tensor weight;     // F' x F
  Tensor attention;  // 2F' x 1: [self half; neighbour half]
  double leaky_slope = 0.2;

  std::size_t in_dim() const { return weight.cols(); }
  std::size_t out_dim() const { return weight.rows(); }
};

struct GatStack {
  std::vector<GatLayerParams> layers;
  std::size_t input_dim = kEmbeddingDim;
  std::size_t hidden = 0;

  std::size_t n_layers() const { return layers.size(); }
  std::size_t parameter_count() const;
  void register_params(ParamSet& params, const std::string& prefix = "gat") const;
  GatStack clone() const;
};

// Glorot-uniform weights; layer 0 maps input_dim -> hidden, the rest hidden -> hidden.
GatStack make_gat_stack(std::size_t input_dim, std::size_t hidden, std::size_t n_layers, Rng& rng,
                        double leaky_slope = 0.2);

// Node features plus the self-looped adjacency mask, ready for encoding.
struct GraphInput {
  Tensor features;                  // |N| x F, constant
  std::vector<std::uint8_t> mask;   // |N| x |N|
  std::size_t n_nodes() const { return features.rows(); }
};

GraphInput make_graph_input(const ReportGraph& graph);

// alpha[p][q] = softmax over q in N(p) u {p} of LeakyReLU(a . [W h_p || W h_q]),
// zero outside the neighbourhood. mask must already contain self-loops.
Tensor attention_scores(const GatLayerParams& layer, const Tensor& features,
                        std::span<const std::uint8_t> mask);

// h'_p = ELU(sum_q alpha_pq W h_q), followed by dropout in training mode.
Tensor gat_layer_forward(const GatLayerParams& layer, const Tensor& features,
                         std::span<const std::uint8_t> mask, const ForwardOptions& options,
                         std::uint64_t layer_tag = 0);

Tensor encode_graph(const GatStack& stack, const Tensor& features,
                    std::span<const std::uint8_t> mask, const ForwardOptions& options);
Tensor encode_graph(const GatStack& stack, const GraphInput& input, const ForwardOptions& options);
Tensor encode_graph(const GatStack& stack, const ReportGraph& graph, const ForwardOptions& options);

// Glorot-uniform leaf of the given shape.
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Shape shape, Rng& rng);

}  // namespace rkg
