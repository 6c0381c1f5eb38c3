#pragma once

// Shared fixtures and independent oracles for the unit and acceptance tests.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "report_kg/classifier.hpp"
#include "report_kg/concept_extractor.hpp"
#include "report_kg/corpus.hpp"
#include "report_kg/graph_builder.hpp"
#include "report_kg/ontology.hpp"
#include "report_kg/rng.hpp"
#include "report_kg/tensor.hpp"

namespace rkg::testing {

std::filesystem::path data_dir();
std::filesystem::path cli_path();

// ---- finite differences ------------------------------------------------

// Builds a scalar loss from the leaves. Non-scalar outputs are projected onto
// a fixed random direction by grad_check.
using LeafFn = std::function<Tensor(const std::vector<Tensor>&)>;

struct GradCheck {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::string worst;  // leaf/element of the largest error
};

// Central differences with step eps against backward(). The error of one
// element is |analytic - numeric| / max(|analytic|, |numeric|, floor).
GradCheck grad_check(const LeafFn& fn, const std::vector<Tensor>& leaves, double eps = 1e-5,
                     double floor = 1e-2);

struct GradCase {
  std::string name;
  // Fresh leaves and loss for one random instance.
  std::function<std::pair<std::vector<Tensor>, LeafFn>(Rng&)> make;
};

// Every differentiable primitive plus the composed losses.
std::vector<GradCase> gradient_cases();

// ---- fixtures ----------------------------------------------------------

// Three concepts A, B, C with the single relation A-C, plus the
// "pleural effusion"/"effusion" pair, in English and Spanish.
Ontology tiny_ontology();
inline const ConceptId kA{"C0000001"};
inline const ConceptId kB{"C0000004"};
inline const ConceptId kC{"C0000005"};
inline const ConceptId kPleuralEffusion{"C0000002"};
inline const ConceptId kEffusion{"C0000003"};

// Small deterministic embedding table for the tiny ontology.
EmbeddingTable tiny_embeddings(std::size_t dim = kEmbeddingDim);

// s0 = {A, B}, s1 = {B, C}.
std::vector<Mention> six_node_mentions();

// The shipped ontology, embeddings and generator recipe.
const Ontology& shipped_ontology();
const EmbeddingTable& shipped_embeddings();
GeneratorSpec shipped_spec();

// Random undirected graph input with self-loops: n nodes, dim features.
GraphInput random_graph_input(Rng& rng, std::size_t n, std::size_t dim, double edge_prob = 0.4);

// ---- oracles -----------------------------------------------------------

// Counts per edge family predicted from the mentions alone.
struct EdgeCountOracle {
  std::size_t related_pairs = 0;  // P
  std::size_t incidences = 0;     // I
  std::size_t sentences = 0;      // S
  std::size_t concepts = 0;       // C
  std::size_t total() const { return related_pairs + incidences + sentences + concepts; }
};
EdgeCountOracle edge_count_oracle(const Ontology& ontology, const std::vector<Mention>& mentions,
                                  std::size_t n_sentences);

// True when every node and edge of `part` also appears in `whole`.
bool is_subgraph(const ReportGraph& part, const ReportGraph& whole);

// Pair-counting AUC: P(pos > neg) + 0.5 P(tie). Negative when undefined.
double auc_oracle(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels);

// alpha for one layer written out loop by loop.
std::vector<double> attention_oracle(const GatLayerParams& layer, const std::vector<double>& features,
                                     std::size_t n, const std::vector<std::uint8_t>& mask);

// Full classifier forward pass written out loop by loop (eval mode).
std::array<double, kNumLabels> classifier_oracle(const ReportClassifier& model, const GraphInput& graph);

// Rows of `out` permuted by perm compared bit for bit with `permuted`.
bool rows_permuted_exactly(const Tensor& out, const Tensor& permuted, const std::vector<std::size_t>& perm);

// Relabels nodes: new node i is old node perm[i].
GraphInput permute_graph(const GraphInput& graph, const std::vector<std::size_t>& perm);

std::vector<std::size_t> random_permutation(Rng& rng, std::size_t n);

std::string read_file(const std::filesystem::path& path);

}  // namespace rkg::testing
