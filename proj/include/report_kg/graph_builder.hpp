#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "report_kg/concept_extractor.hpp"
#include "report_kg/ontology.hpp"

namespace rkg {

inline constexpr std::size_t kEmbeddingDim = 200;

enum class NodeType { Concept, Sentence, Global };

struct GraphNode {
  NodeType type = NodeType::Global;
  ConceptId concept_id;          // Concept nodes only
  std::size_t sentence = 0;      // Sentence nodes only

  static GraphNode concept_node(ConceptId id) { return {NodeType::Concept, std::move(id), 0}; }
  static GraphNode sentence_node(std::size_t index) { return {NodeType::Sentence, {}, index}; }
  static GraphNode global_node() { return {NodeType::Global, {}, 0}; }

  bool operator==(const GraphNode&) const = default;
};

enum class EdgeKind { ConceptConcept, SentenceConcept, GlobalSentence, GlobalConcept };

std::string_view edge_kind_name(EdgeKind kind);
EdgeKind parse_edge_kind(std::string_view name);

// Undirected edge, stored once with a < b.
struct GraphEdge {
  std::size_t a = 0;
  std::size_t b = 0;
  EdgeKind kind = EdgeKind::ConceptConcept;

  auto operator<=>(const GraphEdge&) const = default;
};

// Row-major dense matrix of plain values.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  bool operator==(const Matrix&) const = default;
};

// Undirected report graph: concept nodes (sorted by CUI), then sentence nodes
// (by index), then the global node. Edges are sorted and duplicate-free.
struct ReportGraph {
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;
  Matrix features;

  std::size_t count(NodeType type) const;
  std::size_t count(EdgeKind kind) const;
  // |nodes| x |nodes| 0/1 mask, symmetric, optionally with self-loops.
  std::vector<std::uint8_t> adjacency_mask(bool self_loops = true) const;
  // Index of the node, or nodes.size() when absent.
  std::size_t find(const GraphNode& node) const;

  bool operator==(const ReportGraph&) const = default;
};

// Concept vectors of a fixed dimension. Concepts missing from the table get
// a pseudo-random vector seeded by the CUI hash, scaled to norm 0.1.
class EmbeddingTable {
 public:
  explicit EmbeddingTable(std::size_t dim = kEmbeddingDim) : dim_(dim) {}

  // One line per concept: "<cui> <dim space-separated decimals>".
  static EmbeddingTable parse(std::string_view text, std::size_t dim = kEmbeddingDim);
  static EmbeddingTable load(const std::filesystem::path& path, std::size_t dim = kEmbeddingDim);

  void add(const ConceptId& id, std::vector<double> vector);
  bool contains(const ConceptId& id) const { return vectors_.count(id) > 0; }
  std::vector<double> vector_for(const ConceptId& id) const;
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return vectors_.size(); }

 private:
  std::size_t dim_;
  std::unordered_map<ConceptId, std::vector<double>> vectors_;
};

std::vector<double> fallback_embedding(const ConceptId& id, std::size_t dim);

struct AblationConfig {
  bool use_global = true;
  bool use_sentence = true;
  bool use_concept_edges = true;
  // Relation path length that still yields a concept-concept edge.
  std::size_t concept_edge_hops = 1;

  bool operator==(const AblationConfig&) const = default;
};

// Mean of the given rows; the zero vector when there are none.
std::vector<double> sentence_embedding_init(std::span<const std::vector<double>> concept_rows,
                                            std::size_t dim);

// Throws DataError when a mention's sentence index is >= n_sentences.
ReportGraph build_graph(const Ontology& ontology, std::span<const Mention> mentions,
                        std::size_t n_sentences, const EmbeddingTable& embeddings,
                        const AblationConfig& ablation = {});

enum class ExportFormat { Dot, Json };

struct DotOptions {
  bool omit_global_edges = false;
  std::string language = "en";
};

// DOT: one statement per node (concepts labelled with their preferred
// label, kinds colored distinctly) and per edge. JSON: lossless.
std::string export_graph(const ReportGraph& graph, const Ontology& ontology, ExportFormat format,
                         const DotOptions& options = {});
std::string export_dot(const ReportGraph& graph, const Ontology& ontology,
                       const DotOptions& options = {});
std::string export_json(const ReportGraph& graph);
ReportGraph parse_graph_json(std::string_view json);

}  // namespace rkg
