#include "report_kg/graph_builder.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "report_kg/errors.hpp"
#include "report_kg/rng.hpp"

namespace rkg {

namespace {

constexpr double kFallbackNorm = 0.1;

std::string dot_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

std::string_view node_type_name(NodeType t) {
  switch (t) {
    case NodeType::Concept: return "concept";
    case NodeType::Sentence: return "sentence";
    case NodeType::Global: return "global";
  }
  return "?";
}

}  // namespace

std::string_view edge_kind_name(EdgeKind kind) {
  switch (kind) {
    case EdgeKind::ConceptConcept: return "concept_concept";
    case EdgeKind::SentenceConcept: return "sentence_concept";
    case EdgeKind::GlobalSentence: return "global_sentence";
    case EdgeKind::GlobalConcept: return "global_concept";
  }
  return "?";
}

EdgeKind parse_edge_kind(std::string_view name) {
  for (auto k : {EdgeKind::ConceptConcept, EdgeKind::SentenceConcept, EdgeKind::GlobalSentence,
                 EdgeKind::GlobalConcept}) {
    if (edge_kind_name(k) == name) return k;
  }
  throw DataError("unknown edge kind '" + std::string(name) + "'");
}

std::size_t ReportGraph::count(NodeType type) const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [type](const GraphNode& n) { return n.type == type; }));
}

std::size_t ReportGraph::count(EdgeKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(edges.begin(), edges.end(), [kind](const GraphEdge& e) { return e.kind == kind; }));
}

std::vector<std::uint8_t> ReportGraph::adjacency_mask(bool self_loops) const {
  const std::size_t n = nodes.size();
  std::vector<std::uint8_t> mask(n * n, 0);
  for (const auto& e : edges) {
    mask[e.a * n + e.b] = 1;
    mask[e.b * n + e.a] = 1;
  }
  if (self_loops)
    for (std::size_t i = 0; i < n; ++i) mask[i * n + i] = 1;
  return mask;
}

std::size_t ReportGraph::find(const GraphNode& node) const {
  auto it = std::find(nodes.begin(), nodes.end(), node);
  return static_cast<std::size_t>(it - nodes.begin());
}

// ---- embeddings --------------------------------------------------------

std::vector<double> fallback_embedding(const ConceptId& id, std::size_t dim) {
  Rng rng(hash_string(id.str(), 0x656d62));
  std::vector<double> v(dim);
  double norm2 = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    norm2 += x * x;
  }
  const double s = norm2 > 0.0 ? kFallbackNorm / std::sqrt(norm2) : 0.0;
  for (auto& x : v) x *= s;
  return v;
}

EmbeddingTable EmbeddingTable::parse(std::string_view text, std::size_t dim) {
  EmbeddingTable table(dim);
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(start, nl - start);
    start = nl + 1;
    ++line_no;
    const auto where = "line " + std::to_string(line_no) + ": ";
    std::vector<std::string_view> fields;
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      const std::size_t b = i;
      while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      if (i > b) fields.push_back(line.substr(b, i - b));
    }
    if (fields.empty() || fields[0].front() == '#') continue;
    if (fields.size() != dim + 1) {
      throw DataError(where + "expected " + std::to_string(dim) + " values, got " +
                      std::to_string(fields.size() - 1));
    }
    std::vector<double> v(dim);
    for (std::size_t k = 0; k < dim; ++k) {
      auto f = fields[k + 1];
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v[k]);
      if (ec != std::errc() || ptr != f.data() + f.size() || !std::isfinite(v[k])) {
        throw DataError(where + "bad value '" + std::string(f) + "'");
      }
    }
    try {
      table.add(ConceptId(std::string(fields[0])), std::move(v));
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
  }
  return table;
}

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path, std::size_t dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open embeddings file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse(ss.str(), dim);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void EmbeddingTable::add(const ConceptId& id, std::vector<double> vector) {
  if (vector.size() != dim_) {
    throw DataError("embedding for " + id.str() + " has length " + std::to_string(vector.size()) +
                    ", expected " + std::to_string(dim_));
  }
  if (!vectors_.emplace(id, std::move(vector)).second) {
    throw DataError("duplicate embedding for " + id.str());
  }
}

std::vector<double> EmbeddingTable::vector_for(const ConceptId& id) const {
  if (auto it = vectors_.find(id); it != vectors_.end()) return it->second;
  return fallback_embedding(id, dim_);
}

// ---- construction ------------------------------------------------------

std::vector<double> sentence_embedding_init(std::span<const std::vector<double>> concept_rows,
                                            std::size_t dim) {
  std::vector<double> out(dim, 0.0);
  if (concept_rows.empty()) return out;
  for (const auto& row : concept_rows) {
    if (row.size() != dim) throw ShapeError("sentence_embedding_init: row dimension mismatch");
    for (std::size_t k = 0; k < dim; ++k) out[k] += row[k];
  }
  const double n = static_cast<double>(concept_rows.size());
  for (auto& x : out) x /= n;
  return out;
}

ReportGraph build_graph(const Ontology& ontology, std::span<const Mention> mentions,
                        std::size_t n_sentences, const EmbeddingTable& embeddings,
                        const AblationConfig& ablation) {
  const std::size_t dim = embeddings.dim();
  // sentence -> distinct concepts, and the distinct concept set overall.
  std::map<ConceptId, std::size_t> concept_index;
  std::vector<std::set<ConceptId>> per_sentence(n_sentences);
  for (const auto& m : mentions) {
    if (m.sentence_index >= n_sentences) {
      throw DataError("mention of " + m.concept_id.str() + " has sentence index " +
                      std::to_string(m.sentence_index) + " >= " + std::to_string(n_sentences));
    }
    concept_index.emplace(m.concept_id, 0);
    per_sentence[m.sentence_index].insert(m.concept_id);
  }

  ReportGraph g;
  std::vector<std::vector<double>> concept_rows;
  for (auto& [id, index] : concept_index) {
    index = g.nodes.size();
    g.nodes.push_back(GraphNode::concept_node(id));
    concept_rows.push_back(embeddings.vector_for(id));
  }
  const std::size_t n_concepts = g.nodes.size();

  std::vector<std::size_t> sentence_nodes;
  if (ablation.use_sentence) {
    for (std::size_t s = 0; s < n_sentences; ++s) {
      sentence_nodes.push_back(g.nodes.size());
      g.nodes.push_back(GraphNode::sentence_node(s));
    }
  }
  std::size_t global = g.nodes.size();
  if (ablation.use_global) g.nodes.push_back(GraphNode::global_node());

  auto add_edge = [&](std::size_t a, std::size_t b, EdgeKind kind) {
    g.edges.push_back({std::min(a, b), std::max(a, b), kind});
  };
  if (ablation.use_concept_edges) {
    const std::size_t hops = std::max<std::size_t>(1, ablation.concept_edge_hops);
    for (std::size_t i = 0; i < n_concepts; ++i)
      for (std::size_t j = i + 1; j < n_concepts; ++j)
        if (ontology.related_within(g.nodes[i].concept_id, g.nodes[j].concept_id, hops))
          add_edge(i, j, EdgeKind::ConceptConcept);
  }
  if (ablation.use_sentence) {
    for (std::size_t s = 0; s < n_sentences; ++s)
      for (const auto& id : per_sentence[s])
        add_edge(sentence_nodes[s], concept_index.at(id), EdgeKind::SentenceConcept);
  }
  if (ablation.use_global) {
    for (auto s : sentence_nodes) add_edge(global, s, EdgeKind::GlobalSentence);
    for (std::size_t i = 0; i < n_concepts; ++i) add_edge(global, i, EdgeKind::GlobalConcept);
  }
  std::sort(g.edges.begin(), g.edges.end());

  g.features.rows = g.nodes.size();
  g.features.cols = dim;
  g.features.data.assign(g.nodes.size() * dim, 0.0);
  for (std::size_t i = 0; i < n_concepts; ++i)
    std::copy(concept_rows[i].begin(), concept_rows[i].end(), g.features.row(i).begin());
  if (ablation.use_sentence) {
    for (std::size_t s = 0; s < n_sentences; ++s) {
      std::vector<std::vector<double>> rows;
      for (const auto& id : per_sentence[s]) rows.push_back(concept_rows[concept_index.at(id)]);
      auto v = sentence_embedding_init(rows, dim);
      std::copy(v.begin(), v.end(), g.features.row(sentence_nodes[s]).begin());
    }
  }
  if (ablation.use_global) {
    auto v = sentence_embedding_init(concept_rows, dim);
    std::copy(v.begin(), v.end(), g.features.row(global).begin());
  }
  return g;
}

// ---- export ------------------------------------------------------------

std::string export_dot(const ReportGraph& graph, const Ontology& ontology, const DotOptions& options) {
  std::ostringstream os;
  os << "graph report {\n";
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    const auto& n = graph.nodes[i];
    std::string label;
    std::string color;
    std::string shape;
    switch (n.type) {
      case NodeType::Concept: {
        const auto& c = ontology.concept_record(n.concept_id);
        auto it = c.preferred_label.find(options.language);
        label = it != c.preferred_label.end() ? it->second : c.preferred_label.begin()->second;
        color = "#9ecae1";
        shape = "ellipse";
        break;
      }
      case NodeType::Sentence:
        label = "s" + std::to_string(n.sentence);
        color = "#fdd0a2";
        shape = "box";
        break;
      case NodeType::Global:
        label = "g";
        color = "#c7e9c0";
        shape = "doublecircle";
        break;
    }
    os << "  n" << i << " [label=\"" << dot_escape(label) << "\", kind=" << node_type_name(n.type)
       << ", shape=" << shape << ", style=filled, fillcolor=\"" << color << "\"];\n";
  }
  for (const auto& e : graph.edges) {
    const bool global_edge = e.kind == EdgeKind::GlobalConcept || e.kind == EdgeKind::GlobalSentence;
    if (options.omit_global_edges && global_edge) continue;
    os << "  n" << e.a << " -- n" << e.b << " [kind=" << edge_kind_name(e.kind) << "];\n";
  }
  os << "}\n";
  return os.str();
}

std::string export_json(const ReportGraph& graph) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : graph.nodes) {
    nlohmann::json j{{"kind", node_type_name(n.type)}};
    if (n.type == NodeType::Concept) j["cui"] = n.concept_id.str();
    if (n.type == NodeType::Sentence) j["index"] = n.sentence;
    nodes.push_back(std::move(j));
  }
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : graph.edges) edges.push_back({e.a, e.b, edge_kind_name(e.kind)});
  nlohmann::json doc{{"format", "report-kg-graph"},
                     {"version", 1},
                     {"nodes", std::move(nodes)},
                     {"edges", std::move(edges)},
                     {"features",
                      {{"rows", graph.features.rows},
                       {"cols", graph.features.cols},
                       {"data", graph.features.data}}}};
  return doc.dump() + "\n";
}

ReportGraph parse_graph_json(std::string_view json) {
  try {
    const auto doc = nlohmann::json::parse(json);
    if (doc.at("format") != "report-kg-graph") throw DataError("not a report-kg graph document");
    ReportGraph g;
    for (const auto& j : doc.at("nodes")) {
      const auto kind = j.at("kind").get<std::string>();
      if (kind == "concept") g.nodes.push_back(GraphNode::concept_node(ConceptId(j.at("cui").get<std::string>())));
      else if (kind == "sentence") g.nodes.push_back(GraphNode::sentence_node(j.at("index").get<std::size_t>()));
      else if (kind == "global") g.nodes.push_back(GraphNode::global_node());
      else throw DataError("unknown node kind '" + kind + "'");
    }
    for (const auto& j : doc.at("edges")) {
      GraphEdge e{j.at(0).get<std::size_t>(), j.at(1).get<std::size_t>(),
                  parse_edge_kind(j.at(2).get<std::string>())};
      if (e.a >= e.b || e.b >= g.nodes.size()) throw DataError("invalid edge endpoints");
      g.edges.push_back(e);
    }
    const auto& f = doc.at("features");
    g.features.rows = f.at("rows").get<std::size_t>();
    g.features.cols = f.at("cols").get<std::size_t>();
    g.features.data = f.at("data").get<std::vector<double>>();
    if (g.features.rows != g.nodes.size() || g.features.data.size() != g.features.rows * g.features.cols) {
      throw DataError("feature matrix does not match node count");
    }
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("graph json: ") + e.what());
  }
}

std::string export_graph(const ReportGraph& graph, const Ontology& ontology, ExportFormat format,
                         const DotOptions& options) {
  return format == ExportFormat::Dot ? export_dot(graph, ontology, options) : export_json(graph);
}

}  // namespace rkg
