#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "report_kg/classifier.hpp"
#include "report_kg/concept_extractor.hpp"
#include "report_kg/corpus.hpp"
#include "report_kg/errors.hpp"
#include "report_kg/graph_builder.hpp"
#include "report_kg/metrics.hpp"
#include "report_kg/trainer.hpp"

namespace py = pybind11;
using namespace rkg;

namespace {

std::string_view node_type_name(NodeType t) {
  switch (t) {
    case NodeType::Concept: return "concept";
    case NodeType::Sentence: return "sentence";
    case NodeType::Global: return "global";
  }
  return "global";
}

Report make_report(const std::string& text, const std::string& language) {
  return Report{"input", language, text, std::nullopt};
}

ReportGraph graph_for(const Ontology& o, const EmbeddingTable& emb, const std::string& text,
                      const std::string& language, const AblationConfig& ab) {
  const Extraction ex = DictionaryExtractor(o).extract(make_report(text, language));
  return build_graph(o, ex.mentions, ex.n_sentences, emb, ab);
}

py::array_t<double> as_array(const Matrix& m) {
  py::array_t<double> out({m.rows, m.cols});
  std::copy(m.data.begin(), m.data.end(), out.mutable_data());
  return out;
}

py::list graph_nodes(const ReportGraph& g) {
  py::list out;
  for (const auto& n : g.nodes) {
    py::dict d;
    d["type"] = std::string(node_type_name(n.type));
    if (n.type == NodeType::Concept) d["cui"] = n.concept_id.str();
    if (n.type == NodeType::Sentence) d["sentence"] = n.sentence;
    out.append(d);
  }
  return out;
}

py::list graph_edges(const ReportGraph& g) {
  py::list out;
  for (const auto& e : g.edges) out.append(py::make_tuple(e.a, e.b, std::string(edge_kind_name(e.kind))));
  return out;
}

struct Classifier {
  ReportClassifier model;
  AblationConfig ablation;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Report knowledge graphs: extraction, graph construction and classification";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);

  py::list names;
  for (auto n : kLabelNames) names.append(std::string(n));
  m.attr("LABEL_NAMES") = names;

  py::class_<Ontology>(m, "Ontology")
      .def_static("load", &Ontology::load, py::arg("path"))
      .def_static("parse", [](const std::string& text) { return Ontology::parse(text); }, py::arg("text"))
      .def("__len__", [](const Ontology& o) { return o.concepts().size(); })
      .def("concepts",
           [](const Ontology& o) {
             std::vector<std::string> out;
             for (const auto& [id, c] : o.concepts()) out.push_back(id.str());
             return out;
           })
      .def("related",
           [](const Ontology& o, const std::string& a, const std::string& b) {
             return o.related(ConceptId(a), ConceptId(b));
           },
           py::arg("a"), py::arg("b"))
      .def("lookup",
           [](const Ontology& o, const std::string& language, const std::string& phrase) -> std::optional<std::string> {
             auto id = o.lookup(language, phrase);
             if (!id) return std::nullopt;
             return id->str();
           },
           py::arg("language"), py::arg("phrase"))
      .def("languages", &Ontology::languages);

  py::class_<EmbeddingTable>(m, "EmbeddingTable")
      .def(py::init<std::size_t>(), py::arg("dim") = kEmbeddingDim)
      .def_static("load", &EmbeddingTable::load, py::arg("path"), py::arg("dim") = kEmbeddingDim)
      .def_property_readonly("dim", &EmbeddingTable::dim)
      .def("__len__", &EmbeddingTable::size)
      .def("vector", [](const EmbeddingTable& e, const std::string& cui) { return e.vector_for(ConceptId(cui)); },
           py::arg("cui"));

  py::class_<ReportGraph>(m, "Graph")
      .def_property_readonly("nodes", &graph_nodes)
      .def_property_readonly("edges", &graph_edges)
      .def_property_readonly("features", [](const ReportGraph& g) { return as_array(g.features); })
      .def("to_dot",
           [](const ReportGraph& g, const Ontology& o, bool omit_global_edges, const std::string& language) {
             return export_dot(g, o, DotOptions{omit_global_edges, language});
           },
           py::arg("ontology"), py::arg("omit_global_edges") = false, py::arg("language") = "en")
      .def("to_json", [](const ReportGraph& g) { return export_json(g); })
      .def_static("from_json", [](const std::string& json) { return parse_graph_json(json); }, py::arg("json"))
      .def("__eq__", [](const ReportGraph& a, const ReportGraph& b) { return a == b; });

  m.def(
      "extract_concepts",
      [](const Ontology& o, const std::string& text, const std::string& language) {
        py::list out;
        for (const auto& mn : extract_concepts(o, make_report(text, language)))
          out.append(py::make_tuple(mn.concept_id.str(), mn.sentence_index, mn.start, mn.end));
        return out;
      },
      py::arg("ontology"), py::arg("text"), py::arg("language") = "en",
      "Concept mentions as (cui, sentence, start, end) tuples.");

  m.def(
      "build_graph",
      [](const Ontology& o, const EmbeddingTable& emb, const std::string& text, const std::string& language,
         bool use_global, bool use_sentence, bool use_concept_edges) {
        return graph_for(o, emb, text, language, AblationConfig{use_global, use_sentence, use_concept_edges, 1});
      },
      py::arg("ontology"), py::arg("embeddings"), py::arg("text"), py::arg("language") = "en",
      py::arg("use_global") = true, py::arg("use_sentence") = true, py::arg("use_concept_edges") = true);

  m.def(
      "generate_corpus",
      [](const Ontology& o, const std::filesystem::path& spec_path, std::optional<std::size_t> n,
         std::optional<std::uint64_t> seed) {
        GeneratorSpec spec = load_generator_spec(spec_path);
        if (n) spec.n_reports = *n;
        if (seed) spec.seed = *seed;
        py::list out;
        for (const auto& r : generate_corpus(o, spec)) {
          py::dict d;
          d["id"] = r.id;
          d["language"] = r.language;
          d["text"] = r.text;
          d["labels"] = std::vector<int>(r.labels->begin(), r.labels->end());
          out.append(d);
        }
        return out;
      },
      py::arg("ontology"), py::arg("spec"), py::arg("n") = std::nullopt, py::arg("seed") = std::nullopt);

  m.def(
      "roc_auc",
      [](const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
        if (scores.size() != labels.size()) throw DataError("scores and labels differ in length");
        return roc_auc(scores, labels);
      },
      py::arg("scores"), py::arg("labels"), "ROC AUC, or None when only one class is present.");

  m.def("count_parameters", py::overload_cast<std::size_t, std::size_t, std::size_t>(&count_parameters),
        py::arg("n_layers"), py::arg("hidden"), py::arg("input_dim") = kEmbeddingDim);

  py::class_<Classifier>(m, "Classifier")
      .def_static(
          "load",
          [](const std::filesystem::path& path) {
            const Checkpoint ckpt = load_checkpoint(path);
            return Classifier{classifier_from_checkpoint(ckpt), ablation_from_checkpoint(ckpt)};
          },
          py::arg("path"))
      .def_property_readonly("parameters", [](const Classifier& c) { return c.model.params().element_count(); })
      .def(
          "predict",
          [](const Classifier& c, const Ontology& o, const EmbeddingTable& emb, const std::string& text,
             const std::string& language) {
            const ReportGraph g = graph_for(o, emb, text, language, c.ablation);
            const Prediction p = classify_report(c.model, make_graph_input(g));
            return std::vector<double>(p.probabilities.begin(), p.probabilities.end());
          },
          py::arg("ontology"), py::arg("embeddings"), py::arg("text"), py::arg("language") = "en",
          "Per-label probabilities in LABEL_NAMES order.");
}
