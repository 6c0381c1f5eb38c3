"""Python access to the report knowledge-graph core."""

from ._core import (
    LABEL_NAMES,
    Classifier,
    EmbeddingTable,
    Graph,
    Ontology,
    build_graph,
    count_parameters,
    extract_concepts,
    generate_corpus,
    roc_auc,
)

__all__ = [
    "LABEL_NAMES",
    "Classifier",
    "EmbeddingTable",
    "Graph",
    "Ontology",
    "build_graph",
    "count_parameters",
    "extract_concepts",
    "generate_corpus",
    "roc_auc",
]
