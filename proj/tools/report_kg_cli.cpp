// report-kg: command line front end for the report knowledge-graph pipeline.
//
// Exit codes: 0 success, 1 usage error, 2 data or validation error,
// 3 numeric failure.

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "report_kg/classifier.hpp"
#include "report_kg/concept_extractor.hpp"
#include "report_kg/config.hpp"
#include "report_kg/corpus.hpp"
#include "report_kg/errors.hpp"
#include "report_kg/graph_builder.hpp"
#include "report_kg/metrics.hpp"
#include "report_kg/ontology.hpp"
#include "report_kg/trainer.hpp"
#include "report_kg/vkd.hpp"

namespace fs = std::filesystem;
using namespace rkg;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

// Shared options for commands that run a configured pipeline.
struct RunArgs {
  std::string config;
  std::string corpus;
  std::string ontology;
  std::string embeddings = "";
  std::string out;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::size_t workers = 0;
};

void add_run_options(CLI::App* cmd, RunArgs& a, bool needs_out) {
  cmd->add_option("--config", a.config, "run config file (key=value)")->check(CLI::ExistingFile);
  cmd->add_option("--corpus", a.corpus, "labelled corpus file")->required();
  cmd->add_option("--ontology", a.ontology, "ontology file")->required();
  cmd->add_option("--embeddings", a.embeddings, "concept embedding table");
  auto* out = cmd->add_option("--out", a.out, "output directory");
  if (needs_out) out->required();
  cmd->add_option("--set", a.overrides, "override a config key (key=value), repeatable");
  cmd->add_option_function<std::uint64_t>(
      "--seed",
      [&a](const std::uint64_t& s) {
        a.seed = s;
        a.seed_given = true;
      },
      "root seed (overrides the config)");
  cmd->add_option("--workers", a.workers, "worker threads (overrides the config)");
}

RunConfig effective_config(const RunArgs& a) {
  RunConfig cfg = a.config.empty() ? RunConfig{} : load_run_config(a.config);
  for (const auto& kv : a.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw DataError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (a.seed_given) cfg.train.seed = a.seed;
  if (a.workers > 0) cfg.train.workers = a.workers;
  validate_run_config(cfg);
  std::cerr << "# effective config\n" << format_run_config(cfg);
  return cfg;
}

EmbeddingTable load_embeddings(const std::string& path) {
  if (path.empty()) return EmbeddingTable(kEmbeddingDim);
  return EmbeddingTable::load(path);
}

std::string splits_table(const CorpusSplits& s) {
  std::string out = "id\tsplit\n";
  auto add = [&](const Corpus& c, const char* name) {
    for (const auto& r : c) out += r.id + "\t" + name + "\n";
  };
  add(s.train, "train");
  add(s.val, "val");
  add(s.test, "test");
  return out;
}

// ---- generate ----------------------------------------------------------

struct GenerateArgs {
  std::string ontology, spec, out, languages;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::size_t n = 0;
  bool parallel = false;
};

int run_generate(const GenerateArgs& a) {
  const Ontology ontology = load_ontology(a.ontology);
  GeneratorSpec spec = load_generator_spec(a.spec);
  if (a.seed_given) spec.seed = a.seed;
  if (a.n > 0) spec.n_reports = a.n;
  if (!a.languages.empty()) {
    spec.languages.clear();
    std::stringstream ss(a.languages);
    for (std::string lang; std::getline(ss, lang, ',');)
      if (!lang.empty()) spec.languages.push_back(lang);
  }
  if (a.parallel) spec.parallel = true;
  const Corpus corpus = generate_corpus(ontology, spec);
  write_corpus(a.out, corpus);
  std::cout << "wrote " << corpus.size() << " reports to " << a.out << "\n";
  return 0;
}

// ---- build-graph / export-graph ----------------------------------------

struct GraphArgs {
  std::string ontology, corpus, embeddings, out, id, format = "dot";
  bool no_global = false, no_sentence = false, no_concept_edges = false, omit_global_edges = false;
  std::size_t hops = 1;
};

AblationConfig ablation_of(const GraphArgs& a) {
  AblationConfig ab;
  ab.use_global = !a.no_global;
  ab.use_sentence = !a.no_sentence;
  ab.use_concept_edges = !a.no_concept_edges;
  ab.concept_edge_hops = a.hops;
  return ab;
}

std::string safe_name(std::string id) {
  for (char& c : id)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '@' || c == '.')) c = '_';
  return id;
}

int run_build_graph(const GraphArgs& a) {
  const Ontology ontology = load_ontology(a.ontology);
  const EmbeddingTable embeddings = load_embeddings(a.embeddings);
  const Corpus corpus = read_corpus(a.corpus);
  const DictionaryExtractor extractor(ontology);
  const AblationConfig ab = ablation_of(a);
  ensure_dir(a.out);
  std::string summary = "id\tnodes\tconcepts\tsentences\tedges\n";
  for (const auto& report : corpus) {
    const Extraction ex = extractor.extract(report);
    const ReportGraph g = build_graph(ontology, ex.mentions, ex.n_sentences, embeddings, ab);
    const DotOptions dot{a.omit_global_edges, report.language};
    const fs::path base = fs::path(a.out) / safe_name(report.id);
    if (a.format == "dot" || a.format == "both") write_text(base.string() + ".dot", export_dot(g, ontology, dot));
    if (a.format == "json" || a.format == "both") write_text(base.string() + ".json", export_json(g));
    summary += report.id + "\t" + std::to_string(g.nodes.size()) + "\t" +
               std::to_string(g.count(NodeType::Concept)) + "\t" + std::to_string(g.count(NodeType::Sentence)) +
               "\t" + std::to_string(g.edges.size()) + "\n";
  }
  write_text(fs::path(a.out) / "graphs.tsv", summary);
  std::cout << "built " << corpus.size() << " graphs in " << a.out << "\n";
  return 0;
}

int run_export_graph(const GraphArgs& a) {
  const Ontology ontology = load_ontology(a.ontology);
  const EmbeddingTable embeddings = load_embeddings(a.embeddings);
  const Corpus corpus = read_corpus(a.corpus);
  auto it = std::find_if(corpus.begin(), corpus.end(), [&](const Report& r) { return r.id == a.id; });
  if (it == corpus.end()) throw DataError("report '" + a.id + "' not found in " + a.corpus);
  const Extraction ex = DictionaryExtractor(ontology).extract(*it);
  const ReportGraph g = build_graph(ontology, ex.mentions, ex.n_sentences, embeddings, ablation_of(a));
  const ExportFormat fmt = a.format == "json" ? ExportFormat::Json : ExportFormat::Dot;
  const std::string text = export_graph(g, ontology, fmt, DotOptions{a.omit_global_edges, it->language});
  if (a.out.empty()) {
    std::cout << text;
  } else {
    write_text(a.out, text);
  }
  return 0;
}

// ---- train / evaluate / classify ---------------------------------------

int run_train(const RunArgs& a) {
  const RunConfig cfg = effective_config(a);
  const Ontology ontology = load_ontology(a.ontology);
  const EmbeddingTable embeddings = load_embeddings(a.embeddings);
  const Corpus corpus = read_corpus(a.corpus);
  const CorpusSplits splits = split_corpus(corpus, cfg.split, cfg.train.seed);
  ensure_dir(a.out);
  const fs::path out(a.out);
  write_text(out / "config.txt", format_run_config(cfg));
  write_text(out / "splits.tsv", splits_table(splits));

  const Dataset train_set = prepare_dataset(splits.train, ontology, embeddings, cfg.graph);
  const Dataset val_set = prepare_dataset(splits.val, ontology, embeddings, cfg.graph);
  const Dataset test_set = prepare_dataset(splits.test, ontology, embeddings, cfg.graph);
  std::cerr << "train " << train_set.size() << ", val " << val_set.size() << ", test " << test_set.size()
            << " reports\n";

  std::string epochs = "epoch\ttrain_loss\tval_macro_auc\n";
  std::string timing = "epoch\twall_time\n";
  const TrainResult result = train(cfg.train, train_set, val_set, [&](const EpochRecord& r) {
    epochs += std::to_string(r.epoch) + "\t" + fixed(r.train_loss, 8) + "\t" + fixed(r.val_macro_auc, 8) + "\n";
    timing += std::to_string(r.epoch) + "\t" + fixed(r.wall_time, 3) + "\n";
    std::cerr << "epoch " << r.epoch << "  loss " << fixed(r.train_loss, 5) << "  val macro-AUC "
              << fixed(r.val_macro_auc, 4) << "  (" << fixed(r.wall_time, 1) << " s)\n";
  });
  write_text(out / "epochs.tsv", epochs);
  write_text(out / "timing.tsv", timing);

  Checkpoint ckpt = classifier_checkpoint(result.model, cfg.graph);
  ckpt.meta["best_epoch"] = std::to_string(result.best_epoch);
  save_checkpoint(out / "checkpoint.txt", ckpt);

  const EvalReport report =
      evaluate_predictions(predict(result.model, test_set, cfg.train.workers), labels_of(test_set), cfg.threshold);
  std::string records = format_eval_records(report);
  records += "parameters\t" + std::to_string(count_parameters(result.model.encoder, result.model.head)) + "\n";
  records += "best_epoch\t" + std::to_string(result.best_epoch) + "\n";
  write_text(out / "metrics.txt", records);
  std::cout << format_eval_table(report);
  return 0;
}

struct EvalArgs {
  std::string checkpoint, corpus, ontology, embeddings, out, text, lang = "en";
  double threshold = 0.5;
};

int run_evaluate(const EvalArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const ReportClassifier model = classifier_from_checkpoint(ckpt);
  const Ontology ontology = load_ontology(a.ontology);
  const EmbeddingTable embeddings = load_embeddings(a.embeddings);
  const Dataset data = prepare_dataset(read_corpus(a.corpus), ontology, embeddings, ablation_from_checkpoint(ckpt));
  const EvalReport report = evaluate_predictions(predict(model, data), labels_of(data), a.threshold);
  std::cout << format_eval_table(report);
  if (!a.out.empty()) write_text(a.out, format_eval_records(report));
  return 0;
}

int run_classify(const EvalArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const ReportClassifier model = classifier_from_checkpoint(ckpt);
  const Ontology ontology = load_ontology(a.ontology);
  const EmbeddingTable embeddings = load_embeddings(a.embeddings);
  Corpus corpus;
  if (!a.text.empty()) {
    corpus.push_back(Report{"input", a.lang, a.text, std::nullopt});
  } else if (!a.corpus.empty()) {
    corpus = read_corpus(a.corpus);
  } else {
    throw DataError("classify needs --text or --corpus");
  }
  const Dataset data = prepare_dataset(corpus, ontology, embeddings, ablation_from_checkpoint(ckpt), false);
  const auto probs = predict(model, data);
  std::string out = "id";
  for (auto name : kLabelNames) out += "\t" + std::string(name);
  out += "\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    out += data[i].id;
    for (double p : probs[i]) out += "\t" + fixed(p, 6);
    out += "\n";
  }
  if (a.out.empty()) {
    std::cout << out;
  } else {
    write_text(a.out, out);
  }
  return 0;
}

// ---- distill -----------------------------------------------------------

int run_distill(const RunArgs& a, const std::string& mode_arg) {
  const RunConfig cfg = effective_config(a);
  const VkdConfig vcfg = cfg.vkd();
  const Ontology ontology = load_ontology(a.ontology);
  const EmbeddingTable embeddings = load_embeddings(a.embeddings);
  const Corpus corpus = read_corpus(a.corpus);
  const CorpusSplits splits = split_corpus(corpus, cfg.split, cfg.train.seed);
  const SyntheticImager imager(vcfg.image_dim, vcfg.image_signal, vcfg.image_noise, cfg.train.seed);
  const VkdDataset train_set = prepare_vkd_dataset(splits.train, ontology, embeddings, imager, cfg.train.seed);
  const VkdDataset val_set = prepare_vkd_dataset(splits.val, ontology, embeddings, imager, cfg.train.seed);
  const VkdDataset test_set = prepare_vkd_dataset(splits.test, ontology, embeddings, imager, cfg.train.seed);
  ensure_dir(a.out);
  const fs::path out(a.out);
  write_text(out / "config.txt", format_run_config(cfg));
  write_text(out / "splits.tsv", splits_table(splits));

  std::vector<VkdMode> modes;
  if (mode_arg == "both") {
    modes = {VkdMode::ImageOnly, VkdMode::Distilled};
  } else {
    modes = {parse_vkd_mode(mode_arg)};
  }
  std::vector<Labels> test_labels;
  for (const auto& ex : test_set) test_labels.push_back(ex.labels);

  std::string block = "method          macro_auc  precision  recall     f1\n";
  for (VkdMode mode : modes) {
    const std::string name(vkd_mode_name(mode));
    std::string epochs = "epoch\ttrain_loss\ttrain_kl\tval_macro_auc\n";
    std::string timing = "epoch\twall_time\n";
    const VkdTrainResult result = train_vkd(vcfg, mode, train_set, val_set, [&](const VkdEpochRecord& r) {
      epochs += std::to_string(r.epoch) + "\t" + fixed(r.train_loss, 8) + "\t" + fixed(r.train_kl, 8) + "\t" +
                fixed(r.val_macro_auc, 8) + "\n";
      timing += std::to_string(r.epoch) + "\t" + fixed(r.wall_time, 3) + "\n";
      std::cerr << name << " epoch " << r.epoch << "  loss " << fixed(r.train_loss, 5) << "  kl "
                << fixed(r.train_kl, 4) << "  val image-only macro-AUC " << fixed(r.val_macro_auc, 4) << "\n";
    });
    write_text(out / (name + "_epochs.tsv"), epochs);
    write_text(out / (name + "_timing.tsv"), timing);
    save_checkpoint(out / (name + "_checkpoint.txt"), vkd_checkpoint(result.model, mode));
    const EvalReport report =
        evaluate_predictions(predict_image_only(result.model, test_set, cfg.train.workers), test_labels, cfg.threshold);
    write_text(out / (name + "_metrics.txt"), format_eval_records(report));
    char line[128];
    std::snprintf(line, sizeof(line), "%-15s %-10.4f %-10.4f %-10.4f %.4f\n",
                  mode == VkdMode::ImageOnly ? "image-only" : "image+VKD", report.macro_auc, report.precision,
                  report.recall, report.f1);
    block += line;
  }
  write_text(out / "comparison.txt", block);
  std::cout << block;
  return 0;
}

// ---- benchmark / plot-data ---------------------------------------------

int run_benchmark(const RunArgs& a, const std::string& checkpoint, std::size_t repetitions) {
  const Ontology ontology = load_ontology(a.ontology);
  const EmbeddingTable embeddings = load_embeddings(a.embeddings);
  const Corpus corpus = read_corpus(a.corpus);
  ReportClassifier model;
  AblationConfig ab;
  std::size_t n_layers = 0, hidden = 0;
  if (!checkpoint.empty()) {
    const Checkpoint ckpt = load_checkpoint(checkpoint);
    model = classifier_from_checkpoint(ckpt);
    ab = ablation_from_checkpoint(ckpt);
  } else {
    const RunConfig cfg = effective_config(a);
    Rng rng = Rng(cfg.train.seed).split("init");
    model = make_report_classifier(cfg.train.n_layers, cfg.train.hidden, rng, embeddings.dim(),
                                   cfg.train.leaky_slope);
    ab = cfg.graph;
  }
  n_layers = model.encoder.n_layers();
  hidden = model.encoder.hidden;
  const BenchmarkResult r = benchmark_inference(model, ontology, embeddings, ab, corpus, repetitions);
  std::string text = "n_layers\t" + std::to_string(n_layers) + "\nhidden\t" + std::to_string(hidden) +
                     "\nparameters\t" + std::to_string(count_parameters(model.encoder, model.head)) +
                     "\nreports\t" + std::to_string(r.n_reports) + "\nrepetitions\t" + std::to_string(repetitions) +
                     "\nreports_per_second\t" + fixed(r.median_rate, 2) + "\n";
  std::cout << text;
  if (!a.out.empty()) write_text(a.out, text);
  return 0;
}

std::string read_record(const fs::path& path, const std::string& key) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  for (std::string line; std::getline(in, line);) {
    const auto tab = line.find('\t');
    if (tab != std::string::npos && line.substr(0, tab) == key) return line.substr(tab + 1);
  }
  throw DataError(path.string() + " has no '" + key + "' record");
}

int run_plot_data(const std::vector<std::string>& runs, const std::string& out_path) {
  std::string out = "param_count\tmacro_auc\tn_layers\thidden\trun\n";
  for (const auto& dir : runs) {
    const RunConfig cfg = load_run_config(fs::path(dir) / "config.txt");
    const std::string auc = read_record(fs::path(dir) / "metrics.txt", "macro_auc");
    out += std::to_string(count_parameters(cfg.train.n_layers, cfg.train.hidden)) + "\t" + auc + "\t" +
           std::to_string(cfg.train.n_layers) + "\t" + std::to_string(cfg.train.hidden) + "\t" + dir + "\n";
  }
  if (out_path.empty()) {
    std::cout << out;
  } else {
    write_text(out_path, out);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"report-kg: ontology-grounded report graphs, graph attention classification and "
               "variational distillation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "report-kg 0.1.0");

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "generate a synthetic labelled corpus");
  generate->add_option("--ontology", gen.ontology, "ontology file")->required();
  generate->add_option("--spec", gen.spec, "generator spec file")->required();
  generate->add_option("--out", gen.out, "corpus file to write")->required();
  generate->add_option_function<std::uint64_t>(
      "--seed",
      [&](const std::uint64_t& s) {
        gen.seed = s;
        gen.seed_given = true;
      },
      "seed (overrides the spec)");
  generate->add_option("--n", gen.n, "number of reports (overrides the spec)");
  generate->add_option("--languages", gen.languages, "comma-separated languages (overrides the spec)");
  generate->add_flag("--parallel", gen.parallel, "render every report in every language");

  GraphArgs graph_args;
  auto add_graph_options = [&](CLI::App* cmd) {
    cmd->add_option("--ontology", graph_args.ontology, "ontology file")->required();
    cmd->add_option("--corpus", graph_args.corpus, "corpus file")->required();
    cmd->add_option("--embeddings", graph_args.embeddings, "concept embedding table");
    cmd->add_flag("--no-global", graph_args.no_global, "drop the global node");
    cmd->add_flag("--no-sentence", graph_args.no_sentence, "drop sentence nodes");
    cmd->add_flag("--no-concept-edges", graph_args.no_concept_edges, "drop concept-concept edges");
    cmd->add_flag("--omit-global-edges", graph_args.omit_global_edges, "leave global edges out of DOT output");
    cmd->add_option("--hops", graph_args.hops, "relation path length for concept edges")->check(CLI::PositiveNumber);
  };
  auto* build = app.add_subcommand("build-graph", "build report graphs and write DOT/JSON files");
  add_graph_options(build);
  build->add_option("--out", graph_args.out, "output directory")->required();
  build->add_option("--format", graph_args.format, "dot, json or both")
      ->check(CLI::IsMember({"dot", "json", "both"}));
  auto* export_cmd = app.add_subcommand("export-graph", "export one report graph");
  add_graph_options(export_cmd);
  export_cmd->add_option("--id", graph_args.id, "report id")->required();
  export_cmd->add_option("--format", graph_args.format, "dot or json")->check(CLI::IsMember({"dot", "json"}));
  export_cmd->add_option("--out", graph_args.out, "output file (default standard output)");

  RunArgs run;
  auto* train_cmd = app.add_subcommand("train", "train the graph classifier");
  add_run_options(train_cmd, run, true);

  std::string mode = "both";
  auto* distill = app.add_subcommand("distill", "train image-only and/or distilled image models");
  add_run_options(distill, run, true);
  distill->add_option("--mode", mode, "image_only, vkd or both")
      ->check(CLI::IsMember({"image_only", "vkd", "both"}));

  EvalArgs eval;
  auto* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint on a labelled corpus");
  evaluate->add_option("--checkpoint", eval.checkpoint, "classifier checkpoint")->required();
  evaluate->add_option("--corpus", eval.corpus, "labelled corpus")->required();
  evaluate->add_option("--ontology", eval.ontology, "ontology file")->required();
  evaluate->add_option("--embeddings", eval.embeddings, "concept embedding table");
  evaluate->add_option("--threshold", eval.threshold, "probability cut-off")->check(CLI::Range(0.0, 1.0));
  evaluate->add_option("--out", eval.out, "write metric records here");

  auto* classify = app.add_subcommand("classify", "print label probabilities for reports");
  classify->add_option("--checkpoint", eval.checkpoint, "classifier checkpoint")->required();
  classify->add_option("--ontology", eval.ontology, "ontology file")->required();
  classify->add_option("--embeddings", eval.embeddings, "concept embedding table");
  classify->add_option("--corpus", eval.corpus, "corpus file");
  classify->add_option("--text", eval.text, "report text");
  classify->add_option("--lang", eval.lang, "language of --text");
  classify->add_option("--out", eval.out, "output file (default standard output)");

  std::string bench_checkpoint;
  std::size_t repetitions = 3;
  auto* bench = app.add_subcommand("benchmark", "measure end-to-end inference throughput");
  add_run_options(bench, run, false);
  bench->add_option("--checkpoint", bench_checkpoint, "classifier checkpoint (default: untrained model from --config)");
  bench->add_option("--repetitions", repetitions, "timed passes; the median is reported")
      ->check(CLI::PositiveNumber);

  std::vector<std::string> runs;
  std::string plot_out;
  auto* plot = app.add_subcommand("plot-data", "tabulate parameter count against test macro-AUC");
  plot->add_option("runs", runs, "train output directories")->required();
  plot->add_option("--out", plot_out, "output file (default standard output)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (generate->parsed()) return run_generate(gen);
    if (build->parsed()) return run_build_graph(graph_args);
    if (export_cmd->parsed()) return run_export_graph(graph_args);
    if (train_cmd->parsed()) return run_train(run);
    if (distill->parsed()) return run_distill(run, mode);
    if (evaluate->parsed()) return run_evaluate(eval);
    if (classify->parsed()) return run_classify(eval);
    if (bench->parsed()) return run_benchmark(run, bench_checkpoint, repetitions);
    if (plot->parsed()) return run_plot_data(runs, plot_out);
  } catch (const NumericError& e) {
    std::cerr << "report-kg: numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "report-kg: error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
