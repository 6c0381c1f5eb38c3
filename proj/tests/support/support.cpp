#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "report_kg/errors.hpp"
#include "report_kg/vkd.hpp"

namespace rkg::testing {

std::filesystem::path data_dir() { return REPORT_KG_DATA_DIR; }

std::filesystem::path cli_path() {
#ifdef REPORT_KG_CLI_PATH
  return REPORT_KG_CLI_PATH;
#else
  return {};
#endif
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- finite differences ------------------------------------------------

GradCheck grad_check(const LeafFn& fn, const std::vector<Tensor>& leaves, double eps, double floor) {
  std::vector<Tensor> mut = leaves;
  for (auto& t : mut) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tensor weights;
  {
    const Tensor probe = fn(mut);
    if (probe.size() != 1) {
      Rng r(0x5eed + probe.size());
      std::vector<double> w(probe.size());
      for (auto& x : w) x = 0.5 + r.uniform();
      for (auto& x : w)
        if (r.bernoulli(0.5)) x = -x;
      weights = Tensor::from_data(probe.shape(), std::move(w));
    }
  }
  auto loss_of = [&] {
    const Tensor out = fn(mut);
    return weights.defined() ? sum(mul(out, weights)) : sum(out);
  };

  backward(loss_of());
  std::vector<std::vector<double>> analytic;
  for (const auto& t : mut) {
    std::vector<double> g(t.size(), 0.0);
    if (!t.grad().empty()) std::copy(t.grad().begin(), t.grad().end(), g.begin());
    analytic.push_back(std::move(g));
  }

  GradCheck result;
  for (std::size_t k = 0; k < mut.size(); ++k) {
    auto data = mut[k].mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double orig = data[i];
      data[i] = orig + eps;
      const double fp = loss_of().item();
      data[i] = orig - eps;
      const double fm = loss_of().item();
      data[i] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[k][i];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++result.checked;
      if (err > result.max_rel_err || !std::isfinite(err)) {
        result.max_rel_err = std::isfinite(err) ? err : INFINITY;
        result.worst = "leaf " + std::to_string(k) + " element " + std::to_string(i) + ": analytic " +
                       std::to_string(a) + " numeric " + std::to_string(numeric);
      }
    }
  }
  return result;
}

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = scale * rng.normal();
  return Tensor::from_data(std::move(shape), std::move(v), true);
}

// Values at least `gap` away from every kink in `kinks`.
Tensor away_from(Rng& rng, Shape shape, std::vector<double> kinks, double gap, double scale = 1.0) {
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) {
    do {
      x = scale * rng.normal();
    } while (std::any_of(kinks.begin(), kinks.end(), [&](double k) { return std::abs(x - k) < gap; }));
  }
  return Tensor::from_data(std::move(shape), std::move(v), true);
}

using Made = std::pair<std::vector<Tensor>, LeafFn>;

GradCase unary_case(std::string name, std::function<Tensor(const Tensor&)> f,
                    std::function<Tensor(Rng&)> init) {
  return {std::move(name), [f, init](Rng& rng) -> Made {
            return {{init(rng)}, [f](const std::vector<Tensor>& l) { return f(l[0]); }};
          }};
}

GatLayerParams small_layer(Rng& rng, std::size_t in, std::size_t out) {
  GatLayerParams layer;
  layer.weight = random_tensor(rng, {out, in}, 0.7);
  layer.attention = random_tensor(rng, {2 * out, 1}, 0.7);
  return layer;
}

Labels random_labels(Rng& rng) {
  Labels y{};
  for (auto& v : y) v = rng.bernoulli(0.4) ? 1 : 0;
  return y;
}

std::vector<Tensor> leaves_of(const ParamSet& params) {
  std::vector<Tensor> out;
  for (const auto& e : params) out.push_back(e.tensor);
  return out;
}

VkdModel small_vkd(Rng& rng) {
  VkdConfig cfg;
  cfg.hidden = 4;
  cfg.latent = 3;
  cfg.image_dim = 5;
  cfg.image_hidden = 4;
  cfg.decoder_hidden = 6;
  return make_vkd_model(cfg, rng, 3);
}

}  // namespace

std::vector<GradCase> gradient_cases() {
  std::vector<GradCase> cases;
  auto binary = [&](std::string name, std::function<Tensor(const Tensor&, const Tensor&)> f, Shape sa,
                    Shape sb) {
    cases.push_back({std::move(name), [f, sa, sb](Rng& rng) -> Made {
                       return {{random_tensor(rng, sa), random_tensor(rng, sb)},
                               [f](const std::vector<Tensor>& l) { return f(l[0], l[1]); }};
                     }});
  };
  binary("matmul", [](const Tensor& a, const Tensor& b) { return matmul(a, b); }, {3, 4}, {4, 2});
  binary("add", [](const Tensor& a, const Tensor& b) { return add(a, b); }, {3, 4}, {3, 4});
  binary("sub", [](const Tensor& a, const Tensor& b) { return sub(a, b); }, {3, 4}, {3, 4});
  binary("mul", [](const Tensor& a, const Tensor& b) { return mul(a, b); }, {3, 4}, {3, 4});
  binary("add_bias", [](const Tensor& a, const Tensor& b) { return add_bias(a, b); }, {3, 4}, {1, 4});
  binary("concat_rows", [](const Tensor& a, const Tensor& b) { return concat({a, b}, 0); }, {2, 3}, {1, 3});
  binary("concat_cols", [](const Tensor& a, const Tensor& b) { return concat({a, b}, 1); }, {2, 3}, {2, 2});
  binary("aggregate_neighbors", [](const Tensor& w, const Tensor& v) { return aggregate_neighbors(w, v); },
         {3, 4}, {4, 2});

  auto normal = [](Shape s, double scale = 1.0) {
    return [s, scale](Rng& rng) { return random_tensor(rng, s, scale); };
  };
  cases.push_back(unary_case("transpose", [](const Tensor& a) { return transpose(a); }, normal({3, 4})));
  cases.push_back(unary_case("reshape", [](const Tensor& a) { return reshape(a, {2, 6}); }, normal({3, 4})));
  cases.push_back(unary_case("scale", [](const Tensor& a) { return scale(a, -1.7); }, normal({3, 4})));
  cases.push_back(unary_case("add_scalar", [](const Tensor& a) { return add_scalar(a, 0.3); }, normal({3, 4})));
  cases.push_back(unary_case("slice_rows", [](const Tensor& a) { return slice_rows(a, 1, 3); }, normal({4, 3})));
  cases.push_back(unary_case("exp", [](const Tensor& a) { return exp(a); }, normal({3, 3}, 0.7)));
  cases.push_back(unary_case("expm1", [](const Tensor& a) { return expm1(a); }, normal({3, 3}, 0.7)));
  cases.push_back(unary_case("log", [](const Tensor& a) { return log(a); }, [](Rng& rng) {
    std::vector<double> v(9);
    for (auto& x : v) x = 0.5 + 2.5 * rng.uniform();
    return Tensor::from_data({3, 3}, std::move(v), true);
  }));
  cases.push_back(unary_case("leaky_relu", [](const Tensor& a) { return leaky_relu(a, 0.2); },
                             [](Rng& rng) { return away_from(rng, {3, 4}, {0.0}, 0.05); }));
  cases.push_back(unary_case("elu", [](const Tensor& a) { return elu(a); }, normal({3, 4})));
  cases.push_back(unary_case("sigmoid", [](const Tensor& a) { return sigmoid(a); }, normal({3, 4}, 2.0)));
  cases.push_back(unary_case("softplus", [](const Tensor& a) { return softplus(a); }, normal({3, 4}, 3.0)));
  cases.push_back(unary_case("clamp", [](const Tensor& a) { return clamp(a, -1.0, 1.0); },
                             [](Rng& rng) { return away_from(rng, {3, 4}, {-1.0, 1.0}, 0.05, 1.5); }));
  cases.push_back(unary_case("softmax_rows", [](const Tensor& a) { return softmax(a, 1); }, normal({3, 4})));
  cases.push_back(unary_case("softmax_cols", [](const Tensor& a) { return softmax(a, 0); }, normal({3, 4})));
  cases.push_back({"softmax_masked", [](Rng& rng) -> Made {
                     Mask mask(16, 0);
                     for (std::size_t r = 0; r < 4; ++r) {
                       mask[r * 4 + r] = 1;
                       for (std::size_t c = 0; c < 4; ++c)
                         if (rng.bernoulli(0.5)) mask[r * 4 + c] = 1;
                     }
                     return {{random_tensor(rng, {4, 4})},
                             [mask](const std::vector<Tensor>& l) { return softmax(l[0], 1, mask); }};
                   }});
  cases.push_back(unary_case("max_pool_rows", [](const Tensor& a) { return max_pool(a, 0); }, normal({4, 3})));
  cases.push_back(unary_case("max_pool_cols", [](const Tensor& a) { return max_pool(a, 1); }, normal({4, 3})));
  cases.push_back(unary_case("sum", [](const Tensor& a) { return sum(a); }, normal({3, 4})));
  cases.push_back(unary_case("mean", [](const Tensor& a) { return mean(a); }, normal({3, 4})));
  cases.push_back(unary_case("dropout", [](const Tensor& a) { return dropout(a, 0.3, 77, true); }, normal({3, 4})));
  cases.push_back(unary_case("gather_rows", [](const Tensor& a) {
    const std::vector<std::size_t> idx{2, 0, 2};
    return gather_rows(a, idx);
  }, normal({3, 2})));
  cases.push_back(unary_case("scatter_add_rows", [](const Tensor& a) {
    const std::vector<std::size_t> idx{1, 0, 1};
    return scatter_add_rows(a, idx, 3);
  }, normal({3, 2})));

  cases.push_back({"attention_scores", [](Rng& rng) -> Made {
                     const GraphInput g = random_graph_input(rng, 4, 3);
                     GatLayerParams layer = small_layer(rng, 3, 4);
                     return {{layer.weight, layer.attention}, [g, layer](const std::vector<Tensor>&) {
                               return attention_scores(layer, g.features, g.mask);
                             }};
                   }});
  cases.push_back({"gat_layer", [](Rng& rng) -> Made {
                     const GraphInput g = random_graph_input(rng, 4, 3);
                     GatLayerParams layer = small_layer(rng, 3, 4);
                     ForwardOptions opts{.train = true, .dropout = 0.25, .attn_dropout = true, .seed = 5};
                     return {{layer.weight, layer.attention}, [g, layer, opts](const std::vector<Tensor>&) {
                               return gat_layer_forward(layer, g.features, g.mask, opts, 1);
                             }};
                   }});
  cases.push_back({"encode_graph", [](Rng& rng) -> Made {
                     const GraphInput g = random_graph_input(rng, 5, 3);
                     GatStack stack{{small_layer(rng, 3, 4), small_layer(rng, 4, 4)}, 3, 4};
                     std::vector<Tensor> leaves;
                     for (const auto& l : stack.layers) {
                       leaves.push_back(l.weight);
                       leaves.push_back(l.attention);
                     }
                     return {leaves, [g, stack](const std::vector<Tensor>&) {
                               return encode_graph(stack, g, ForwardOptions{});
                             }};
                   }});
  cases.push_back({"bce_loss", [](Rng& rng) -> Made {
                     const Labels y = random_labels(rng);
                     return {{random_tensor(rng, {1, kNumLabels}, 3.0)},
                             [y](const std::vector<Tensor>& l) { return bce_loss(l[0], y); }};
                   }});
  cases.push_back({"classifier_bce", [](Rng& rng) -> Made {
                     const GraphInput g = random_graph_input(rng, 4, 3);
                     GatStack stack = make_gat_stack(3, 4, 1, rng);
                     const std::vector<std::size_t> dims{5, kNumLabels};
                     MlpParams mlp = make_mlp(4, dims, rng);
                     ParamSet params;
                     stack.register_params(params);
                     mlp.register_params(params);
                     const Labels y = random_labels(rng);
                     ForwardOptions opts{.train = true, .dropout = 0.2, .attn_dropout = false, .seed = 9};
                     return {leaves_of(params), [g, stack, mlp, y, opts](const std::vector<Tensor>&) {
                               return bce_loss(classifier_logits(stack, mlp, g, opts), y);
                             }};
                   }});
  cases.push_back({"kl_gaussians", [](Rng& rng) -> Made {
                     return {{random_tensor(rng, {1, 4}), random_tensor(rng, {1, 4}, 0.5),
                              random_tensor(rng, {1, 4}), random_tensor(rng, {1, 4}, 0.5)},
                             [](const std::vector<Tensor>& l) {
                               return kl_gaussians(GaussianParams{l[0], l[1]}, GaussianParams{l[2], l[3]});
                             }};
                   }});
  cases.push_back({"reparameterize", [](Rng& rng) -> Made {
                     return {{random_tensor(rng, {1, 4}), random_tensor(rng, {1, 4}, 0.5)},
                             [](const std::vector<Tensor>& l) {
                               return reparameterize(GaussianParams{l[0], l[1]}, 31);
                             }};
                   }});
  cases.push_back({"elbo_loss", [](Rng& rng) -> Made {
                     const GraphInput g = random_graph_input(rng, 4, 3);
                     VkdModel model = small_vkd(rng);
                     const Tensor image = random_tensor(rng, {1, 5}).detach();
                     const Labels y = random_labels(rng);
                     return {leaves_of(model.params()), [g, model, image, y](const std::vector<Tensor>&) {
                               return elbo_loss(model, g, image, y, 13, true, 0.7, 0.2).loss;
                             }};
                   }});
  cases.push_back({"image_only_loss", [](Rng& rng) -> Made {
                     VkdModel model = small_vkd(rng);
                     const Tensor image = random_tensor(rng, {1, 5}).detach();
                     const Labels y = random_labels(rng);
                     return {leaves_of(model.params()), [model, image, y](const std::vector<Tensor>&) {
                               return image_only_loss(model, image, y, 17, true, 0.2);
                             }};
                   }});
  return cases;
}

// ---- fixtures ----------------------------------------------------------

Ontology tiny_ontology() {
  return Ontology::parse(
      "# tiny fixture\n"
      "C\tC0000001\t100001\ten:alpha opacity|alpha\tes:opacidad alfa\n"
      "C\tC0000002\t100002\ten:pleural effusion\tes:derrame pleural\n"
      "C\tC0000003\t100003\ten:effusion\tes:derrame\n"
      "C\tC0000004\t100004\ten:beta\tes:beta\n"
      "C\tC0000005\t100005\ten:gamma\tes:gamma\n"
      "R\tC0000001\tC0000005\tfinding_site\n"
      "R\tC0000002\tC0000003\tis_a\n");
}

EmbeddingTable tiny_embeddings(std::size_t dim) {
  EmbeddingTable table(dim);
  const Ontology o = tiny_ontology();
  std::size_t k = 0;
  for (const auto& [id, c] : o.concepts()) {
    std::vector<double> v(dim);
    for (std::size_t i = 0; i < dim; ++i) v[i] = std::sin(0.37 * static_cast<double>(i + 1) * static_cast<double>(k + 1));
    table.add(id, std::move(v));
    ++k;
  }
  return table;
}

std::vector<Mention> six_node_mentions() {
  return {{kA, 0, 0, 1}, {kB, 0, 1, 2}, {kB, 1, 0, 1}, {kC, 1, 1, 2}};
}

const Ontology& shipped_ontology() {
  static const Ontology o = Ontology::load(data_dir() / "ontology.tsv");
  return o;
}

const EmbeddingTable& shipped_embeddings() {
  static const EmbeddingTable e = EmbeddingTable::load(data_dir() / "embeddings.txt");
  return e;
}

GeneratorSpec shipped_spec() { return load_generator_spec(data_dir() / "generator.spec"); }

GraphInput random_graph_input(Rng& rng, std::size_t n, std::size_t dim, double edge_prob) {
  std::vector<double> x(n * dim);
  for (auto& v : x) v = rng.normal();
  GraphInput g;
  g.features = Tensor::from_data({n, dim}, std::move(x));
  g.mask.assign(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    g.mask[i * n + i] = 1;
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.bernoulli(edge_prob)) g.mask[i * n + j] = g.mask[j * n + i] = 1;
  }
  return g;
}

// ---- oracles -----------------------------------------------------------

EdgeCountOracle edge_count_oracle(const Ontology& ontology, const std::vector<Mention>& mentions,
                                  std::size_t n_sentences) {
  std::set<ConceptId> concepts;
  std::set<std::pair<std::size_t, ConceptId>> incidences;
  for (const auto& m : mentions) {
    concepts.insert(m.concept_id);
    incidences.insert({m.sentence_index, m.concept_id});
  }
  EdgeCountOracle out;
  const std::vector<ConceptId> list(concepts.begin(), concepts.end());
  for (std::size_t i = 0; i < list.size(); ++i)
    for (std::size_t j = i + 1; j < list.size(); ++j)
      if (ontology.related(list[i], list[j])) ++out.related_pairs;
  out.incidences = incidences.size();
  out.sentences = n_sentences;
  out.concepts = concepts.size();
  return out;
}

bool is_subgraph(const ReportGraph& part, const ReportGraph& whole) {
  std::vector<std::size_t> map(part.nodes.size());
  for (std::size_t i = 0; i < part.nodes.size(); ++i) {
    map[i] = whole.find(part.nodes[i]);
    if (map[i] == whole.nodes.size()) return false;
  }
  std::set<GraphEdge> edges(whole.edges.begin(), whole.edges.end());
  for (const auto& e : part.edges) {
    const std::size_t a = std::min(map[e.a], map[e.b]), b = std::max(map[e.a], map[e.b]);
    if (!edges.count(GraphEdge{a, b, e.kind})) return false;
  }
  return true;
}

double auc_oracle(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return pairs == 0 ? -1.0 : wins / static_cast<double>(pairs);
}

namespace {

std::vector<double> project(const GatLayerParams& layer, const std::vector<double>& x, std::size_t n) {
  const std::size_t fin = layer.in_dim(), fout = layer.out_dim();
  const auto w = layer.weight.data();
  std::vector<double> wh(n * fout, 0.0);
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t o = 0; o < fout; ++o) {
      double s = 0.0;
      for (std::size_t f = 0; f < fin; ++f) s += w[o * fin + f] * x[p * fin + f];
      wh[p * fout + o] = s;
    }
  return wh;
}

double elu_scalar(double x) { return x > 0.0 ? x : std::expm1(x); }

}  // namespace

std::vector<double> attention_oracle(const GatLayerParams& layer, const std::vector<double>& features,
                                     std::size_t n, const std::vector<std::uint8_t>& mask) {
  const std::size_t fout = layer.out_dim();
  const auto a = layer.attention.data();
  const std::vector<double> wh = project(layer, features, n);
  std::vector<double> alpha(n * n, 0.0);
  for (std::size_t p = 0; p < n; ++p) {
    std::vector<double> e(n, 0.0);
    double mx = -INFINITY;
    for (std::size_t q = 0; q < n; ++q) {
      if (!mask[p * n + q]) continue;
      double s = 0.0;
      for (std::size_t o = 0; o < fout; ++o) s += a[o] * wh[p * fout + o] + a[fout + o] * wh[q * fout + o];
      e[q] = s > 0.0 ? s : layer.leaky_slope * s;
      mx = std::max(mx, e[q]);
    }
    double z = 0.0;
    for (std::size_t q = 0; q < n; ++q)
      if (mask[p * n + q]) z += std::exp(e[q] - mx);
    for (std::size_t q = 0; q < n; ++q)
      if (mask[p * n + q]) alpha[p * n + q] = std::exp(e[q] - mx) / z;
  }
  return alpha;
}

std::array<double, kNumLabels> classifier_oracle(const ReportClassifier& model, const GraphInput& graph) {
  const std::size_t n = graph.n_nodes();
  std::vector<double> h(graph.features.data().begin(), graph.features.data().end());
  for (const auto& layer : model.encoder.layers) {
    const std::size_t fout = layer.out_dim();
    const std::vector<double> alpha = attention_oracle(layer, h, n, graph.mask);
    const std::vector<double> wh = project(layer, h, n);
    std::vector<double> next(n * fout, 0.0);
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t o = 0; o < fout; ++o) {
        double s = 0.0;
        for (std::size_t q = 0; q < n; ++q) s += alpha[p * n + q] * wh[q * fout + o];
        next[p * fout + o] = elu_scalar(s);
      }
    h = std::move(next);
  }
  const std::size_t hidden = model.encoder.layers.back().out_dim();
  std::vector<double> x(hidden, -INFINITY);
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t o = 0; o < hidden; ++o) x[o] = std::max(x[o], h[p * hidden + o]);
  for (std::size_t l = 0; l < model.head.layers.size(); ++l) {
    const auto& layer = model.head.layers[l];
    const std::size_t in = layer.weight.rows(), out = layer.weight.cols();
    std::vector<double> y(out);
    for (std::size_t o = 0; o < out; ++o) {
      double s = layer.bias.data()[o];
      for (std::size_t i = 0; i < in; ++i) s += x[i] * layer.weight.data()[i * out + o];
      y[o] = l + 1 < model.head.layers.size() ? elu_scalar(s) : s;
    }
    x = std::move(y);
  }
  std::array<double, kNumLabels> logits{};
  std::copy(x.begin(), x.end(), logits.begin());
  return logits;
}

bool rows_permuted_exactly(const Tensor& out, const Tensor& permuted, const std::vector<std::size_t>& perm) {
  if (out.shape() != permuted.shape()) return false;
  const std::size_t m = out.cols();
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t c = 0; c < m; ++c)
      if (permuted.at(i, c) != out.at(perm[i], c)) return false;
  return true;
}

GraphInput permute_graph(const GraphInput& graph, const std::vector<std::size_t>& perm) {
  const std::size_t n = graph.n_nodes(), f = graph.features.cols();
  const auto x = graph.features.data();
  std::vector<double> xp(n * f);
  GraphInput out;
  out.mask.assign(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(perm[i] * f), f,
                xp.begin() + static_cast<std::ptrdiff_t>(i * f));
    for (std::size_t j = 0; j < n; ++j) out.mask[i * n + j] = graph.mask[perm[i] * n + perm[j]];
  }
  out.features = Tensor::from_data({n, f}, std::move(xp));
  return out;
}

std::vector<std::size_t> random_permutation(Rng& rng, std::size_t n) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  for (std::size_t k = n; k > 1; --k) std::swap(p[k - 1], p[rng.below(k)]);
  return p;
}

}  // namespace rkg::testing
