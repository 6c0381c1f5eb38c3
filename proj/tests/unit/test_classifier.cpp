#include <doctest.h>

#include <cmath>

#include "report_kg/classifier.hpp"
#include "report_kg/errors.hpp"
#include "support.hpp"

using namespace rkg;
using namespace rkg::testing;

TEST_SUITE("classifier") {
  TEST_CASE("max-pool readout") {
    const Tensor pooled = max_pool(Tensor::from_data({2, 2}, {1, 5, 3, 2}), 0);
    CHECK(pooled.at(0, 0) == 3.0);
    CHECK(pooled.at(0, 1) == 5.0);
    const Tensor one = Tensor::from_data({1, 3}, {0.1, -0.2, 0.3});
    const Tensor same = max_pool(one, 0);
    for (std::size_t i = 0; i < 3; ++i) CHECK(same.data()[i] == one.data()[i]);
  }

  TEST_CASE("logits match the straight-line oracle") {
    Rng rng(21);
    const ReportGraph graph = build_graph(tiny_ontology(), six_node_mentions(), 2, tiny_embeddings());
    for (std::size_t layers : {1, 2}) {
      const ReportClassifier model = make_report_classifier(layers, 16, rng);
      const GraphInput in = make_graph_input(graph);
      const Prediction p = classify_report(model, in);
      const auto oracle = classifier_oracle(model, in);
      for (std::size_t k = 0; k < kNumLabels; ++k) {
        CHECK(std::abs(p.logits[k] - oracle[k]) <= 1e-10);
        CHECK(p.probabilities[k] == doctest::Approx(1.0 / (1.0 + std::exp(-oracle[k]))));
      }
    }
  }

  TEST_CASE("BCE examples") {
    Labels y{};
    y[3] = 1;
    CHECK(bce_loss(Tensor::zeros({1, kNumLabels}), y).item() == doctest::Approx(std::log(2.0)).epsilon(1e-15));

    std::vector<double> big(kNumLabels, -10.0);
    Labels first{};
    first[0] = 1;
    big[0] = 10.0;
    const double loss = bce_loss(Tensor::from_data({1, kNumLabels}, big), first).item();
    CHECK(std::isfinite(loss));
    CHECK(loss < 1e-4);
    // Naive formula for comparison.
    double naive = 0.0;
    for (std::size_t k = 0; k < kNumLabels; ++k) {
      const double p = 1.0 / (1.0 + std::exp(-big[k]));
      naive -= first[k] ? std::log(p) : std::log(1.0 - p);
    }
    CHECK(loss == doctest::Approx(naive / kNumLabels).epsilon(1e-9));

    std::vector<double> huge(kNumLabels, -1000.0);
    CHECK(std::isfinite(bce_loss(Tensor::from_data({1, kNumLabels}, huge), first).item()));

    Prediction pred = to_prediction(Tensor::from_data({1, kNumLabels}, big));
    CHECK(bce_loss(pred, first) == doctest::Approx(loss).epsilon(1e-12));
  }

  TEST_CASE("parameter count of the small preset") {
    CHECK(count_parameters(1, 512) == 501006);
    Rng rng(1);
    const ReportClassifier m = make_report_classifier(1, 512, rng);
    CHECK(count_parameters(m.encoder, m.head) == 501006);
    CHECK(m.params().element_count() == 501006);
    CHECK(m.encoder.parameter_count() == 103424);
    CHECK(m.head.parameter_count() == 397582);
  }

  TEST_CASE("an extra layer adds F'^2 + 2F' and counts grow with size") {
    for (std::size_t h : {64, 512, 1024}) {
      CHECK(count_parameters(3, h) - count_parameters(2, h) == h * h + 2 * h);
    }
    const double ratio = static_cast<double>(count_parameters(4, 2048) - count_parameters(3, 2048)) /
                         static_cast<double>(count_parameters(4, 1024) - count_parameters(3, 1024));
    CHECK(ratio == doctest::Approx(4.0).epsilon(0.01));
    for (std::size_t l = 1; l < 12; ++l) CHECK(count_parameters(l + 1, 512) > count_parameters(l, 512));
    CHECK(count_parameters(1, 1024) > count_parameters(1, 512));
    Rng rng(2);
    const ReportClassifier m = make_report_classifier(3, 64, rng);
    CHECK(count_parameters(m.encoder, m.head) == count_parameters(3, 64));
  }

  TEST_CASE("empty graph is rejected") {
    Rng rng(3);
    const ReportClassifier m = make_report_classifier(1, 8, rng);
    CHECK_THROWS_AS(classify_report(m.encoder, m.head, ReportGraph{}), DataError);
  }

  TEST_CASE("clone is deep") {
    Rng rng(4);
    const ReportClassifier m = make_report_classifier(1, 8, rng);
    ReportClassifier c = m.clone();
    c.encoder.layers[0].weight.mutable_data()[0] += 1.0;
    CHECK(c.encoder.layers[0].weight.data()[0] != m.encoder.layers[0].weight.data()[0]);
  }
}
