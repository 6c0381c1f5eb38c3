#include <doctest.h>

#include <cmath>

#include "report_kg/metrics.hpp"
#include "report_kg/rng.hpp"
#include "support.hpp"

using namespace rkg;
using namespace rkg::testing;

using U8 = std::vector<std::uint8_t>;

TEST_SUITE("metrics") {
  TEST_CASE("AUC examples") {
    CHECK(*roc_auc(std::vector<double>{.9, .8, .3}, U8{1, 1, 0}) == 1.0);
    CHECK(*roc_auc(std::vector<double>{.2, .8}, U8{1, 0}) == 0.0);
    CHECK(*roc_auc(std::vector<double>{.5, .5}, U8{1, 0}) == 0.5);
    CHECK_FALSE(roc_auc(std::vector<double>{.1, .2}, U8{1, 1}).has_value());
    CHECK_THROWS_AS(roc_auc(std::vector<double>{.1}, U8{1, 0}), std::invalid_argument);
  }

  TEST_CASE("AUC equals pair counting on random vectors with ties") {
    Rng rng(5);
    for (int t = 0; t < 200; ++t) {
      const std::size_t n = 2 + rng.below(60);
      std::vector<double> s(n);
      U8 y(n);
      for (std::size_t i = 0; i < n; ++i) {
        s[i] = static_cast<double>(rng.below(8)) / 8.0;
        y[i] = rng.bernoulli(0.3);
      }
      const double oracle = auc_oracle(s, y);
      const auto auc = roc_auc(s, y);
      if (oracle < 0) {
        CHECK_FALSE(auc.has_value());
      } else {
        REQUIRE(auc.has_value());
        CHECK(*auc == doctest::Approx(oracle).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("precision, recall and F1 examples") {
    const auto perfect = prf1(std::vector<double>{.9, .1, .8}, U8{1, 0, 1});
    CHECK(perfect.precision == 1.0);
    CHECK(perfect.recall == 1.0);
    CHECK(perfect.f1 == 1.0);
    const auto none = prf1(std::vector<double>{.1, .1, .2}, U8{1, 0, 1});
    CHECK(none.precision == 0.0);
    CHECK(none.recall == 0.0);
    CHECK(none.f1 == 0.0);
    const auto c = prf1_from_counts(2, 1, 1);
    CHECK(c.precision == doctest::Approx(2.0 / 3.0));
    CHECK(c.recall == doctest::Approx(2.0 / 3.0));
    CHECK(c.f1 == doctest::Approx(2.0 / 3.0));
    // Threshold is inclusive.
    CHECK(prf1(std::vector<double>{.5}, U8{1}, 0.5).recall == 1.0);
  }

  TEST_CASE("P/R/F1 over enumerated confusion counts") {
    for (std::size_t tp = 0; tp <= 6; ++tp)
      for (std::size_t fp = 0; fp <= 6; ++fp)
        for (std::size_t fn = 0; fn <= 6; ++fn) {
          std::vector<double> s;
          U8 y;
          for (std::size_t i = 0; i < tp; ++i) s.push_back(0.9), y.push_back(1);
          for (std::size_t i = 0; i < fp; ++i) s.push_back(0.9), y.push_back(0);
          for (std::size_t i = 0; i < fn; ++i) s.push_back(0.1), y.push_back(1);
          s.push_back(0.1), y.push_back(0);
          const auto r = prf1(s, y);
          const double p = tp + fp ? double(tp) / double(tp + fp) : 0.0;
          const double rc = tp + fn ? double(tp) / double(tp + fn) : 0.0;
          const double f = p + rc > 0 ? 2 * p * rc / (p + rc) : 0.0;
          CHECK(r.precision == doctest::Approx(p));
          CHECK(r.recall == doctest::Approx(rc));
          CHECK(r.f1 == doctest::Approx(f));
        }
  }

  TEST_CASE("evaluation report averages defined labels only") {
    std::vector<std::array<double, kNumLabels>> probs(4);
    std::vector<Labels> labels(4);
    for (std::size_t i = 0; i < 4; ++i) {
      probs[i].fill(0.2);
      labels[i].fill(0);
    }
    // Label 1: perfect ranking. Label 2: inverted. Others constant negative.
    labels[0][1] = labels[1][1] = 1;
    probs[0][1] = probs[1][1] = 0.9;
    labels[2][2] = 1;
    probs[0][2] = 0.7;
    const EvalReport r = evaluate_predictions(probs, labels);
    CHECK(r.defined_labels == 2);
    CHECK(*r.per_label_auc[1] == 1.0);
    CHECK(*r.per_label_auc[2] == doctest::Approx(1.0 / 3.0));
    CHECK_FALSE(r.per_label_auc[0].has_value());
    CHECK(r.macro_auc == doctest::Approx((1.0 + 1.0 / 3.0) / 2.0));
    CHECK(r.n_reports == 4);
    CHECK(format_eval_records(r).find("macro_auc\t") != std::string::npos);
    CHECK(format_eval_table(r).find("Pleural Effusion") != std::string::npos);
  }
}
