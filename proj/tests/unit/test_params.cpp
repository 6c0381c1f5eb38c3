#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "report_kg/errors.hpp"
#include "report_kg/params.hpp"

using namespace rkg;

TEST_SUITE("params") {
  TEST_CASE("first Adam step with unit gradient moves by lr") {
    std::vector<double> p{1.0};
    const std::vector<double> g{1.0};
    AdamMoments m;
    adam_step(p, g, m, 1, AdamConfig{.lr = 0.1});
    CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-7));
  }

  TEST_CASE("zero gradient leaves parameters and decays moments") {
    std::vector<double> p{2.0};
    AdamMoments m{{0.5}, {0.25}};
    adam_step(p, std::vector<double>{0.0}, m, 2, AdamConfig{.lr = 0.1});
    CHECK(m.m[0] == doctest::Approx(0.45));
    CHECK(m.v[0] == doctest::Approx(0.25 * 0.999));
    // A stale first moment still moves the parameter; the gradient itself adds nothing.
    std::vector<double> q{2.0};
    AdamMoments fresh;
    adam_step(q, std::vector<double>{0.0}, fresh, 1, AdamConfig{.lr = 0.1});
    CHECK(q[0] == 2.0);
  }

  TEST_CASE("identical state gives identical updates") {
    std::vector<double> a{1.0, -2.0}, b{1.0, -2.0};
    AdamMoments ma, mb;
    const std::vector<double> g{0.3, -0.7};
    for (int s = 1; s <= 3; ++s) {
      adam_step(a, g, ma, s, AdamConfig{});
      adam_step(b, g, mb, s, AdamConfig{});
    }
    CHECK(a == b);
  }

  TEST_CASE("Adam hand trace over two steps") {
    std::vector<double> p{0.0};
    AdamMoments m;
    const AdamConfig cfg{.lr = 0.01};
    adam_step(p, std::vector<double>{2.0}, m, 1, cfg);
    adam_step(p, std::vector<double>{-1.0}, m, 2, cfg);
    const double m2 = 0.9 * 0.2 + 0.1 * -1.0;
    const double v2 = 0.999 * 0.001 * 4.0 + 0.001 * 1.0;
    const double step2 = cfg.lr * (m2 / (1 - 0.81)) / (std::sqrt(v2 / (1 - 0.999 * 0.999)) + cfg.eps);
    CHECK(p[0] == doctest::Approx(-0.01 - step2).epsilon(1e-9));
  }

  TEST_CASE("non-finite gradients are rejected") {
    std::vector<double> p{1.0};
    AdamMoments m;
    CHECK_THROWS_AS(adam_step(p, std::vector<double>{NAN}, m, 1, AdamConfig{}), NumericError);
  }

  TEST_CASE("ParamSet clone is independent and copy checks shapes") {
    ParamSet a;
    a.add("w", Tensor::row({1.0, 2.0}, true));
    ParamSet b = a.clone();
    b.get("w").node()->value[0] = 9.0;
    CHECK(a.get("w").data()[0] == 1.0);
    a.copy_values_from(b);
    CHECK(a.get("w").data()[0] == 9.0);
    ParamSet c;
    c.add("w", Tensor::row({1.0, 2.0, 3.0}, true));
    CHECK_THROWS(a.copy_values_from(c));
    CHECK(a.element_count() == 2);
  }

  TEST_CASE("checkpoint round-trip is bit exact") {
    Checkpoint c;
    c.meta["model"] = "classifier";
    c.meta["note"] = "two words";
    c.params.add("a", Tensor::from_data({2, 2}, {0.1, 1.0 / 3.0, -2.5e-300, 1e308}, true));
    c.params.add("b", Tensor::row({std::nextafter(1.0, 2.0)}, true));
    const std::string text = serialize_checkpoint(c);
    const Checkpoint back = parse_checkpoint(text);
    CHECK(back.meta == c.meta);
    REQUIRE(back.params.size() == 2);
    for (std::size_t k = 0; k < 2; ++k) {
      const auto& x = c.params.entries()[k].tensor;
      const auto& y = back.params.entries()[k].tensor;
      CHECK(x.shape() == y.shape());
      for (std::size_t i = 0; i < x.size(); ++i) CHECK(x.data()[i] == y.data()[i]);
    }
    CHECK(serialize_checkpoint(back) == text);

    const auto path = std::filesystem::temp_directory_path() / "rkg_unit_checkpoint.txt";
    save_checkpoint(path, c);
    CHECK(serialize_checkpoint(load_checkpoint(path)) == text);
    std::filesystem::remove(path);
  }

  TEST_CASE("malformed checkpoints are data errors") {
    CHECK_THROWS_AS(parse_checkpoint("not a checkpoint"), DataError);
    CHECK_THROWS_AS(parse_checkpoint("report-kg-checkpoint 1\ntensor a 1 3\n1 2\nend\n"), DataError);
  }
}
