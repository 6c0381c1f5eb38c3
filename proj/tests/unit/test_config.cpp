#include <doctest.h>

#include "report_kg/config.hpp"
#include "report_kg/errors.hpp"
#include "support.hpp"

using namespace rkg;

TEST_SUITE("config") {
  TEST_CASE("defaults follow the small preset shape") {
    const RunConfig c;
    CHECK(c.train.n_layers == 1);
    CHECK(c.train.hidden == 512);
    CHECK(c.train.lr == 1e-4);
    CHECK(c.train.batch_size == 16);
    CHECK(c.train.max_epochs == 100);
    CHECK(c.train.early_stop_tolerance == 0.01);
    CHECK(c.train.patience == 5);
    CHECK(c.train.dropout == 0.5);
  }

  TEST_CASE("parse overrides and round-trips") {
    const RunConfig c = parse_run_config("# comment\nn_layers = 3\nhidden=1024\nuse_global=false\nlr=5e-4\n");
    CHECK(c.train.n_layers == 3);
    CHECK(c.train.hidden == 1024);
    CHECK(c.train.lr == 5e-4);
    CHECK_FALSE(c.graph.use_global);
    const RunConfig back = parse_run_config(format_run_config(c, true));
    CHECK(format_run_config(back) == format_run_config(c));
    CHECK(get_config_value(c, "hidden") == "1024");
  }

  TEST_CASE("unknown keys and bad values are rejected with line numbers") {
    CHECK_THROWS_WITH_AS(parse_run_config("hidden=4\nwidth=3\n"), doctest::Contains("line 2"), DataError);
    CHECK_THROWS_AS(parse_run_config("hidden=abc\n"), DataError);
    CHECK_THROWS_AS(parse_run_config("use_global=maybe\n"), DataError);
    RunConfig c;
    CHECK_THROWS_AS(set_config_value(c, "nope", "1"), DataError);
  }

  TEST_CASE("validation catches impossible settings") {
    RunConfig c;
    c.split = SplitRatios{0.5, 0.2, 0.2};
    CHECK_THROWS_AS(validate_run_config(c), DataError);
    c = RunConfig{};
    c.train.lr = -1.0;
    CHECK_THROWS_AS(validate_run_config(c), DataError);
    CHECK_NOTHROW(validate_run_config(RunConfig{}));
  }

  TEST_CASE("shipped presets load") {
    const RunConfig small = load_run_config(REPORT_KG_CONFIG_DIR "/small.cfg");
    const RunConfig large = load_run_config(REPORT_KG_CONFIG_DIR "/large.cfg");
    CHECK(small.train.n_layers == 1);
    CHECK(small.train.hidden == 512);
    CHECK(large.train.n_layers == 3);
    CHECK(large.train.hidden == 1024);
  }

  TEST_CASE("every key is documented and settable") {
    RunConfig c;
    for (const auto& k : config_keys()) {
      CHECK_FALSE(k.description.empty());
      const std::string v = get_config_value(c, k.name);
      CHECK_NOTHROW(set_config_value(c, k.name, v));
    }
  }
}
