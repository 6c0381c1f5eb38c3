#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "report_kg/corpus.hpp"
#include "report_kg/graph_builder.hpp"
#include "report_kg/trainer.hpp"
#include "report_kg/vkd.hpp"

namespace rkg {

// Everything a CLI run can be configured with. File layout: one key=value per
// line, '#' starts a comment. Unknown keys are rejected.
struct RunConfig {
  TrainConfig train;
  AblationConfig graph;
  SplitRatios split;
  double threshold = 0.5;
  // VKD-only settings; the encoder size, optimizer and stopping rule come from
  // `train`.
  std::size_t latent = 32;
  std::size_t image_dim = 256;
  std::size_t image_hidden = 128;
  std::size_t decoder_hidden = 128;
  double beta = 1.0;
  double beta_warmup = 0.1;
  double image_signal = 0.25;
  double image_noise = 1.0;

  VkdConfig vkd() const;
};

struct ConfigKey {
  std::string name;
  std::string description;
};

// Every accepted key with its documentation, in echo order.
const std::vector<ConfigKey>& config_keys();

// Applies one setting. Throws DataError for unknown keys or bad values.
void set_config_value(RunConfig& config, std::string_view key, std::string_view value);
std::string get_config_value(const RunConfig& config, std::string_view key);

// Parses onto `base`, so file values override defaults.
RunConfig parse_run_config(std::string_view text, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});
// key=value lines for every key; parse_run_config(format_run_config(c)) == c.
std::string format_run_config(const RunConfig& config, bool with_comments = false);
void validate_run_config(const RunConfig& config);

}  // namespace rkg
