#include "report_kg/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "report_kg/errors.hpp"

namespace rkg {

namespace {

std::string fmt(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}
std::string fmt(std::size_t v) { return std::to_string(v); }
std::string fmt(std::uint64_t v, int) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

template <typename T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw DataError("config key '" + std::string(key) + "': bad value '" + std::string(v) + "'");
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(out)) throw DataError("config key '" + std::string(key) + "' must be finite");
  }
  return out;
}

bool parse_flag(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw DataError("config key '" + std::string(key) + "': expected true/false, got '" + std::string(v) + "'");
}

struct Field {
  ConfigKey doc;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define RKG_SIZE(name, member, text)                                                     \
  Field{{name, text},                                                                    \
        [](RunConfig& c, std::string_view v) { c.member = parse_number<std::size_t>(name, v); }, \
        [](const RunConfig& c) { return fmt(c.member); }}
#define RKG_REAL(name, member, text)                                                \
  Field{{name, text},                                                               \
        [](RunConfig& c, std::string_view v) { c.member = parse_number<double>(name, v); }, \
        [](const RunConfig& c) { return fmt(c.member); }}
#define RKG_FLAG(name, member, text)                                              \
  Field{{name, text}, [](RunConfig& c, std::string_view v) { c.member = parse_flag(name, v); }, \
        [](const RunConfig& c) { return fmt(c.member); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> all = {
      RKG_SIZE("n_layers", train.n_layers, "stacked attention layers (default 1)"),
      RKG_SIZE("hidden", train.hidden, "attention layer width F' (default 512)"),
      RKG_REAL("lr", train.lr, "Adam learning rate (default 1e-4)"),
      RKG_SIZE("batch_size", train.batch_size, "graphs per optimizer step (default 16)"),
      RKG_SIZE("max_epochs", train.max_epochs, "epoch limit (default 100)"),
      RKG_REAL("early_stop_tolerance", train.early_stop_tolerance,
               "relative validation macro-AUC gain that counts as progress (default 0.01)"),
      RKG_SIZE("patience", train.patience, "epochs without progress before stopping (default 5)"),
      RKG_REAL("dropout", train.dropout, "dropout rate on layer outputs (default 0.5)"),
      RKG_FLAG("attn_dropout", train.attn_dropout, "also drop attention coefficients (default false)"),
      RKG_REAL("leaky_slope", train.leaky_slope, "LeakyReLU slope in attention logits (default 0.2)"),
      RKG_SIZE("workers", train.workers, "threads for per-graph passes (default 1)"),
      Field{{"seed", "root seed for initialization, shuffling, dropout and splits (default 0)"},
            [](RunConfig& c, std::string_view v) { c.train.seed = parse_number<std::uint64_t>("seed", v); },
            [](const RunConfig& c) { return fmt(c.train.seed, 0); }},
      RKG_FLAG("use_global", graph.use_global, "add the global node (default true)"),
      RKG_FLAG("use_sentence", graph.use_sentence, "add sentence nodes (default true)"),
      RKG_FLAG("use_concept_edges", graph.use_concept_edges, "add concept-concept relation edges (default true)"),
      RKG_SIZE("concept_edge_hops", graph.concept_edge_hops,
               "relation path length that still links two concepts (default 1)"),
      RKG_REAL("split_train", split.train, "training share of report ids (default 0.7)"),
      RKG_REAL("split_val", split.val, "validation share (default 0.1)"),
      RKG_REAL("split_test", split.test, "test share (default 0.2)"),
      RKG_REAL("threshold", threshold, "probability cut-off for precision/recall/F1 (default 0.5)"),
      RKG_SIZE("latent", latent, "VKD latent size D (default 32)"),
      RKG_SIZE("image_dim", image_dim, "synthetic image feature count (default 256)"),
      RKG_SIZE("image_hidden", image_hidden, "prior encoder width (default 128)"),
      RKG_SIZE("decoder_hidden", decoder_hidden, "VKD decoder width (default 128)"),
      RKG_REAL("beta", beta, "KL weight (default 1)"),
      RKG_REAL("beta_warmup", beta_warmup, "share of optimizer steps over which beta ramps up (default 0.1)"),
      RKG_REAL("image_signal", image_signal, "label signal scale in synthetic images (default 0.25)"),
      RKG_REAL("image_noise", image_noise, "noise standard deviation in synthetic images (default 1)"),
  };
  return all;
}

#undef RKG_SIZE
#undef RKG_REAL
#undef RKG_FLAG

const Field& field(std::string_view key) {
  for (const auto& f : fields())
    if (f.doc.name == key) return f;
  throw DataError("unknown config key '" + std::string(key) + "'");
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

VkdConfig RunConfig::vkd() const {
  VkdConfig v;
  v.n_layers = train.n_layers;
  v.hidden = train.hidden;
  v.latent = latent;
  v.image_dim = image_dim;
  v.image_hidden = image_hidden;
  v.decoder_hidden = decoder_hidden;
  v.beta = beta;
  v.beta_warmup = beta_warmup;
  v.lr = train.lr;
  v.batch_size = train.batch_size;
  v.max_epochs = train.max_epochs;
  v.early_stop_tolerance = train.early_stop_tolerance;
  v.patience = train.patience;
  v.dropout = train.dropout;
  v.image_signal = image_signal;
  v.image_noise = image_noise;
  v.workers = train.workers;
  v.seed = train.seed;
  return v;
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& f : fields()) out.push_back(f.doc);
    return out;
  }();
  return keys;
}

void set_config_value(RunConfig& config, std::string_view key, std::string_view value) {
  field(key).set(config, trim(value));
}

std::string get_config_value(const RunConfig& config, std::string_view key) { return field(key).get(config); }

RunConfig parse_run_config(std::string_view text, RunConfig base) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(start, nl - start);
    start = nl + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    try {
      if (eq == std::string_view::npos) throw DataError("expected key=value");
      set_config_value(base, trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open config file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_run_config(ss.str(), std::move(base));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string format_run_config(const RunConfig& config, bool with_comments) {
  std::string out;
  for (const auto& f : fields()) {
    if (with_comments) out += "# " + f.doc.description + "\n";
    out += f.doc.name + "=" + f.get(config) + "\n";
  }
  return out;
}

void validate_run_config(const RunConfig& config) {
  validate_train_config(config.train);
  validate_vkd_config(config.vkd());
  if (config.graph.concept_edge_hops == 0) throw DataError("concept_edge_hops must be at least 1");
  if (!(config.threshold >= 0.0 && config.threshold <= 1.0)) throw DataError("threshold must lie in [0, 1]");
  const double total = config.split.train + config.split.val + config.split.test;
  if (config.split.train < 0 || config.split.val < 0 || config.split.test < 0 || std::abs(total - 1.0) > 1e-9) {
    throw DataError("split shares must be non-negative and sum to 1");
  }
}

}  // namespace rkg
