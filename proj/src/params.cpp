#include "report_kg/params.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "report_kg/errors.hpp"

namespace rkg {

namespace {

constexpr std::string_view kMagic = "report-kg-checkpoint";
constexpr int kFormatVersion = 1;

void append_double(std::string& out, double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

template <typename T>
T parse_number(std::string_view s, std::size_t line_no) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DataError("checkpoint line " + std::to_string(line_no) + ": bad number '" +
                    std::string(s) + "'");
  }
  return v;
}

}  // namespace

void ParamSet::add(std::string name, Tensor tensor) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  entries_.push_back({std::move(name), std::move(tensor)});
}

bool ParamSet::contains(std::string_view name) const {
  for (const auto& e : entries_)
    if (e.name == name) return true;
  return false;
}

const Tensor& ParamSet::get(std::string_view name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e.tensor;
  throw std::out_of_range("unknown parameter: " + std::string(name));
}

std::size_t ParamSet::element_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.size();
  return n;
}

void ParamSet::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

ParamSet ParamSet::clone() const {
  ParamSet out;
  for (const auto& e : entries_) out.add(e.name, e.tensor.clone());
  return out;
}

void ParamSet::copy_values_from(const ParamSet& other) {
  if (other.size() != size()) throw ShapeError("copy_values_from: parameter count differs");
  for (std::size_t k = 0; k < entries_.size(); ++k) {
    const auto& src = other.entries_[k];
    auto& dst = entries_[k];
    if (src.name != dst.name || src.tensor.shape() != dst.tensor.shape()) {
      throw ShapeError("copy_values_from: mismatch at " + dst.name);
    }
    auto d = dst.tensor.mutable_data();
    auto s = src.tensor.data();
    std::copy(s.begin(), s.end(), d.begin());
  }
}

GradBuffer zeros_like(const ParamSet& params) {
  GradBuffer out;
  out.reserve(params.size());
  for (const auto& e : params) out.emplace_back(e.tensor.size(), 0.0);
  return out;
}

void accumulate_grads(GradBuffer& into, const ParamSet& params) {
  std::size_t k = 0;
  for (const auto& e : params) {
    auto g = e.tensor.grad();
    if (!g.empty()) {
      auto& dst = into[k];
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    }
    ++k;
  }
}

void scale_grads(GradBuffer& grads, double factor) {
  for (auto& g : grads)
    for (double& v : g) v *= factor;
}

void adam_step(std::span<double> param, std::span<const double> grad, AdamMoments& moments,
               std::int64_t step, const AdamConfig& config) {
  if (param.size() != grad.size()) throw ShapeError("adam_step: parameter/gradient size mismatch");
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw NumericError("adam_step: non-finite gradient at element " + std::to_string(i));
    }
  }
  if (moments.m.size() != param.size()) {
    moments.m.assign(param.size(), 0.0);
    moments.v.assign(param.size(), 0.0);
  }
  const double t = static_cast<double>(step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    moments.m[i] = config.beta1 * moments.m[i] + (1.0 - config.beta1) * g;
    moments.v[i] = config.beta2 * moments.v[i] + (1.0 - config.beta2) * g * g;
    const double m_hat = moments.m[i] / c1;
    const double v_hat = moments.v[i] / c2;
    param[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
  }
}

void Adam::step(ParamSet& params, const GradBuffer& grads) {
  if (grads.size() != params.size()) throw ShapeError("Adam::step: gradient count mismatch");
  if (moments_.size() != params.size()) moments_.resize(params.size());
  ++step_;
  std::size_t k = 0;
  for (const auto& e : params) {
    Tensor t = e.tensor;
    adam_step(t.mutable_data(), grads[k], moments_[k], step_, config_);
    ++k;
  }
}

std::string serialize_checkpoint(const Checkpoint& checkpoint) {
  std::string out;
  out += kMagic;
  out += ' ' + std::to_string(kFormatVersion) + '\n';
  for (const auto& [key, value] : checkpoint.meta) {
    if (key.find_first_of(" \t\n") != std::string::npos || value.find('\n') != std::string::npos) {
      throw std::invalid_argument("checkpoint meta entries must be single-line: " + key);
    }
    out += "meta " + key + '\t' + value + '\n';
  }
  for (const auto& e : checkpoint.params) {
    out += "tensor " + e.name + ' ' + std::to_string(e.tensor.rank());
    for (auto d : e.tensor.shape()) out += ' ' + std::to_string(d);
    out += '\n';
    bool first = true;
    for (double v : e.tensor.data()) {
      if (!first) out += ' ';
      append_double(out, v);
      first = false;
    }
    out += '\n';
  }
  out += "end\n";
  return out;
}

Checkpoint parse_checkpoint(std::string_view text) {
  Checkpoint ck;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  auto next_line = [&](std::string_view& line) {
    if (pos >= text.size()) return false;
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    return true;
  };
  std::string_view line;
  if (!next_line(line)) throw DataError("checkpoint: empty file");
  auto head = split_ws(line);
  if (head.size() != 2 || head[0] != kMagic) throw DataError("checkpoint: missing header");
  if (parse_number<int>(head[1], line_no) != kFormatVersion) {
    throw DataError("checkpoint: unsupported format version " + std::string(head[1]));
  }
  bool ended = false;
  while (next_line(line)) {
    if (line.empty()) continue;
    if (line == "end") {
      ended = true;
      break;
    }
    if (line.starts_with("meta ")) {
      auto rest = line.substr(5);
      auto tab = rest.find('\t');
      if (tab == std::string_view::npos) {
        throw DataError("checkpoint line " + std::to_string(line_no) + ": malformed meta");
      }
      ck.meta[std::string(rest.substr(0, tab))] = std::string(rest.substr(tab + 1));
      continue;
    }
    auto fields = split_ws(line);
    if (fields.size() < 3 || fields[0] != "tensor") {
      throw DataError("checkpoint line " + std::to_string(line_no) + ": expected tensor record");
    }
    const auto rank = parse_number<std::size_t>(fields[2], line_no);
    if (fields.size() != 3 + rank) {
      throw DataError("checkpoint line " + std::to_string(line_no) + ": rank/dims mismatch");
    }
    Shape shape;
    for (std::size_t i = 0; i < rank; ++i) shape.push_back(parse_number<std::size_t>(fields[3 + i], line_no));
    const std::string name(fields[1]);
    if (!next_line(line)) throw DataError("checkpoint: truncated values for " + name);
    auto values = split_ws(line);
    if (values.size() != shape_size(shape)) {
      throw DataError("checkpoint line " + std::to_string(line_no) + ": expected " +
                      std::to_string(shape_size(shape)) + " values for " + name);
    }
    std::vector<double> data;
    data.reserve(values.size());
    for (auto v : values) data.push_back(parse_number<double>(v, line_no));
    ck.params.add(name, Tensor::from_data(std::move(shape), std::move(data), true));
  }
  if (!ended) throw DataError("checkpoint: missing end marker");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path.string());
  out << serialize_checkpoint(checkpoint);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

}  // namespace rkg
