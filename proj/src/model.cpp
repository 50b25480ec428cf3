#include "advreg/model.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "advreg/errors.hpp"
#include "advreg/ops.hpp"
#include "advreg/seed.hpp"

namespace advreg {

namespace {

constexpr std::size_t kKernel = 3;
constexpr std::size_t kPool = 2;

struct ParamSpec {
  std::string name;
  Shape shape;
  std::size_t fan_in = 0;  // 0 marks a bias
  bool head = false;
};

std::vector<ParamSpec> param_specs(const ModelConfig& c) {
  std::vector<ParamSpec> specs;
  auto dense = [&](const std::string& prefix, std::size_t in, std::size_t out, bool head) {
    specs.push_back({prefix + ".weight", Shape{in, out}, in, head});
    specs.push_back({prefix + ".bias", Shape{out}, 0, head});
  };
  auto conv = [&](const std::string& prefix, std::size_t in, std::size_t out) {
    specs.push_back({prefix + ".weight", Shape{out, in, kKernel, kKernel}, in * kKernel * kKernel, false});
    specs.push_back({prefix + ".bias", Shape{out}, 0, false});
  };

  if (c.arch == Architecture::mlp) {
    std::size_t width = shape_size(c.input_shape);
    for (std::size_t i = 0; i < c.hidden.size(); ++i) {
      dense("dense" + std::to_string(i), width, c.hidden[i], false);
      width = c.hidden[i];
    }
    dense("head", width, c.num_classes, true);
  } else {
    conv("stem", c.input_shape[0], c.channels);
    for (std::size_t b = 0; b < c.residual_blocks; ++b) {
      conv("block" + std::to_string(b) + ".conv1", c.channels, c.channels);
      conv("block" + std::to_string(b) + ".conv2", c.channels, c.channels);
    }
    const std::size_t pooled = (c.input_shape[1] / kPool) * (c.input_shape[2] / kPool);
    dense("head", c.channels * pooled, c.num_classes, true);
  }
  return specs;
}

}  // namespace

std::string to_string(Architecture arch) { return arch == Architecture::mlp ? "mlp" : "small-conv"; }

Architecture parse_architecture(const std::string& text) {
  if (text == "mlp") return Architecture::mlp;
  if (text == "small-conv") return Architecture::small_conv;
  throw ConfigError("unknown architecture '" + text + "' (expected mlp or small-conv)");
}

void ModelConfig::validate() const {
  if (num_classes < 2) throw ConfigError("model needs at least 2 classes");
  if (input_shape.empty() || shape_size(input_shape) == 0) {
    throw ConfigError("model input shape " + shape_to_string(input_shape) + " is empty");
  }
  for (std::size_t w : hidden) {
    if (w == 0) throw ConfigError("hidden widths must be positive");
  }
  if (arch == Architecture::small_conv) {
    if (input_shape.size() != 3) {
      throw ConfigError("small-conv input must be (channels, height, width), got " + shape_to_string(input_shape));
    }
    if (input_shape[1] < kPool || input_shape[2] < kPool) {
      throw ConfigError("small-conv input " + shape_to_string(input_shape) + " is smaller than the pooling window");
    }
    if (channels == 0) throw ConfigError("small-conv needs a positive channel count");
  }
}

std::string ModelConfig::describe() const {
  std::ostringstream out;
  out << "arch=" << to_string(arch) << " input=" << shape_to_string(input_shape) << " classes=" << num_classes;
  if (arch == Architecture::mlp) {
    out << " hidden=[";
    for (std::size_t i = 0; i < hidden.size(); ++i) out << (i ? "," : "") << hidden[i];
    out << "]";
  } else {
    out << " channels=" << channels << " blocks=" << residual_blocks;
  }
  return out.str();
}

std::uint64_t fingerprint(const ModelConfig& config) { return derive_seed(0x6d6f64656cULL, config.describe()); }

std::size_t ModelParams::parameter_count() const {
  std::size_t total = 0;
  for (const auto& t : tensors) total += t.value.size();
  return total;
}

const Tensor& ModelParams::at(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.value;
  }
  throw Error("no parameter named '" + name + "'");
}

ModelParams init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelParams params;
  params.fingerprint = fingerprint(config);
  for (auto& spec : param_specs(config)) {
    Tensor value(spec.shape, 0.0);
    if (spec.fan_in > 0) {
      const double gain = spec.head ? 3.0 : 6.0;
      const double bound = std::sqrt(gain / static_cast<double>(spec.fan_in));
      Rng rng = make_rng(seed, "init/" + spec.name);
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (double& v : value.data()) v = dist(rng);
    }
    params.tensors.push_back({spec.name, std::move(value)});
  }
  return params;
}

Model make_model(const ModelConfig& config, std::uint64_t seed) { return Model{config, init_model(config, seed)}; }

void check_fingerprint(const ModelConfig& config, const ModelParams& params) {
  if (params.fingerprint != fingerprint(config)) {
    throw Error("parameter fingerprint does not match model config (" + config.describe() + ")");
  }
  const auto specs = param_specs(config);
  if (specs.size() != params.tensors.size()) throw Error("parameter count does not match model config");
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].name != params.tensors[i].name || specs[i].shape != params.tensors[i].value.shape()) {
      throw Error("parameter '" + params.tensors[i].name + "' does not match model config");
    }
  }
}

Var forward_logits(const ModelConfig& config, std::span<const Var> params, const Var& batch) {
  const Shape& bs = batch.shape();
  Shape expected{bs.empty() ? 0 : bs[0]};
  expected.insert(expected.end(), config.input_shape.begin(), config.input_shape.end());
  if (bs != expected) {
    throw ShapeError("batch shape " + shape_to_string(bs) + " does not match model input " +
                     shape_to_string(config.input_shape));
  }
  std::size_t next = 0;
  auto take = [&]() -> const Var& {
    if (next >= params.size()) throw ShapeError("too few parameters for model config");
    return params[next++];
  };
  auto dense = [&](const Var& x) {
    const Var& w = take();
    const Var& b = take();
    return ops::add_bias(ops::matmul(x, w), b);
  };
  auto conv = [&](const Var& x) {
    const Var& w = take();
    const Var& b = take();
    return ops::add_bias(ops::conv2d(x, w), b);
  };

  Var h = batch;
  if (config.arch == Architecture::mlp) {
    h = ops::flatten(h);
    for (std::size_t i = 0; i < config.hidden.size(); ++i) h = ops::relu(dense(h));
  } else {
    h = ops::max_pool2d(ops::relu(conv(h)), kPool);
    for (std::size_t b = 0; b < config.residual_blocks; ++b) {
      Var inner = conv(ops::relu(conv(h)));
      h = ops::relu(ops::add(h, inner));
    }
    h = ops::flatten(h);
  }
  Var logits = dense(h);
  if (next != params.size()) throw ShapeError("too many parameters for model config");
  return logits;
}

Tensor forward_logits(const Model& model, const Tensor& batch) {
  check_fingerprint(model.config, model.params);
  Graph graph(false);
  std::vector<Var> vars;
  vars.reserve(model.params.tensors.size());
  for (const auto& t : model.params.tensors) vars.push_back(graph.constant(t.value));
  return forward_logits(model.config, vars, graph.constant(batch)).value();
}

std::vector<int> argmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw ShapeError("argmax_rows needs (B,C) logits, got " + shape_to_string(logits.shape()));
  const std::size_t rows = logits.shape()[0], cols = logits.shape()[1];
  std::vector<int> out(rows, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < cols; ++c) {
      if (logits[r * cols + c] > logits[r * cols + best]) best = c;
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

}  // namespace advreg
