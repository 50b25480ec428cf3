#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "advreg/graph.hpp"
#include "advreg/tensor.hpp"

namespace advreg {

enum class Architecture { mlp, small_conv };

std::string to_string(Architecture arch);
Architecture parse_architecture(const std::string& text);

// mlp:        flatten -> [dense -> relu] per hidden width -> dense(C).
//             No hidden layers gives a linear model.
// small_conv: conv3x3(channels) -> relu -> maxpool2 -> residual_blocks x
//             [conv3x3 -> relu -> conv3x3, identity skip, relu] -> dense(C).
struct ModelConfig {
  Architecture arch = Architecture::mlp;
  Shape input_shape{2};
  std::vector<std::size_t> hidden;
  std::size_t channels = 8;
  std::size_t residual_blocks = 1;
  std::size_t num_classes = 2;

  void validate() const;
  // Canonical one-line description; the fingerprint hashes this.
  std::string describe() const;
};

std::uint64_t fingerprint(const ModelConfig& config);

struct NamedTensor {
  std::string name;
  Tensor value;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

struct ModelParams {
  std::vector<NamedTensor> tensors;
  std::uint64_t fingerprint = 0;

  std::size_t parameter_count() const;
  const Tensor& at(const std::string& name) const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct Model {
  ModelConfig config;
  ModelParams params;
};

// He-uniform weights for ReLU layers, LeCun-uniform for the output layer,
// zero biases. Deterministic per seed.
ModelParams init_model(const ModelConfig& config, std::uint64_t seed);
Model make_model(const ModelConfig& config, std::uint64_t seed);

// Throws Error when params were not built for this config.
void check_fingerprint(const ModelConfig& config, const ModelParams& params);

// Graph-level forward; `params` are Vars for params.tensors in order.
Var forward_logits(const ModelConfig& config, std::span<const Var> params, const Var& batch);

// Forward-only convenience: (B, input_shape...) -> (B, C).
Tensor forward_logits(const Model& model, const Tensor& batch);

// Lowest index wins ties.
std::vector<int> argmax_rows(const Tensor& logits);

}  // namespace advreg
