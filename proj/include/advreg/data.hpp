#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "advreg/tensor.hpp"

namespace advreg {

enum class Split { train, test };

struct Dataset {
  Tensor examples;  // (m, ...input shape...), values in [0,1]
  std::vector<int> labels;
  std::size_t num_classes = 0;
  Split split = Split::train;

  std::size_t size() const { return labels.size(); }
  Shape example_shape() const;
  // Throws Error if labels, value range or extents are inconsistent.
  void validate() const;
};

// Rows `indices` of the dataset, in the given order.
Tensor gather_examples(const Dataset& data, std::span<const std::size_t> indices);
std::vector<int> gather_labels(const Dataset& data, std::span<const std::size_t> indices);
Dataset subset(const Dataset& data, std::span<const std::size_t> indices);

// First `size() - test_size` examples become train, the rest test.
std::pair<Dataset, Dataset> split_train_test(const Dataset& data, std::size_t test_size);

enum class SyntheticKind { blobs, two_rings, glyphs };

SyntheticKind parse_synthetic_kind(const std::string& text);
std::string to_string(SyntheticKind kind);

struct SyntheticOptions {
  std::size_t dim = 2;            // blobs feature count
  double blob_spread = 0.05;      // blob noise std relative to the unit cube
  double ring_noise = 0.03;       // two-rings radial noise
  std::size_t image_side = 10;    // glyphs are (1, side, side)
  double glyph_noise = 0.15;      // glyphs per-pixel noise std
};

// blobs:     C Gaussian clusters around random centers in [0,1]^dim.
// two-rings: C concentric noisy rings in 2-D (C = 2 gives the classic pair).
// glyphs:    small grayscale images; each class is a fixed random stroke
//            pattern, drawn with jitter, contrast changes and pixel noise.
// Labels cycle 0..C-1 so every class gets m/C examples (+1 for the first
// m mod C classes). Values are scaled into [0,1]. Deterministic per seed;
// the class patterns depend only on (kind, C, seed).
Dataset make_synthetic_dataset(SyntheticKind kind, std::size_t m, std::size_t num_classes, std::uint64_t seed,
                               const SyntheticOptions& options = {});

struct LabelDistribution {
  Tensor probs;  // (B, C)

  std::size_t rows() const { return probs.shape()[0]; }
  std::size_t classes() const { return probs.shape()[1]; }
  void validate(double tolerance = 1e-9) const;
};

LabelDistribution one_hot(std::span<const int> labels, std::size_t num_classes);

// Correct class gets 1 - s, every other class s / (C - 1); 0 <= s <= 1 - 1/C.
LabelDistribution smooth_labels(std::span<const int> labels, std::size_t num_classes, double s);

enum class MixMode { off, mixup, vh_mixup };

MixMode parse_mix_mode(const std::string& text);
std::string to_string(MixMode mode);

struct MixConfig {
  MixMode mode = MixMode::off;
  double beta_a = 1.0;  // lambda ~ Beta(a, a)

  void validate() const;
};

struct MixedBatch {
  Tensor examples;
  LabelDistribution targets;
  std::vector<double> lambdas;
};

// Pairs row i of a with row i of b. lambda is drawn per pair.
MixedBatch mix_examples(const Tensor& examples_a, const LabelDistribution& targets_a, const Tensor& examples_b,
                        const LabelDistribution& targets_b, const MixConfig& config, std::uint64_t seed);

// mixup with a fixed lambda: x = l*a + (1-l)*b, p = l*pa + (1-l)*pb.
MixedBatch mixup_with(const Tensor& examples_a, const LabelDistribution& targets_a, const Tensor& examples_b,
                      const LabelDistribution& targets_b, double lambda);

// VH-mixup with fixed parameters. V stacks the top `row_fraction` of a over
// the rest of b; H puts the left `col_fraction` of a beside the rest of b.
// Output is l*V + (1-l)*H; the weight of a's label is l*rows_a/H + (1-l)*cols_a/W.
MixedBatch vh_mixup_with(const Tensor& examples_a, const LabelDistribution& targets_a, const Tensor& examples_b,
                         const LabelDistribution& targets_b, double lambda, double row_fraction, double col_fraction);

// Zero-pads each (C,H,W) image by `pad`, takes a random crop of the original
// size and, when `flip` is set, mirrors horizontally with probability 0.5.
Tensor standard_augment(const Tensor& batch, std::size_t pad, bool flip, std::uint64_t seed);
// The crop at offset (oy, ox) of one zero-padded (C,H,W) image.
Tensor crop_padded(const Tensor& image, std::size_t pad, std::size_t oy, std::size_t ox);
Tensor flip_horizontal(const Tensor& image);

// One epoch's partition of [0, m) into batches of `batch_size` (last may be
// short). Shuffled order is a function of (seed, epoch) only.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t m, std::size_t batch_size, bool shuffle,
                                                    std::uint64_t seed, std::size_t epoch);

}  // namespace advreg
