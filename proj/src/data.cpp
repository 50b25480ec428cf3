#include "advreg/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "advreg/errors.hpp"
#include "advreg/seed.hpp"

namespace advreg {

Shape Dataset::example_shape() const {
  if (examples.rank() == 0) return {};
  return Shape(examples.shape().begin() + 1, examples.shape().end());
}

void Dataset::validate() const {
  if (examples.rank() == 0 || examples.shape()[0] != labels.size()) {
    throw Error("dataset has " + std::to_string(labels.size()) + " labels but examples of shape " +
                shape_to_string(examples.shape()));
  }
  if (num_classes < 2) throw Error("dataset needs at least 2 classes");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw Error("label " + std::to_string(y) + " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
  for (double v : examples.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error("dataset value outside [0,1]");
  }
}

Tensor gather_examples(const Dataset& data, std::span<const std::size_t> indices) {
  const std::size_t row = data.size() == 0 ? 0 : data.examples.size() / data.size();
  Shape shape = data.examples.shape();
  shape[0] = indices.size();
  std::vector<double> out;
  out.reserve(indices.size() * row);
  for (std::size_t idx : indices) {
    if (idx >= data.size()) throw Error("example index " + std::to_string(idx) + " out of range");
    const auto first = data.examples.values().begin() + static_cast<std::ptrdiff_t>(idx * row);
    out.insert(out.end(), first, first + static_cast<std::ptrdiff_t>(row));
  }
  return Tensor(std::move(shape), std::move(out));
}

std::vector<int> gather_labels(const Dataset& data, std::span<const std::size_t> indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t idx : indices) out.push_back(data.labels.at(idx));
  return out;
}

Dataset subset(const Dataset& data, std::span<const std::size_t> indices) {
  return Dataset{gather_examples(data, indices), gather_labels(data, indices), data.num_classes, data.split};
}

std::pair<Dataset, Dataset> split_train_test(const Dataset& data, std::size_t test_size) {
  if (test_size == 0 || test_size >= data.size()) {
    throw Error("test size " + std::to_string(test_size) + " must be in (0, " + std::to_string(data.size()) + ")");
  }
  std::vector<std::size_t> train_idx(data.size() - test_size);
  std::vector<std::size_t> test_idx(test_size);
  std::iota(train_idx.begin(), train_idx.end(), std::size_t{0});
  std::iota(test_idx.begin(), test_idx.end(), train_idx.size());
  Dataset train = subset(data, train_idx);
  Dataset test = subset(data, test_idx);
  train.split = Split::train;
  test.split = Split::test;
  return {std::move(train), std::move(test)};
}

SyntheticKind parse_synthetic_kind(const std::string& text) {
  if (text == "blobs") return SyntheticKind::blobs;
  if (text == "two-rings") return SyntheticKind::two_rings;
  if (text == "glyphs") return SyntheticKind::glyphs;
  throw ConfigError("unsupported synthetic dataset kind '" + text + "'");
}

std::string to_string(SyntheticKind kind) {
  switch (kind) {
    case SyntheticKind::blobs: return "blobs";
    case SyntheticKind::two_rings: return "two-rings";
    case SyntheticKind::glyphs: return "glyphs";
  }
  return "?";
}

namespace {

void rescale_unit(std::vector<double>& values) {
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double low = *lo, span = *hi - *lo;
  for (double& v : values) v = span > 0.0 ? std::clamp((v - low) / span, 0.0, 1.0) : 0.5;
}

std::vector<double> make_blobs(std::size_t m, std::size_t classes, std::uint64_t seed, const SyntheticOptions& opt) {
  if (opt.dim == 0) throw ConfigError("blobs need a positive dimension");
  Rng center_rng = make_rng(seed, "blobs/centers");
  std::uniform_real_distribution<double> unit(0.15, 0.85);
  std::vector<std::vector<double>> centers;
  const double min_gap = std::min(0.3, 0.7 / std::sqrt(static_cast<double>(classes)));
  for (int attempt = 0; centers.size() < classes; ++attempt) {
    std::vector<double> c(opt.dim);
    for (double& v : c) v = unit(center_rng);
    bool far = true;
    for (const auto& other : centers) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < opt.dim; ++k) d2 += (c[k] - other[k]) * (c[k] - other[k]);
      far = far && std::sqrt(d2) >= min_gap;
    }
    if (far || attempt > 10000) centers.push_back(std::move(c));
  }
  Rng rng = make_rng(seed, "blobs/points");
  std::normal_distribution<double> noise(0.0, opt.blob_spread);
  std::vector<double> values;
  values.reserve(m * opt.dim);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < opt.dim; ++k) values.push_back(centers[i % classes][k] + noise(rng));
  }
  rescale_unit(values);
  return values;
}

std::vector<double> make_rings(std::size_t m, std::size_t classes, std::uint64_t seed, const SyntheticOptions& opt) {
  Rng rng = make_rng(seed, "rings/points");
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::acos(-1.0));
  std::normal_distribution<double> noise(0.0, opt.ring_noise);
  std::vector<double> values;
  values.reserve(m * 2);
  for (std::size_t i = 0; i < m; ++i) {
    const double radius = 0.42 * static_cast<double>(i % classes + 1) / static_cast<double>(classes) + noise(rng);
    const double a = angle(rng);
    values.push_back(std::clamp(0.5 + radius * std::cos(a), 0.0, 1.0));
    values.push_back(std::clamp(0.5 + radius * std::sin(a), 0.0, 1.0));
  }
  return values;
}

struct Stroke {
  double x0, y0, x1, y1;
};

double segment_distance(double px, double py, const Stroke& s) {
  const double vx = s.x1 - s.x0, vy = s.y1 - s.y0;
  const double len2 = vx * vx + vy * vy;
  const double t = len2 > 0.0 ? std::clamp(((px - s.x0) * vx + (py - s.y0) * vy) / len2, 0.0, 1.0) : 0.0;
  const double dx = px - (s.x0 + t * vx), dy = py - (s.y0 + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

std::vector<double> make_glyphs(std::size_t m, std::size_t classes, std::uint64_t seed, const SyntheticOptions& opt) {
  const std::size_t side = opt.image_side;
  if (side < 4) throw ConfigError("glyph images need a side of at least 4");
  constexpr std::size_t kStrokes = 3;
  constexpr double kWidth = 0.6;
  const double lo = 1.0, hi = static_cast<double>(side) - 2.0;

  Rng proto_rng = make_rng(seed, "glyphs/prototypes/" + std::to_string(classes));
  std::uniform_real_distribution<double> coord(lo, hi);
  std::vector<std::vector<Stroke>> prototypes(classes);
  for (auto& strokes : prototypes) {
    for (std::size_t s = 0; s < kStrokes; ++s) strokes.push_back({coord(proto_rng), coord(proto_rng), coord(proto_rng), coord(proto_rng)});
  }

  Rng rng = make_rng(seed, "glyphs/examples");
  std::uniform_real_distribution<double> shift(-1.0, 1.0);
  std::uniform_real_distribution<double> contrast(0.6, 1.0);
  std::normal_distribution<double> noise(0.0, opt.glyph_noise);
  std::vector<double> values;
  values.reserve(m * side * side);
  for (std::size_t i = 0; i < m; ++i) {
    const auto& strokes = prototypes[i % classes];
    const double sx = shift(rng), sy = shift(rng), gain = contrast(rng);
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        double ink = 0.0;
        for (const auto& s : strokes) {
          const double d = segment_distance(static_cast<double>(x) - sx, static_cast<double>(y) - sy, s);
          ink = std::max(ink, std::exp(-d * d / (2.0 * kWidth * kWidth)));
        }
        values.push_back(std::clamp(gain * ink + noise(rng), 0.0, 1.0));
      }
    }
  }
  return values;
}

}  // namespace

Dataset make_synthetic_dataset(SyntheticKind kind, std::size_t m, std::size_t num_classes, std::uint64_t seed,
                               const SyntheticOptions& options) {
  if (num_classes < 2) throw ConfigError("synthetic dataset needs at least 2 classes");
  if (m < num_classes) throw ConfigError("synthetic dataset needs m >= C");
  Dataset data;
  data.num_classes = num_classes;
  data.labels.resize(m);
  for (std::size_t i = 0; i < m; ++i) data.labels[i] = static_cast<int>(i % num_classes);
  switch (kind) {
    case SyntheticKind::blobs:
      data.examples = Tensor(Shape{m, options.dim}, make_blobs(m, num_classes, seed, options));
      break;
    case SyntheticKind::two_rings:
      data.examples = Tensor(Shape{m, 2}, make_rings(m, num_classes, seed, options));
      break;
    case SyntheticKind::glyphs:
      data.examples = Tensor(Shape{m, 1, options.image_side, options.image_side},
                             make_glyphs(m, num_classes, seed, options));
      break;
  }
  return data;
}

void LabelDistribution::validate(double tolerance) const {
  if (probs.rank() != 2) throw ShapeError("label distribution must be (B,C), got " + shape_to_string(probs.shape()));
  const std::size_t cols = classes();
  for (std::size_t r = 0; r < rows(); ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double p = probs[r * cols + c];
      if (!(p >= 0.0 && p <= 1.0)) throw Error("label probability outside [0,1] in row " + std::to_string(r));
      total += p;
    }
    if (std::abs(total - 1.0) > tolerance) throw Error("label row " + std::to_string(r) + " does not sum to 1");
  }
}

LabelDistribution one_hot(std::span<const int> labels, std::size_t num_classes) { return smooth_labels(labels, num_classes, 0.0); }

LabelDistribution smooth_labels(std::span<const int> labels, std::size_t num_classes, double s) {
  if (num_classes < 2) throw Error("label smoothing needs at least 2 classes");
  const double c = static_cast<double>(num_classes);
  const double max_s = 1.0 - 1.0 / c;
  constexpr double kSnap = 1e-12;
  if (!(s >= 0.0) || s > max_s + kSnap) {
    throw Error("smoothing strength " + std::to_string(s) + " outside [0, 1 - 1/C]");
  }
  // At maximal smoothing the target is exactly uniform.
  const bool uniform = s >= max_s - kSnap;
  const double correct = uniform ? 1.0 / c : 1.0 - s;
  const double other = uniform ? 1.0 / c : s / (c - 1.0);
  LabelDistribution out{Tensor(Shape{labels.size(), num_classes}, other)};
  for (std::size_t r = 0; r < labels.size(); ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) throw Error("label " + std::to_string(y) + " out of range");
    out.probs[r * num_classes + static_cast<std::size_t>(y)] = correct;
  }
  return out;
}

MixMode parse_mix_mode(const std::string& text) {
  if (text == "off") return MixMode::off;
  if (text == "mixup") return MixMode::mixup;
  if (text == "vh-mixup") return MixMode::vh_mixup;
  throw ConfigError("unknown mix mode '" + text + "' (expected off, mixup or vh-mixup)");
}

std::string to_string(MixMode mode) {
  switch (mode) {
    case MixMode::off: return "off";
    case MixMode::mixup: return "mixup";
    case MixMode::vh_mixup: return "vh-mixup";
  }
  return "?";
}

void MixConfig::validate() const {
  if (!(beta_a > 0.0)) throw ConfigError("mix beta parameter must be positive");
}

namespace {

void check_pair(const Tensor& xa, const LabelDistribution& pa, const Tensor& xb, const LabelDistribution& pb) {
  if (xa.shape() != xb.shape() || pa.probs.shape() != pb.probs.shape() || xa.rank() == 0 ||
      xa.shape()[0] != pa.rows()) {
    throw ShapeError("mixing batches of shapes " + shape_to_string(xa.shape()) + " and " +
                     shape_to_string(xb.shape()));
  }
}

double sample_beta(double a, Rng& rng) {
  std::gamma_distribution<double> gamma(a, 1.0);
  const double x = gamma(rng), y = gamma(rng);
  return x + y > 0.0 ? x / (x + y) : 0.5;
}

void mix_row_labels(const LabelDistribution& pa, const LabelDistribution& pb, std::size_t row, double weight_a,
                    LabelDistribution& out) {
  const std::size_t cols = pa.classes();
  for (std::size_t c = 0; c < cols; ++c) {
    const std::size_t i = row * cols + c;
    out.probs[i] = weight_a * pa.probs[i] + (1.0 - weight_a) * pb.probs[i];
  }
}

// Mixes one example row in place. `fractions` are (row, col) split fractions
// for VH-mixup and ignored for mixup. Returns the label weight of source a.
double mix_row(const Tensor& xa, const Tensor& xb, std::size_t row, MixMode mode, double lambda, double row_fraction,
               double col_fraction, Tensor& out) {
  const std::size_t per = xa.size() / xa.shape()[0];
  const std::size_t base = row * per;
  if (mode == MixMode::mixup) {
    for (std::size_t i = 0; i < per; ++i) out[base + i] = lambda * xa[base + i] + (1.0 - lambda) * xb[base + i];
    return lambda;
  }
  if (xa.rank() < 3) throw ShapeError("vh-mixup needs image-shaped examples, got " + shape_to_string(xa.shape()));
  const std::size_t h = xa.shape()[xa.rank() - 2];
  const std::size_t w = xa.shape()[xa.rank() - 1];
  const std::size_t rows_a = static_cast<std::size_t>(std::lround(row_fraction * static_cast<double>(h)));
  const std::size_t cols_a = static_cast<std::size_t>(std::lround(col_fraction * static_cast<double>(w)));
  for (std::size_t i = 0; i < per; ++i) {
    const std::size_t y = (i / w) % h;
    const std::size_t x = i % w;
    const double v = y < rows_a ? xa[base + i] : xb[base + i];
    const double hz = x < cols_a ? xa[base + i] : xb[base + i];
    out[base + i] = lambda * v + (1.0 - lambda) * hz;
  }
  return lambda * static_cast<double>(rows_a) / static_cast<double>(h) +
         (1.0 - lambda) * static_cast<double>(cols_a) / static_cast<double>(w);
}

}  // namespace

MixedBatch mix_examples(const Tensor& examples_a, const LabelDistribution& targets_a, const Tensor& examples_b,
                        const LabelDistribution& targets_b, const MixConfig& config, std::uint64_t seed) {
  check_pair(examples_a, targets_a, examples_b, targets_b);
  config.validate();
  MixedBatch out{examples_a, targets_a, {}};
  if (config.mode == MixMode::off) return out;
  Rng rng = make_rng(seed, "mix");
  std::uniform_real_distribution<double> split(0.25, 0.75);
  for (std::size_t r = 0; r < targets_a.rows(); ++r) {
    const double lambda = sample_beta(config.beta_a, rng);
    const double fy = split(rng), fx = split(rng);
    const double weight_a = mix_row(examples_a, examples_b, r, config.mode, lambda, fy, fx, out.examples);
    mix_row_labels(targets_a, targets_b, r, weight_a, out.targets);
    out.lambdas.push_back(lambda);
  }
  return out;
}

MixedBatch mixup_with(const Tensor& examples_a, const LabelDistribution& targets_a, const Tensor& examples_b,
                      const LabelDistribution& targets_b, double lambda) {
  check_pair(examples_a, targets_a, examples_b, targets_b);
  MixedBatch out{examples_a, targets_a, {}};
  for (std::size_t r = 0; r < targets_a.rows(); ++r) {
    mix_row(examples_a, examples_b, r, MixMode::mixup, lambda, 0.0, 0.0, out.examples);
    mix_row_labels(targets_a, targets_b, r, lambda, out.targets);
    out.lambdas.push_back(lambda);
  }
  return out;
}

MixedBatch vh_mixup_with(const Tensor& examples_a, const LabelDistribution& targets_a, const Tensor& examples_b,
                         const LabelDistribution& targets_b, double lambda, double row_fraction, double col_fraction) {
  check_pair(examples_a, targets_a, examples_b, targets_b);
  MixedBatch out{examples_a, targets_a, {}};
  for (std::size_t r = 0; r < targets_a.rows(); ++r) {
    const double weight_a =
        mix_row(examples_a, examples_b, r, MixMode::vh_mixup, lambda, row_fraction, col_fraction, out.examples);
    mix_row_labels(targets_a, targets_b, r, weight_a, out.targets);
    out.lambdas.push_back(lambda);
  }
  return out;
}

Tensor crop_padded(const Tensor& image, std::size_t pad, std::size_t oy, std::size_t ox) {
  if (image.rank() != 3) throw ShapeError("crop needs a (C,H,W) image, got " + shape_to_string(image.shape()));
  const std::size_t ch = image.shape()[0], h = image.shape()[1], w = image.shape()[2];
  if (oy > 2 * pad || ox > 2 * pad) throw Error("crop offset outside the padded image");
  Tensor out(image.shape(), 0.0);
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      const long sy = static_cast<long>(y + oy) - static_cast<long>(pad);
      if (sy < 0 || sy >= static_cast<long>(h)) continue;
      for (std::size_t x = 0; x < w; ++x) {
        const long sx = static_cast<long>(x + ox) - static_cast<long>(pad);
        if (sx < 0 || sx >= static_cast<long>(w)) continue;
        out[(c * h + y) * w + x] = image[(c * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx)];
      }
    }
  }
  return out;
}

Tensor flip_horizontal(const Tensor& image) {
  if (image.rank() != 3) throw ShapeError("flip needs a (C,H,W) image, got " + shape_to_string(image.shape()));
  const std::size_t w = image.shape()[2];
  Tensor out = image;
  for (std::size_t row = 0; row < image.size() / w; ++row) {
    for (std::size_t x = 0; x < w; ++x) out[row * w + x] = image[row * w + (w - 1 - x)];
  }
  return out;
}

Tensor standard_augment(const Tensor& batch, std::size_t pad, bool flip, std::uint64_t seed) {
  if (batch.rank() != 4) throw ShapeError("augmentation needs (B,C,H,W), got " + shape_to_string(batch.shape()));
  if (pad >= batch.shape()[2] || pad >= batch.shape()[3]) throw Error("augmentation pad must be smaller than the image");
  if (pad == 0 && !flip) return batch;
  Rng rng = make_rng(seed, "augment");
  std::uniform_int_distribution<std::size_t> offset(0, 2 * pad);
  std::bernoulli_distribution coin(0.5);
  const std::size_t per = batch.size() / batch.shape()[0];
  Shape image_shape(batch.shape().begin() + 1, batch.shape().end());
  Tensor out = batch;
  for (std::size_t n = 0; n < batch.shape()[0]; ++n) {
    Tensor image(image_shape, std::vector<double>(batch.values().begin() + static_cast<std::ptrdiff_t>(n * per),
                                                  batch.values().begin() + static_cast<std::ptrdiff_t>((n + 1) * per)));
    const std::size_t oy = offset(rng), ox = offset(rng);
    image = crop_padded(image, pad, oy, ox);
    if (flip && coin(rng)) image = flip_horizontal(image);
    std::copy(image.values().begin(), image.values().end(), out.data().begin() + static_cast<std::ptrdiff_t>(n * per));
  }
  return out;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t m, std::size_t batch_size, bool shuffle,
                                                    std::uint64_t seed, std::size_t epoch) {
  if (m == 0) throw Error("cannot batch an empty dataset");
  if (batch_size == 0) throw Error("batch size must be at least 1");
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle) {
    Rng rng = make_rng(seed, "shuffle/epoch" + std::to_string(epoch));
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < m; start += batch_size) {
    const std::size_t end = std::min(m, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

}  // namespace advreg
