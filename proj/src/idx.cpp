#include "advreg/idx.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <vector>

#include "advreg/errors.hpp"

namespace advreg {

namespace {

constexpr std::uint32_t kImageMagic = 2051;
constexpr std::uint32_t kLabelMagic = 2049;

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset, const std::filesystem::path& path) {
  if (offset + 4 > bytes.size()) throw FormatError(path.string() + ": truncated header");
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::ofstream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                         static_cast<char>(v)};
  out.write(bytes, 4);
}

}  // namespace

Dataset load_idx_dataset(const std::filesystem::path& image_path, const std::filesystem::path& label_path,
                         std::size_t num_classes, Split split) {
  const auto images = read_file(image_path);
  const auto labels = read_file(label_path);

  if (const auto magic = read_be32(images, 0, image_path); magic != kImageMagic) {
    throw FormatError(image_path.string() + ": bad magic " + std::to_string(magic) + " (expected 2051)");
  }
  if (const auto magic = read_be32(labels, 0, label_path); magic != kLabelMagic) {
    throw FormatError(label_path.string() + ": bad magic " + std::to_string(magic) + " (expected 2049)");
  }
  const std::size_t count = read_be32(images, 4, image_path);
  const std::size_t rows = read_be32(images, 8, image_path);
  const std::size_t cols = read_be32(images, 12, image_path);
  const std::size_t label_count = read_be32(labels, 4, label_path);
  if (count != label_count) {
    throw FormatError("image count " + std::to_string(count) + " does not match label count " +
                      std::to_string(label_count));
  }
  constexpr std::size_t kImageHeader = 16, kLabelHeader = 8;
  if (images.size() < kImageHeader + count * rows * cols) throw FormatError(image_path.string() + ": truncated payload");
  if (labels.size() < kLabelHeader + count) throw FormatError(label_path.string() + ": truncated payload");

  Dataset data;
  data.num_classes = num_classes;
  data.split = split;
  std::vector<double> values(count * rows * cols);
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = images[kImageHeader + i] / 255.0;
  data.examples = Tensor(Shape{count, rows, cols}, std::move(values));
  data.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned char y = labels[kLabelHeader + i];
    if (y >= num_classes) throw FormatError(label_path.string() + ": label " + std::to_string(y) + " out of range");
    data.labels[i] = y;
  }
  return data;
}

void write_idx_dataset(const Dataset& data, const std::filesystem::path& image_path,
                       const std::filesystem::path& label_path) {
  const Shape& s = data.examples.shape();
  const bool squeezed = s.size() == 3;
  if (!squeezed && !(s.size() == 4 && s[1] == 1)) {
    throw ShapeError("IDX images must be (m,H,W) or (m,1,H,W), got " + shape_to_string(s));
  }
  const std::size_t h = s[s.size() - 2], w = s[s.size() - 1];
  std::ofstream img(image_path, std::ios::binary);
  std::ofstream lab(label_path, std::ios::binary);
  if (!img || !lab) throw FormatError("cannot write IDX files");
  write_be32(img, kImageMagic);
  write_be32(img, static_cast<std::uint32_t>(data.size()));
  write_be32(img, static_cast<std::uint32_t>(h));
  write_be32(img, static_cast<std::uint32_t>(w));
  for (double v : data.examples.data()) img.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
  write_be32(lab, kLabelMagic);
  write_be32(lab, static_cast<std::uint32_t>(data.size()));
  for (int y : data.labels) lab.put(static_cast<char>(static_cast<unsigned char>(y)));
}

}  // namespace advreg
