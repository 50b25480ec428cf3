#pragma once

#include <filesystem>

#include "advreg/data.hpp"

namespace advreg {

// MNIST-style IDX files: big-endian header (magic, counts, dims) followed by
// unsigned-byte payload. Images use magic 2051 (rank 3), labels 2049.
// Pixel bytes are scaled by 1/255. Throws FormatError on bad magic,
// truncation or mismatched counts.
Dataset load_idx_dataset(const std::filesystem::path& image_path, const std::filesystem::path& label_path,
                         std::size_t num_classes = 10, Split split = Split::train);

// Writes (m,H,W) or (m,1,H,W) examples with values in [0,1] (rounded to bytes).
void write_idx_dataset(const Dataset& data, const std::filesystem::path& image_path,
                       const std::filesystem::path& label_path);

}  // namespace advreg
