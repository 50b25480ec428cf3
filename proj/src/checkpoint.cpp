#include "advreg/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <sstream>
#include <string_view>

#include "advreg/errors.hpp"

namespace advreg {

namespace {

constexpr std::string_view kMagic = "ADVRCKPT";

template <typename T>
void put(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

class Cursor {
 public:
  explicit Cursor(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      value |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return value;
  }

  std::string take(std::size_t n, const char* what) {
    need(n, what);
    std::string out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  bool done() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError("checkpoint truncated while reading " + std::string(what) + " at byte " + std::to_string(pos_));
    }
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const Checkpoint& checkpoint) {
  std::string out(kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, checkpoint.params.fingerprint);
  put<std::uint64_t>(out, checkpoint.step);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(checkpoint.params.tensors.size()));
  for (const auto& t : checkpoint.params.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.value.rank()));
    for (std::size_t d : t.value.shape()) put<std::uint64_t>(out, d);
    for (double v : t.value.data()) put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes, const ModelConfig& expected) {
  Cursor in(bytes);
  if (in.take(kMagic.size(), "magic") != kMagic) throw FormatError("not a checkpoint (bad magic)");
  const auto version = in.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint version " + std::to_string(version) + ", expected " +
                      std::to_string(kCheckpointVersion));
  }
  Checkpoint c;
  c.params.fingerprint = in.get<std::uint64_t>("fingerprint");
  if (c.params.fingerprint != fingerprint(expected)) {
    throw Error("checkpoint fingerprint does not match model config " + expected.describe());
  }
  c.step = in.get<std::uint64_t>("step");
  const auto count = in.get<std::uint32_t>("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = in.take(in.get<std::uint32_t>("name length"), "name");
    const auto rank = in.get<std::uint32_t>("rank");
    if (rank > 8) throw FormatError("checkpoint tensor " + t.name + " has implausible rank " + std::to_string(rank));
    Shape shape;
    std::size_t elements = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto dim = in.get<std::uint64_t>("dims");
      if (dim != 0 && elements > in.remaining() / 8 / dim) throw FormatError("checkpoint truncated in " + t.name);
      elements *= static_cast<std::size_t>(dim);
      shape.push_back(static_cast<std::size_t>(dim));
    }
    std::vector<double> values(shape_size(shape));
    for (double& v : values) v = std::bit_cast<double>(in.get<std::uint64_t>("values"));
    t.value = Tensor(std::move(shape), std::move(values));
    c.params.tensors.push_back(std::move(t));
  }
  if (!in.done()) throw FormatError("checkpoint has trailing bytes");
  check_fingerprint(expected, c.params);
  return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  const std::string bytes = encode_checkpoint(checkpoint);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read checkpoint " + path.string());
  std::ostringstream bytes;
  bytes << in.rdbuf();
  return decode_checkpoint(bytes.str(), expected);
}

}  // namespace advreg
