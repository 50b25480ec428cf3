#include <gtest/gtest.h>

#include <filesystem>

#include "advreg/checkpoint.hpp"
#include "advreg/errors.hpp"

using namespace advreg;

namespace {

ModelConfig conv() {
  ModelConfig c;
  c.arch = Architecture::small_conv;
  c.input_shape = {1, 6, 6};
  c.channels = 3;
  c.num_classes = 4;
  return c;
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitIdentical) {
  const Checkpoint ck{init_model(conv(), 3), 1234};
  const std::string bytes = encode_checkpoint(ck);
  EXPECT_EQ(bytes.substr(0, 8), "ADVRCKPT");
  const Checkpoint back = decode_checkpoint(bytes, conv());
  EXPECT_EQ(back.params, ck.params);
  EXPECT_EQ(back.step, 1234u);
  EXPECT_EQ(encode_checkpoint(back), bytes);

  const auto path = std::filesystem::temp_directory_path() / "advreg_ck_test.bin";
  save_checkpoint(ck, path);
  EXPECT_EQ(load_checkpoint(path, conv()).params, ck.params);
  std::filesystem::remove(path);
}

TEST(Checkpoint, LayoutIsLittleEndian) {
  const std::string bytes = encode_checkpoint({init_model(conv(), 3), 1});
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), kCheckpointVersion);
  EXPECT_EQ(bytes[9], 0);
  const std::uint64_t fp = fingerprint(conv());
  for (int i = 0; i < 8; ++i) {
    EXPECT_EQ(static_cast<unsigned char>(bytes[12 + static_cast<std::size_t>(i)]),
              static_cast<unsigned char>(fp >> (8 * i)));
  }
}

TEST(Checkpoint, CorruptionIsRejected) {
  const std::string bytes = encode_checkpoint({init_model(conv(), 3), 1});
  std::string magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(magic, conv()), FormatError);
  std::string version = bytes;
  version[8] = 9;
  EXPECT_THROW(decode_checkpoint(version, conv()), FormatError);
  for (std::size_t cut : {std::size_t{4}, std::size_t{30}, bytes.size() / 2, bytes.size() - 1}) {
    EXPECT_THROW(decode_checkpoint(bytes.substr(0, cut), conv()), FormatError) << cut;
  }
  EXPECT_THROW(decode_checkpoint(bytes + "x", conv()), FormatError);
}

TEST(Checkpoint, MismatchedConfigFailsFingerprint) {
  const std::string bytes = encode_checkpoint({init_model(conv(), 3), 1});
  ModelConfig other = conv();
  other.channels = 5;
  EXPECT_THROW(decode_checkpoint(bytes, other), Error);
  EXPECT_THROW(load_checkpoint("/nonexistent/ck.bin", conv()), Error);
}
