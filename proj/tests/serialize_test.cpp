#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <random>

#include "sentinel/feature_schema.hpp"
#include "sentinel/neural/network.hpp"
#include "sentinel/neural/serialize.hpp"

using namespace sentinel;
using namespace sentinel::neural;

namespace {

const std::vector<std::size_t> kSmallDims = {4, 3, 1};

ModelBundle trained_looking_model(std::uint64_t seed) {
  auto m = init_model(FeatureSchema().hash(), seed);
  std::mt19937_64 rng(seed ^ 0x55);
  std::normal_distribution<float> n(0.0f, 0.3f);
  for (auto& norm : m.norms) {
    for (auto& v : norm.gamma) v = 1.0f + n(rng);
    for (auto& v : norm.beta) v = n(rng);
    for (auto& v : norm.running_mean) v = n(rng);
    for (auto& v : norm.running_var) v = 0.5f + std::abs(n(rng));
  }
  m.meta = {17, 0.1234, seed};
  return m;
}

std::filesystem::path temp_file(const char* name) {
  return std::filesystem::temp_directory_path() / (std::string("sentinel_") + name);
}

}  // namespace

TEST(Serialize, HeaderLayout) {
  auto m = trained_looking_model(1);
  auto bytes = serialize_model(m);
  EXPECT_EQ(bytes.substr(0, 4), "SSNN");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1);
  EXPECT_EQ(static_cast<unsigned char>(bytes[5]), 0);
  EXPECT_EQ(std::memcmp(bytes.data() + 6, m.schema_hash.data(), 32), 0);
  EXPECT_EQ(static_cast<unsigned char>(bytes[38]), 6);  // dim count
  EXPECT_EQ(static_cast<unsigned char>(bytes[42]), 90);
  // header + tensors (params plus running stats) + trailer
  const std::size_t stats = 2 * (256 + 128 + 64 + 32);
  EXPECT_EQ(bytes.size(), 4 + 2 + 32 + 4 + 6 * 4 + 4 * (m.parameter_count() + stats) + 20);
}

TEST(Serialize, RoundTripIsBitExact) {
  auto m = trained_looking_model(2);
  const auto path = temp_file("roundtrip.ssnn");
  save_model(m, path.string());
  auto back = load_model(path.string());
  std::filesystem::remove(path);
  EXPECT_EQ(back, m);
  EXPECT_EQ(back.meta.epochs_run, 17u);

  Network<float> a, b;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(-3, 3);
  std::vector<float> x(90);
  for (int i = 0; i < 100; ++i) {
    for (auto& v : x) v = u(rng);
    const float za = a.forward(m, x, 1)[0];
    const float zb = b.forward(back, x, 1)[0];
    EXPECT_EQ(std::bit_cast<std::uint32_t>(za), std::bit_cast<std::uint32_t>(zb));
  }
}

TEST(Serialize, SerializationIsDeterministic) {
  EXPECT_EQ(serialize_model(trained_looking_model(4)), serialize_model(trained_looking_model(4)));
}

TEST(Serialize, BadMagic) {
  auto bytes = serialize_model(trained_looking_model(5));
  bytes[0] = 'X';
  EXPECT_THROW(deserialize_model(bytes), BadMagic);
  EXPECT_THROW(deserialize_model("SS"), BadMagic);
}

TEST(Serialize, UnsupportedVersion) {
  auto bytes = serialize_model(trained_looking_model(6));
  bytes[4] = 2;
  EXPECT_THROW(deserialize_model(bytes), VersionUnsupported);
}

TEST(Serialize, EveryTruncationIsRejected) {
  auto bytes = serialize_model(make_model<float>(kSmallDims, Sha256{}));
  for (std::size_t n = 6; n < bytes.size(); ++n)
    EXPECT_THROW(deserialize_model(std::string_view(bytes).substr(0, n)), Error) << n;
}

TEST(Serialize, TruncatedTensorData) {
  auto bytes = serialize_model(trained_looking_model(7));
  bytes.resize(bytes.size() - 100);
  EXPECT_THROW(deserialize_model(bytes), TruncatedFile);
}

TEST(Serialize, DimMismatch) {
  auto bytes = serialize_model(make_model<float>(kSmallDims, Sha256{}));
  auto bad = bytes;
  bad[38 + 4 + 8] = 2;  // output width 2
  EXPECT_THROW(deserialize_model(bad), DimMismatch);
  bad = bytes;
  bad[38 + 4 + 4] = 0;  // zero-width hidden layer
  EXPECT_THROW(deserialize_model(bad), DimMismatch);
  EXPECT_THROW(deserialize_model(bytes + "extra"), DimMismatch);
}

TEST(Serialize, MissingFile) { EXPECT_THROW(load_model("/nonexistent/model.ssnn"), Error); }
