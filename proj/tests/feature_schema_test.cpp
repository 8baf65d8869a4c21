#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "sentinel/feature_schema.hpp"

using namespace sentinel;

TEST(FeatureSchema, NinetyOrderedDims) {
  auto m = FeatureSchema().manifest();
  ASSERT_EQ(m["features"].size(), 90u);
  EXPECT_EQ(m["input_dims"], 90);
  std::set<std::string> names;
  for (std::size_t i = 0; i < 90; ++i) {
    names.insert(m["features"][i]["name"].get<std::string>());
    EXPECT_EQ(m["features"][i]["section"], i < 78 ? "flow" : "http") << i;
  }
  EXPECT_EQ(names.size(), 90u);
  EXPECT_EQ(m["features"][78]["name"], std::string(http::kHttpFeatureNames[0]));
  EXPECT_EQ(m["features"][22]["populated"], false);
  EXPECT_EQ(m["features"][21]["populated"], true);
}

TEST(FeatureSchema, ShippedManifestMatches) {
  std::ifstream in(std::string(SENTINEL_DATA_DIR) + "/feature_schema.json");
  ASSERT_TRUE(in);
  auto shipped = Json::parse(in);
  EXPECT_EQ(shipped, FeatureSchema().manifest());
  EXPECT_EQ(sha256(shipped.dump()), FeatureSchema().hash());
}

TEST(FeatureSchema, HashCoversRuleset) {
  auto other = http::Ruleset::parse("# version: 2\nsqli literal union select\n");
  EXPECT_NE(FeatureSchema(other).hash(), FeatureSchema().hash());
  EXPECT_EQ(FeatureSchema().hash(), FeatureSchema(http::Ruleset::builtin()).hash());
}

TEST(FeatureSchema, AssembleAppliesLog1pToFlowOnly) {
  flow::FlowSection f{};
  f[0] = 2.0;
  f[7] = 1e5;
  f[30] = 0.0;
  http::HttpFeatureVector h;
  h.sqli_flag = 1;
  h.complexity_score = 0.25;
  auto x = assemble_input(f, h);
  EXPECT_DOUBLE_EQ(x[0], std::log1p(2.0));
  EXPECT_DOUBLE_EQ(x[7], std::log1p(1e5));
  EXPECT_EQ(x[30], 0.0);
  auto ha = h.to_array();
  for (std::size_t i = 0; i < http::kHttpDims; ++i) EXPECT_EQ(x[78 + i], ha[i]) << i;
}

TEST(FeatureSchema, NegativeFlowValuesClampToZero) {
  flow::FlowSection f{};
  f[3] = -5.0;
  EXPECT_EQ(assemble_input(f, {})[3], 0.0);
}
