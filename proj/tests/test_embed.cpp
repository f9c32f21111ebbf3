#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "dydiff/embed.hpp"

using namespace dydiff;

TEST(Fnv1a, ReferenceVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(Tokenize, LowercasesAndSplits) {
  EXPECT_EQ(tokenize("Hello, WORLD-42 x"), (std::vector<std::string>{"hello", "world", "42", "x"}));
  EXPECT_TRUE(tokenize("  ,;  ").empty());
  EXPECT_EQ(tokenize("caf\xc3\xa9 ok"), (std::vector<std::string>{"caf", "ok"}));
}

TEST(EmbedText, Examples) {
  const auto zero = embed_text("", 8);
  for (double v : zero) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(embed_text("the same text", 16), embed_text("the same text", 16));
  EXPECT_EQ(embed_text("aa bb", 16), embed_text("bb aa", 16));
  EXPECT_THROW(embed_text("x", 1), DimensionError);
}

TEST(EmbedText, HashedCoordinateAndSign) {
  const Index d = 16;
  const auto v = embed_text("token", d);
  const std::uint64_t h = fnv1a64("token");
  EXPECT_DOUBLE_EQ(v[h % d], (h >> 63) ? -1.0 : 1.0);
}

TEST(EmbedText, UnitNorm) {
  const auto v = embed_text("one two three four five", 128);
  double s = 0.0;
  for (double x : v) s += x * x;
  EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(EmbedText, DisjointTextsNearlyOrthogonal) {
  std::mt19937_64 rng(1);
  int small = 0;
  for (int pair = 0; pair < 100; ++pair) {
    std::string a, b;
    for (int k = 0; k < 5; ++k) {
      a += " a" + std::to_string(rng() % 100000) + "x" + std::to_string(pair);
      b += " b" + std::to_string(rng() % 100000) + "y" + std::to_string(pair);
    }
    const auto va = embed_text(a, 128), vb = embed_text(b, 128);
    double dot = 0.0;
    for (Index i = 0; i < 128; ++i) dot += va[i] * vb[i];
    small += std::abs(dot) < 0.3 ? 1 : 0;
  }
  EXPECT_GE(small, 95);
}

TEST(LoadPrecomputed, NormalizesAndChecksDimension) {
  const auto p = std::filesystem::temp_directory_path() / "dydiff_embed.jsonl";
  std::ofstream(p) << R"({"id":"u","vec":[1,0]})" << '\n'
                   << R"({"id":"two","vec":[0,2]})" << '\n'
                   << R"({"id":"z","vec":[0,0]})" << '\n';
  const auto m = load_precomputed(p, 2);
  EXPECT_EQ(m.at("u"), (std::vector<double>{1, 0}));
  EXPECT_EQ(m.at("two"), (std::vector<double>{0, 1}));
  EXPECT_EQ(m.at("z"), (std::vector<double>{0, 0}));
  EXPECT_THROW(load_precomputed(p, 3), DimensionError);
}
