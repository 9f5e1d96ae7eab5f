#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "test_support.hpp"
#include "ultra/data.hpp"
#include "ultra/error.hpp"

using namespace ultra;
using namespace ultra::data;

namespace {

GeneratorConfig small_gen(std::uint64_t seed = 1) {
  GeneratorConfig g;
  g.seed = seed;
  return g;
}

bool is_count_fraction(double label, const GeneratorConfig& g) {
  for (std::size_t t = g.min_cells; t <= g.max_cells; ++t) {
    for (std::size_t m = 0; m <= t; ++m) {
      if (label == static_cast<double>(m) / static_cast<double>(t)) return true;
    }
  }
  return false;
}

}  // namespace

TEST(Generate, LabelsAreExactCountFractionsAndPatchesValid) {
  const auto g = small_gen();
  const auto ds = generate(g, 500);
  ASSERT_EQ(ds.size(), 500u);
  for (const auto& s : ds) {
    EXPECT_TRUE(is_count_fraction(s.label, g)) << s.label;
    EXPECT_EQ(s.patch.height, 16u);
    EXPECT_EQ(s.patch.width, 16u);
    EXPECT_NO_THROW(s.patch.validate());
  }
  EXPECT_EQ(ds[7].id, "p0007");
}

TEST(Generate, ZeroMalignantProbabilityGivesZeroLabels) {
  auto g = small_gen();
  g.malignant_prob = {0.0, 0.0};
  g.p_all_malignant = 0.0;
  for (const auto& s : generate(g, 200)) EXPECT_EQ(s.label, 0.0);
}

TEST(Generate, DeterministicBytes) {
  EXPECT_EQ(encode_dataset(generate(small_gen(3), 50)), encode_dataset(generate(small_gen(3), 50)));
  EXPECT_NE(encode_dataset(generate(small_gen(3), 50)), encode_dataset(generate(small_gen(4), 50)));
  // sample i depends only on seed ^ i
  EXPECT_EQ(generate(small_gen(3), 50)[20], generate(small_gen(3), 30)[20]);
}

TEST(Generate, LabelHistogramCoversEveryBin) {
  const auto ds = generate(small_gen(5), 10000);
  std::vector<int> bins(10, 0);
  for (const auto& s : ds) ++bins[std::min<std::size_t>(9, static_cast<std::size_t>(s.label * 10))];
  for (int b : bins) EXPECT_GT(b, 0);
}

TEST(Generate, RejectsInvalidConfig) {
  auto g = small_gen();
  g.benign_band = {0.7, 0.9};  // overlaps the malignant band
  EXPECT_THROW(generate(g, 1), std::invalid_argument);
  g = small_gen();
  g.min_cells = 5;
  g.max_cells = 4;
  EXPECT_THROW(generate(g, 1), std::invalid_argument);
  g = small_gen();
  g.radius = {9.0, 9.0};
  EXPECT_THROW(generate(g, 1), std::invalid_argument);
  EXPECT_THROW(generate(small_gen(), 0), std::invalid_argument);
}

TEST(Generate, SnappedCentersGiveFixedFootprint) {
  auto g = small_gen(6);
  g.snap_centers = true;
  g.radius = {1.8, 1.8};
  g.noise_std = 0.0;
  g.min_cells = 1;
  g.max_cells = 1;
  for (const auto& s : generate(g, 50)) {
    int lit = 0;
    for (float v : s.patch.pixels) lit += v > 0.2f ? 1 : 0;
    EXPECT_EQ(lit, 9);  // a 3x3 block for radius 1.8
  }
}

TEST(Norm, StatisticsAndApplication) {
  const auto ds = generate(small_gen(7), 100);
  const NormStats st = compute_norm_stats(ds);
  double s = 0.0, s2 = 0.0;
  std::size_t n = 0;
  for (const auto& smp : ds) {
    for (double v : apply_norm(smp.patch, st)) {
      s += v;
      s2 += v * v;
      ++n;
    }
  }
  const double mean = s / static_cast<double>(n);
  EXPECT_NEAR(mean, 0.0, 1e-9);
  EXPECT_NEAR(std::sqrt(s2 / static_cast<double>(n) - mean * mean), 1.0, 1e-6);

  // validation data uses the training statistics unchanged
  const auto val = generate(small_gen(8), 10);
  const auto x = apply_norm(val[0].patch, st);
  EXPECT_EQ(x[3], (static_cast<double>(val[0].patch.pixels[3]) - st.mean) / st.std);
}

TEST(Norm, ConstantDatasetIsDegenerate) {
  Dataset ds{{"a", Patch(4, 4, 0.5f), 0.0}, {"b", Patch(4, 4, 0.5f), 1.0}};
  EXPECT_THROW(compute_norm_stats(ds), DegenerateInput);
  EXPECT_THROW(compute_norm_stats(Dataset{}), std::invalid_argument);
}

TEST(Split, SizesAndDegenerateFractions) {
  const auto ds = generate(small_gen(9), 1000);
  const auto sp = split(ds, {0.8, 0.1, 0.1}, 3);
  EXPECT_EQ(sp.train.size(), 800u);
  EXPECT_EQ(sp.val.size(), 100u);
  EXPECT_EQ(sp.test.size(), 100u);
  const auto all = split(ds, {1.0, 0.0, 0.0}, 3);
  EXPECT_EQ(all.train.size(), 1000u);
  EXPECT_TRUE(all.val.empty());
  EXPECT_TRUE(all.test.empty());
  EXPECT_EQ(split(ds, {0.8, 0.1, 0.1}, 3).val, sp.val);
  EXPECT_THROW(split(ds, {0.5, 0.1, 0.1}, 3), std::invalid_argument);
  EXPECT_THROW(split(ds, {1.2, -0.1, -0.1}, 3), std::invalid_argument);
}

TEST(Split, DisjointCoverProperty) {
  Rng rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(60);
    Dataset ds;
    for (std::size_t i = 0; i < n; ++i) ds.push_back({"s" + std::to_string(i), Patch(1, 1), 0.0});
    const double v = rng.uniform(0.0, 0.5), t = rng.uniform(0.0, 0.5 - v / 2);
    const auto sp = split(ds, {1.0 - v - t, v, t}, rng.next_u64());
    std::multiset<std::string> ids;
    for (const auto* part : {&sp.train, &sp.val, &sp.test}) {
      for (const auto& s : *part) ids.insert(s.id);
    }
    ASSERT_EQ(ids.size(), n);
    for (const auto& s : ds) EXPECT_EQ(ids.count(s.id), 1u);
    EXPECT_EQ(sp.val.size(), static_cast<std::size_t>(std::floor(v * static_cast<double>(n) + 1e-9)));
  }
}

TEST(Ulds, ExactByteLayout) {
  Patch p(1, 2);
  p.pixels = {0.5f, 1.0f};
  const Dataset ds{{"ab", p, 0.25}};
  const auto bytes = encode_dataset(ds);
  const std::vector<std::uint8_t> expected{
      'U', 'L', 'D', 'S', 1, 0,                // magic, version
      1, 0, 0, 0,                              // count
      2, 0, 'a', 'b',                          // id
      1, 0, 2, 0,                              // height, width
      0, 0, 0, 0, 0, 0, 0xD0, 0x3F,            // label 0.25
      0, 0, 0, 0x3F, 0, 0, 0x80, 0x3F};        // pixels 0.5f, 1.0f
  EXPECT_EQ(bytes, expected);
}

TEST(Ulds, RoundTripPreservesEveryByte) {
  ultra::testing::TempDir dir("ulds");
  const auto ds = generate(small_gen(11), 64);
  save_dataset(ds, dir.file("d.ulds"));
  const auto loaded = load_dataset(dir.file("d.ulds"));
  EXPECT_EQ(loaded, ds);
  EXPECT_EQ(encode_dataset(loaded), encode_dataset(ds));
}

TEST(Ulds, CorruptInputsAreParseErrors) {
  const auto bytes = encode_dataset(generate(small_gen(12), 3));
  for (std::size_t cut : {0u, 3u, 5u, 9u, 20u, 100u}) {
    const std::vector<std::uint8_t> truncated(bytes.begin(), bytes.begin() + cut);
    EXPECT_THROW(decode_dataset(truncated), ParseError) << cut;
  }
  try {
    decode_dataset(std::vector<std::uint8_t>(bytes.begin(), bytes.end() - 1));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_GT(e.offset(), 0u);
  }
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_dataset(bad_magic), ParseError);
  auto bad_version = bytes;
  bad_version[4] = 2;
  EXPECT_THROW(decode_dataset(bad_version), VersionError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(decode_dataset(trailing), ParseError);
  EXPECT_THROW(load_dataset("/nonexistent/dir/x.ulds"), IoError);
}

TEST(LabelsCsv, FormatAndParse) {
  const auto rows = parse_labels_csv("id,tc\np0007,0.42\n");
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].id, "p0007");
  EXPECT_EQ(rows[0].tc, 0.42);
  const auto ds = generate(small_gen(13), 20);
  const auto back = parse_labels_csv(labels_csv(ds));
  ASSERT_EQ(back.size(), ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(back[i].id, ds[i].id);
    EXPECT_EQ(back[i].tc, ds[i].label);
  }
  EXPECT_EQ(labels_csv(ds).rfind("id,tc\n", 0), 0u);
  EXPECT_THROW(parse_labels_csv("p1\n"), std::invalid_argument);
}
