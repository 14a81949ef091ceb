#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "dear/errors.hpp"
#include "dear/synthvid.hpp"

namespace dear::synthvid {
namespace {

GenConfig small_config() {
  GenConfig g;
  g.height = 32;
  g.width = 32;
  return g;
}

std::vector<double> frame_means(const std::vector<float>& depth, const VideoClip& clip) {
  std::vector<double> out(clip.frames, 0.0);
  const std::size_t hw = clip.pixels_per_frame();
  for (std::uint32_t t = 0; t < clip.frames; ++t) {
    for (std::size_t i = 0; i < hw; ++i) out[t] += depth[t * hw + i];
    out[t] /= static_cast<double>(hw);
  }
  return out;
}

TEST(GenerateClip, DeterministicForSameInputs) {
  const GenConfig g = small_config();
  EXPECT_EQ(generate_clip(3, 42, g), generate_clip(3, 42, g));
  EXPECT_NE(generate_clip(3, 42, g).rgb, generate_clip(3, 43, g).rgb);
}

TEST(GenerateClip, ValuesInUnitRangeAndShapesAgree) {
  const GenConfig g = small_config();
  for (std::uint32_t c = 0; c < kStandardNumClasses; ++c) {
    const VideoClip clip = generate_clip(c, 1000 + c, g);
    ASSERT_EQ(clip.rgb.size(), static_cast<std::size_t>(g.frames_total) * 32 * 32 * 3);
    ASSERT_EQ(clip.depth.size(), static_cast<std::size_t>(g.frames_total) * 32 * 32);
    for (float v : clip.rgb) ASSERT_TRUE(v >= 0.0f && v <= 1.0f && std::isfinite(v));
    for (float v : clip.depth) ASSERT_TRUE(v >= 0.0f && v <= 1.0f && std::isfinite(v));
    EXPECT_EQ(clip.label, c);
  }
}

TEST(GenerateClip, ApproachDepthStrictlyIncreases) {
  const GenConfig g = small_config();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const VideoClip clip = generate_clip(kApproach, seed, g);
    const auto m = frame_means(clip.depth, clip);
    for (std::size_t t = 1; t < m.size(); ++t) EXPECT_GT(m[t], m[t - 1]) << "seed " << seed;
  }
}

TEST(GenerateClip, RecedeDepthStrictlyDecreases) {
  const GenConfig g = small_config();
  const VideoClip clip = generate_clip(kRecede, 5, g);
  const auto m = frame_means(clip.depth, clip);
  for (std::size_t t = 1; t < m.size(); ++t) EXPECT_LT(m[t], m[t - 1]);
}

TEST(GenerateClip, PartnersShareRgbButNotDepth) {
  const GenConfig g = small_config();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (auto [a, b] : {std::pair{kApproach, kRecede}, std::pair{kPassBehind, kPassInFront}}) {
      const VideoClip ca = generate_clip(a, seed, g), cb = generate_clip(b, seed, g);
      EXPECT_EQ(ca.rgb, cb.rgb) << "classes " << a << "/" << b << " seed " << seed;
      EXPECT_NE(ca.depth, cb.depth);
    }
  }
}

TEST(GenerateClip, PartnersHaveIdenticalSilhouetteStats) {
  const GenConfig g = small_config();
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto sa = rgb_silhouette_stats(generate_clip(kApproach, seed, g));
    const auto sb = rgb_silhouette_stats(generate_clip(kRecede, seed, g));
    ASSERT_EQ(sa.size(), sb.size());
    for (std::size_t t = 0; t < sa.size(); ++t) {
      EXPECT_EQ(sa[t].area, sb[t].area);
      EXPECT_EQ(sa[t].centroid_x, sb[t].centroid_x);
    }
  }
}

TEST(GenerateClip, LateralClassesMoveOppositeWays) {
  const GenConfig g = small_config();
  const auto left = rgb_silhouette_stats(generate_clip(kLateralLeft, 9, g));
  const auto right = rgb_silhouette_stats(generate_clip(kLateralRight, 9, g));
  EXPECT_LT(left.back().centroid_x, left.front().centroid_x);
  EXPECT_GT(right.back().centroid_x, right.front().centroid_x);
}

TEST(GenerateClip, ClassOutOfRange) {
  GenConfig g = small_config();
  g.num_classes = 4;
  EXPECT_THROW(generate_clip(4, 0, g), ContractError);
}

TEST(GenConfig, ValidateNamesField) {
  GenConfig g;
  g.stride = 5;  // 7 * 5 = 35 >= 32
  try {
    g.validate();
    FAIL();
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("frames_total"), std::string::npos);
  }
}

TEST(SampleFrames, StaticStrideIndices) {
  GenConfig g = small_config();
  const VideoClip clip = generate_clip(2, 3, g);
  const VideoClip s = sample_frames(clip, 8, 4);
  ASSERT_EQ(s.frames, 8u);
  const std::size_t hw = clip.pixels_per_frame();
  for (std::uint32_t i = 0; i < 8; ++i) {
    EXPECT_TRUE(std::equal(s.depth.begin() + i * hw, s.depth.begin() + (i + 1) * hw,
                           clip.depth.begin() + 4 * i * hw));
  }
}

TEST(SampleFrames, DegenerateAndIdentity) {
  const VideoClip clip = generate_clip(0, 3, small_config());
  EXPECT_EQ(sample_frames(clip, 1, 31).frames, 1u);
  EXPECT_EQ(sample_frames(clip, clip.frames, 1), clip);
  EXPECT_THROW(sample_frames(clip, 8, 5), RangeError);
}

TEST(Quantize, BinCentreRounding) {
  EXPECT_NEAR(quantize(0.5, 8), 4.0 / 7.0, 1e-15);
  EXPECT_EQ(quantize(0.0, 8), 0.0);
  EXPECT_EQ(quantize(1.0, 8), 1.0);
}

TEST(EstimateDepth, GroundTruthIsPassthrough) {
  const VideoClip clip = sample_frames(generate_clip(1, 8, small_config()), 8, 4);
  EXPECT_EQ(estimate_depth(clip, DepthMode::ground_truth()), clip.depth);
}

TEST(EstimateDepth, QuantizedNoisyLandsOnGrid) {
  const VideoClip clip = sample_frames(generate_clip(1, 8, small_config()), 8, 4);
  const auto d = estimate_depth(clip, DepthMode::quantized_noisy(8, 0.05));
  std::set<float> values(d.begin(), d.end());
  EXPECT_LE(values.size(), 8u);
  for (float v : values) EXPECT_NEAR(v * 7.0, std::round(v * 7.0), 1e-5);
  EXPECT_EQ(d, estimate_depth(clip, DepthMode::quantized_noisy(8, 0.05)));
}

TEST(EstimateDepth, PictorialCannotSeparateApproachFromRecede) {
  const GenConfig g = small_config();
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const VideoClip a = sample_frames(generate_clip(kApproach, seed, g), 8, 4);
    const VideoClip r = sample_frames(generate_clip(kRecede, seed, g), 8, 4);
    const auto da = estimate_depth(a, DepthMode::pictorial());
    EXPECT_EQ(da, estimate_depth(r, DepthMode::pictorial()));
    const auto m = frame_means(da, a);
    for (double v : m) EXPECT_NEAR(v, m.front(), 1e-6) << "pictorial depth varies over time";
  }
}

TEST(DepthMode, ParseRoundTrip) {
  EXPECT_EQ(DepthMode::parse("ground_truth"), DepthMode::ground_truth());
  EXPECT_EQ(DepthMode::parse("pictorial"), DepthMode::pictorial());
  EXPECT_EQ(DepthMode::parse("quantized_noisy"), DepthMode::quantized_noisy(8, 0.05));
  EXPECT_EQ(DepthMode::parse("quantized_noisy:16:0.1"), DepthMode::quantized_noisy(16, 0.1));
  const DepthMode q = DepthMode::quantized_noisy(4, 0.25);
  EXPECT_EQ(DepthMode::parse(q.to_string()), q);
  EXPECT_THROW(DepthMode::parse("midas"), ContractError);
}

TEST(BuildDataset, CountsAndBalance) {
  const DatasetSplit s = build_dataset(GenConfig{}, 100, 0.8, 1);
  EXPECT_EQ(s.train.size(), 480u);
  EXPECT_EQ(s.val.size(), 120u);
  for (std::uint32_t c = 0; c < 6; ++c) {
    EXPECT_EQ(std::count_if(s.train.begin(), s.train.end(), [c](auto& r) { return r.class_id == c; }), 80);
    EXPECT_EQ(std::count_if(s.val.begin(), s.val.end(), [c](auto& r) { return r.class_id == c; }), 20);
  }
}

TEST(BuildDataset, DeterministicAndDisjoint) {
  const DatasetSplit a = build_dataset(GenConfig{}, 10, 0.7, 3);
  const DatasetSplit b = build_dataset(GenConfig{}, 10, 0.7, 3);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.val, b.val);
  std::set<ManifestRecord> train(a.train.begin(), a.train.end());
  for (const auto& r : a.val) EXPECT_FALSE(train.count(r));
  EXPECT_NE(build_dataset(GenConfig{}, 10, 0.7, 4).train, a.train);
}

TEST(BuildDataset, Preconditions) {
  EXPECT_THROW(build_dataset(GenConfig{}, 1, 0.8, 0), ContractError);
  EXPECT_THROW(build_dataset(GenConfig{}, 10, 1.0, 0), ContractError);
  EXPECT_THROW(build_dataset(GenConfig{}, 10, 0.0, 0), ContractError);
}

}  // namespace
}  // namespace dear::synthvid
