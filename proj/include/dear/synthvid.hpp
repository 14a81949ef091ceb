#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dear::synthvid {

// Standard six-class set. Pairs (0,1) and (4,5) render identical RGB for the
// same seed and differ only in depth.
enum ClassId : std::uint32_t {
  kApproach = 0,
  kRecede = 1,
  kLateralLeft = 2,
  kLateralRight = 3,
  kPassBehind = 4,
  kPassInFront = 5,
};

inline constexpr std::uint32_t kStandardNumClasses = 6;

enum class DepthModeKind { kGroundTruth, kQuantizedNoisy, kPictorial };

struct DepthMode {
  DepthModeKind kind = DepthModeKind::kGroundTruth;
  int levels = 8;      // quantized_noisy only
  double sigma = 0.0;  // quantized_noisy only

  static DepthMode ground_truth() { return {}; }
  static DepthMode quantized_noisy(int levels, double sigma) {
    return {DepthModeKind::kQuantizedNoisy, levels, sigma};
  }
  static DepthMode pictorial() { return {DepthModeKind::kPictorial, 8, 0.0}; }

  // "ground_truth", "pictorial", or "quantized_noisy[:levels[:sigma]]".
  static DepthMode parse(const std::string& text);
  std::string to_string() const;
  bool operator==(const DepthMode&) const = default;
};

// How rendered inverse depth is mapped into [0, 1].
enum class DepthNormalization {
  kMinMax,  // per clip: (v - min) / (max - min)
  kFixed,   // v / (1 / nearest representable z), clamped
};

std::string to_string(DepthNormalization n);
DepthNormalization parse_depth_normalization(const std::string& text);

enum class Shape2D { kSquare, kDisc };

struct GenConfig {
  std::uint32_t height = 64;
  std::uint32_t width = 64;
  std::uint32_t frames_total = 32;
  std::uint32_t frames_sampled = 8;
  std::uint32_t stride = 4;
  std::uint32_t num_classes = kStandardNumClasses;
  std::vector<Shape2D> shapes = {Shape2D::kSquare, Shape2D::kDisc};
  // Object side (or diameter) range in pixels at 64x64; scaled with frame size.
  double object_size_min = 12.0;
  double object_size_max = 18.0;
  // Object albedo channel range; backgrounds are drawn darker.
  double albedo_min = 0.55;
  double albedo_max = 0.95;
  double rgb_noise = 0.02;
  DepthMode depth_mode;
  DepthNormalization depth_normalization = DepthNormalization::kMinMax;

  // Throws ContractError naming the offending field.
  void validate() const;
  bool operator==(const GenConfig&) const = default;
};

struct VideoClip {
  std::uint32_t frames = 0;  // T
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::vector<float> rgb;    // T x H x W x 3, row-major, in [0, 1]
  std::vector<float> depth;  // T x H x W, normalised inverse depth, 1 = nearest
  std::uint32_t label = 0;
  std::uint64_t seed = 0;

  std::size_t pixels_per_frame() const {
    return static_cast<std::size_t>(height) * width;
  }
  bool operator==(const VideoClip&) const = default;
};

struct ClassSpec {
  std::uint32_t id;
  const char* name;
  std::optional<std::uint32_t> rgb_partner;
};

// Class table of the standard set, indexed by id.
const std::vector<ClassSpec>& standard_classes();

// Renders a clip with cfg.frames_total frames. Pure in (class_id, seed, cfg).
VideoClip generate_clip(std::uint32_t class_id, std::uint64_t seed, const GenConfig& cfg);

// Frames {0, stride, ..., (n-1)*stride} of both rgb and depth.
VideoClip sample_frames(const VideoClip& clip, std::uint32_t n, std::uint32_t stride);

// Generates and samples per cfg.frames_sampled / cfg.stride, then replaces the
// depth channel by cfg.depth_mode's estimate.
VideoClip make_training_clip(std::uint32_t class_id, std::uint64_t seed,
                             const GenConfig& cfg);

// Depth as seen by the model: T x H x W in [0, 1].
std::vector<float> estimate_depth(const VideoClip& clip, const DepthMode& mode);

// Bin-centre rounding onto `levels` uniform values {0, 1/(levels-1), ..., 1}.
double quantize(double value, int levels);

// Per-frame foreground statistics recovered from RGB alone: a pixel is
// foreground when it differs from its row's per-channel median.
struct FrameStats {
  double area = 0.0;  // foreground pixel count
  double centroid_x = 0.0;
  double centroid_y = 0.0;
};
std::vector<FrameStats> rgb_silhouette_stats(const VideoClip& clip);
std::vector<std::vector<bool>> rgb_foreground_masks(const VideoClip& clip);

// Per-frame mean of `depth` over each frame's RGB foreground mask.
std::vector<double> foreground_depth_means(const VideoClip& clip,
                                           const std::vector<float>& depth);

struct ManifestRecord {
  std::uint32_t class_id = 0;
  std::uint64_t seed = 0;
  bool operator==(const ManifestRecord&) const = default;
  auto operator<=>(const ManifestRecord&) const = default;
};

struct DatasetSplit {
  std::vector<ManifestRecord> train;
  std::vector<ManifestRecord> val;
};

// Class-balanced seeded split: round(split_ratio * n_per_class) clips of each
// class go to train, the rest to val.
DatasetSplit build_dataset(const GenConfig& cfg, std::uint32_t n_per_class,
                           double split_ratio, std::uint64_t seed);

}  // namespace dear::synthvid
