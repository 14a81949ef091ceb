#include "dear/synthvid.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dear/errors.hpp"
#include "dear/rng.hpp"

namespace dear::synthvid {
namespace {

constexpr double kNearestZ = 1.5;
constexpr double kForegroundThreshold = 0.15;

// Every random quantity of a scene, drawn in a fixed order independent of the
// class so that partnered classes share RGB exactly for equal seeds.
struct SceneDraws {
  double bg[3];
  Shape2D shape;
  double size;
  double albedo[3];
  double x0, y0;
  double z_far, z_near;
  double lateral_jitter;
  double z_mid;
  double bar_center, bar_width, z_bar, bar_delta;
  bool traverse_left_to_right;
};

SceneDraws draw_scene(Rng& rng, const GenConfig& cfg) {
  const double w = cfg.width, h = cfg.height;
  const double size_scale = std::min(w, h) / 64.0;
  SceneDraws s{};
  for (double& c : s.bg) c = rng.uniform(0.05, 0.2);
  s.shape = cfg.shapes[rng.below(cfg.shapes.size())];
  s.size = rng.uniform(cfg.object_size_min, cfg.object_size_max) * size_scale;
  for (double& c : s.albedo) c = rng.uniform(cfg.albedo_min, cfg.albedo_max);
  s.x0 = rng.uniform(0.3, 0.7) * w;
  s.y0 = rng.uniform(0.3, 0.7) * h;
  s.z_far = rng.uniform(5.0, 6.0);
  s.z_near = rng.uniform(kNearestZ, 2.0);
  s.lateral_jitter = rng.uniform(-0.05, 0.05) * w;
  s.z_mid = rng.uniform(2.5, 5.0);
  s.bar_center = rng.uniform(0.4, 0.6) * w;
  s.bar_width = rng.uniform(8.0, 12.0) * size_scale;
  s.z_bar = rng.uniform(3.0, 3.5);
  s.bar_delta = rng.uniform(1.5, 2.5);
  s.traverse_left_to_right = rng.uniform() < 0.5;
  return s;
}

struct ObjectPose {
  double x, y, z;
};

ObjectPose pose_at(std::uint32_t class_id, const SceneDraws& s, double tau, double w) {
  auto lerp = [tau](double a, double b) { return a + (b - a) * tau; };
  switch (class_id) {
    case kApproach:
      return {s.x0, s.y0, lerp(s.z_far, s.z_near)};
    case kRecede:
      return {s.x0, s.y0, lerp(s.z_near, s.z_far)};
    case kLateralLeft:
      return {lerp(0.8 * w, 0.2 * w) + s.lateral_jitter, s.y0, s.z_mid};
    case kLateralRight:
      return {lerp(0.2 * w, 0.8 * w) + s.lateral_jitter, s.y0, s.z_mid};
    case kPassBehind:
    case kPassInFront: {
      const double a = s.traverse_left_to_right ? 0.15 * w : 0.85 * w;
      const double b = s.traverse_left_to_right ? 0.85 * w : 0.15 * w;
      const double z = class_id == kPassBehind ? s.z_bar + s.bar_delta
                                               : s.z_bar - 0.6 * s.bar_delta;
      return {lerp(a, b), s.y0, z};
    }
    default:
      throw ContractError("unknown class id " + std::to_string(class_id));
  }
}

bool covers(Shape2D shape, double size, double cx, double cy, double px, double py) {
  const double half = 0.5 * size;
  if (shape == Shape2D::kSquare) return std::abs(px - cx) <= half && std::abs(py - cy) <= half;
  const double dx = px - cx, dy = py - cy;
  return dx * dx + dy * dy <= half * half;
}

bool has_occluder(std::uint32_t class_id) {
  return class_id == kPassBehind || class_id == kPassInFront;
}

double median_of(std::vector<float>& v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    const float lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    m = 0.5 * (m + lower);
  }
  return m;
}

}  // namespace

DepthMode DepthMode::parse(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ':');) parts.push_back(item);
  if (parts.empty()) throw ContractError("depth mode: empty");
  if (parts[0] == "ground_truth" && parts.size() == 1) return ground_truth();
  if (parts[0] == "pictorial" && parts.size() == 1) return pictorial();
  if (parts[0] == "quantized_noisy" && parts.size() <= 3) {
    DepthMode m = quantized_noisy(8, 0.05);
    try {
      if (parts.size() > 1) m.levels = std::stoi(parts[1]);
      if (parts.size() > 2) m.sigma = std::stod(parts[2]);
    } catch (const std::exception&) {
      throw ContractError("depth mode: malformed '" + text + "'");
    }
    if (m.levels < 2) throw ContractError("depth mode: levels must be >= 2");
    if (m.sigma < 0.0) throw ContractError("depth mode: sigma must be >= 0");
    return m;
  }
  throw ContractError("unknown depth mode '" + text + "'");
}

std::string DepthMode::to_string() const {
  switch (kind) {
    case DepthModeKind::kGroundTruth:
      return "ground_truth";
    case DepthModeKind::kPictorial:
      return "pictorial";
    case DepthModeKind::kQuantizedNoisy: {
      std::ostringstream os;
      os.precision(17);
      os << "quantized_noisy:" << levels << ':' << sigma;
      return os.str();
    }
  }
  return "ground_truth";
}

std::string to_string(DepthNormalization n) {
  return n == DepthNormalization::kMinMax ? "min_max" : "fixed";
}

DepthNormalization parse_depth_normalization(const std::string& text) {
  if (text == "min_max") return DepthNormalization::kMinMax;
  if (text == "fixed") return DepthNormalization::kFixed;
  throw ContractError("unknown depth normalization '" + text + "'");
}

void GenConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ContractError("GenConfig." + field + ": " + why);
  };
  if (height < 8) fail("height", "must be >= 8");
  if (width < 8) fail("width", "must be >= 8");
  if (frames_sampled < 1) fail("frames_sampled", "must be >= 1");
  if (stride < 1) fail("stride", "must be >= 1");
  if (static_cast<std::uint64_t>(frames_sampled - 1) * stride >= frames_total) {
    fail("frames_total", "must exceed (frames_sampled - 1) * stride");
  }
  if (num_classes < 1 || num_classes > kStandardNumClasses) {
    fail("num_classes", "must be in [1, 6]");
  }
  if (shapes.empty()) fail("shapes", "palette is empty");
  if (!(object_size_min > 0.0) || object_size_max < object_size_min) {
    fail("object_size_min", "need 0 < min <= max");
  }
  if (!(albedo_min > 0.3) || albedo_max > 1.0 || albedo_max < albedo_min) {
    fail("albedo_min", "need 0.3 < min <= max <= 1");
  }
  if (rgb_noise < 0.0) fail("rgb_noise", "must be >= 0");
}

const std::vector<ClassSpec>& standard_classes() {
  static const std::vector<ClassSpec> table = {
      {kApproach, "approach", kRecede},
      {kRecede, "recede", kApproach},
      {kLateralLeft, "lateral_left", std::nullopt},
      {kLateralRight, "lateral_right", std::nullopt},
      {kPassBehind, "pass_behind_occluder", kPassInFront},
      {kPassInFront, "pass_in_front_of_occluder", kPassBehind},
  };
  return table;
}

VideoClip generate_clip(std::uint32_t class_id, std::uint64_t seed, const GenConfig& cfg) {
  cfg.validate();
  if (class_id >= cfg.num_classes) {
    throw ContractError("class id " + std::to_string(class_id) + " out of range [0, " +
                        std::to_string(cfg.num_classes) + ")");
  }
  Rng rng(derive_seed(seed, 0x5ce7e));
  const SceneDraws s = draw_scene(rng, cfg);
  const std::uint32_t T = cfg.frames_total, H = cfg.height, W = cfg.width;
  const std::size_t hw = static_cast<std::size_t>(H) * W;

  VideoClip clip;
  clip.frames = T;
  clip.height = H;
  clip.width = W;
  clip.label = class_id;
  clip.seed = seed;
  clip.rgb.resize(T * hw * 3);
  std::vector<double> inv_depth(T * hw);

  const bool occluder = has_occluder(class_id);
  for (std::uint32_t t = 0; t < T; ++t) {
    const double tau = T > 1 ? static_cast<double>(t) / (T - 1) : 0.0;
    const ObjectPose p = pose_at(class_id, s, tau, W);
    for (std::uint32_t y = 0; y < H; ++y) {
      const double py = y + 0.5;
      const double ramp = 0.1 * py / H;
      for (std::uint32_t x = 0; x < W; ++x) {
        const double px = x + 0.5;
        // Floor-like background: lower rows are nearer.
        double inv = 0.1 + 0.05 * py / H;
        const double* color = nullptr;
        const bool on_object = covers(s.shape, s.size, p.x, p.y, px, py);
        const bool on_bar = occluder && std::abs(px - s.bar_center) <= 0.5 * s.bar_width;
        if (on_bar) {
          inv = 1.0 / s.z_bar;
          color = s.albedo;
        }
        if (on_object && (!on_bar || p.z < s.z_bar)) {
          inv = 1.0 / p.z;
          color = s.albedo;
        }
        const std::size_t pix = t * hw + static_cast<std::size_t>(y) * W + x;
        inv_depth[pix] = inv;
        for (int c = 0; c < 3; ++c) {
          clip.rgb[pix * 3 + c] = static_cast<float>(color ? color[c] : s.bg[c] + ramp);
        }
      }
    }
  }
  // Sensor noise, drawn after the scene so it is class-independent as well.
  for (float& v : clip.rgb) {
    const double noisy = v + cfg.rgb_noise * rng.normal();
    v = static_cast<float>(std::clamp(noisy, 0.0, 1.0));
  }

  clip.depth.resize(inv_depth.size());
  if (cfg.depth_normalization == DepthNormalization::kMinMax) {
    const auto [lo_it, hi_it] = std::minmax_element(inv_depth.begin(), inv_depth.end());
    const double lo = *lo_it, span = *hi_it - *lo_it;
    for (std::size_t i = 0; i < inv_depth.size(); ++i) {
      clip.depth[i] = static_cast<float>(span > 0.0 ? (inv_depth[i] - lo) / span : 0.0);
    }
  } else {
    for (std::size_t i = 0; i < inv_depth.size(); ++i) {
      clip.depth[i] = static_cast<float>(std::clamp(inv_depth[i] * kNearestZ, 0.0, 1.0));
    }
  }
  return clip;
}

VideoClip sample_frames(const VideoClip& clip, std::uint32_t n, std::uint32_t stride) {
  if (n == 0 || stride == 0) throw RangeError("sample_frames: n and stride must be >= 1");
  if (static_cast<std::uint64_t>(n - 1) * stride >= clip.frames) {
    throw RangeError("sample_frames: " + std::to_string(n) + " frames at stride " +
                     std::to_string(stride) + " exceed clip length " +
                     std::to_string(clip.frames));
  }
  const std::size_t hw = clip.pixels_per_frame();
  VideoClip out;
  out.frames = n;
  out.height = clip.height;
  out.width = clip.width;
  out.label = clip.label;
  out.seed = clip.seed;
  out.rgb.reserve(n * hw * 3);
  out.depth.reserve(n * hw);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::size_t t = static_cast<std::size_t>(i) * stride;
    out.rgb.insert(out.rgb.end(), clip.rgb.begin() + t * hw * 3,
                   clip.rgb.begin() + (t + 1) * hw * 3);
    out.depth.insert(out.depth.end(), clip.depth.begin() + t * hw,
                     clip.depth.begin() + (t + 1) * hw);
  }
  return out;
}

VideoClip make_training_clip(std::uint32_t class_id, std::uint64_t seed,
                             const GenConfig& cfg) {
  VideoClip clip =
      sample_frames(generate_clip(class_id, seed, cfg), cfg.frames_sampled, cfg.stride);
  if (cfg.depth_mode.kind != DepthModeKind::kGroundTruth) {
    clip.depth = estimate_depth(clip, cfg.depth_mode);
  }
  return clip;
}

double quantize(double value, int levels) {
  if (levels < 2) throw ContractError("quantize: levels must be >= 2");
  const double steps = levels - 1;
  return std::round(std::clamp(value, 0.0, 1.0) * steps) / steps;
}

std::vector<std::vector<bool>> rgb_foreground_masks(const VideoClip& clip) {
  const std::size_t H = clip.height, W = clip.width, hw = H * W;
  std::vector<std::vector<bool>> masks(clip.frames, std::vector<bool>(hw, false));
  std::vector<float> row(W);
  for (std::size_t t = 0; t < clip.frames; ++t) {
    for (std::size_t y = 0; y < H; ++y) {
      const float* base = clip.rgb.data() + (t * hw + y * W) * 3;
      double med[3];
      for (int c = 0; c < 3; ++c) {
        for (std::size_t x = 0; x < W; ++x) row[x] = base[x * 3 + c];
        med[c] = median_of(row);
      }
      for (std::size_t x = 0; x < W; ++x) {
        double diff = 0.0;
        for (int c = 0; c < 3; ++c) diff = std::max(diff, std::abs(base[x * 3 + c] - med[c]));
        masks[t][y * W + x] = diff > kForegroundThreshold;
      }
    }
  }
  return masks;
}

std::vector<FrameStats> rgb_silhouette_stats(const VideoClip& clip) {
  const auto masks = rgb_foreground_masks(clip);
  const std::size_t W = clip.width;
  std::vector<FrameStats> stats(clip.frames);
  for (std::size_t t = 0; t < clip.frames; ++t) {
    FrameStats& s = stats[t];
    for (std::size_t i = 0; i < masks[t].size(); ++i) {
      if (!masks[t][i]) continue;
      s.area += 1.0;
      s.centroid_x += static_cast<double>(i % W) + 0.5;
      s.centroid_y += static_cast<double>(i / W) + 0.5;
    }
    if (s.area > 0.0) {
      s.centroid_x /= s.area;
      s.centroid_y /= s.area;
    }
  }
  return stats;
}

std::vector<double> foreground_depth_means(const VideoClip& clip,
                                           const std::vector<float>& depth) {
  const auto masks = rgb_foreground_masks(clip);
  const std::size_t hw = clip.pixels_per_frame();
  std::vector<double> means(clip.frames, 0.0);
  for (std::size_t t = 0; t < clip.frames; ++t) {
    double total = 0.0, count = 0.0;
    for (std::size_t i = 0; i < hw; ++i) {
      if (!masks[t][i]) continue;
      total += depth[t * hw + i];
      count += 1.0;
    }
    means[t] = count > 0.0 ? total / count : 0.0;
  }
  return means;
}

std::vector<float> estimate_depth(const VideoClip& clip, const DepthMode& mode) {
  switch (mode.kind) {
    case DepthModeKind::kGroundTruth:
      return clip.depth;
    case DepthModeKind::kQuantizedNoisy: {
      if (mode.levels < 2) throw ContractError("quantized_noisy: levels must be >= 2");
      if (mode.sigma < 0.0) throw ContractError("quantized_noisy: sigma must be >= 0");
      Rng rng(derive_seed(clip.seed, 0xde97));
      std::vector<float> out(clip.depth.size());
      for (std::size_t i = 0; i < out.size(); ++i) {
        const double noisy = clip.depth[i] + (mode.sigma > 0.0 ? mode.sigma * rng.normal() : 0.0);
        out[i] = static_cast<float>(quantize(noisy, mode.levels));
      }
      return out;
    }
    case DepthModeKind::kPictorial: {
      // Monocular cues only: bigger footprint and lower position read as nearer.
      const auto masks = rgb_foreground_masks(clip);
      const auto stats = rgb_silhouette_stats(clip);
      double max_area = 0.0;
      for (const FrameStats& s : stats) max_area = std::max(max_area, s.area);
      const std::size_t H = clip.height, W = clip.width, hw = H * W;
      std::vector<float> out(clip.frames * hw);
      for (std::size_t t = 0; t < clip.frames; ++t) {
        const double area_cue = max_area > 0.0 ? stats[t].area / max_area : 0.0;
        const double fg = 0.5 * area_cue + 0.5 * stats[t].centroid_y / H;
        for (std::size_t i = 0; i < hw; ++i) {
          const double ground = 0.25 * (static_cast<double>(i / W) + 0.5) / H;
          out[t * hw + i] = static_cast<float>(std::clamp(masks[t][i] ? fg : ground, 0.0, 1.0));
        }
      }
      return out;
    }
  }
  throw ContractError("unknown depth mode");
}

DatasetSplit build_dataset(const GenConfig& cfg, std::uint32_t n_per_class,
                           double split_ratio, std::uint64_t seed) {
  cfg.validate();
  if (n_per_class < 2) {
    throw ContractError("build_dataset: n_per_class must be >= 2 to form a split");
  }
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) {
    throw ContractError("build_dataset: split_ratio must lie in (0, 1)");
  }
  const auto n_train = static_cast<std::uint32_t>(std::clamp<double>(
      std::round(split_ratio * n_per_class), 1.0, n_per_class - 1.0));
  Rng rng(derive_seed(seed, 0xda7a));
  DatasetSplit split;
  for (std::uint32_t c = 0; c < cfg.num_classes; ++c) {
    std::vector<ManifestRecord> records;
    records.reserve(n_per_class);
    for (std::uint32_t i = 0; i < n_per_class; ++i) {
      records.push_back({c, derive_seed(seed, static_cast<std::uint64_t>(c) * n_per_class + i)});
    }
    rng.shuffle(records);
    split.train.insert(split.train.end(), records.begin(), records.begin() + n_train);
    split.val.insert(split.val.end(), records.begin() + n_train, records.end());
  }
  return split;
}

}  // namespace dear::synthvid
