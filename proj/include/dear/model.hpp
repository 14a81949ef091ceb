#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dear/encoders.hpp"
#include "dear/fusion.hpp"
#include "dear/params.hpp"
#include "dear/ssm.hpp"
#include "dear/synthvid.hpp"

namespace dear::model {

enum class AblationMode { kRgbOnly, kRgbDepth, kRgbDepthMamba };
enum class FuseSpace { kLogit, kProb };

std::string to_string(AblationMode m);
AblationMode parse_ablation_mode(const std::string& text);
std::string to_string(FuseSpace f);
FuseSpace parse_fuse_space(const std::string& text);

struct ModelConfig {
  encoders::BackboneConfig backbone;
  encoders::SideConfig side;
  ssm::SsmConfig ssm;
  std::uint32_t fusion_layers = 1;
  std::uint32_t fusion_heads = 2;
  std::uint32_t num_classes = 6;
  AblationMode mode = AblationMode::kRgbDepthMamba;
  std::uint64_t init_seed = 0;

  void validate() const;
  // Flat (field, value) listing used for checkpoint compatibility checks.
  std::vector<std::pair<std::string, std::string>> fields() const;
  bool operator==(const ModelConfig&) const = default;
};

// Per-layer activations of the frozen backbone for one clip. Depth entries
// are empty for the RGB-only model.
struct FrozenFeatures {
  std::vector<Tensor> rgb_acts;
  std::vector<Tensor> depth_acts;
};

struct ForwardOptions {
  FuseSpace fuse_space = FuseSpace::kLogit;
  // false: skip gated cross-attention and feed the unimodal features
  // straight to the stream heads.
  bool fusion_enabled = true;
};

struct ModelOutput {
  Tensor rgb_feats;    // [n x d] side tokens, pre-fusion
  Tensor depth_feats;  // [n x d] depth side tokens, pre-fusion (if built)
  Tensor mamba_feats;  // [T*P x d] SSM tokens, pre-fusion (if built)
  Tensor logits_a;     // RGB x side-depth stream (or the RGB-only head)
  Tensor logits_b;     // RGB x mamba-depth stream (full model only)
  Tensor fused;        // mean of the stream logits, or logits_a alone
  Tensor probs;        // class probabilities the loss and argmax use
};

// Frozen backbone shared by all branches, trainable side networks, optional
// SSM depth branch, per-stream gated fusion and heads.
class DearModel {
 public:
  explicit DearModel(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  const encoders::BackboneParams& backbone() const { return backbone_; }
  const encoders::SideNetParams& rgb_side() const { return rgb_side_; }
  const std::optional<encoders::SideNetParams>& depth_side() const { return depth_side_; }
  const std::optional<ssm::SsmParams>& ssm() const { return ssm_; }
  const std::optional<fusion::GcaPair>& gca_a() const { return gca_a_; }
  const std::optional<fusion::GcaPair>& gca_b() const { return gca_b_; }
  const fusion::StreamHead& head_a() const { return head_a_; }
  const std::optional<fusion::StreamHead>& head_b() const { return head_b_; }

  bool uses_depth() const { return cfg_.mode != AblationMode::kRgbOnly; }

  // Runs the frozen backbone (no gradient tracking) on the clip's RGB and,
  // when the mode has a depth branch, on `depth` (defaults to clip.depth).
  FrozenFeatures encode_frozen(const synthvid::VideoClip& clip) const;
  FrozenFeatures encode_frozen(const synthvid::VideoClip& clip,
                               const std::vector<float>& depth) const;

  ModelOutput forward(const FrozenFeatures& features, const ForwardOptions& opts = {}) const;

  // Trainable tensors in a fixed order (checkpoint and optimizer order).
  ParamList trainable() const;
  ParamList frozen() const { return backbone_.named(); }
  std::size_t trainable_count() const { return count_elements(trainable()); }

 private:
  ModelConfig cfg_;
  encoders::BackboneParams backbone_;
  encoders::SideNetParams rgb_side_;
  std::optional<encoders::SideNetParams> depth_side_;
  std::optional<ssm::SsmParams> ssm_;
  std::optional<fusion::GcaPair> gca_a_;
  std::optional<fusion::GcaPair> gca_b_;
  fusion::StreamHead head_a_;
  std::optional<fusion::StreamHead> head_b_;
};

// Index of the largest value; ties resolve to the lowest index.
std::size_t argmax(std::span<const double> values);

}  // namespace dear::model
