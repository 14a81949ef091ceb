#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "dear/model.hpp"
#include "dear/params.hpp"
#include "dear/rng.hpp"
#include "dear/tensor.hpp"

namespace dear::training {

enum class LrSchedule { kConstant, kCosine };

std::string to_string(LrSchedule s);
LrSchedule parse_lr_schedule(const std::string& text);

struct TrainConfig {
  double lr = 3e-4;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint32_t epochs = 20;
  std::uint32_t batch_size = 16;
  std::uint32_t eval_batch_size = 26;
  std::uint64_t seed = 0;
  model::FuseSpace fuse_space = model::FuseSpace::kLogit;
  double aux_loss_weight = 0.0;
  LrSchedule schedule = LrSchedule::kConstant;

  void validate() const;
  // Flat (field, value) listing; `epochs` is excluded so a checkpoint can be
  // resumed into a longer run.
  std::vector<std::pair<std::string, std::string>> fields() const;
  bool operator==(const TrainConfig&) const = default;
};

// One-hot label rows [B x C].
Tensor one_hot(const std::vector<std::uint32_t>& labels, std::uint32_t num_classes);

// Adam moments for a fixed, ordered parameter list.
struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  static AdamState zeros_like(const ParamList& params);
};

// Decoupled-weight-decay Adam. Decay is applied first as theta *= 1 - lr*wd,
// then theta -= lr * m_hat / (sqrt(v_hat) + eps). Parameters without a
// gradient are treated as having a zero gradient. Any non-finite gradient
// aborts the step with NumericError before anything is modified.
void adamw_step(ParamList& params, AdamState& state, const TrainConfig& cfg, double lr);

struct MetricsRecord {
  std::uint32_t epoch = 0;
  double train_loss = 0.0;
  double train_top1 = 0.0;
  double val_top1 = 0.0;
  std::vector<double> per_class;  // validation accuracy per class
  double seconds = 0.0;
};

struct Sample {
  std::shared_ptr<const model::FrozenFeatures> features;
  std::uint32_t label = 0;
};

using Dataset = std::vector<Sample>;

struct Prediction {
  std::uint32_t label;
  std::uint32_t predicted;
};

// Argmax of the model's class probabilities for every sample, in order.
std::vector<Prediction> predict(const model::DearModel& model, const Dataset& data,
                                const TrainConfig& cfg);

// Top-1 and per-class accuracy of a prediction list. Classes without samples
// report 0.
MetricsRecord score(const std::vector<Prediction>& predictions, std::uint32_t num_classes);

MetricsRecord evaluate(const model::DearModel& model, const Dataset& data,
                       const TrainConfig& cfg);

// Loss of one sample's forward pass: cross-entropy on the fused probabilities
// plus aux_loss_weight times the per-stream losses. Returned unscaled.
Tensor sample_loss(const model::ModelOutput& out, std::uint32_t label,
                   std::uint32_t num_classes, const TrainConfig& cfg);

class Trainer {
 public:
  Trainer(model::DearModel& model, const TrainConfig& cfg);

  // One pass over `train` in a freshly shuffled order, then evaluation on
  // `val` when it is non-empty.
  MetricsRecord run_epoch(const Dataset& train, const Dataset& val);
  // Runs the remaining epochs up to config().epochs.
  std::vector<MetricsRecord> fit(const Dataset& train, const Dataset& val);

  const TrainConfig& config() const { return cfg_; }
  void set_epochs(std::uint32_t epochs) { cfg_.epochs = epochs; }
  std::uint32_t epoch() const { return epoch_; }
  const std::vector<MetricsRecord>& history() const { return history_; }
  const AdamState& optimizer_state() const { return adam_; }
  const Rng& rng() const { return rng_; }
  // Hash of every frozen tensor, for freeze checks.
  std::uint64_t frozen_hash() const;

 private:
  friend void restore_trainer(Trainer&, AdamState, Rng, std::uint32_t,
                              std::vector<MetricsRecord>);
  double lr_at(std::uint64_t step, std::size_t steps_per_epoch) const;

  model::DearModel& model_;
  TrainConfig cfg_;
  ParamList params_;
  AdamState adam_;
  Rng rng_;
  std::uint32_t epoch_ = 0;
  std::vector<MetricsRecord> history_;
};

void restore_trainer(Trainer& trainer, AdamState adam, Rng rng, std::uint32_t epoch,
                     std::vector<MetricsRecord> history);

struct TrainResult {
  std::vector<MetricsRecord> metrics;
  std::string checkpoint;  // encoded checkpoint bytes after the last epoch
};

TrainResult train(model::DearModel& model, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg);

struct ClassDelta {
  std::uint32_t class_id;
  double baseline;
  double fused;
  double delta;  // fused - baseline
};

// Per-class accuracy change, sorted by descending delta (ties by class id).
std::vector<ClassDelta> per_class_delta(const MetricsRecord& fused,
                                        const MetricsRecord& baseline);

// ---------------------------------------------------------------------------
// Checkpoints: magic "DEARCKPT", u32 version, then named records
// {u32 name length, name, u8 dtype, u32 rank, u64 dims, little-endian payload}.

inline constexpr char kCheckpointMagic[8] = {'D', 'E', 'A', 'R', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const model::DearModel& model, const Trainer& trainer);
// Restores parameters, optimizer state, RNG and history in place. Throws
// FormatError naming the first mismatching config field or tensor.
void decode_checkpoint(const std::string& bytes, model::DearModel& model, Trainer& trainer);

void save_checkpoint(const std::filesystem::path& path, const model::DearModel& model,
                     const Trainer& trainer);
void load_checkpoint(const std::filesystem::path& path, model::DearModel& model,
                     Trainer& trainer);

}  // namespace dear::training
