#include "dear/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "dear/errors.hpp"
#include "dear/ops.hpp"

namespace dear::training {

std::string to_string(LrSchedule s) { return s == LrSchedule::kConstant ? "constant" : "cosine"; }

LrSchedule parse_lr_schedule(const std::string& text) {
  if (text == "constant") return LrSchedule::kConstant;
  if (text == "cosine") return LrSchedule::kCosine;
  throw ContractError("unknown lr schedule '" + text + "'");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ContractError("TrainConfig." + field + ": " + why);
  };
  if (!(lr > 0.0)) fail("lr", "must be > 0");
  if (weight_decay < 0.0) fail("weight_decay", "must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) fail("beta1", "must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) fail("beta2", "must lie in [0, 1)");
  if (!(eps >= 0.0)) fail("eps", "must be >= 0");
  if (batch_size == 0) fail("batch_size", "must be >= 1");
  if (eval_batch_size == 0) fail("eval_batch_size", "must be >= 1");
  if (aux_loss_weight < 0.0) fail("aux_loss_weight", "must be >= 0");
}

std::vector<std::pair<std::string, std::string>> TrainConfig::fields() const {
  auto s = [](auto v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  return {{"lr", s(lr)},
          {"weight_decay", s(weight_decay)},
          {"beta1", s(beta1)},
          {"beta2", s(beta2)},
          {"eps", s(eps)},
          {"batch_size", s(batch_size)},
          {"eval_batch_size", s(eval_batch_size)},
          {"seed", s(seed)},
          {"fuse_space", model::to_string(fuse_space)},
          {"aux_loss_weight", s(aux_loss_weight)},
          {"schedule", to_string(schedule)}};
}

Tensor one_hot(const std::vector<std::uint32_t>& labels, std::uint32_t num_classes) {
  if (labels.empty()) throw ContractError("one_hot: no labels");
  std::vector<double> data(labels.size() * num_classes, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) {
      throw ContractError("one_hot: label " + std::to_string(labels[i]) + " out of range");
    }
    data[i * num_classes + labels[i]] = 1.0;
  }
  return Tensor({labels.size(), num_classes}, std::move(data));
}

AdamState AdamState::zeros_like(const ParamList& params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.tensor.numel(), 0.0);
    s.v.emplace_back(p.tensor.numel(), 0.0);
  }
  return s;
}

void adamw_step(ParamList& params, AdamState& state, const TrainConfig& cfg, double lr) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ContractError("adamw_step: optimizer state does not match parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& p = params[i].tensor;
    if (!p.requires_grad()) {
      throw ContractError("adamw_step: frozen tensor '" + params[i].name + "' in parameter list");
    }
    if (state.m[i].size() != p.numel() || state.v[i].size() != p.numel()) {
      throw ContractError("adamw_step: moment shape mismatch for '" + params[i].name + "'");
    }
    for (double g : p.grad()) {
      if (!std::isfinite(g)) {
        throw NumericError("adamw_step: non-finite gradient in '" + params[i].name + "'");
      }
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  const double decay = 1.0 - lr * cfg.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i].tensor;
    auto theta = p.mutable_data();
    const auto grad = p.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double g = grad.empty() ? 0.0 : grad[j];
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      theta[j] *= decay;
      theta[j] -= lr * (m_hat / (std::sqrt(v_hat) + cfg.eps));
    }
  }
}

Tensor sample_loss(const model::ModelOutput& out, std::uint32_t label, std::uint32_t num_classes,
                   const TrainConfig& cfg) {
  const Tensor y = one_hot({label}, num_classes);
  const Shape row = {1, num_classes};
  Tensor loss = cross_entropy(y, reshape(out.probs, row));
  if (cfg.aux_loss_weight > 0.0) {
    Tensor aux = cross_entropy(y, reshape(softmax(out.logits_a), row));
    if (out.logits_b.defined()) aux = add(aux, cross_entropy(y, reshape(softmax(out.logits_b), row)));
    loss = add(loss, scale(aux, cfg.aux_loss_weight));
  }
  return loss;
}

std::vector<Prediction> predict(const model::DearModel& model, const Dataset& data,
                                const TrainConfig& cfg) {
  NoGradGuard no_grad;
  std::vector<Prediction> out;
  out.reserve(data.size());
  const model::ForwardOptions opts{cfg.fuse_space, true};
  // Batches only bound the working set; predictions are per sample.
  for (std::size_t begin = 0; begin < data.size(); begin += cfg.eval_batch_size) {
    const std::size_t end = std::min(data.size(), begin + cfg.eval_batch_size);
    for (std::size_t i = begin; i < end; ++i) {
      const model::ModelOutput o = model.forward(*data[i].features, opts);
      out.push_back({data[i].label, static_cast<std::uint32_t>(model::argmax(o.probs.data()))});
    }
  }
  return out;
}

MetricsRecord score(const std::vector<Prediction>& predictions, std::uint32_t num_classes) {
  MetricsRecord r;
  std::vector<double> correct(num_classes, 0.0), total(num_classes, 0.0);
  double hits = 0.0;
  for (const Prediction& p : predictions) {
    if (p.label >= num_classes) throw ContractError("score: label out of range");
    total[p.label] += 1.0;
    if (p.label == p.predicted) {
      correct[p.label] += 1.0;
      hits += 1.0;
    }
  }
  r.val_top1 = predictions.empty() ? 0.0 : hits / static_cast<double>(predictions.size());
  r.per_class.resize(num_classes);
  for (std::uint32_t c = 0; c < num_classes; ++c) {
    r.per_class[c] = total[c] > 0.0 ? correct[c] / total[c] : 0.0;
  }
  return r;
}

MetricsRecord evaluate(const model::DearModel& model, const Dataset& data,
                       const TrainConfig& cfg) {
  return score(predict(model, data, cfg), model.config().num_classes);
}

Trainer::Trainer(model::DearModel& model, const TrainConfig& cfg)
    : model_(model),
      cfg_(cfg),
      params_(model.trainable()),
      adam_(AdamState::zeros_like(params_)),
      rng_(derive_seed(cfg.seed, 0x7a11)) {
  cfg_.validate();
}

std::uint64_t Trainer::frozen_hash() const {
  std::uint64_t h = 0;
  for (const auto& p : model_.frozen()) h = derive_seed(h, content_hash(p.tensor));
  return h;
}

double Trainer::lr_at(std::uint64_t step, std::size_t steps_per_epoch) const {
  if (cfg_.schedule == LrSchedule::kConstant) return cfg_.lr;
  const double total = static_cast<double>(cfg_.epochs) * static_cast<double>(steps_per_epoch);
  const double progress = total > 0.0 ? std::min(1.0, static_cast<double>(step) / total) : 1.0;
  return cfg_.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

MetricsRecord Trainer::run_epoch(const Dataset& train, const Dataset& val) {
  if (train.empty()) throw ContractError("train: empty dataset");
  const auto start = std::chrono::steady_clock::now();
  const std::uint32_t C = model_.config().num_classes;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  rng_.shuffle(order);

  const model::ForwardOptions opts{cfg_.fuse_space, true};
  const std::size_t steps_per_epoch = (train.size() + cfg_.batch_size - 1) / cfg_.batch_size;
  double loss_total = 0.0, hits = 0.0;
  for (std::size_t begin = 0; begin < order.size(); begin += cfg_.batch_size) {
    const std::size_t end = std::min(order.size(), begin + cfg_.batch_size);
    const double inv_batch = 1.0 / static_cast<double>(end - begin);
    for (auto& p : params_) p.tensor.zero_grad();
    // Per-sample graphs; gradients of loss_i / B accumulate into the
    // parameters, giving the batch-mean gradient.
    for (std::size_t k = begin; k < end; ++k) {
      const Sample& s = train[order[k]];
      const model::ModelOutput out = model_.forward(*s.features, opts);
      const Tensor loss = sample_loss(out, s.label, C, cfg_);
      if (!std::isfinite(loss.item())) throw NumericError("train: non-finite loss");
      loss_total += loss.item();
      if (model::argmax(out.probs.data()) == s.label) hits += 1.0;
      backward(scale(loss, inv_batch));
    }
    adamw_step(params_, adam_, cfg_, lr_at(adam_.step, steps_per_epoch));
  }
  for (auto& p : params_) p.tensor.zero_grad();

  MetricsRecord r = val.empty() ? MetricsRecord{} : evaluate(model_, val, cfg_);
  if (val.empty()) r.per_class.assign(C, 0.0);
  r.epoch = ++epoch_;
  r.train_loss = loss_total / static_cast<double>(train.size());
  r.train_top1 = hits / static_cast<double>(train.size());
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  history_.push_back(r);
  return r;
}

std::vector<MetricsRecord> Trainer::fit(const Dataset& train, const Dataset& val) {
  if (train.empty()) throw ContractError("train: empty dataset");
  std::vector<MetricsRecord> out;
  while (epoch_ < cfg_.epochs) out.push_back(run_epoch(train, val));
  return out;
}

void restore_trainer(Trainer& trainer, AdamState adam, Rng rng, std::uint32_t epoch,
                     std::vector<MetricsRecord> history) {
  if (adam.m.size() != trainer.params_.size()) {
    throw FormatError("checkpoint: optimizer state covers " + std::to_string(adam.m.size()) +
                      " tensors, model has " + std::to_string(trainer.params_.size()));
  }
  trainer.adam_ = std::move(adam);
  trainer.rng_ = rng;
  trainer.epoch_ = epoch;
  trainer.history_ = std::move(history);
}

TrainResult train(model::DearModel& model, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg) {
  Trainer trainer(model, cfg);
  TrainResult result;
  result.metrics = trainer.fit(train_set, val_set);
  result.checkpoint = encode_checkpoint(model, trainer);
  return result;
}

std::vector<ClassDelta> per_class_delta(const MetricsRecord& fused,
                                        const MetricsRecord& baseline) {
  if (fused.per_class.size() != baseline.per_class.size()) {
    throw ContractError("per_class_delta: class counts differ (" +
                        std::to_string(fused.per_class.size()) + " vs " +
                        std::to_string(baseline.per_class.size()) + ")");
  }
  std::vector<ClassDelta> out;
  for (std::size_t c = 0; c < fused.per_class.size(); ++c) {
    out.push_back({static_cast<std::uint32_t>(c), baseline.per_class[c], fused.per_class[c],
                   fused.per_class[c] - baseline.per_class[c]});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const ClassDelta& a, const ClassDelta& b) { return a.delta > b.delta; });
  return out;
}

}  // namespace dear::training
