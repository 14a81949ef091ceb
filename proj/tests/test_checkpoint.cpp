#include <gtest/gtest.h>

#include <cstring>

#include "dear/errors.hpp"
#include "dear/experiment.hpp"
#include "dear/training.hpp"
#include "test_support.hpp"

namespace dear::training {
namespace {

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    cfg = dear::testing::micro_experiment();
    cfg.train.epochs = 3;
    cfg.resolve();
    const auto split = experiment::dataset_split(cfg);
    const model::DearModel encoder(cfg.model);
    train = experiment::encode_records(encoder, split.train, cfg.gen);
    val = experiment::encode_records(encoder, split.val, cfg.gen);
  }

  static std::vector<std::uint64_t> hashes(const model::DearModel& m) {
    std::vector<std::uint64_t> out;
    for (const auto& p : m.trainable()) out.push_back(content_hash(p.tensor));
    return out;
  }

  experiment::ExperimentConfig cfg;
  Dataset train, val;
};

TEST_F(CheckpointTest, HeaderLayout) {
  model::DearModel m(cfg.model);
  Trainer t(m, cfg.train);
  const std::string bytes = encode_checkpoint(m, t);
  EXPECT_EQ(bytes.substr(0, 8), "DEARCKPT");
  std::uint32_t version;
  std::memcpy(&version, bytes.data() + 8, 4);
  EXPECT_EQ(version, kCheckpointVersion);
}

TEST_F(CheckpointTest, SaveLoadSaveIsByteIdentical) {
  model::DearModel m(cfg.model);
  Trainer t(m, cfg.train);
  t.run_epoch(train, val);
  const std::string first = encode_checkpoint(m, t);

  model::DearModel m2(cfg.model);
  Trainer t2(m2, cfg.train);
  decode_checkpoint(first, m2, t2);
  EXPECT_EQ(encode_checkpoint(m2, t2), first);
  EXPECT_EQ(hashes(m2), hashes(m));
  EXPECT_EQ(t2.epoch(), 1u);
  EXPECT_EQ(t2.rng(), t.rng());
  EXPECT_EQ(t2.optimizer_state().step, t.optimizer_state().step);
}

TEST_F(CheckpointTest, ResumeEqualsUninterruptedRun) {
  model::DearModel straight(cfg.model);
  Trainer ts(straight, cfg.train);
  const auto full = ts.fit(train, val);

  const auto dir = dear::testing::scratch_dir("resume");
  {
    model::DearModel m(cfg.model);
    Trainer t(m, cfg.train);
    t.run_epoch(train, val);
    save_checkpoint(dir / "ckpt.bin", m, t);
  }
  model::DearModel resumed(cfg.model);
  Trainer tr(resumed, cfg.train);
  load_checkpoint(dir / "ckpt.bin", resumed, tr);
  const auto rest = tr.fit(train, val);
  ASSERT_EQ(rest.size(), 2u);
  EXPECT_EQ(hashes(resumed), hashes(straight));
  for (std::size_t i = 0; i < rest.size(); ++i) {
    EXPECT_EQ(rest[i].train_loss, full[i + 1].train_loss);
    EXPECT_EQ(rest[i].val_top1, full[i + 1].val_top1);
  }
}

TEST_F(CheckpointTest, MismatchedModelConfigNamesField) {
  model::DearModel m(cfg.model);
  Trainer t(m, cfg.train);
  const std::string bytes = encode_checkpoint(m, t);
  model::ModelConfig other = cfg.model;
  other.side.mlp_ratio = 3;
  model::DearModel m2(other);
  Trainer t2(m2, cfg.train);
  try {
    decode_checkpoint(bytes, m2, t2);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("side_mlp_ratio"), std::string::npos) << e.what();
  }
}

TEST_F(CheckpointTest, MismatchedModeRejected) {
  model::DearModel m(cfg.model);
  Trainer t(m, cfg.train);
  const std::string bytes = encode_checkpoint(m, t);
  model::ModelConfig other = cfg.model;
  other.mode = model::AblationMode::kRgbDepth;
  model::DearModel m2(other);
  Trainer t2(m2, cfg.train);
  EXPECT_THROW(decode_checkpoint(bytes, m2, t2), FormatError);
}

TEST_F(CheckpointTest, CorruptInputRejectedAndModelUntouched) {
  model::DearModel m(cfg.model);
  Trainer t(m, cfg.train);
  t.run_epoch(train, val);
  const std::string bytes = encode_checkpoint(m, t);

  model::DearModel fresh(cfg.model);
  Trainer tf(fresh, cfg.train);
  const auto before = hashes(fresh);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3), fresh, tf), FormatError);
  std::string bad = bytes;
  bad[8] = 7;  // version
  EXPECT_THROW(decode_checkpoint(bad, fresh, tf), FormatError);
  bad = bytes;
  bad[0] = 'x';
  EXPECT_THROW(decode_checkpoint(bad, fresh, tf), FormatError);
  EXPECT_EQ(hashes(fresh), before);
  EXPECT_EQ(tf.epoch(), 0u);
}

TEST_F(CheckpointTest, MissingFileIsIoError) {
  model::DearModel m(cfg.model);
  Trainer t(m, cfg.train);
  EXPECT_THROW(load_checkpoint("/nonexistent/dir/ckpt.bin", m, t), IoError);
}

}  // namespace
}  // namespace dear::training
