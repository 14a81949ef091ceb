#include <gtest/gtest.h>

#include <chrono>
#include <sstream>

#include "dear/binary_io.hpp"
#include "dear/dataset_io.hpp"
#include "dear/errors.hpp"
#include "dear/experiment.hpp"
#include "test_support.hpp"

namespace dear::experiment {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) { return binio::read_file(p); }

TEST(Config, EmptyObjectGivesDefaults) {
  EXPECT_EQ(parse_config("{}"), ExperimentConfig{});
}

TEST(Config, ReadsNestedFields) {
  const ExperimentConfig c = parse_config(
      R"({"lr": 0.003, "epochs": 7, "mode": "rgb_depth", "num_classes": 4,
          "depth_mode": "pictorial", "shapes": ["disc"], "record_timing": false})");
  EXPECT_EQ(c.train.lr, 0.003);
  EXPECT_EQ(c.train.epochs, 7u);
  EXPECT_EQ(c.model.mode, model::AblationMode::kRgbDepth);
  EXPECT_EQ(c.gen.num_classes, 4u);
  EXPECT_EQ(c.gen.depth_mode.to_string(), "pictorial");
  EXPECT_FALSE(c.record_timing);
}

TEST(Config, UnknownKeyAndBadTypeNameTheKey) {
  try {
    parse_config(R"({"learning_rate": 0.1})");
    FAIL();
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("learning_rate"), std::string::npos);
  }
  try {
    parse_config(R"({"epochs": "ten"})");
    FAIL();
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("epochs"), std::string::npos);
  }
  EXPECT_THROW(parse_config("[1, 2]"), ContractError);
  EXPECT_THROW(parse_config("{"), ContractError);
}

TEST(Config, JsonRoundTrip) {
  ExperimentConfig c = dear::testing::micro_experiment();
  c.resolve();
  const std::string text = to_json(c);
  ExperimentConfig back = parse_config(text);
  back.resolve();
  EXPECT_EQ(back, c);
  EXPECT_EQ(to_json(back), text);
}

TEST(Config, ResolvePropagatesSharedFields) {
  ExperimentConfig c = dear::testing::micro_experiment();
  c.gen.num_classes = 2;
  c.seed = 99;
  c.resolve();
  EXPECT_EQ(c.model.num_classes, 2u);
  EXPECT_EQ(c.model.init_seed, 99u);
  EXPECT_EQ(c.train.seed, 99u);
  EXPECT_EQ(c.model.backbone.max_frames, c.gen.frames_sampled);
  c.split_ratio = 1.0;
  EXPECT_THROW(c.resolve(), ContractError);
}

TEST(Csv, RoundTripIsByteIdentical) {
  const CsvTable t{{"a", "b"}, {{"1", format_number(0.1)}, {"2", format_number(1.0 / 3)}}};
  const std::string text = format_csv(t);
  EXPECT_EQ(parse_csv(text), t);
  EXPECT_EQ(format_csv(parse_csv(text)), text);
  EXPECT_EQ(std::stod(t.rows[1][1]), 1.0 / 3);
}

TEST(Csv, RejectsRaggedAndQuotedCells) {
  EXPECT_THROW(parse_csv("a,b\n1\n"), FormatError);
  EXPECT_THROW(parse_csv(""), FormatError);
  EXPECT_THROW(format_csv(CsvTable{{"x"}, {{"1,2"}}}), ContractError);
}

TEST(Csv, TablesHaveExpectedColumns) {
  training::MetricsRecord m;
  m.epoch = 1;
  m.train_loss = 0.5;
  m.val_top1 = 0.75;
  m.seconds = 2.5;
  m.per_class = {1.0, 0.5};
  const CsvTable timed = metrics_table({m}, true);
  EXPECT_EQ(timed.header, (std::vector<std::string>{"epoch", "train_loss", "val_top1", "seconds"}));
  EXPECT_EQ(timed.rows[0][3], "2.5");
  EXPECT_EQ(metrics_table({m}, false).rows[0][3], "0");
  EXPECT_EQ(per_class_table({m}).rows.size(), 2u);
  const CsvTable d = delta_table({{1, 0.5, 0.9, 0.4}});
  EXPECT_EQ(d.header, (std::vector<std::string>{"class_id", "rgb_only", "rgb_depth_mamba", "delta"}));
}

TEST(ExitCodes, MapErrorKinds) {
  EXPECT_EQ(exit_code_for(NumericError("x")), 2);
  EXPECT_EQ(exit_code_for(IoError("x")), 3);
  EXPECT_EQ(exit_code_for(FormatError("x")), 3);
  EXPECT_EQ(exit_code_for(ContractError("x")), 1);
}

TEST(Commands, GenerateWritesManifestAndSummary) {
  const auto out = dear::testing::scratch_dir("generate");
  ExperimentConfig cfg = dear::testing::micro_experiment();
  cfg.write_clip_cache = true;
  std::ostringstream log;
  cmd_generate(cfg, out, log);
  const auto split = synthvid::read_manifest(out / "manifest.tsv");
  EXPECT_EQ(split.train.size() + split.val.size(), 12u);
  const CsvTable summary = read_csv(out / "summary.csv");
  ASSERT_EQ(summary.rows.size(), 2u);
  EXPECT_EQ(summary.rows[0][2], "3");
  EXPECT_TRUE(fs::exists(out / "config.json"));
  const auto& r = split.train.front();
  EXPECT_TRUE(fs::exists(out / "clips" / (std::to_string(r.class_id) + "_" + std::to_string(r.seed) + ".clip")));
}

TEST(Commands, TrainThenEvalAgree) {
  const auto out = dear::testing::scratch_dir("train");
  const ExperimentConfig cfg = dear::testing::micro_experiment();
  std::ostringstream log;
  const auto metrics = cmd_train(cfg, out, log);
  ASSERT_EQ(metrics.size(), 2u);
  EXPECT_EQ(read_csv(out / "metrics.csv").rows.size(), 2u);
  EXPECT_EQ(read_csv(out / "per_class.csv").rows.size(), 4u);

  const auto eval_out = dear::testing::scratch_dir("eval");
  EvalRequest req;
  req.checkpoint = (out / "checkpoint.bin").string();
  req.manifest = (out / "manifest.tsv").string();
  const training::MetricsRecord m = cmd_eval(cfg, req, eval_out, log);
  EXPECT_EQ(m.val_top1, metrics.back().val_top1);
  const CsvTable eval = read_csv(eval_out / "eval.csv");
  EXPECT_EQ(eval.rows[0][0], "val");
  EXPECT_EQ(eval.rows[0][3], format_number(m.val_top1));
}

TEST(Commands, EvalWithMismatchedConfigFails) {
  const auto out = dear::testing::scratch_dir("train_mismatch");
  ExperimentConfig cfg = dear::testing::micro_experiment();
  cfg.train.epochs = 1;
  std::ostringstream log;
  cmd_train(cfg, out, log);
  ExperimentConfig other = cfg;
  other.model.side.heads = 1;
  EvalRequest req;
  req.checkpoint = (out / "checkpoint.bin").string();
  EXPECT_THROW(cmd_eval(other, req, dear::testing::scratch_dir("eval_mismatch"), log), FormatError);
}

TEST(Commands, EvalOnQuantizedDepthRuns) {
  const auto out = dear::testing::scratch_dir("train_q");
  ExperimentConfig cfg = dear::testing::micro_experiment();
  cfg.train.epochs = 1;
  std::ostringstream log;
  cmd_train(cfg, out, log);
  EvalRequest req;
  req.checkpoint = (out / "checkpoint.bin").string();
  req.depth_mode = synthvid::DepthMode::parse("quantized_noisy:4:0");
  req.split = "all";
  const auto eval_out = dear::testing::scratch_dir("eval_q");
  cmd_eval(cfg, req, eval_out, log);
  const CsvTable eval = read_csv(eval_out / "eval.csv");
  EXPECT_EQ(eval.rows[0][1], req.depth_mode->to_string());
  EXPECT_EQ(eval.rows[0][2], "12");
  req.split = "test";
  EXPECT_THROW(cmd_eval(cfg, req, eval_out, log), ContractError);
}

TEST(Commands, AblateIsDeterministic) {
  const ExperimentConfig cfg = dear::testing::micro_experiment();
  const auto a = dear::testing::scratch_dir("ablate_a");
  const auto b = dear::testing::scratch_dir("ablate_b");
  std::ostringstream log;
  const AblationReport ra = cmd_ablate(cfg, a, log);
  cmd_ablate(cfg, b, log);
  ASSERT_EQ(ra.rows.size(), 3u);
  EXPECT_EQ(ra.rows[0].mode, model::AblationMode::kRgbOnly);
  EXPECT_EQ(ra.rows[2].mode, model::AblationMode::kRgbDepthMamba);
  for (const char* name : {"ablation.csv", "ablation_per_class.csv", "ablation_curves.csv",
                           "per_class_delta.csv", "config.json"}) {
    EXPECT_EQ(slurp(a / name), slurp(b / name)) << name;
  }
  EXPECT_EQ(read_csv(a / "ablation_curves.csv").rows.size(), 6u);
}

TEST(Commands, ManifestWithUnknownClassRejected) {
  const auto dir = dear::testing::scratch_dir("bad_manifest");
  synthvid::DatasetSplit split;
  split.train.push_back({5, 1});
  split.val.push_back({0, 2});
  synthvid::write_manifest(dir / "m.tsv", split);
  ExperimentConfig cfg = dear::testing::micro_experiment();
  cfg.manifest = (dir / "m.tsv").string();
  cfg.resolve();
  EXPECT_THROW(dataset_split(cfg), FormatError);
}

TEST(Commands, DefaultGenerateIsBalancedAndIdempotent) {
  const auto a = dear::testing::scratch_dir("generate_default_a");
  const auto b = dear::testing::scratch_dir("generate_default_b");
  std::ostringstream log;
  cmd_generate(ExperimentConfig{}, a, log);
  cmd_generate(ExperimentConfig{}, b, log);
  const auto split = synthvid::read_manifest(a / "manifest.tsv");
  EXPECT_EQ(split.train.size() + split.val.size(), 600u);
  for (const auto& row : read_csv(a / "summary.csv").rows) {
    EXPECT_EQ(std::stoi(row[2]) + std::stoi(row[3]), 100);
  }
  EXPECT_EQ(slurp(a / "manifest.tsv"), slurp(b / "manifest.tsv"));
  ExperimentConfig one;
  one.n_per_class = 1;
  EXPECT_THROW(cmd_generate(one, a, log), ContractError);
}

TEST(Commands, MicroTrainIsFastAndRerunsIdentically) {
  ExperimentConfig cfg = dear::testing::micro_experiment();
  cfg.n_per_class = 20;
  cfg.train.epochs = 5;
  const auto a = dear::testing::scratch_dir("train_rerun_a");
  const auto b = dear::testing::scratch_dir("train_rerun_b");
  std::ostringstream log;
  const auto t0 = std::chrono::steady_clock::now();
  cmd_train(cfg, a, log);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_LT(secs, 60.0);
  cmd_train(cfg, b, log);
  EXPECT_EQ(read_csv(a / "metrics.csv").rows.size(), 5u);
  for (const char* name : {"metrics.csv", "per_class.csv", "checkpoint.bin", "config.json"}) {
    EXPECT_EQ(slurp(a / name), slurp(b / name)) << name;
  }
}

TEST(Commands, EvalOnTrainSplitMatchesRecordedAccuracy) {
  ExperimentConfig cfg = dear::testing::micro_experiment();
  cfg.n_per_class = 20;
  cfg.train.epochs = 4;
  const auto out = dear::testing::scratch_dir("train_for_eval");
  std::ostringstream log;
  const auto metrics = cmd_train(cfg, out, log);
  EvalRequest req;
  req.checkpoint = (out / "checkpoint.bin").string();
  req.split = "train";
  const auto m = cmd_eval(cfg, req, dear::testing::scratch_dir("eval_train"), log);
  EXPECT_GE(m.val_top1, metrics.back().train_top1 - 0.01);
}

TEST(Commands, PictorialDepthCannotSeparatePartnerPairs) {
  // Same-seed approach/recede pairs share their RGB, and pictorial depth is
  // computed from RGB alone, so every pair gets one prediction: exactly one
  // clip of each pair is right.
  ExperimentConfig cfg = dear::testing::micro_experiment();
  const auto out = dear::testing::scratch_dir("train_pictorial");
  std::ostringstream log;
  cmd_train(cfg, out, log);
  synthvid::DatasetSplit pairs;
  for (std::uint64_t s = 0; s < 10; ++s) {
    pairs.val.push_back({0, 500 + s});
    pairs.val.push_back({1, 500 + s});
  }
  pairs.train = pairs.val;
  synthvid::write_manifest(out / "pairs.tsv", pairs);
  EvalRequest req;
  req.checkpoint = (out / "checkpoint.bin").string();
  req.manifest = (out / "pairs.tsv").string();
  req.depth_mode = synthvid::DepthMode::pictorial();
  const auto m = cmd_eval(cfg, req, dear::testing::scratch_dir("eval_pictorial"), log);
  EXPECT_EQ(m.val_top1, 0.5);
}

TEST(Commands, MissingManifestIsIoError) {
  ExperimentConfig cfg = dear::testing::micro_experiment();
  cfg.manifest = "/no/such/manifest.tsv";
  std::ostringstream log;
  try {
    cmd_train(cfg, dear::testing::scratch_dir("missing_manifest"), log);
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("/no/such/manifest.tsv"), std::string::npos);
  }
}

}  // namespace
}  // namespace dear::experiment
