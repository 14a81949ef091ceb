#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dear/model.hpp"
#include "dear/synthvid.hpp"
#include "dear/training.hpp"

// Experiment configuration, dataset materialisation and the four commands
// behind the command-line tool.
namespace dear::experiment {

struct ExperimentConfig {
  synthvid::GenConfig gen;
  model::ModelConfig model;
  training::TrainConfig train;
  std::uint32_t n_per_class = 100;
  double split_ratio = 0.8;
  std::uint64_t seed = 0;
  // Manifest to train/evaluate on; empty means "build from this config".
  std::string manifest;
  std::string checkpoint;
  bool write_clip_cache = false;
  // Wall-clock seconds in metrics.csv; off makes reruns byte-identical.
  bool record_timing = true;

  // Pushes the shared fields (frame size, frame count, classes, seed) into
  // the nested configs and validates all of them.
  void resolve();
  bool operator==(const ExperimentConfig&) const = default;
};

// Flat JSON object whose keys are the field names above and those of the
// nested configs. Unknown keys and wrongly typed values are ContractErrors
// that name the key.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
// Resolved config as pretty-printed JSON, keys sorted.
std::string to_json(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// CSV tables. Numbers are written in shortest round-trip form so that
// write -> read -> write is byte-identical.

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  bool operator==(const CsvTable&) const = default;
};

std::string format_number(double value);
std::string format_csv(const CsvTable& table);
CsvTable parse_csv(const std::string& text);
void write_csv(const std::filesystem::path& path, const CsvTable& table);
CsvTable read_csv(const std::filesystem::path& path);

CsvTable metrics_table(const std::vector<training::MetricsRecord>& metrics, bool with_timing);
CsvTable per_class_table(const std::vector<training::MetricsRecord>& metrics);
CsvTable delta_table(const std::vector<training::ClassDelta>& deltas);

// ---------------------------------------------------------------------------

// Frozen-backbone activations for every record, computed once. The backbone
// does not depend on the ablation mode, so one cache serves all modes.
training::Dataset encode_records(const model::DearModel& model,
                                 const std::vector<synthvid::ManifestRecord>& records,
                                 const synthvid::GenConfig& gen,
                                 const std::optional<synthvid::DepthMode>& depth_override = {});

synthvid::DatasetSplit dataset_split(const ExperimentConfig& cfg);

struct AblationRow {
  model::AblationMode mode;
  training::MetricsRecord final_metrics;
  std::vector<training::MetricsRecord> history;
};

struct AblationReport {
  std::vector<AblationRow> rows;  // rgb_only, rgb_depth, rgb_depth_mamba
  std::vector<training::ClassDelta> deltas;  // full vs rgb_only
};

// Each command writes a copy of the resolved config to `out`.
void cmd_generate(const ExperimentConfig& cfg, const std::filesystem::path& out,
                  std::ostream& log);
std::vector<training::MetricsRecord> cmd_train(const ExperimentConfig& cfg,
                                               const std::filesystem::path& out,
                                               std::ostream& log);
struct EvalRequest {
  std::string checkpoint;  // overrides cfg.checkpoint
  std::string manifest;    // overrides cfg.manifest
  std::optional<synthvid::DepthMode> depth_mode;
  std::string split = "val";  // train, val or all
};
training::MetricsRecord cmd_eval(const ExperimentConfig& cfg, const EvalRequest& req,
                                 const std::filesystem::path& out, std::ostream& log);
AblationReport cmd_ablate(const ExperimentConfig& cfg, const std::filesystem::path& out,
                          std::ostream& log);

// Process exit code for an exception escaping a command: 1 usage/config,
// 2 numeric failure, 3 I/O or file format.
int exit_code_for(const std::exception& e);

}  // namespace dear::experiment
