#include "dear/experiment.hpp"

#include <charconv>
#include <chrono>
#include <functional>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "dear/binary_io.hpp"
#include "dear/dataset_io.hpp"
#include "dear/errors.hpp"
#include "json.hpp"

namespace dear::experiment {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Typed accessors over one JSON value; every failure names the key.
template <typename T>
T expect(const json& v, const std::string& key) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ContractError("");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ContractError("");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ContractError("");
    } else {
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
        throw ContractError("");
      }
      if (v.get<std::uint64_t>() > std::numeric_limits<T>::max()) throw ContractError("");
    }
    return v.get<T>();
  } catch (const std::exception&) {
    throw ContractError("config key '" + key + "': expected " +
                        (std::is_same_v<T, bool>          ? "a boolean"
                         : std::is_same_v<T, std::string> ? "a string"
                         : std::is_floating_point_v<T>    ? "a number"
                                                          : "a non-negative integer") +
                        ", got " + v.dump());
  }
}

struct Field {
  std::function<void(ExperimentConfig&, const json&, const std::string&)> read;
  std::function<json(const ExperimentConfig&)> write;
};

template <typename T, typename Get>
Field field(Get get) {
  return {[get](ExperimentConfig& c, const json& v, const std::string& key) {
            get(c) = expect<T>(v, key);
          },
          [get](const ExperimentConfig& c) {
            return json(get(c));
          }};
}

template <typename Parse, typename Show, typename Get>
Field enum_field(Get get, Parse parse, Show show) {
  return {[=](ExperimentConfig& c, const json& v, const std::string& key) {
            get(c) = parse(expect<std::string>(v, key));
          },
          [=](const ExperimentConfig& c) {
            return json(show(get(c)));
          }};
}

const std::map<std::string, Field>& fields() {
  using E = ExperimentConfig;
  static const std::map<std::string, Field> table = {
      // generator
      {"height", field<std::uint32_t>([](auto& c) -> auto& { return c.gen.height; })},
      {"width", field<std::uint32_t>([](auto& c) -> auto& { return c.gen.width; })},
      {"frames_total", field<std::uint32_t>([](auto& c) -> auto& { return c.gen.frames_total; })},
      {"frames_sampled", field<std::uint32_t>([](auto& c) -> auto& { return c.gen.frames_sampled; })},
      {"stride", field<std::uint32_t>([](auto& c) -> auto& { return c.gen.stride; })},
      {"num_classes", field<std::uint32_t>([](auto& c) -> auto& { return c.gen.num_classes; })},
      {"object_size_min", field<double>([](auto& c) -> auto& { return c.gen.object_size_min; })},
      {"object_size_max", field<double>([](auto& c) -> auto& { return c.gen.object_size_max; })},
      {"albedo_min", field<double>([](auto& c) -> auto& { return c.gen.albedo_min; })},
      {"albedo_max", field<double>([](auto& c) -> auto& { return c.gen.albedo_max; })},
      {"rgb_noise", field<double>([](auto& c) -> auto& { return c.gen.rgb_noise; })},
      {"shapes",
       {[](E& c, const json& v, const std::string& key) {
          if (!v.is_array()) throw ContractError("config key '" + key + "': expected an array");
          c.gen.shapes.clear();
          for (const auto& item : v) {
            const auto name = expect<std::string>(item, key);
            if (name == "square") {
              c.gen.shapes.push_back(synthvid::Shape2D::kSquare);
            } else if (name == "disc") {
              c.gen.shapes.push_back(synthvid::Shape2D::kDisc);
            } else {
              throw ContractError("config key '" + key + "': unknown shape '" + name + "'");
            }
          }
        },
        [](const E& c) {
          json out = json::array();
          for (auto s : c.gen.shapes) out.push_back(s == synthvid::Shape2D::kSquare ? "square" : "disc");
          return out;
        }}},
      {"depth_mode",
       enum_field([](auto& c) -> auto& { return c.gen.depth_mode; }, synthvid::DepthMode::parse,
                  [](const synthvid::DepthMode& m) { return m.to_string(); })},
      {"depth_normalization",
       enum_field([](auto& c) -> auto& { return c.gen.depth_normalization; },
                  synthvid::parse_depth_normalization,
                  [](synthvid::DepthNormalization n) { return synthvid::to_string(n); })},
      // model
      {"patch", field<std::uint32_t>([](auto& c) -> auto& { return c.model.backbone.patch; })},
      {"backbone_dim", field<std::uint32_t>([](auto& c) -> auto& { return c.model.backbone.dim; })},
      {"backbone_layers", field<std::uint32_t>([](auto& c) -> auto& { return c.model.backbone.layers; })},
      {"backbone_heads", field<std::uint32_t>([](auto& c) -> auto& { return c.model.backbone.heads; })},
      {"backbone_mlp_ratio",
       field<std::uint32_t>([](auto& c) -> auto& { return c.model.backbone.mlp_ratio; })},
      {"side_dim", field<std::uint32_t>([](auto& c) -> auto& { return c.model.side.dim; })},
      {"side_heads", field<std::uint32_t>([](auto& c) -> auto& { return c.model.side.heads; })},
      {"side_mlp_ratio", field<std::uint32_t>([](auto& c) -> auto& { return c.model.side.mlp_ratio; })},
      {"ssm_expand", field<std::uint32_t>([](auto& c) -> auto& { return c.model.ssm.expand; })},
      {"ssm_state", field<std::uint32_t>([](auto& c) -> auto& { return c.model.ssm.state; })},
      {"ssm_conv_kernel", field<std::uint32_t>([](auto& c) -> auto& { return c.model.ssm.conv_kernel; })},
      {"ssm_blocks", field<std::uint32_t>([](auto& c) -> auto& { return c.model.ssm.blocks; })},
      {"ssm_dt_rank", field<std::uint32_t>([](auto& c) -> auto& { return c.model.ssm.dt_rank; })},
      {"fusion_layers", field<std::uint32_t>([](auto& c) -> auto& { return c.model.fusion_layers; })},
      {"fusion_heads", field<std::uint32_t>([](auto& c) -> auto& { return c.model.fusion_heads; })},
      {"mode", enum_field([](auto& c) -> auto& { return c.model.mode; }, model::parse_ablation_mode,
                          [](model::AblationMode m) { return model::to_string(m); })},
      // training
      {"lr", field<double>([](auto& c) -> auto& { return c.train.lr; })},
      {"weight_decay", field<double>([](auto& c) -> auto& { return c.train.weight_decay; })},
      {"beta1", field<double>([](auto& c) -> auto& { return c.train.beta1; })},
      {"beta2", field<double>([](auto& c) -> auto& { return c.train.beta2; })},
      {"eps", field<double>([](auto& c) -> auto& { return c.train.eps; })},
      {"epochs", field<std::uint32_t>([](auto& c) -> auto& { return c.train.epochs; })},
      {"batch_size", field<std::uint32_t>([](auto& c) -> auto& { return c.train.batch_size; })},
      {"eval_batch_size", field<std::uint32_t>([](auto& c) -> auto& { return c.train.eval_batch_size; })},
      {"aux_loss_weight", field<double>([](auto& c) -> auto& { return c.train.aux_loss_weight; })},
      {"fuse_space", enum_field([](auto& c) -> auto& { return c.train.fuse_space; },
                                model::parse_fuse_space,
                                [](model::FuseSpace f) { return model::to_string(f); })},
      {"schedule", enum_field([](auto& c) -> auto& { return c.train.schedule; },
                              training::parse_lr_schedule,
                              [](training::LrSchedule s) { return training::to_string(s); })},
      // experiment
      {"n_per_class", field<std::uint32_t>([](auto& c) -> auto& { return c.n_per_class; })},
      {"split_ratio", field<double>([](auto& c) -> auto& { return c.split_ratio; })},
      {"seed", field<std::uint64_t>([](auto& c) -> auto& { return c.seed; })},
      {"manifest", field<std::string>([](auto& c) -> auto& { return c.manifest; })},
      {"checkpoint", field<std::string>([](auto& c) -> auto& { return c.checkpoint; })},
      {"write_clip_cache", field<bool>([](auto& c) -> auto& { return c.write_clip_cache; })},
      {"record_timing", field<bool>([](auto& c) -> auto& { return c.record_timing; })},
  };
  return table;
}

void write_config_copy(const ExperimentConfig& cfg, const fs::path& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create output directory " + out.string() + ": " + ec.message());
  binio::write_file(out / "config.json", to_json(cfg));
}

ExperimentConfig resolved(ExperimentConfig cfg) {
  cfg.resolve();
  return cfg;
}

std::vector<synthvid::ManifestRecord> select_split(const synthvid::DatasetSplit& split,
                                                   const std::string& which) {
  if (which == "train") return split.train;
  if (which == "val") return split.val;
  if (which == "all") {
    auto out = split.train;
    out.insert(out.end(), split.val.begin(), split.val.end());
    return out;
  }
  throw ContractError("unknown split '" + which + "' (expected train, val or all)");
}

std::string percent(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << 100.0 * v << "%";
  return os.str();
}

void log_epoch(std::ostream& log, const std::string& tag, const training::MetricsRecord& m) {
  log << tag << "epoch " << m.epoch << "  loss " << std::fixed << std::setprecision(4)
      << m.train_loss << "  train " << percent(m.train_top1) << "  val " << percent(m.val_top1)
      << "  (" << std::setprecision(1) << m.seconds << " s)" << std::defaultfloat << "\n";
}

}  // namespace

void ExperimentConfig::resolve() {
  model.backbone.height = gen.height;
  model.backbone.width = gen.width;
  model.backbone.max_frames = gen.frames_sampled;
  model.num_classes = gen.num_classes;
  model.ssm.model_dim = model.backbone.dim;
  model.ssm.out_dim = model.side.dim;
  model.init_seed = seed;
  train.seed = seed;
  gen.validate();
  model.validate();
  train.validate();
  if (n_per_class < 2) {
    throw ContractError("ExperimentConfig.n_per_class: must be >= 2 to form a train/val split");
  }
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) {
    throw ContractError("ExperimentConfig.split_ratio: must lie in (0, 1)");
  }
}

ExperimentConfig parse_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ContractError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ContractError("config must be a JSON object");
  ExperimentConfig cfg;
  const auto& table = fields();
  for (const auto& [key, value] : doc.items()) {
    auto it = table.find(key);
    if (it == table.end()) throw ContractError("config key '" + key + "' is not recognised");
    it->second.read(cfg, value, key);
  }
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  return parse_config(binio::read_file(path));
}

std::string to_json(const ExperimentConfig& cfg) {
  json doc = json::object();
  for (const auto& [key, f] : fields()) doc[key] = f.write(cfg);
  return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------

std::string format_number(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

std::string format_csv(const CsvTable& table) {
  auto line = [](const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (cells[i].find_first_of(",\n\"") != std::string::npos) {
        throw ContractError("csv: cell '" + cells[i] + "' needs quoting, which is unsupported");
      }
      out += (i ? "," : "") + cells[i];
    }
    return out + "\n";
  };
  std::string out = line(table.header);
  for (const auto& row : table.rows) {
    if (row.size() != table.header.size()) throw ContractError("csv: ragged row");
    out += line(row);
  }
  return out;
}

CsvTable parse_csv(const std::string& text) {
  CsvTable table;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (first) {
      table.header = std::move(cells);
      first = false;
    } else {
      if (cells.size() != table.header.size()) {
        throw FormatError("csv: row " + std::to_string(table.rows.size() + 1) + " has " +
                          std::to_string(cells.size()) + " cells, header has " +
                          std::to_string(table.header.size()));
      }
      table.rows.push_back(std::move(cells));
    }
  }
  if (first) throw FormatError("csv: empty input");
  return table;
}

void write_csv(const fs::path& path, const CsvTable& table) {
  binio::write_file(path, format_csv(table));
}

CsvTable read_csv(const fs::path& path) { return parse_csv(binio::read_file(path)); }

CsvTable metrics_table(const std::vector<training::MetricsRecord>& metrics, bool with_timing) {
  CsvTable t{{"epoch", "train_loss", "val_top1", "seconds"}, {}};
  for (const auto& m : metrics) {
    t.rows.push_back({std::to_string(m.epoch), format_number(m.train_loss),
                      format_number(m.val_top1), format_number(with_timing ? m.seconds : 0.0)});
  }
  return t;
}

CsvTable per_class_table(const std::vector<training::MetricsRecord>& metrics) {
  CsvTable t{{"epoch", "class_id", "val_accuracy"}, {}};
  for (const auto& m : metrics) {
    for (std::size_t c = 0; c < m.per_class.size(); ++c) {
      t.rows.push_back({std::to_string(m.epoch), std::to_string(c), format_number(m.per_class[c])});
    }
  }
  return t;
}

CsvTable delta_table(const std::vector<training::ClassDelta>& deltas) {
  CsvTable t{{"class_id", "rgb_only", "rgb_depth_mamba", "delta"}, {}};
  for (const auto& d : deltas) {
    t.rows.push_back({std::to_string(d.class_id), format_number(d.baseline),
                      format_number(d.fused), format_number(d.delta)});
  }
  return t;
}

// ---------------------------------------------------------------------------

training::Dataset encode_records(const model::DearModel& model,
                                 const std::vector<synthvid::ManifestRecord>& records,
                                 const synthvid::GenConfig& gen,
                                 const std::optional<synthvid::DepthMode>& depth_override) {
  synthvid::GenConfig g = gen;
  if (depth_override) g.depth_mode = *depth_override;
  training::Dataset out;
  out.reserve(records.size());
  for (const auto& r : records) {
    const synthvid::VideoClip clip = synthvid::make_training_clip(r.class_id, r.seed, g);
    out.push_back({std::make_shared<const model::FrozenFeatures>(model.encode_frozen(clip)),
                   r.class_id});
  }
  return out;
}

synthvid::DatasetSplit dataset_split(const ExperimentConfig& cfg) {
  if (cfg.manifest.empty()) {
    return synthvid::build_dataset(cfg.gen, cfg.n_per_class, cfg.split_ratio, cfg.seed);
  }
  synthvid::DatasetSplit split = synthvid::read_manifest(cfg.manifest);
  for (const auto* part : {&split.train, &split.val}) {
    for (const auto& r : *part) {
      if (r.class_id >= cfg.gen.num_classes) {
        throw FormatError("manifest " + cfg.manifest + ": class id " + std::to_string(r.class_id) +
                          " exceeds num_classes " + std::to_string(cfg.gen.num_classes));
      }
    }
  }
  return split;
}

void cmd_generate(const ExperimentConfig& in, const fs::path& out, std::ostream& log) {
  const ExperimentConfig cfg = resolved(in);
  const synthvid::DatasetSplit split =
      synthvid::build_dataset(cfg.gen, cfg.n_per_class, cfg.split_ratio, cfg.seed);
  write_config_copy(cfg, out);
  synthvid::write_manifest(out / "manifest.tsv", split);

  CsvTable summary{{"class_id", "name", "train", "val"}, {}};
  for (std::uint32_t c = 0; c < cfg.gen.num_classes; ++c) {
    auto count = [c](const std::vector<synthvid::ManifestRecord>& rs) {
      return std::count_if(rs.begin(), rs.end(), [c](const auto& r) { return r.class_id == c; });
    };
    summary.rows.push_back({std::to_string(c), synthvid::standard_classes()[c].name,
                            std::to_string(count(split.train)), std::to_string(count(split.val))});
  }
  write_csv(out / "summary.csv", summary);

  if (cfg.write_clip_cache) {
    const fs::path dir = out / "clips";
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    for (const auto* part : {&split.train, &split.val}) {
      for (const auto& r : *part) {
        const auto clip = synthvid::make_training_clip(r.class_id, r.seed, cfg.gen);
        synthvid::write_clip_cache(
            dir / (std::to_string(r.class_id) + "_" + std::to_string(r.seed) + ".clip"), clip);
      }
    }
  }
  log << "generated " << split.train.size() << " train / " << split.val.size()
      << " val records in " << out.string() << "\n";
}

std::vector<training::MetricsRecord> cmd_train(const ExperimentConfig& in, const fs::path& out,
                                               std::ostream& log) {
  const ExperimentConfig cfg = resolved(in);
  const synthvid::DatasetSplit split = dataset_split(cfg);
  model::DearModel model(cfg.model);
  const training::Dataset train_set = encode_records(model, split.train, cfg.gen);
  const training::Dataset val_set = encode_records(model, split.val, cfg.gen);
  log << "training " << model::to_string(cfg.model.mode) << " (" << model.trainable_count()
      << " trainable values) on " << train_set.size() << " clips\n";

  training::Trainer trainer(model, cfg.train);
  std::vector<training::MetricsRecord> metrics;
  while (trainer.epoch() < cfg.train.epochs) {
    metrics.push_back(trainer.run_epoch(train_set, val_set));
    log_epoch(log, "", metrics.back());
  }
  write_config_copy(cfg, out);
  synthvid::write_manifest(out / "manifest.tsv", split);
  write_csv(out / "metrics.csv", metrics_table(metrics, cfg.record_timing));
  write_csv(out / "per_class.csv", per_class_table(metrics));
  training::save_checkpoint(out / "checkpoint.bin", model, trainer);
  return metrics;
}

training::MetricsRecord cmd_eval(const ExperimentConfig& in, const EvalRequest& req,
                                 const fs::path& out, std::ostream& log) {
  ExperimentConfig cfg = resolved(in);
  if (!req.manifest.empty()) cfg.manifest = req.manifest;
  const std::string ckpt = req.checkpoint.empty() ? cfg.checkpoint : req.checkpoint;
  if (ckpt.empty()) throw ContractError("eval: no checkpoint given");
  const auto records = select_split(dataset_split(cfg), req.split);

  model::DearModel model(cfg.model);
  training::Trainer trainer(model, cfg.train);
  training::load_checkpoint(ckpt, model, trainer);

  const training::Dataset data = encode_records(model, records, cfg.gen, req.depth_mode);
  const training::MetricsRecord m = training::evaluate(model, data, cfg.train);
  const std::string depth = (req.depth_mode ? *req.depth_mode : cfg.gen.depth_mode).to_string();

  write_config_copy(cfg, out);
  write_csv(out / "eval.csv", CsvTable{{"split", "depth_mode", "samples", "top1"},
                                       {{req.split, depth, std::to_string(data.size()),
                                         format_number(m.val_top1)}}});
  CsvTable per_class{{"class_id", "accuracy"}, {}};
  for (std::size_t c = 0; c < m.per_class.size(); ++c) {
    per_class.rows.push_back({std::to_string(c), format_number(m.per_class[c])});
  }
  write_csv(out / "eval_per_class.csv", per_class);

  log << "eval " << req.split << " (" << data.size() << " clips, depth " << depth
      << "): top-1 " << percent(m.val_top1) << "\n";
  for (std::size_t c = 0; c < m.per_class.size(); ++c) {
    log << "  class " << c << " " << std::left << std::setw(22)
        << synthvid::standard_classes()[c].name << std::right << percent(m.per_class[c]) << "\n";
  }
  return m;
}

AblationReport cmd_ablate(const ExperimentConfig& in, const fs::path& out, std::ostream& log) {
  const ExperimentConfig cfg = resolved(in);
  const synthvid::DatasetSplit split = dataset_split(cfg);

  // The backbone is initialised from its own stream, so the full model's
  // encoder produces the activations every mode would compute.
  model::ModelConfig full_cfg = cfg.model;
  full_cfg.mode = model::AblationMode::kRgbDepthMamba;
  const training::Dataset train_set = encode_records(model::DearModel(full_cfg), split.train, cfg.gen);
  const training::Dataset val_set = encode_records(model::DearModel(full_cfg), split.val, cfg.gen);

  AblationReport report;
  for (auto mode : {model::AblationMode::kRgbOnly, model::AblationMode::kRgbDepth,
                    model::AblationMode::kRgbDepthMamba}) {
    model::ModelConfig mc = cfg.model;
    mc.mode = mode;
    model::DearModel model(mc);
    training::Trainer trainer(model, cfg.train);
    const std::string tag = "[" + model::to_string(mode) + "] ";
    AblationRow row{mode, {}, {}};
    while (trainer.epoch() < cfg.train.epochs) {
      row.history.push_back(trainer.run_epoch(train_set, val_set));
      log_epoch(log, tag, row.history.back());
    }
    row.final_metrics = row.history.back();
    report.rows.push_back(std::move(row));
  }
  report.deltas = training::per_class_delta(report.rows.back().final_metrics,
                                            report.rows.front().final_metrics);

  write_config_copy(cfg, out);
  CsvTable table{{"mode", "val_top1"}, {}};
  CsvTable per_class{{"mode", "class_id", "val_accuracy"}, {}};
  CsvTable curves{{"mode", "epoch", "train_loss", "train_top1", "val_top1"}, {}};
  for (const auto& row : report.rows) {
    const std::string name = model::to_string(row.mode);
    table.rows.push_back({name, format_number(row.final_metrics.val_top1)});
    for (std::size_t c = 0; c < row.final_metrics.per_class.size(); ++c) {
      per_class.rows.push_back({name, std::to_string(c), format_number(row.final_metrics.per_class[c])});
    }
    for (const auto& m : row.history) {
      curves.rows.push_back({name, std::to_string(m.epoch), format_number(m.train_loss),
                             format_number(m.train_top1), format_number(m.val_top1)});
    }
  }
  write_csv(out / "ablation.csv", table);
  write_csv(out / "ablation_per_class.csv", per_class);
  write_csv(out / "ablation_curves.csv", curves);
  write_csv(out / "per_class_delta.csv", delta_table(report.deltas));

  log << "\nmode               val top-1\n";
  for (const auto& row : report.rows) {
    log << std::left << std::setw(19) << model::to_string(row.mode) << std::right
        << percent(row.final_metrics.val_top1) << "\n";
  }
  log << "\nper-class change, rgb_only -> rgb_depth_mamba\n";
  for (const auto& d : report.deltas) {
    log << "  class " << d.class_id << " " << std::left << std::setw(22)
        << synthvid::standard_classes()[d.class_id].name << std::right << percent(d.baseline)
        << " -> " << percent(d.fused) << "  (" << std::showpos << std::fixed
        << std::setprecision(1) << 100.0 * d.delta << std::noshowpos << std::defaultfloat
        << " pts)\n";
  }
  return report;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const NumericError*>(&e)) return 2;
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const FormatError*>(&e)) return 3;
  return 1;
}

}  // namespace dear::experiment
