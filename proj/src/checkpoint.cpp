#include <algorithm>
#include <cstring>
#include <map>
#include <sstream>

#include "dear/binary_io.hpp"
#include "dear/errors.hpp"
#include "dear/training.hpp"

namespace dear::training {

namespace {

enum class DType : std::uint8_t { kF64 = 0, kU64 = 1, kBytes = 2 };

struct Record {
  DType dtype;
  std::vector<std::uint64_t> dims;
  std::string payload;  // raw little-endian bytes
};

void put_header(std::string& out, const std::string& name, DType dtype,
                const std::vector<std::uint64_t>& dims) {
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out += name;
  binio::put<std::uint8_t>(out, static_cast<std::uint8_t>(dtype));
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) binio::put<std::uint64_t>(out, d);
}

void put_f64(std::string& out, const std::string& name, const Shape& shape,
             std::span<const double> values) {
  put_header(out, name, DType::kF64, std::vector<std::uint64_t>(shape.begin(), shape.end()));
  out.append(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(double));
}

void put_u64(std::string& out, const std::string& name, std::uint64_t value) {
  put_header(out, name, DType::kU64, {1});
  binio::put<std::uint64_t>(out, value);
}

void put_bytes(std::string& out, const std::string& name, const std::string& bytes) {
  put_header(out, name, DType::kBytes, {bytes.size()});
  out += bytes;
}

std::string join_fields(const std::vector<std::pair<std::string, std::string>>& fields) {
  std::string out;
  for (const auto& [k, v] : fields) out += k + "=" + v + "\n";
  return out;
}

std::size_t dtype_size(DType t) { return t == DType::kBytes ? 1 : 8; }

std::vector<std::pair<std::string, Record>> parse_records(const std::string& bytes) {
  binio::Reader r(bytes);
  if (std::memcmp(r.take(sizeof(kCheckpointMagic)), kCheckpointMagic,
                  sizeof(kCheckpointMagic)) != 0) {
    throw FormatError("checkpoint: bad magic");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  std::vector<std::pair<std::string, Record>> out;
  while (!r.done()) {
    const auto name_len = r.get<std::uint32_t>();
    std::string name(r.take(name_len), name_len);
    Record rec;
    const auto tag = r.get<std::uint8_t>();
    if (tag > static_cast<std::uint8_t>(DType::kBytes)) {
      throw FormatError("checkpoint: record '" + name + "' has unknown dtype " +
                        std::to_string(tag));
    }
    rec.dtype = static_cast<DType>(tag);
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw FormatError("checkpoint: record '" + name + "' has rank " + std::to_string(rank));
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      rec.dims.push_back(r.get<std::uint64_t>());
      count *= rec.dims.back();
    }
    const std::uint64_t size = count * dtype_size(rec.dtype);
    if (size > r.remaining()) throw FormatError("checkpoint: record '" + name + "' is truncated");
    rec.payload.assign(r.take(size), size);
    out.emplace_back(std::move(name), std::move(rec));
  }
  return out;
}

class RecordTable {
 public:
  explicit RecordTable(std::vector<std::pair<std::string, Record>> records) {
    for (auto& [name, rec] : records) {
      if (!table_.emplace(name, std::move(rec)).second) {
        throw FormatError("checkpoint: duplicate record '" + name + "'");
      }
    }
  }

  const Record& get(const std::string& name, DType dtype) const {
    auto it = table_.find(name);
    if (it == table_.end()) throw FormatError("checkpoint: missing record '" + name + "'");
    if (it->second.dtype != dtype) throw FormatError("checkpoint: record '" + name + "' has wrong dtype");
    return it->second;
  }

  std::vector<double> f64(const std::string& name, const Shape& expected) const {
    const Record& rec = get(name, DType::kF64);
    if (!std::equal(rec.dims.begin(), rec.dims.end(), expected.begin(), expected.end())) {
      std::ostringstream os;
      os << "checkpoint: tensor '" << name << "' has shape [";
      for (std::size_t i = 0; i < rec.dims.size(); ++i) os << (i ? ", " : "") << rec.dims[i];
      os << "], model expects " << shape_str(expected);
      throw FormatError(os.str());
    }
    std::vector<double> v(numel(expected));
    std::memcpy(v.data(), rec.payload.data(), v.size() * sizeof(double));
    return v;
  }

  std::vector<double> f64_any(const std::string& name, std::vector<std::uint64_t>& dims) const {
    const Record& rec = get(name, DType::kF64);
    dims = rec.dims;
    std::vector<double> v(rec.payload.size() / sizeof(double));
    std::memcpy(v.data(), rec.payload.data(), rec.payload.size());
    return v;
  }

  std::uint64_t u64(const std::string& name) const {
    const Record& rec = get(name, DType::kU64);
    if (rec.payload.size() != sizeof(std::uint64_t)) {
      throw FormatError("checkpoint: record '" + name + "' is not a scalar");
    }
    std::uint64_t v;
    std::memcpy(&v, rec.payload.data(), sizeof(v));
    return v;
  }

  const std::string& bytes(const std::string& name) const { return get(name, DType::kBytes).payload; }

 private:
  std::map<std::string, Record> table_;
};

void check_fields(const std::string& stored, const std::vector<std::pair<std::string, std::string>>& expected,
                  const std::string& what) {
  std::map<std::string, std::string> have;
  std::istringstream in(stored);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("checkpoint: malformed " + what + " line '" + line + "'");
    have[line.substr(0, eq)] = line.substr(eq + 1);
  }
  for (const auto& [key, value] : expected) {
    auto it = have.find(key);
    if (it == have.end()) throw FormatError("checkpoint: " + what + " field '" + key + "' missing");
    if (it->second != value) {
      throw FormatError("checkpoint: " + what + " field '" + key + "' is " + it->second +
                        ", expected " + value);
    }
  }
  if (have.size() != expected.size()) {
    throw FormatError("checkpoint: " + what + " has unexpected fields");
  }
}

// epoch, loss, train top-1, val top-1. Wall-clock time is left out so that a
// seeded run always writes the same bytes.
constexpr std::size_t kHistoryFixed = 4;

}  // namespace

std::string encode_checkpoint(const model::DearModel& model, const Trainer& trainer) {
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  binio::put<std::uint32_t>(out, kCheckpointVersion);
  put_bytes(out, "config/model", join_fields(model.config().fields()));
  put_bytes(out, "config/train", join_fields(trainer.config().fields()));

  const ParamList params = model.trainable();
  for (const auto& p : params) put_f64(out, "param/" + p.name, p.tensor.shape(), p.tensor.data());
  put_u64(out, "frozen/hash", trainer.frozen_hash());

  const AdamState& adam = trainer.optimizer_state();
  put_u64(out, "adam/step", adam.step);
  for (std::size_t i = 0; i < params.size(); ++i) {
    put_f64(out, "adam/m/" + params[i].name, params[i].tensor.shape(), adam.m[i]);
    put_f64(out, "adam/v/" + params[i].name, params[i].tensor.shape(), adam.v[i]);
  }
  put_bytes(out, "rng/shuffle", trainer.rng().serialize());
  put_u64(out, "trainer/epoch", trainer.epoch());

  const std::size_t C = model.config().num_classes;
  const auto& history = trainer.history();
  std::vector<double> rows;
  for (const auto& m : history) {
    rows.insert(rows.end(), {static_cast<double>(m.epoch), m.train_loss, m.train_top1,
                             m.val_top1});
    if (m.per_class.size() != C) throw ContractError("checkpoint: metrics per-class length mismatch");
    rows.insert(rows.end(), m.per_class.begin(), m.per_class.end());
  }
  put_header(out, "trainer/history", DType::kF64, {history.size(), kHistoryFixed + C});
  out.append(reinterpret_cast<const char*>(rows.data()), rows.size() * sizeof(double));
  return out;
}

void decode_checkpoint(const std::string& bytes, model::DearModel& model, Trainer& trainer) {
  const RecordTable table(parse_records(bytes));
  check_fields(table.bytes("config/model"), model.config().fields(), "model config");
  check_fields(table.bytes("config/train"), trainer.config().fields(), "train config");
  if (table.u64("frozen/hash") != trainer.frozen_hash()) {
    throw FormatError("checkpoint: frozen backbone hash differs from the model's");
  }

  // Read everything before touching the model so a bad file leaves it intact.
  ParamList params = model.trainable();
  std::vector<std::vector<double>> values;
  AdamState adam;
  adam.step = table.u64("adam/step");
  for (const auto& p : params) {
    values.push_back(table.f64("param/" + p.name, p.tensor.shape()));
    adam.m.push_back(table.f64("adam/m/" + p.name, p.tensor.shape()));
    adam.v.push_back(table.f64("adam/v/" + p.name, p.tensor.shape()));
  }
  Rng rng;
  try {
    rng.deserialize(table.bytes("rng/shuffle"));
  } catch (const std::exception& e) {
    throw FormatError(std::string("checkpoint: bad rng state: ") + e.what());
  }
  const auto epoch = table.u64("trainer/epoch");

  const std::size_t C = model.config().num_classes;
  std::vector<std::uint64_t> dims;
  const std::vector<double> rows = table.f64_any("trainer/history", dims);
  if (dims.size() != 2 || dims[1] != kHistoryFixed + C || dims[0] != epoch) {
    throw FormatError("checkpoint: tensor 'trainer/history' has unexpected shape");
  }
  std::vector<MetricsRecord> history;
  for (std::size_t r = 0; r < dims[0]; ++r) {
    const double* row = rows.data() + r * dims[1];
    MetricsRecord m;
    m.epoch = static_cast<std::uint32_t>(row[0]);
    m.train_loss = row[1];
    m.train_top1 = row[2];
    m.val_top1 = row[3];
    m.per_class.assign(row + kHistoryFixed, row + kHistoryFixed + C);
    history.push_back(std::move(m));
  }

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto dst = params[i].tensor.mutable_data();
    std::copy(values[i].begin(), values[i].end(), dst.begin());
    params[i].tensor.zero_grad();
  }
  restore_trainer(trainer, std::move(adam), rng, static_cast<std::uint32_t>(epoch),
                  std::move(history));
}

void save_checkpoint(const std::filesystem::path& path, const model::DearModel& model,
                     const Trainer& trainer) {
  binio::write_file(path, encode_checkpoint(model, trainer));
}

void load_checkpoint(const std::filesystem::path& path, model::DearModel& model,
                     Trainer& trainer) {
  decode_checkpoint(binio::read_file(path), model, trainer);
}

}  // namespace dear::training
