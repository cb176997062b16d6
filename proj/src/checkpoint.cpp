#include "symcons/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace symcons {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

Checkpoint Checkpoint::from_model(const ModelState& model) {
  Checkpoint c;
  c.model_config = model.config;
  c.role = model.role;
  for (const auto& [name, t] : model.params) c.params.emplace(name, Tensor(t.shape, t.values));
  return c;
}

Checkpoint Checkpoint::from_training(const TrainResult& result, const TrainConfig& config) {
  Checkpoint c = from_model(result.model);
  c.train_config = config;
  c.global_step = result.global_step;
  c.moments = result.moments;
  return c;
}

ModelState Checkpoint::to_model() const {
  ModelState m;
  m.config = model_config;
  m.role = role;
  for (const auto& [name, t] : params) m.params.emplace(name, Tensor(t.shape, t.values));
  return m;
}

namespace {

std::string fmt_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string shape_text(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out.empty() ? "-" : out;
}

Shape parse_shape(const std::string& text) {
  Shape s;
  if (text == "-") return s;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) s.push_back(std::stoul(part));
  return s;
}

struct ArrayEntry {
  std::string name;
  Shape shape;
  const std::vector<double>* data;
};

void write_kv(std::ostringstream& os, const std::string& key, const std::string& value) {
  os << key << ' ' << value << '\n';
}

}  // namespace

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  std::vector<ArrayEntry> arrays;
  for (const auto& [name, t] : c.params) arrays.push_back({"param/" + name, t.shape, &t.values});
  for (const auto& [name, v] : c.moments.first) {
    arrays.push_back({"adam_m/" + name, c.params.at(name).shape, &v});
  }
  for (const auto& [name, v] : c.moments.second) {
    arrays.push_back({"adam_v/" + name, c.params.at(name).shape, &v});
  }

  std::ostringstream man;
  write_kv(man, "role", std::string(to_string(c.role)));
  write_kv(man, "global_step", std::to_string(c.global_step));
  const ModelConfig& m = c.model_config;
  write_kv(man, "model.layers", std::to_string(m.layers));
  write_kv(man, "model.heads", std::to_string(m.heads));
  write_kv(man, "model.d_model", std::to_string(m.d_model));
  write_kv(man, "model.d_ff", std::to_string(m.d_ff));
  write_kv(man, "model.max_len", std::to_string(m.max_len));
  write_kv(man, "model.vocab_size", std::to_string(m.vocab_size));
  write_kv(man, "model.num_classes", std::to_string(m.num_classes));
  write_kv(man, "model.dropout", fmt_double(m.dropout));
  if (c.train_config) {
    const TrainConfig& t = *c.train_config;
    write_kv(man, "train.epochs", std::to_string(t.epochs));
    write_kv(man, "train.batch_size", std::to_string(t.batch_size));
    write_kv(man, "train.learning_rate", fmt_double(t.learning_rate));
    write_kv(man, "train.weight_decay", fmt_double(t.weight_decay));
    write_kv(man, "train.beta1", fmt_double(t.beta1));
    write_kv(man, "train.beta2", fmt_double(t.beta2));
    write_kv(man, "train.eps_opt", fmt_double(t.eps_opt));
    write_kv(man, "train.seed", std::to_string(t.seed));
    write_kv(man, "train.objective", std::string(to_string(t.objective)));
    write_kv(man, "train.lambda_max", fmt_double(t.schedule.lambda_max));
    write_kv(man, "train.schedule", t.schedule.shape == ScheduleShape::linear ? "linear" : "constant");
    write_kv(man, "train.head", std::string(to_string(t.head)));
    write_kv(man, "train.kl_direction", std::string(to_string(t.kl_direction)));
  }
  std::size_t offset = 0;
  for (const auto& a : arrays) {
    if (a.data->size() != shape_size(a.shape)) throw CheckpointShapeError("shape mismatch for " + a.name);
    man << "array " << a.name << ' ' << shape_text(a.shape) << ' ' << offset << ' ' << a.data->size() << '\n';
    offset += a.data->size();
  }
  const std::string manifest = man.str();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write("SYMC", 4);
  const std::uint32_t version = c.format_version;
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  const std::uint64_t len = manifest.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
  for (const auto& a : arrays) {
    out.write(reinterpret_cast<const char*>(a.data->data()), static_cast<std::streamsize>(a.data->size() * sizeof(double)));
  }
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

namespace {

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  void read(void* dst, std::size_t n) {
    if (pos_ + n > bytes_.size()) throw CheckpointTruncatedError("unexpected end of checkpoint");
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  Reader r(std::string(std::istreambuf_iterator<char>(in), {}));

  char magic[4];
  r.read(magic, 4);
  if (std::memcmp(magic, "SYMC", 4) != 0) throw DataError(path.string() + " is not a checkpoint");
  std::uint32_t version = 0;
  r.read(&version, sizeof version);
  if (version != kCheckpointVersion) {
    throw CheckpointVersionError("checkpoint format version " + std::to_string(version) + ", expected " +
                                 std::to_string(kCheckpointVersion));
  }
  std::uint64_t len = 0;
  r.read(&len, sizeof len);
  if (len > r.remaining()) throw CheckpointTruncatedError("unexpected end of checkpoint");
  std::string manifest(len, '\0');
  r.read(manifest.data(), len);

  Checkpoint c;
  c.format_version = version;
  std::map<std::string, std::string> kv;
  struct Entry {
    std::string name;
    Shape shape;
    std::size_t offset, count;
  };
  std::vector<Entry> entries;
  std::istringstream ms(manifest);
  std::string line;
  while (std::getline(ms, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "array") {
      Entry e;
      std::string shape;
      ls >> e.name >> shape >> e.offset >> e.count;
      if (!ls) throw DataError("malformed checkpoint manifest line: " + line);
      e.shape = parse_shape(shape);
      entries.push_back(std::move(e));
    } else if (!key.empty()) {
      std::string value;
      ls >> value;
      kv[key] = value;
    }
  }

  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw DataError("checkpoint manifest lacks " + key);
    return it->second;
  };
  c.role = parse_model_role(get("role"));
  c.global_step = std::stoul(get("global_step"));
  ModelConfig& m = c.model_config;
  m.layers = std::stoul(get("model.layers"));
  m.heads = std::stoul(get("model.heads"));
  m.d_model = std::stoul(get("model.d_model"));
  m.d_ff = std::stoul(get("model.d_ff"));
  m.max_len = std::stoul(get("model.max_len"));
  m.vocab_size = std::stoul(get("model.vocab_size"));
  m.num_classes = std::stoul(get("model.num_classes"));
  m.dropout = std::stod(get("model.dropout"));
  m.validate();
  if (kv.contains("train.epochs")) {
    TrainConfig t;
    t.epochs = std::stoul(get("train.epochs"));
    t.batch_size = std::stoul(get("train.batch_size"));
    t.learning_rate = std::stod(get("train.learning_rate"));
    t.weight_decay = std::stod(get("train.weight_decay"));
    t.beta1 = std::stod(get("train.beta1"));
    t.beta2 = std::stod(get("train.beta2"));
    t.eps_opt = std::stod(get("train.eps_opt"));
    t.seed = std::stoull(get("train.seed"));
    t.objective = parse_objective(get("train.objective"));
    t.schedule.lambda_max = std::stod(get("train.lambda_max"));
    t.schedule.shape = get("train.schedule") == "constant" ? ScheduleShape::constant : ScheduleShape::linear;
    t.head = parse_head(get("train.head"));
    t.kl_direction = parse_kl_direction(get("train.kl_direction"));
    c.train_config = t;
  }

  std::map<std::string, Shape> expected;
  for (auto& [name, shape] : parameter_layout(m)) expected.emplace(name, shape);

  std::size_t data_len = 0;
  for (const auto& e : entries) data_len = std::max(data_len, e.offset + e.count);
  std::vector<double> data(data_len);
  r.read(data.data(), data_len * sizeof(double));

  for (const auto& e : entries) {
    if (shape_size(e.shape) != e.count) throw CheckpointShapeError("shape mismatch for " + e.name);
    const auto slash = e.name.find('/');
    const std::string kind = e.name.substr(0, slash);
    const std::string pname = e.name.substr(slash + 1);
    auto it = expected.find(pname);
    if (it == expected.end()) throw CheckpointShapeError("unexpected array " + e.name);
    if (it->second != e.shape) {
      throw CheckpointShapeError("shape mismatch for " + e.name + ": stored " + shape_string(e.shape) +
                                 ", model expects " + shape_string(it->second));
    }
    std::vector<double> values(data.begin() + static_cast<std::ptrdiff_t>(e.offset),
                               data.begin() + static_cast<std::ptrdiff_t>(e.offset + e.count));
    if (kind == "param") {
      c.params.emplace(pname, Tensor(e.shape, std::move(values)));
    } else if (kind == "adam_m") {
      c.moments.first.emplace(pname, std::move(values));
    } else if (kind == "adam_v") {
      c.moments.second.emplace(pname, std::move(values));
    } else {
      throw DataError("unknown array kind in checkpoint: " + e.name);
    }
  }
  for (const auto& [name, shape] : expected) {
    if (!c.params.contains(name)) throw CheckpointShapeError("checkpoint is missing parameter " + name);
  }
  return c;
}

}  // namespace symcons
