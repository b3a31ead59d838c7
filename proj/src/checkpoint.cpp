#include "hmd/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace hmd {

namespace {

constexpr char kMagic[4] = {'M', 'D', 'C', 'K'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_record(std::string& out, const std::string& name, const Tensor& t) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out += name;
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (auto e : t.shape()) put_u32(out, static_cast<std::uint32_t>(e));
  for (double v : t.values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
}

class Cursor {
 public:
  Cursor(const std::string& bytes, std::string origin) : bytes_(bytes), origin_(std::move(origin)) {}

  bool done() const { return pos_ == bytes_.size(); }
  const char* take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) throw checkpoint_error(origin_ + ": truncated while reading " + what);
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint64_t uint(int bytes, const char* what) {
    const auto* p = reinterpret_cast<const unsigned char*>(take(static_cast<std::size_t>(bytes), what));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= std::uint64_t{p[i]} << (8 * i);
    return v;
  }
  std::uint32_t u32(const char* what) { return static_cast<std::uint32_t>(uint(4, what)); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::string& bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Captioner& model, const Vocabulary& vocab,
                     const TrainProgress& progress, const AdamState* adam) {
  nlohmann::ordered_json meta;
  meta["config"] = config_to_json(model.config());
  meta["feature_width"] = model.shape().feature_width;
  meta["vocab"] = {{"tokens", vocab.tokens()}, {"counts", vocab.counts()}};
  meta["epoch"] = progress.epoch;
  meta["best_val_loss"] = std::isfinite(progress.best_validation)
                              ? nlohmann::ordered_json(progress.best_validation)
                              : nlohmann::ordered_json(nullptr);
  meta["epochs_since_best"] = progress.epochs_since_best;
  meta["seed"] = model.config().seed;
  if (adam) {
    meta["adam"] = {{"step", adam->step},
                    {"learning_rate", adam->hyper.learning_rate},
                    {"beta1", adam->hyper.beta1},
                    {"beta2", adam->hyper.beta2},
                    {"epsilon", adam->hyper.epsilon}};
  } else {
    meta["adam"] = nullptr;
  }
  const std::string json = meta.dump();

  std::string out(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(json.size()));
  out += json;
  const auto params = model.parameters();
  for (const auto& p : params) put_record(out, "param/" + p.name, *p.tensor);
  if (adam) {
    if (adam->first_moment.size() != params.size()) throw std::invalid_argument("save_checkpoint: moment count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) put_record(out, "adam.m/" + params[i].name, adam->first_moment[i]);
    for (std::size_t i = 0; i < params.size(); ++i) put_record(out, "adam.v/" + params[i].name, adam->second_moment[i]);
  }

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
    os.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!os) throw std::runtime_error("write failed for " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

CheckpointData read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw checkpoint_error("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  const std::string origin = path.string();

  if (bytes.size() < 8 || bytes.compare(0, 4, kMagic, 4) != 0) {
    throw checkpoint_version_error(origin + ": not a checkpoint (bad magic)");
  }
  Cursor c(bytes, origin);
  c.take(4, "magic");
  const std::uint32_t version = c.u32("version");
  if (version != kCheckpointVersion) {
    throw checkpoint_version_error(origin + ": unsupported checkpoint version " + std::to_string(version) +
                                   " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  CheckpointData data;
  const std::uint32_t meta_len = c.u32("metadata length");
  const char* meta = c.take(meta_len, "metadata");
  try {
    data.metadata = nlohmann::json::parse(meta, meta + meta_len);
  } catch (const nlohmann::json::exception& e) {
    throw checkpoint_error(origin + ": corrupt metadata: " + e.what());
  }
  while (!c.done()) {
    CheckpointRecord r;
    const std::uint32_t name_len = c.u32("record name length");
    r.name.assign(c.take(name_len, "record name"), name_len);
    const std::uint32_t rank = c.u32("rank");
    if (rank > 8) throw checkpoint_error(origin + ": implausible rank for " + r.name);
    Shape shape;
    std::uint64_t elements = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      shape.push_back(c.u32("extent"));
      elements *= shape.back();
    }
    if (elements * 8 > c.remaining()) throw checkpoint_error(origin + ": truncated payload for " + r.name);
    std::vector<double> values(elements);
    for (auto& v : values) v = std::bit_cast<double>(c.uint(8, "payload"));
    r.value = Tensor(shape, std::move(values));
    data.records.push_back(std::move(r));
  }
  return data;
}

namespace {

std::map<std::string, const Tensor*> records_with_prefix(const CheckpointData& data, const std::string& prefix) {
  std::map<std::string, const Tensor*> out;
  for (const auto& r : data.records) {
    if (r.name.rfind(prefix, 0) == 0) out[r.name.substr(prefix.size())] = &r.value;
  }
  return out;
}

const Tensor& matching(const std::map<std::string, const Tensor*>& records, const std::string& prefix,
                       const std::string& name, const Tensor& expected) {
  const auto it = records.find(name);
  if (it == records.end()) throw checkpoint_shape_error(name, "checkpoint lacks tensor " + prefix + name);
  if (it->second->shape() != expected.shape()) {
    throw checkpoint_shape_error(name, "shape mismatch for tensor " + name + ": checkpoint has " +
                                           shape_to_string(it->second->shape()) + ", model expects " +
                                           shape_to_string(expected.shape()));
  }
  return *it->second;
}

}  // namespace

void apply_parameters(const CheckpointData& data, Captioner& model) {
  const auto records = records_with_prefix(data, "param/");
  auto params = model.parameters();
  for (const auto& p : params) matching(records, "param/", p.name, *p.tensor);
  if (records.size() != params.size()) {
    throw checkpoint_error("checkpoint holds " + std::to_string(records.size()) + " parameters, model has " +
                           std::to_string(params.size()));
  }
  for (auto& p : params) *p.tensor = *records.at(p.name);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const CheckpointData data = read_checkpoint(path);
  LoadedCheckpoint out;
  try {
    const auto& meta = data.metadata;
    const auto& tokens = meta.at("vocab").at("tokens");
    const auto& counts = meta.at("vocab").at("counts");
    const Vocabulary reserved;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (i < reserved.size()) {
        if (tokens[i].get<std::string>() != reserved.token(i)) throw checkpoint_error("vocabulary lacks reserved tokens");
        continue;
      }
      out.vocab.add(tokens[i].get<std::string>(), counts.at(i).get<std::size_t>());
    }
    const DecoderConfig config = config_from_json(meta.at("config"));
    out.model = make_captioner(config, {out.vocab.size(), meta.at("feature_width").get<std::size_t>()});
    out.progress.epoch = meta.at("epoch").get<std::size_t>();
    out.progress.best_validation = meta.at("best_val_loss").is_null()
                                       ? std::numeric_limits<double>::infinity()
                                       : meta.at("best_val_loss").get<double>();
    out.progress.epochs_since_best = meta.value("epochs_since_best", std::size_t{0});
    apply_parameters(data, *out.model);
    if (!meta.at("adam").is_null()) {
      const auto& a = meta.at("adam");
      AdamHyper h{a.at("learning_rate").get<double>(), a.at("beta1").get<double>(), a.at("beta2").get<double>(),
                  a.at("epsilon").get<double>()};
      AdamState s = make_adam_state(std::as_const(*out.model).parameters(), h);
      s.step = a.at("step").get<std::uint64_t>();
      const auto m = records_with_prefix(data, "adam.m/");
      const auto v = records_with_prefix(data, "adam.v/");
      const auto params = std::as_const(*out.model).parameters();
      for (std::size_t i = 0; i < params.size(); ++i) {
        s.first_moment[i] = matching(m, "adam.m/", params[i].name, *params[i].tensor);
        s.second_moment[i] = matching(v, "adam.v/", params[i].name, *params[i].tensor);
      }
      out.adam = std::move(s);
    }
  } catch (const nlohmann::json::exception& e) {
    throw checkpoint_error(path.string() + ": bad checkpoint metadata: " + e.what());
  }
  return out;
}

}  // namespace hmd
