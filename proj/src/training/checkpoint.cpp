#include "agan/training.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace agan {

// Layout (all integers little-endian):
//   magic[8] "AGANCKPT", u32 version, u32 record count, records..., u64 FNV-1a of everything before it
// Record: u8 kind, u32 name length, name bytes, payload
//   kind 1 text:   u64 length, bytes
//   kind 2 tensor: u32 rank, u64 dims[rank], f32 values
//   kind 3 u64:    u64 value

namespace {

enum : std::uint8_t { kText = 1, kTensor = 2, kU64 = 3 };

std::uint64_t fnv1a(const char* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void bytes(std::string_view s) { out_.append(s); }
  void name(std::string_view n) {
    u32(static_cast<std::uint32_t>(n.size()));
    bytes(n);
  }

  void text(std::string_view n, std::string_view value) {
    u8(kText);
    name(n);
    u64(value.size());
    bytes(value);
    ++records_;
  }
  void number(std::string_view n, std::uint64_t value) {
    u8(kU64);
    name(n);
    u64(value);
    ++records_;
  }
  void tensor(std::string_view n, const Shape& shape, const Buffer<float>& values) {
    u8(kTensor);
    name(n);
    u32(static_cast<std::uint32_t>(shape.size()));
    for (Index d : shape) u64(static_cast<std::uint64_t>(d));
    for (Index i = 0; i < values.size(); ++i) u32(std::bit_cast<std::uint32_t>(values[i]));
    ++records_;
  }

  std::string finish() const {
    Writer head;
    head.bytes(std::string_view(kCheckpointMagic, sizeof kCheckpointMagic));
    head.u32(kCheckpointVersion);
    head.u32(records_);
    std::string body = head.out_ + out_;
    Writer tail;
    tail.u64(fnv1a(body.data(), body.size()));
    return body + tail.out_;
  }

 private:
  std::string out_;
  std::uint32_t records_ = 0;
};

struct Record {
  std::uint8_t kind = 0;
  std::string text;
  std::uint64_t number = 0;
  Shape shape;
  Buffer<float> values;
};

class Reader {
 public:
  Reader(const std::string& data, std::string path) : data_(data), path_(std::move(path)) {}

  [[noreturn]] void fail(const std::string& why) const { throw TrainingError(path_ + ": " + why); }

  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) fail("truncated checkpoint");
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  std::string bytes(std::uint64_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  const std::string& data_;
  std::string path_;
  std::size_t pos_ = 0;
};

std::string pool_key(const char* pool, std::size_t i) { return std::string("pool/") + pool + "/" + std::to_string(i); }

}  // namespace

void save_checkpoint(const fs::path& path, const TrainConfig& config, const TrainingState& state) {
  Writer w;
  w.text("config", format_key_values(config.to_key_values()));
  w.number("epoch", static_cast<std::uint64_t>(state.epoch));
  w.number("iteration", static_cast<std::uint64_t>(state.iteration));
  for (const auto& [net, params] : state.bundle.named()) {
    for (const auto& [name, t] : params->entries()) w.tensor("param/" + net + "/" + name, t.shape(), t.data());
    const auto& adam = state.adam.at(net);
    w.number("adam/" + net + "/step", static_cast<std::uint64_t>(adam.step));
    const auto& entries = params->entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      w.tensor("adam/" + net + "/m/" + entries[i].first, entries[i].second.shape(), adam.m[i]);
      w.tensor("adam/" + net + "/v/" + entries[i].first, entries[i].second.shape(), adam.v[i]);
    }
  }
  for (const auto& [label, pool] : {std::pair{"x", &state.pool_x}, std::pair{"y", &state.pool_y}}) {
    w.number(std::string("pool/") + label + "/size", pool->size());
    for (std::size_t i = 0; i < pool->size(); ++i) {
      const auto& t = pool->stored()[i];
      w.tensor(pool_key(label, i), t.shape(), t.data());
    }
    w.text(std::string("pool/") + label + "/prng", pool->prng().save());
  }

  const std::string bytes = w.finish();
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  const fs::path tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw TrainingError(tmp.string() + ": cannot open for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw TrainingError(tmp.string() + ": write failed");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw TrainingError(path.string() + ": cannot move checkpoint into place: " + ec.message());
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TrainingError(path.string() + ": cannot open checkpoint");
  const std::string data{std::istreambuf_iterator<char>(in), {}};
  Reader r(data, path.string());

  if (data.size() < sizeof kCheckpointMagic || std::memcmp(data.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
    r.fail("not a checkpoint (bad magic)");
  }
  r.bytes(sizeof kCheckpointMagic);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    r.fail("unsupported checkpoint version " + std::to_string(version) + " (expected " +
           std::to_string(kCheckpointVersion) + ")");
  }
  if (data.size() < 8 + 4 + 4 + 8) r.fail("truncated checkpoint");
  const std::size_t body = data.size() - 8;
  {
    Reader tail(data, path.string());
    tail.bytes(body);
    if (tail.u64() != fnv1a(data.data(), body)) r.fail("checksum mismatch (file is corrupt or truncated)");
  }

  const std::uint32_t count = r.u32();
  std::map<std::string, Record> records;
  for (std::uint32_t i = 0; i < count; ++i) {
    Record rec;
    rec.kind = r.u8();
    const std::string name = r.bytes(r.u32());
    switch (rec.kind) {
      case kText:
        rec.text = r.bytes(r.u64());
        break;
      case kU64:
        rec.number = r.u64();
        break;
      case kTensor: {
        const std::uint32_t rank = r.u32();
        if (rank == 0 || rank > 8) r.fail("record " + name + ": bad rank");
        std::uint64_t n = 1;
        for (std::uint32_t k = 0; k < rank; ++k) {
          const std::uint64_t d = r.u64();
          if (d == 0 || d > (1ULL << 32)) r.fail("record " + name + ": bad dimension");
          rec.shape.push_back(static_cast<Index>(d));
          n *= d;
        }
        r.need(n * 4);
        rec.values.resize(static_cast<Index>(n));
        for (std::uint64_t k = 0; k < n; ++k) rec.values[static_cast<Index>(k)] = std::bit_cast<float>(r.u32());
        break;
      }
      default:
        r.fail("record " + name + ": unknown kind " + std::to_string(rec.kind));
    }
    if (!records.emplace(name, std::move(rec)).second) r.fail("duplicate record " + name);
  }
  if (r.pos() != body) r.fail("trailing bytes after the last record");

  auto take = [&](const std::string& name, std::uint8_t kind) -> Record& {
    const auto it = records.find(name);
    if (it == records.end()) r.fail("missing record " + name);
    if (it->second.kind != kind) r.fail("record " + name + " has the wrong kind");
    return it->second;
  };

  Checkpoint ck;
  try {
    ck.config.apply(parse_key_values(take("config", kText).text, path.string() + "#config"));
    ck.config.validate();
  } catch (const ConfigError& e) {
    r.fail(std::string("stored configuration is invalid: ") + e.what());
  }
  const TrainConfig& cfg = ck.config;
  TrainingState& s = ck.state;
  s.epoch = static_cast<int>(take("epoch", kU64).number);
  s.iteration = static_cast<std::int64_t>(take("iteration", kU64).number);
  if (s.epoch > cfg.total_epochs()) r.fail("epoch beyond the stored schedule");

  const auto fill = [&](const std::string& net, NetworkParams<float>& target, NetworkKind kind, Index in_channels) {
    const Architecture arch{kind, cfg.width_base, in_channels, cfg.image_size};
    NetworkParams<float> params(arch);
    AdamState<float> adam;
    adam.step = static_cast<std::int64_t>(take("adam/" + net + "/step", kU64).number);
    for (const auto& spec : describe(arch)) {
      auto load = [&](const std::string& name) -> Buffer<float> {
        Record& rec = take(name, kTensor);
        if (rec.shape != spec.shape) {
          r.fail("record " + name + " has shape " + shape_string(rec.shape) + ", architecture expects " +
                 shape_string(spec.shape));
        }
        return std::move(rec.values);
      };
      params.add(spec.name, Tensor<float>::from_buffer(spec.shape, load("param/" + net + "/" + spec.name)));
      adam.m.push_back(load("adam/" + net + "/m/" + spec.name));
      adam.v.push_back(load("adam/" + net + "/v/" + spec.name));
    }
    params.validate();
    target = std::move(params);
    s.adam[net] = std::move(adam);
  };
  fill("a_x", s.bundle.a_x, NetworkKind::attention, 3);
  fill("a_y", s.bundle.a_y, NetworkKind::attention, 3);
  fill("t_x", s.bundle.t_x, NetworkKind::transform, 3);
  fill("t_y", s.bundle.t_y, NetworkKind::transform, 3);
  fill("d_x", s.bundle.d_x, NetworkKind::discriminator, 3);
  fill("d_y", s.bundle.d_y, NetworkKind::discriminator, 3);

  for (const auto& [label, pool] : {std::pair{"x", &s.pool_x}, std::pair{"y", &s.pool_y}}) {
    const std::uint64_t size = take(std::string("pool/") + label + "/size", kU64).number;
    if (size > static_cast<std::uint64_t>(cfg.buffer_capacity)) r.fail(std::string("pool ") + label + " exceeds capacity");
    std::vector<Tensor<float>> stored;
    for (std::size_t i = 0; i < size; ++i) {
      Record& rec = take(pool_key(label, i), kTensor);
      stored.push_back(Tensor<float>::from_buffer(rec.shape, std::move(rec.values)));
    }
    *pool = ReplayBuffer(cfg.buffer_capacity, 0);
    try {
      pool->restore(std::move(stored), take(std::string("pool/") + label + "/prng", kText).text);
    } catch (const std::exception& e) {
      r.fail(std::string("pool ") + label + ": " + e.what());
    }
  }
  return ck;
}

}  // namespace agan
