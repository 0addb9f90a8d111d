#include "sifm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <vector>

#include "sifm/errors.hpp"

namespace sifm {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");
static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559,
              "checkpoint I/O assumes IEEE-754 binary32");

constexpr char kMagic[4] = {'S', 'I', 'F', 'M'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw FormatError("cannot open '" + path + "' for writing");
  }
  void bytes(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }
  template <typename T>
  void pod(T v) {
    bytes(&v, sizeof(T));
  }
  void name(const std::string& s) {
    if (s.size() > std::numeric_limits<std::uint16_t>::max())
      throw ContractError("checkpoint: tensor name too long: " + s);
    pod<std::uint16_t>(static_cast<std::uint16_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void close(const std::string& path) {
    out_.flush();
    if (!out_) throw FormatError("write failed for '" + path + "'");
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  Reader(std::vector<char> data, std::string path)
      : data_(std::move(data)), path_(std::move(path)) {}

  void bytes(void* p, std::size_t n, const char* what) {
    if (off_ + n > data_.size()) {
      throw FormatError(path_ + ": truncated reading " + what + " at byte " +
                        std::to_string(off_) + " (file has " + std::to_string(data_.size()) +
                        " bytes)");
    }
    std::memcpy(p, data_.data() + off_, n);
    off_ += n;
  }
  template <typename T>
  T pod(const char* what) {
    T v;
    bytes(&v, sizeof(T), what);
    return v;
  }
  std::string name(const char* what) {
    const auto len = pod<std::uint16_t>(what);
    std::string s(len, '\0');
    bytes(s.data(), len, what);
    return s;
  }
  std::size_t offset() const { return off_; }
  std::size_t size() const { return data_.size(); }
  const std::string& path() const { return path_; }

 private:
  std::vector<char> data_;
  std::string path_;
  std::size_t off_ = 0;
};

void write_f32(Writer& out, std::span<const float> vals) {
  out.bytes(vals.data(), vals.size() * sizeof(float));
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& cfg, GranularityMode mode,
                     ModelParams<float>& params, const AdamState<float>* opt) {
  const std::string descriptor = serialize_model_descriptor(cfg, mode);

  std::vector<std::pair<std::string, Tensor<float>*>> manifest = params.named_tensors();
  std::uint64_t payload = 0;
  for (auto& [name, t] : manifest) {
    if (!t->defined()) throw ContractError("checkpoint: undefined tensor " + name);
    payload += static_cast<std::uint64_t>(t->size()) * sizeof(float);
  }

  Writer out(path);
  out.bytes(kMagic, 4);
  out.pod<std::uint32_t>(kVersion);
  out.pod<std::uint32_t>(static_cast<std::uint32_t>(descriptor.size()));
  out.bytes(descriptor.data(), descriptor.size());

  out.pod<std::uint32_t>(static_cast<std::uint32_t>(manifest.size()));
  std::uint64_t off = 0;
  for (auto& [name, t] : manifest) {
    out.name(name);
    out.pod<std::uint8_t>(static_cast<std::uint8_t>(t->rank()));
    for (int a = 0; a < t->rank(); ++a) out.pod<std::int64_t>(t->extent(a));
    out.pod<std::uint64_t>(off);
    off += static_cast<std::uint64_t>(t->size()) * sizeof(float);
  }

  out.pod<std::uint64_t>(payload);
  for (auto& [name, t] : manifest) write_f32(out, t->values());

  out.pod<std::uint8_t>(opt ? 1 : 0);
  if (opt) {
    opt->validate();
    out.pod<std::int64_t>(opt->step_count);
    out.pod<double>(opt->lr);
    out.pod<double>(opt->beta1);
    out.pod<double>(opt->beta2);
    out.pod<double>(opt->eps);
    out.pod<std::uint32_t>(2);
    out.name("adam.m");
    out.pod<std::uint64_t>(opt->m.size());
    out.name("adam.v");
    out.pod<std::uint64_t>(opt->v.size());
    write_f32(out, opt->m);
    write_f32(out, opt->v);
  }
  out.close(path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(data), path);

  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError(path + ": bad magic at byte 0 (not a SIFM checkpoint)");
  const auto version = r.pod<std::uint32_t>("version");
  if (version != kVersion)
    throw FormatError(path + ": unsupported version " + std::to_string(version) + " at byte 4");

  const auto cfg_len = r.pod<std::uint32_t>("descriptor length");
  std::string descriptor(cfg_len, '\0');
  r.bytes(descriptor.data(), cfg_len, "descriptor");

  Checkpoint ck;
  try {
    auto [cfg, mode] = parse_model_descriptor(descriptor);
    ck.config = cfg;
    ck.mode = mode;
    ck.config.validate();
  } catch (const ConfigError& e) {
    throw CheckpointError(path + ": embedded descriptor invalid: " + e.what());
  }
  ck.params = ModelParams<float>::shaped(ck.config);

  struct Entry {
    std::string name;
    Shape shape;
    std::uint64_t offset;
  };
  const auto count = r.pod<std::uint32_t>("tensor count");
  std::vector<Entry> entries;
  entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    e.name = r.name("tensor name");
    const auto rank = r.pod<std::uint8_t>("tensor rank");
    for (int a = 0; a < rank; ++a) e.shape.push_back(r.pod<std::int64_t>("tensor dim"));
    e.offset = r.pod<std::uint64_t>("tensor offset");
    entries.push_back(std::move(e));
  }

  const auto payload_len = r.pod<std::uint64_t>("payload length");
  const std::size_t payload_start = r.offset();
  if (payload_start + payload_len > r.size()) {
    throw FormatError(path + ": truncated payload at byte " + std::to_string(payload_start) +
                      " (" + std::to_string(payload_len) + " bytes declared)");
  }

  // Match the manifest against the descriptor-derived shapes 1:1, in order.
  auto expected = ck.params.named_tensors();
  if (entries.size() != expected.size()) {
    throw CheckpointError(path + ": manifest has " + std::to_string(entries.size()) +
                          " tensors, descriptor implies " + std::to_string(expected.size()));
  }
  std::uint64_t off = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const Entry& e = entries[i];
    auto& [name, t] = expected[i];
    if (e.name != name)
      throw CheckpointError(path + ": tensor " + std::to_string(i) + " is '" + e.name +
                            "', descriptor implies '" + name + "'");
    if (e.shape != t->shape())
      throw CheckpointError(path + ": tensor '" + e.name + "' has shape " + shape_str(e.shape) +
                            ", descriptor implies " + shape_str(t->shape()));
    if (e.offset != off)
      throw CheckpointError(path + ": tensor '" + e.name + "' at offset " +
                            std::to_string(e.offset) + ", expected " + std::to_string(off));
    const std::size_t bytes = static_cast<std::size_t>(t->size()) * sizeof(float);
    r.bytes(t->values_mut().data(), bytes, "tensor payload");
    off += bytes;
  }
  if (off != payload_len) {
    throw CheckpointError(path + ": payload length " + std::to_string(payload_len) +
                          " does not match manifest total " + std::to_string(off));
  }
  ck.params.set_requires_grad(true);

  const auto has_opt = r.pod<std::uint8_t>("optimizer flag");
  if (has_opt > 1)
    throw FormatError(path + ": optimizer flag " + std::to_string(has_opt) + " (want 0/1)");
  if (has_opt) {
    AdamState<float> opt;
    opt.step_count = r.pod<std::int64_t>("optimizer step count");
    opt.lr = r.pod<double>("optimizer lr");
    opt.beta1 = r.pod<double>("optimizer beta1");
    opt.beta2 = r.pod<double>("optimizer beta2");
    opt.eps = r.pod<double>("optimizer eps");
    const auto arrays = r.pod<std::uint32_t>("optimizer array count");
    if (arrays != 2)
      throw FormatError(path + ": optimizer manifest has " + std::to_string(arrays) +
                        " arrays (want 2)");
    struct OptEntry {
      std::string name;
      std::uint64_t count;
    };
    OptEntry m{r.name("optimizer array name"), r.pod<std::uint64_t>("optimizer array size")};
    OptEntry v{r.name("optimizer array name"), r.pod<std::uint64_t>("optimizer array size")};
    if (m.name != "adam.m" || v.name != "adam.v" || m.count != v.count)
      throw CheckpointError(path + ": unexpected optimizer manifest (" + m.name + "," + v.name +
                            ")");
    opt.m.resize(m.count);
    opt.v.resize(v.count);
    r.bytes(opt.m.data(), m.count * sizeof(float), "optimizer first moment");
    r.bytes(opt.v.data(), v.count * sizeof(float), "optimizer second moment");
    opt.validate();
    ck.opt = std::move(opt);
  }
  if (r.offset() != r.size()) {
    throw FormatError(path + ": " + std::to_string(r.size() - r.offset()) +
                      " trailing bytes at byte " + std::to_string(r.offset()));
  }
  return ck;
}

}  // namespace sifm
