#include "sifm/sicio.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <vector>

namespace sifm {

namespace {

static_assert(std::endian::native == std::endian::little,
              "SICG I/O assumes a little-endian host");
static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559,
              "SICG I/O assumes IEEE-754 binary32");

constexpr char kMagic[4] = {'S', 'I', 'C', 'G'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw FormatError("cannot open '" + path + "' for writing");
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  template <typename T>
  void pod(T v) {
    bytes(&v, sizeof(T));
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
  std::size_t offset() const { return off_; }
  std::size_t size() const { return data_.size(); }
  const std::string& path() const { return path_; }

 private:
  std::vector<char> data_;
  std::string path_;
  std::size_t off_ = 0;
};

}  // namespace

void save_grid_file(const SicSeries& series, const std::string& path) {
  series.validate();
  const std::int64_t t = series.num_days(), h = series.height(), w = series.width();
  if (t > std::numeric_limits<std::uint32_t>::max() || h > std::numeric_limits<std::uint32_t>::max() ||
      w > std::numeric_limits<std::uint32_t>::max()) {
    throw FormatError("series dimensions exceed the u32 header fields");
  }

  Writer out(path);
  out.bytes(kMagic, 4);
  out.pod<std::uint32_t>(kVersion);
  out.pod<std::uint32_t>(static_cast<std::uint32_t>(t));
  out.pod<std::uint32_t>(static_cast<std::uint32_t>(h));
  out.pod<std::uint32_t>(static_cast<std::uint32_t>(w));
  out.pod<std::uint8_t>(series.mask.empty() ? 0 : 1);
  if (!series.mask.empty()) out.bytes(series.mask.data(), series.mask.size());
  out.pod<std::int64_t>(series.t0);

  std::vector<float> row(static_cast<std::size_t>(h * w));
  for (const SicGrid& f : series.frames) {
    for (std::size_t i = 0; i < row.size(); ++i) row[i] = static_cast<float>(f.values[i]);
    out.bytes(row.data(), row.size() * sizeof(float));
  }
  out.close(path);
}

SicSeries load_grid_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(data), path);

  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError(path + ": bad magic at byte 0 (not a SICG file)");
  }
  const auto version = r.pod<std::uint32_t>("version");
  if (version != kVersion) {
    throw FormatError(path + ": unsupported version " + std::to_string(version) + " at byte 4");
  }
  const auto t = r.pod<std::uint32_t>("frame count");
  const auto h = r.pod<std::uint32_t>("height");
  const auto w = r.pod<std::uint32_t>("width");
  if (t == 0 || h == 0 || w == 0) {
    throw FormatError(path + ": zero dimension in header (T=" + std::to_string(t) + " H=" +
                      std::to_string(h) + " W=" + std::to_string(w) + ")");
  }
  const auto has_mask = r.pod<std::uint8_t>("mask flag");
  if (has_mask > 1) {
    throw FormatError(path + ": mask flag " + std::to_string(has_mask) + " at byte " +
                      std::to_string(r.offset() - 1) + " (want 0/1)");
  }

  SicSeries series;
  const std::size_t cells = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  if (has_mask) {
    series.mask.resize(cells);
    r.bytes(series.mask.data(), cells, "mask");
    for (std::size_t i = 0; i < cells; ++i) {
      if (series.mask[i] > 1) {
        throw FormatError(path + ": mask byte " + std::to_string(series.mask[i]) + " at byte " +
                          std::to_string(r.offset() - cells + i) + " (want 0/1)");
      }
    }
  }
  series.t0 = r.pod<std::int64_t>("t0");

  series.frames.reserve(t);
  std::vector<float> row(cells);
  for (std::uint32_t k = 0; k < t; ++k) {
    r.bytes(row.data(), cells * sizeof(float), "frame values");
    SicGrid g(static_cast<std::int64_t>(h), static_cast<std::int64_t>(w));
    for (std::size_t i = 0; i < cells; ++i) {
      const float v = row[i];
      if (!(v >= 0.0f && v <= 1.0f)) {
        throw FormatError(path + ": concentration " + std::to_string(v) + " outside [0,1] in frame " +
                          std::to_string(k));
      }
      g.values[i] = static_cast<double>(v);
    }
    series.frames.push_back(std::move(g));
  }
  if (r.offset() != r.size()) {
    throw FormatError(path + ": " + std::to_string(r.size() - r.offset()) +
                      " trailing bytes after frame data at byte " + std::to_string(r.offset()));
  }
  return series;
}

}  // namespace sifm
