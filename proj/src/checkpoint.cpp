#include "icon/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "icon/error.hpp"

namespace icon {

namespace {

constexpr char kMagic[4] = {'I', 'C', 'O', 'N'};

class Writer {
 public:
  void magic() { bytes_.insert(bytes_.end(), kMagic, kMagic + 4); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(std::span<const double> values) {
    for (double d : values) {
      const auto v = std::bit_cast<std::uint64_t>(d);
      for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void magic() {
    need(4);
    if (std::memcmp(bytes_.data(), kMagic, 4) != 0) throw DataError("checkpoint: bad magic");
    pos_ = 4;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::vector<double> f64(std::size_t n) {
    if (n > (bytes_.size() - pos_) / 8) throw DataError("checkpoint: truncated");
    std::vector<double> out(n);
    for (auto& d : out) {
      std::uint64_t v = 0;
      for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
      d = std::bit_cast<double>(v);
      pos_ += 8;
    }
    return out;
  }
  void finish() const {
    if (pos_ != bytes_.size()) throw DataError("checkpoint: trailing bytes");
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw DataError("checkpoint: truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void expect_version(std::uint32_t got, std::uint32_t want) {
  if (got != want) {
    throw DataError("checkpoint: version " + std::to_string(got) + ", expected " + std::to_string(want));
  }
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

std::vector<std::uint8_t> encode_head(const LinearHead& head) {
  Writer w;
  w.magic();
  w.u32(kLinearHeadVersion);
  w.u32(static_cast<std::uint32_t>(head.n_in()));
  w.u32(static_cast<std::uint32_t>(head.n_out()));
  w.f64(head.weights());
  w.f64(head.biases());
  w.f64(head.alpha());
  return w.take();
}

LinearHead decode_linear_head(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.magic();
  expect_version(r.u32(), kLinearHeadVersion);
  const std::size_t n_in = r.u32();
  const std::size_t n_out = r.u32();
  auto weights = r.f64(n_in * n_out);
  auto biases = r.f64(n_out);
  auto alpha = r.f64(n_out);
  r.finish();
  return LinearHead(n_in, n_out, std::move(weights), std::move(biases), std::move(alpha));
}

std::vector<std::uint8_t> encode_head(const AttrHead& head) {
  Writer w;
  w.magic();
  w.u32(kAttrHeadVersion);
  w.u32(static_cast<std::uint32_t>(head.n_in()));
  w.u32(static_cast<std::uint32_t>(head.n_out()));
  w.u32(static_cast<std::uint32_t>(head.n_hidden()));
  w.f64(head.parameters());
  const std::vector<double> alpha(head.n_out(), 1.0);
  w.f64(alpha);
  return w.take();
}

AttrHead decode_attr_head(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.magic();
  expect_version(r.u32(), kAttrHeadVersion);
  const std::size_t n_in = r.u32();
  const std::size_t n_out = r.u32();
  const std::size_t n_hidden = r.u32();
  auto params = r.f64(n_hidden * (n_in + 1) + n_out * (n_hidden + 1));
  r.f64(n_out);  // alpha, always 1 for attribute heads
  r.finish();
  return AttrHead(n_in, n_hidden, n_out, std::move(params));
}

void save_head(const std::filesystem::path& path, const LinearHead& head) { write_file(path, encode_head(head)); }
void save_head(const std::filesystem::path& path, const AttrHead& head) { write_file(path, encode_head(head)); }

LinearHead load_linear_head(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_linear_head(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

AttrHead load_attr_head(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_attr_head(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace icon
