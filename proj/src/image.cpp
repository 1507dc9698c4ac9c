#include "icon/image.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>

#include "icon/error.hpp"

namespace icon {

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const auto c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(c)) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  long read_int(const char* what) {
    skip_space_and_comments();
    long value = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1'000'000) throw DataError(std::string("PGM ") + what + " too large");
      ++pos_;
      ++digits;
    }
    if (digits == 0) throw DataError(std::string("PGM header: missing ") + what);
    return value;
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

ImageGray decode_pgm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw DataError("not a binary PGM (expected magic P5)");
  }
  HeaderReader reader(bytes);
  reader.advance(2);
  const long width = reader.read_int("width");
  const long height = reader.read_int("height");
  const long maxval = reader.read_int("maxval");
  if (width < 1 || height < 1) throw DataError("PGM dimensions must be positive");
  if (maxval != 255) throw DataError("PGM maxval must be 255, got " + std::to_string(maxval));
  // Exactly one whitespace byte separates the header from the raster.
  if (reader.pos() >= bytes.size() || !std::isspace(bytes[reader.pos()])) {
    throw DataError("PGM header not terminated by whitespace");
  }
  reader.advance(1);

  const auto expected = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (bytes.size() - reader.pos() < expected) {
    throw DataError("PGM payload truncated: expected " + std::to_string(expected) + " bytes, got " +
                    std::to_string(bytes.size() - reader.pos()));
  }
  ImageGray image;
  image.width = static_cast<int>(width);
  image.height = static_cast<int>(height);
  const auto first = bytes.begin() + static_cast<std::ptrdiff_t>(reader.pos());
  image.pixels.assign(first, first + static_cast<std::ptrdiff_t>(expected));
  return image;
}

std::vector<std::uint8_t> encode_pgm(const ImageGray& image) {
  const std::string header =
      "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

ImageGray load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_pgm(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_image(const std::filesystem::path& path, const ImageGray& image) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write image: " + path.string());
  const auto bytes = encode_pgm(image);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Canvas normalize(const ImageGray& image, int canvas_size) {
  if (image.width < 1 || image.height < 1) throw DataError("cannot normalize an empty image");
  Canvas canvas;
  canvas.size = canvas_size;
  canvas.pixels.assign(static_cast<std::size_t>(canvas_size) * static_cast<std::size_t>(canvas_size), 0);

  const int longest = std::max(image.width, image.height);
  if (longest <= canvas_size) {
    canvas.scale = 1.0;
    for (int y = 0; y < image.height; ++y) {
      const auto* src = image.pixels.data() + static_cast<std::size_t>(y) * image.width;
      std::copy(src, src + image.width,
                canvas.pixels.begin() + static_cast<std::ptrdiff_t>(y) * canvas_size);
    }
    return canvas;
  }

  // Integer arithmetic keeps the sampling grid exact: the longer side maps to
  // exactly canvas_size cells and dst -> src is floor(dst * longest / canvas_size).
  canvas.scale = static_cast<double>(canvas_size) / static_cast<double>(longest);
  const int dst_w = std::max(1, static_cast<int>(static_cast<long long>(image.width) * canvas_size / longest));
  const int dst_h = std::max(1, static_cast<int>(static_cast<long long>(image.height) * canvas_size / longest));
  for (int y = 0; y < dst_h; ++y) {
    const auto sy = static_cast<int>(static_cast<long long>(y) * longest / canvas_size);
    for (int x = 0; x < dst_w; ++x) {
      const auto sx = static_cast<int>(static_cast<long long>(x) * longest / canvas_size);
      canvas.pixels[static_cast<std::size_t>(y) * canvas_size + x] = image.at(sx, sy);
    }
  }
  return canvas;
}

}  // namespace icon
