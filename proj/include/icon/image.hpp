#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace icon {

inline constexpr int kCanvasSize = 1024;

/// 8-bit grayscale image, row-major.
struct ImageGray {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(int x, int y) const {
    return pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                  static_cast<std::size_t>(x)];
  }
  bool operator==(const ImageGray&) const = default;
};

/// Square canvas holding an image placed top-left, zero padded. `scale` maps
/// source coordinates to canvas coordinates (canvas = source * scale).
struct Canvas {
  int size = kCanvasSize;
  std::vector<std::uint8_t> pixels;
  double scale = 1.0;
  int offset_x = 0;
  int offset_y = 0;

  std::uint8_t at(int x, int y) const {
    return pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(size) +
                  static_cast<std::size_t>(x)];
  }
};

/// Decodes a binary PGM (P5, maxval 255). Throws DataError.
ImageGray decode_pgm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_pgm(const ImageGray& image);

ImageGray load_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const ImageGray& image);

/// Downscales (nearest neighbor) when the longer side exceeds `canvas_size`,
/// then pads right/bottom with zeros.
Canvas normalize(const ImageGray& image, int canvas_size = kCanvasSize);

/// Resolves corpus image paths against a root directory and normalizes them.
class ImageStore {
 public:
  explicit ImageStore(std::filesystem::path root, int canvas_size = kCanvasSize)
      : root_(std::move(root)), canvas_size_(canvas_size) {}

  Canvas canvas(const std::string& relative_path) const {
    return normalize(load_image(root_ / relative_path), canvas_size_);
  }
  int canvas_size() const { return canvas_size_; }
  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
  int canvas_size_;
};

}  // namespace icon
