#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "icon/inspect.hpp"
#include "icon/lesion.hpp"

namespace icon {

// Flat little-endian layout: "ICON", u32 version, u32 n_in, u32 n_out, then
// f64 blocks. Version 1 (linear): weights row-major, biases, alpha.
// Version 2 (two-layer): u32 n_hidden, then w1, b1, w2, b2, alpha.
inline constexpr std::uint32_t kLinearHeadVersion = 1;
inline constexpr std::uint32_t kAttrHeadVersion = 2;

std::vector<std::uint8_t> encode_head(const LinearHead& head);
LinearHead decode_linear_head(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_head(const AttrHead& head);
AttrHead decode_attr_head(std::span<const std::uint8_t> bytes);

void save_head(const std::filesystem::path& path, const LinearHead& head);
void save_head(const std::filesystem::path& path, const AttrHead& head);
LinearHead load_linear_head(const std::filesystem::path& path);
AttrHead load_attr_head(const std::filesystem::path& path);

}  // namespace icon
