#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "shadowstorm/image.hpp"

namespace shadowstorm {

/// Reads binary PGM (P5) or PPM (P6) with maxval 255. Intensities are byte / 255.
Image load_pnm(const std::filesystem::path& path);
Image decode_pnm(std::span<const std::uint8_t> bytes);

/// Writes P5 for single-channel images and P6 for RGB, quantizing with
/// round(v * 255) (ties away from zero).
void save_pnm(const Image& image, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_pnm(const Image& image);

/// Reads a P5 mask; a pixel is shadow iff its intensity exceeds `threshold`.
ShadowMask load_mask(const std::filesystem::path& path, double threshold = 0.5);
ShadowMask decode_mask(std::span<const std::uint8_t> bytes, double threshold = 0.5);

/// Writes a P5 mask with shadow pixels at 255.
void save_mask(const ShadowMask& mask, const std::filesystem::path& path);

std::uint8_t quantize(double v);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace shadowstorm
