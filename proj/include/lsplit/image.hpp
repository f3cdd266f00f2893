// SPDX-FileCopyrightText: 2026 The lsplit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace lsplit {

/// 8-bit RGB image, row-major, channels interleaved.
struct Image {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> rgb;

    Image() = default;
    Image(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), rgb(w * h * 3, fill) {}

    std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) { return rgb[(y * width + x) * 3 + c]; }
    std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const { return rgb[(y * width + x) * 3 + c]; }

    bool operator==(const Image&) const = default;
};

/// Binary PPM (P6, maxval 255).
std::vector<std::uint8_t> encode_ppm(const Image& img);
Image decode_ppm(std::span<const std::uint8_t> bytes);
void write_ppm(const Image& img, const std::filesystem::path& path);
Image read_ppm(const std::filesystem::path& path);

inline constexpr double kPsnrCapDb = 99.0;

/// 10 log10(255^2 / MSE) over all pixels and channels; identical images give 99 dB.
double psnr(const Image& a, const Image& b);

/// Mean SSIM over non-overlapping 8x8 windows of BT.601 luma,
/// C1 = (0.01 * 255)^2, C2 = (0.03 * 255)^2.
double ssim(const Image& a, const Image& b);

}  // namespace lsplit
