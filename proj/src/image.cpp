// SPDX-FileCopyrightText: 2026 The lsplit Authors
// SPDX-License-Identifier: Apache-2.0

#include "lsplit/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "lsplit/error.hpp"

namespace lsplit {

std::vector<std::uint8_t> encode_ppm(const Image& img) {
    const std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), img.rgb.begin(), img.rgb.end());
    return out;
}

namespace {

std::size_t read_header_int(std::span<const std::uint8_t> in, std::size_t& pos) {
    while (pos < in.size()) {
        if (in[pos] == '#') {
            while (pos < in.size() && in[pos] != '\n') ++pos;
        } else if (std::isspace(in[pos])) {
            ++pos;
        } else {
            break;
        }
    }
    std::size_t v = 0;
    std::size_t digits = 0;
    while (pos < in.size() && std::isdigit(in[pos])) {
        v = v * 10 + (in[pos++] - '0');
        if (++digits > 9) throw Error(Errc::parameter, "PPM header value too large");
    }
    if (digits == 0) throw Error(Errc::parameter, "malformed PPM header");
    return v;
}

}  // namespace

Image decode_ppm(std::span<const std::uint8_t> in) {
    if (in.size() < 2 || in[0] != 'P' || in[1] != '6') throw Error(Errc::parameter, "not a P6 PPM");
    std::size_t pos = 2;
    const auto w = read_header_int(in, pos);
    const auto h = read_header_int(in, pos);
    const auto maxval = read_header_int(in, pos);
    if (maxval != 255) throw Error(Errc::parameter, "only 8-bit PPM is supported");
    if (pos >= in.size() || !std::isspace(in[pos])) throw Error(Errc::parameter, "malformed PPM header");
    ++pos;
    Image img(w, h);
    if (in.size() - pos != img.rgb.size()) throw Error(Errc::parameter, "PPM pixel data has the wrong size");
    std::copy(in.begin() + pos, in.end(), img.rgb.begin());
    return img;
}

void write_ppm(const Image& img, const std::filesystem::path& path) {
    const auto bytes = encode_ppm(img);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::parameter, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Image read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::parameter, "cannot read " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_ppm(bytes);
}

namespace {

void require_same_size(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height) {
        throw Error(Errc::dimension, "images differ in size: " + std::to_string(a.width) + "x" + std::to_string(a.height) +
                                         " vs " + std::to_string(b.width) + "x" + std::to_string(b.height));
    }
}

std::vector<double> luma(const Image& img) {
    std::vector<double> y(img.width * img.height);
    for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] = 0.299 * img.rgb[3 * i] + 0.587 * img.rgb[3 * i + 1] + 0.114 * img.rgb[3 * i + 2];
    }
    return y;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
    require_same_size(a, b);
    if (a.rgb.empty()) throw Error(Errc::dimension, "empty image");
    double sq = 0.0;
    for (std::size_t i = 0; i < a.rgb.size(); ++i) {
        const double d = static_cast<double>(a.rgb[i]) - b.rgb[i];
        sq += d * d;
    }
    if (sq == 0.0) return kPsnrCapDb;
    const double mse = sq / static_cast<double>(a.rgb.size());
    return std::min(kPsnrCapDb, 10.0 * std::log10(255.0 * 255.0 / mse));
}

double ssim(const Image& a, const Image& b) {
    require_same_size(a, b);
    constexpr std::size_t win = 8;
    if (a.width < win || a.height < win) throw Error(Errc::dimension, "SSIM needs images of at least 8x8");
    constexpr double c1 = (0.01 * 255) * (0.01 * 255);
    constexpr double c2 = (0.03 * 255) * (0.03 * 255);
    const auto ya = luma(a);
    const auto yb = luma(b);
    const double n = win * win;

    double total = 0.0;
    std::size_t windows = 0;
    for (std::size_t wy = 0; wy + win <= a.height; wy += win) {
        for (std::size_t wx = 0; wx + win <= a.width; wx += win) {
            double ma = 0, mb = 0;
            for (std::size_t y = wy; y < wy + win; ++y) {
                for (std::size_t x = wx; x < wx + win; ++x) {
                    ma += ya[y * a.width + x];
                    mb += yb[y * a.width + x];
                }
            }
            ma /= n;
            mb /= n;
            double va = 0, vb = 0, cov = 0;
            for (std::size_t y = wy; y < wy + win; ++y) {
                for (std::size_t x = wx; x < wx + win; ++x) {
                    const double da = ya[y * a.width + x] - ma;
                    const double db = yb[y * a.width + x] - mb;
                    va += da * da;
                    vb += db * db;
                    cov += da * db;
                }
            }
            va /= n;
            vb /= n;
            cov /= n;
            total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++windows;
        }
    }
    return total / static_cast<double>(windows);
}

}  // namespace lsplit
