// SPDX-FileCopyrightText: 2026 The lsplit Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "lsplit/error.hpp"
#include "lsplit/image.hpp"
#include "lsplit/tensor.hpp"

using namespace lsplit;

namespace {

Image random_image(std::size_t w, std::size_t h, std::uint64_t seed) {
    Prng rng(PrngSeed{seed});
    Image img(w, h);
    for (auto& v : img.rgb) v = static_cast<std::uint8_t>(rng.uniform01() * 256);
    return img;
}

}  // namespace

TEST_CASE("PSNR reference points") {
    const Image a = random_image(16, 16, 1);
    CHECK(psnr(a, a) == 99.0);

    Image lo(16, 16, 10), hi(16, 16, 11);
    CHECK(psnr(lo, hi) == doctest::Approx(10.0 * std::log10(255.0 * 255.0)).epsilon(1e-12));
    CHECK(psnr(lo, hi) == doctest::Approx(48.13).epsilon(1e-4));

    Image black(8, 8, 0), white(8, 8, 255);
    CHECK(psnr(black, white) == doctest::Approx(0.0));
}

TEST_CASE("PSNR and SSIM reject mismatched sizes") {
    CHECK_THROWS_AS(psnr(Image(8, 8), Image(8, 9)), Error);
    CHECK_THROWS_AS(ssim(Image(8, 8), Image(9, 8)), Error);
    CHECK_THROWS_AS(ssim(Image(4, 4), Image(4, 4)), Error);
}

TEST_CASE("SSIM of an image with itself is one") {
    const Image a = random_image(32, 24, 2);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("SSIM of an image and its negative is low") {
    const Image a = random_image(32, 32, 3);
    Image neg = a;
    for (auto& v : neg.rgb) v = static_cast<std::uint8_t>(255 - v);
    CHECK(ssim(a, neg) < 0.5);
}

TEST_CASE("SSIM of two flat images reduces to the luminance term") {
    const Image a(16, 16, 100), b(16, 16, 120);
    const double c1 = (0.01 * 255) * (0.01 * 255);
    const double want = (2.0 * 100 * 120 + c1) / (100.0 * 100 + 120.0 * 120 + c1);
    CHECK(ssim(a, b) == doctest::Approx(want).epsilon(1e-9));
    CHECK(want == doctest::Approx(0.98361).epsilon(1e-5));
}

TEST_CASE("PSNR and SSIM are symmetric") {
    for (std::uint64_t s = 0; s < 10; ++s) {
        const Image a = random_image(16, 16, 10 + s), b = random_image(16, 16, 100 + s);
        CHECK(psnr(a, b) == psnr(b, a));
        CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));
    }
}

TEST_CASE("PSNR falls as noise grows") {
    const Image a = random_image(16, 16, 4);
    double prev = 100.0;
    for (int amp : {1, 4, 16, 64}) {
        Image b = a;
        Prng rng(PrngSeed{5});
        for (auto& v : b.rgb) v = static_cast<std::uint8_t>(std::clamp(int(v) + int(rng.uniform(-amp, amp)), 0, 255));
        const double p = psnr(a, b);
        CHECK(p < prev);
        prev = p;
    }
}

TEST_CASE("PPM round trip") {
    const Image a = random_image(5, 3, 6);
    const auto bytes = encode_ppm(a);
    const std::string head(bytes.begin(), bytes.begin() + 11);
    CHECK(head == "P6\n5 3\n255\n");
    CHECK(bytes.size() == 11 + 45);
    CHECK(decode_ppm(bytes) == a);
    const auto path = std::filesystem::temp_directory_path() / "lsplit_test_image.ppm";
    write_ppm(a, path);
    CHECK(read_ppm(path) == a);
    std::filesystem::remove(path);
}
