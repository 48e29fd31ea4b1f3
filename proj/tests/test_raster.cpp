#include <doctest.h>

#include <cstdint>
#include <vector>

#include "greenview/errors.hpp"
#include "greenview/raster.hpp"

using namespace greenview;

namespace {

// 2x2 RGB PNG written by an independent encoder (PIL):
// (0,0)=red (1,0)=green (0,1)=blue (1,1)=(10,20,30)
const std::vector<uint8_t> kGoldenPng = {
    0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a, 0x00, 0x00, 0x00, 0x0d, 0x49, 0x48,
    0x44, 0x52, 0x00, 0x00, 0x00, 0x02, 0x00, 0x00, 0x00, 0x02, 0x08, 0x02, 0x00, 0x00,
    0x00, 0xfd, 0xd4, 0x9a, 0x73, 0x00, 0x00, 0x00, 0x16, 0x49, 0x44, 0x41, 0x54, 0x78,
    0x9c, 0x63, 0xf8, 0xcf, 0xc0, 0xc0, 0xf0, 0x9f, 0x81, 0x81, 0x81, 0xe1, 0x3f, 0x97,
    0x88, 0x1c, 0x00, 0x1a, 0x58, 0x03, 0x3a, 0x82, 0xe0, 0xab, 0x53, 0x00, 0x00, 0x00,
    0x00, 0x49, 0x45, 0x4e, 0x44, 0xae, 0x42, 0x60, 0x82};

}  // namespace

TEST_CASE("decode_png golden file gives exact pixels") {
    RgbImage img = decode_png(kGoldenPng);
    REQUIRE(img.width == 2);
    REQUIRE(img.height == 2);
    CHECK(img.r(0, 0) == 255);
    CHECK(img.g(0, 0) == 0);
    CHECK(img.b(0, 0) == 0);
    CHECK(img.g(1, 0) == 255);
    CHECK(img.b(0, 1) == 255);
    CHECK(img.r(1, 1) == 10);
    CHECK(img.g(1, 1) == 20);
    CHECK(img.b(1, 1) == 30);
}

TEST_CASE("png round trip is identity on pixel data") {
    RgbImage img(5, 3);
    uint8_t v = 0;
    for (auto& p : img.pixels) p = v += 37;
    RgbImage back = decode_png(encode_png(img));
    CHECK(back == img);
}

TEST_CASE("truncated png stream is a codec error") {
    std::vector<uint8_t> cut(kGoldenPng.begin(), kGoldenPng.begin() + 30);
    CHECK_THROWS_AS(decode_png(cut), CodecError);
    std::vector<uint8_t> garbage(64, 0xAB);
    CHECK_THROWS_AS(decode_png(garbage), CodecError);
}

TEST_CASE("mask encodes as 0/255 grayscale and ingests with >=128 threshold") {
    BinaryMask m(3, 2);
    m.set(0, 0, true);
    m.set(2, 1, true);
    BinaryMask back = decode_mask_png(encode_png(m));
    CHECK(back == m);

    // anti-aliased gray levels: 127 -> background, 128 -> vegetation
    RgbImage gray(2, 1);
    gray.set(0, 0, 127, 127, 127);
    gray.set(1, 0, 128, 128, 128);
    BinaryMask thr = decode_mask_png(encode_png(gray));
    CHECK_FALSE(thr.at(0, 0));
    CHECK(thr.at(1, 0));
}

TEST_CASE("rgb_to_luv hits the defined anchor points") {
    float L, u, v;
    srgb_to_luv(0, 0, 0, L, u, v);
    CHECK(L == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(u == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(v == doctest::Approx(0.0).epsilon(1e-9));

    srgb_to_luv(255, 255, 255, L, u, v);
    CHECK(L == doctest::Approx(100.0).epsilon(1e-6));
    CHECK(std::abs(u) < 0.01);
    CHECK(std::abs(v) < 0.01);

    // frozen from an independent scalar conversion script
    srgb_to_luv(119, 119, 119, L, u, v);
    CHECK(L == doctest::Approx(50.034438792538225).epsilon(1e-6));
    CHECK(std::abs(u) < 1e-4);
    CHECK(std::abs(v) < 1e-4);

    srgb_to_luv(40, 180, 60, L, u, v);
    CHECK(L == doctest::Approx(64.49773372352136).epsilon(1e-5));
    CHECK(u == doctest::Approx(-55.77442130981702).epsilon(1e-5));
    CHECK(v == doctest::Approx(66.98768554594868).epsilon(1e-5));
}

TEST_CASE("rgb_to_luv L* stays in [0,100] and conversion is per-pixel pure") {
    RgbImage img(16, 1);
    uint8_t v = 3;
    for (auto& p : img.pixels) p = v = static_cast<uint8_t>(v * 31 + 7);
    LuvImage luv = rgb_to_luv(img);
    for (int x = 0; x < img.width; ++x) {
        CHECK(luv.values[luv.idx(x, 0)] >= 0.0f);
        CHECK(luv.values[luv.idx(x, 0)] <= 100.0f);
    }

    // permuting pixels permutes outputs identically
    RgbImage perm(16, 1);
    for (int x = 0; x < 16; ++x) {
        size_t s = img.idx(15 - x, 0);
        perm.set(x, 0, img.pixels[s], img.pixels[s + 1], img.pixels[s + 2]);
    }
    LuvImage pluv = rgb_to_luv(perm);
    for (int x = 0; x < 16; ++x) {
        for (int c = 0; c < 3; ++c) {
            CHECK(pluv.values[pluv.idx(x, 0) + c] == luv.values[luv.idx(15 - x, 0) + c]);
        }
    }
}

TEST_CASE("resize_nearest identity, broadcast and downsample index map") {
    RgbImage img(4, 4);
    uint8_t v = 0;
    for (auto& p : img.pixels) p = v++;
    CHECK(resize_nearest(img, 4, 4) == img);

    RgbImage one(1, 1);
    one.set(0, 0, 9, 8, 7);
    RgbImage big = resize_nearest(one, 4, 4);
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) {
            CHECK(big.r(x, y) == 9);
            CHECK(big.b(x, y) == 7);
        }
    }

    // 4x4 checkerboard to 2x2: brute-force index map floor(i*src/dst) keeps
    // the top-left corner of each 2x2 block
    RgbImage checker(4, 4);
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) {
            uint8_t c = (x + y) % 2 ? 255 : 0;
            checker.set(x, y, c, c, c);
        }
    }
    RgbImage small = resize_nearest(checker, 2, 2);
    for (int y = 0; y < 2; ++y) {
        for (int x = 0; x < 2; ++x) {
            int sx = x * 4 / 2, sy = y * 4 / 2;  // brute-force map
            CHECK(small.r(x, y) == checker.r(sx, sy));
        }
    }

    CHECK_THROWS_AS(resize_nearest(img, 0, 4), ValidationError);
}
