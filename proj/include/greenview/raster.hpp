#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace greenview {

// 8-bit RGB raster, row-major, no padding.
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> pixels;  // width*height*3, r g b interleaved

    RgbImage() = default;
    RgbImage(int w, int h, uint8_t fill = 0);

    size_t idx(int x, int y) const { return (static_cast<size_t>(y) * width + x) * 3; }
    uint8_t r(int x, int y) const { return pixels[idx(x, y)]; }
    uint8_t g(int x, int y) const { return pixels[idx(x, y) + 1]; }
    uint8_t b(int x, int y) const { return pixels[idx(x, y) + 2]; }
    void set(int x, int y, uint8_t rr, uint8_t gg, uint8_t bb) {
        size_t i = idx(x, y);
        pixels[i] = rr;
        pixels[i + 1] = gg;
        pixels[i + 2] = bb;
    }
    size_t pixel_count() const { return static_cast<size_t>(width) * height; }
    bool operator==(const RgbImage&) const = default;
};

// Per-pixel CIE L*u*v* values (L* in [0,100]).
struct LuvImage {
    int width = 0;
    int height = 0;
    std::vector<float> values;  // width*height*3, L u v interleaved

    LuvImage() = default;
    LuvImage(int w, int h);

    size_t idx(int x, int y) const { return (static_cast<size_t>(y) * width + x) * 3; }
};

// Per-pixel vegetation flag. Encoded as 8-bit grayscale PNG, 255=vegetation.
struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> flags;  // width*height, 0 or 1

    BinaryMask() = default;
    BinaryMask(int w, int h, uint8_t fill = 0);

    size_t idx(int x, int y) const { return static_cast<size_t>(y) * width + x; }
    bool at(int x, int y) const { return flags[idx(x, y)] != 0; }
    void set(int x, int y, bool v) { flags[idx(x, y)] = v ? 1 : 0; }
    size_t pixel_count() const { return static_cast<size_t>(width) * height; }
    size_t vegetation_count() const;
    bool operator==(const BinaryMask&) const = default;
};

// PNG codec boundary. Accepts any 8-bit PNG (gray/palette/RGB/RGBA) on
// decode and normalizes to RGB; encodes images as 8-bit RGB and masks as
// 8-bit grayscale 0/255. Throws CodecError on corrupt streams.
RgbImage decode_png(const std::vector<uint8_t>& bytes);
std::vector<uint8_t> encode_png(const RgbImage& img);
std::vector<uint8_t> encode_png(const BinaryMask& mask);

// Mask ingest: grayscale value >= 128 counts as vegetation, tolerating
// anti-aliased hand labels. Color inputs use the red channel after RGB
// normalization; files written by encode_png are 0/255 so this is exact.
BinaryMask decode_mask_png(const std::vector<uint8_t>& bytes);

// File helpers (throw IoError on filesystem failure).
RgbImage read_png_file(const std::string& path);
BinaryMask read_mask_file(const std::string& path);
void write_png_file(const std::string& path, const RgbImage& img);
void write_png_file(const std::string& path, const BinaryMask& mask);
std::vector<uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<uint8_t>& bytes);

// sRGB -> CIE XYZ (D65) -> L*u*v*, per pixel.
LuvImage rgb_to_luv(const RgbImage& img);

// Scalar version used by the conversion path; exposed for reuse and tests.
void srgb_to_luv(uint8_t r, uint8_t g, uint8_t b, float& L, float& u, float& v);

// Nearest-neighbor resampling; source pixel = floor(dst_index * src / dst).
RgbImage resize_nearest(const RgbImage& img, int new_w, int new_h);
BinaryMask resize_nearest(const BinaryMask& mask, int new_w, int new_h);

}  // namespace greenview
