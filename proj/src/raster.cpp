#include "greenview/raster.hpp"

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "greenview/errors.hpp"

namespace greenview {

RgbImage::RgbImage(int w, int h, uint8_t fill) : width(w), height(h) {
    if (w < 1 || h < 1) throw ValidationError("image dimensions must be >= 1");
    pixels.assign(static_cast<size_t>(w) * h * 3, fill);
}

LuvImage::LuvImage(int w, int h) : width(w), height(h) {
    if (w < 1 || h < 1) throw ValidationError("image dimensions must be >= 1");
    values.assign(static_cast<size_t>(w) * h * 3, 0.0f);
}

BinaryMask::BinaryMask(int w, int h, uint8_t fill) : width(w), height(h) {
    if (w < 1 || h < 1) throw ValidationError("mask dimensions must be >= 1");
    flags.assign(static_cast<size_t>(w) * h, fill);
}

size_t BinaryMask::vegetation_count() const {
    size_t n = 0;
    for (uint8_t f : flags) n += f != 0;
    return n;
}

namespace {

struct PngReadState {
    const std::vector<uint8_t>* bytes;
    size_t offset;
};

void png_read_fn(png_structp png, png_bytep out, png_size_t len) {
    auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
    if (st->offset + len > st->bytes->size()) {
        png_error(png, "unexpected end of PNG stream");
    }
    std::memcpy(out, st->bytes->data() + st->offset, len);
    st->offset += len;
}

void png_write_fn(png_structp png, png_bytep data, png_size_t len) {
    auto* out = static_cast<std::vector<uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + len);
}

void png_flush_fn(png_structp) {}

void png_error_fn(png_structp png, png_const_charp msg) {
    auto* err = static_cast<std::string*>(png_get_error_ptr(png));
    if (err && err->empty()) *err = msg;
    longjmp(png_jmpbuf(png), 1);
}

void png_warn_fn(png_structp, png_const_charp) {}

// Decode any 8/16-bit PNG into interleaved rows of a fixed channel count.
std::vector<uint8_t> decode_rows(const std::vector<uint8_t>& bytes, int channels,
                                 int& width, int& height) {
    std::string errmsg;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &errmsg,
                                             png_error_fn, png_warn_fn);
    if (!png) throw CodecError("libpng allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw CodecError("libpng allocation failed");
    }

    std::vector<uint8_t> data;
    std::vector<png_bytep> row_ptrs;
    PngReadState state{&bytes, 0};

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw CodecError("PNG decode failed: " + (errmsg.empty() ? "corrupt stream" : errmsg));
    }

    png_set_read_fn(png, &state, png_read_fn);
    png_read_info(png, info);

    width = static_cast<int>(png_get_image_width(png, info));
    height = static_cast<int>(png_get_image_height(png, info));

    // Normalize everything to 8-bit RGB or gray.
    png_set_strip_16(png);
    png_set_palette_to_rgb(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY &&
        png_get_bit_depth(png, info) < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
    }
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    size_t rowbytes = png_get_rowbytes(png, info);
    data.assign(rowbytes * height, 0);
    row_ptrs.resize(height);
    for (int y = 0; y < height; ++y) row_ptrs[y] = data.data() + rowbytes * y;
    png_read_image(png, row_ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    if (rowbytes != static_cast<size_t>(width) * channels) {
        throw CodecError("unexpected PNG row layout");
    }
    return data;
}

std::vector<uint8_t> encode_rows(const uint8_t* data, int width, int height,
                                 int channels) {
    std::string errmsg;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &errmsg,
                                              png_error_fn, png_warn_fn);
    if (!png) throw CodecError("libpng allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw CodecError("libpng allocation failed");
    }

    std::vector<uint8_t> out;
    std::vector<png_bytep> row_ptrs(height);

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw CodecError("PNG encode failed: " + (errmsg.empty() ? "internal error" : errmsg));
    }

    png_set_write_fn(png, &out, png_write_fn, png_flush_fn);
    png_set_IHDR(png, info, width, height, 8,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    size_t rowbytes = static_cast<size_t>(width) * channels;
    for (int y = 0; y < height; ++y) {
        row_ptrs[y] = const_cast<png_bytep>(data + rowbytes * y);
    }
    png_write_image(png, row_ptrs.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

}  // namespace

RgbImage decode_png(const std::vector<uint8_t>& bytes) {
    RgbImage img;
    img.pixels = decode_rows(bytes, 3, img.width, img.height);
    return img;
}

std::vector<uint8_t> encode_png(const RgbImage& img) {
    if (img.width < 1 || img.height < 1 ||
        img.pixels.size() != img.pixel_count() * 3) {
        throw ValidationError("inconsistent image buffer");
    }
    return encode_rows(img.pixels.data(), img.width, img.height, 3);
}

std::vector<uint8_t> encode_png(const BinaryMask& mask) {
    if (mask.width < 1 || mask.height < 1 ||
        mask.flags.size() != mask.pixel_count()) {
        throw ValidationError("inconsistent mask buffer");
    }
    std::vector<uint8_t> gray(mask.flags.size());
    for (size_t i = 0; i < gray.size(); ++i) gray[i] = mask.flags[i] ? 255 : 0;
    return encode_rows(gray.data(), mask.width, mask.height, 1);
}

BinaryMask decode_mask_png(const std::vector<uint8_t>& bytes) {
    RgbImage rgb = decode_png(bytes);
    BinaryMask mask(rgb.width, rgb.height);
    for (size_t i = 0; i < mask.flags.size(); ++i) {
        mask.flags[i] = rgb.pixels[i * 3] >= 128 ? 1 : 0;
    }
    return mask;
}

std::vector<uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    return bytes;
}

void write_file_bytes(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(p.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write file: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path);
}

RgbImage read_png_file(const std::string& path) {
    return decode_png(read_file_bytes(path));
}

BinaryMask read_mask_file(const std::string& path) {
    return decode_mask_png(read_file_bytes(path));
}

void write_png_file(const std::string& path, const RgbImage& img) {
    write_file_bytes(path, encode_png(img));
}

void write_png_file(const std::string& path, const BinaryMask& mask) {
    write_file_bytes(path, encode_png(mask));
}

namespace {

// sRGB D65 matrix and reference white derived from it so that gray axes map
// to u* = v* = 0 exactly.
constexpr double kM[3][3] = {
    {0.4124564, 0.3575761, 0.1804375},
    {0.2126729, 0.7151522, 0.0721750},
    {0.0193339, 0.1191920, 0.9503041},
};

double srgb_linearize(uint8_t c8) {
    double c = c8 / 255.0;
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

struct White {
    double Yn, un, vn;
    White() {
        double X = kM[0][0] + kM[0][1] + kM[0][2];
        double Y = kM[1][0] + kM[1][1] + kM[1][2];
        double Z = kM[2][0] + kM[2][1] + kM[2][2];
        double d = X + 15.0 * Y + 3.0 * Z;
        Yn = Y;
        un = 4.0 * X / d;
        vn = 9.0 * Y / d;
    }
};
const White kWhite;

}  // namespace

void srgb_to_luv(uint8_t r8, uint8_t g8, uint8_t b8, float& L, float& u, float& v) {
    double r = srgb_linearize(r8);
    double g = srgb_linearize(g8);
    double b = srgb_linearize(b8);
    double X = kM[0][0] * r + kM[0][1] * g + kM[0][2] * b;
    double Y = kM[1][0] * r + kM[1][1] * g + kM[1][2] * b;
    double Z = kM[2][0] * r + kM[2][1] * g + kM[2][2] * b;

    double t = Y / kWhite.Yn;
    constexpr double eps = 216.0 / 24389.0;   // (6/29)^3
    constexpr double kappa = 24389.0 / 27.0;  // (29/3)^3
    double Lstar = t > eps ? 116.0 * std::cbrt(t) - 16.0 : kappa * t;

    double d = X + 15.0 * Y + 3.0 * Z;
    double up, vp;
    if (d <= 0.0) {
        up = kWhite.un;  // black: chroma offset defined as zero
        vp = kWhite.vn;
    } else {
        up = 4.0 * X / d;
        vp = 9.0 * Y / d;
    }
    L = static_cast<float>(Lstar);
    u = static_cast<float>(13.0 * Lstar * (up - kWhite.un));
    v = static_cast<float>(13.0 * Lstar * (vp - kWhite.vn));
}

LuvImage rgb_to_luv(const RgbImage& img) {
    LuvImage out(img.width, img.height);
    const size_t n = img.pixel_count();
    for (size_t i = 0; i < n; ++i) {
        float L, u, v;
        srgb_to_luv(img.pixels[i * 3], img.pixels[i * 3 + 1], img.pixels[i * 3 + 2],
                    L, u, v);
        out.values[i * 3] = L;
        out.values[i * 3 + 1] = u;
        out.values[i * 3 + 2] = v;
    }
    return out;
}

namespace {

void check_resize_dims(int new_w, int new_h) {
    if (new_w < 1 || new_h < 1) {
        throw ValidationError("resize dimensions must be >= 1");
    }
}

}  // namespace

RgbImage resize_nearest(const RgbImage& img, int new_w, int new_h) {
    check_resize_dims(new_w, new_h);
    if (new_w == img.width && new_h == img.height) return img;
    RgbImage out(new_w, new_h);
    for (int y = 0; y < new_h; ++y) {
        int sy = static_cast<int>(static_cast<int64_t>(y) * img.height / new_h);
        for (int x = 0; x < new_w; ++x) {
            int sx = static_cast<int>(static_cast<int64_t>(x) * img.width / new_w);
            size_t si = img.idx(sx, sy);
            out.set(x, y, img.pixels[si], img.pixels[si + 1], img.pixels[si + 2]);
        }
    }
    return out;
}

BinaryMask resize_nearest(const BinaryMask& mask, int new_w, int new_h) {
    check_resize_dims(new_w, new_h);
    if (new_w == mask.width && new_h == mask.height) return mask;
    BinaryMask out(new_w, new_h);
    for (int y = 0; y < new_h; ++y) {
        int sy = static_cast<int>(static_cast<int64_t>(y) * mask.height / new_h);
        for (int x = 0; x < new_w; ++x) {
            int sx = static_cast<int>(static_cast<int64_t>(x) * mask.width / new_w);
            out.flags[out.idx(x, y)] = mask.flags[mask.idx(sx, sy)];
        }
    }
    return out;
}

}  // namespace greenview
