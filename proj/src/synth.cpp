#include "greenview/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "greenview/errors.hpp"
#include "greenview/meanshift.hpp"

namespace fs = std::filesystem;

namespace greenview {

namespace {

uint8_t clamp8(double v) {
    return static_cast<uint8_t>(std::clamp(v, 0.0, 255.0));
}

struct Shape {
    bool ellipse = false;
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // bounding box, inclusive
    double base_r = 0, base_g = 0, base_b = 0;

    bool contains(int x, int y) const {
        if (x < x0 || x > x1 || y < y0 || y > y1) return false;
        if (!ellipse) return true;
        double cx = 0.5 * (x0 + x1), cy = 0.5 * (y0 + y1);
        double rx = 0.5 * (x1 - x0) + 0.5, ry = 0.5 * (y1 - y0) + 0.5;
        double dx = (x - cx) / rx, dy = (y - cy) / ry;
        return dx * dx + dy * dy <= 1.0;
    }
};

Shape random_shape(Rng& rng, int W, int H) {
    Shape s;
    s.ellipse = rng.uniform() < 0.4;
    int w = static_cast<int>(rng.uniform_int(16, std::min(56, W - 2)));
    int h = static_cast<int>(rng.uniform_int(16, std::min(56, H - 2)));
    s.x0 = static_cast<int>(rng.uniform_int(0, W - w - 1));
    s.y0 = static_cast<int>(rng.uniform_int(0, H - h - 1));
    s.x1 = s.x0 + w - 1;
    s.y1 = s.y0 + h - 1;
    return s;
}

void paint_shape(RgbImage& img, Rng& rng, const Shape& s, double noise,
                 BinaryMask* mask) {
    for (int y = s.y0; y <= s.y1; ++y) {
        for (int x = s.x0; x <= s.x1; ++x) {
            if (!s.contains(x, y)) continue;
            img.set(x, y, clamp8(s.base_r + rng.uniform(-noise, noise)),
                    clamp8(s.base_g + rng.uniform(-noise, noise)),
                    clamp8(s.base_b + rng.uniform(-noise, noise)));
            if (mask) mask->set(x, y, true);
        }
    }
}

}  // namespace

SynthSample generate_synth_image(Rng& rng, const SynthOptions& opt) {
    if (opt.width < 32 || opt.height < 32) {
        throw ValidationError("synthetic images must be at least 32x32");
    }
    if (opt.min_shapes < 0 || opt.max_shapes < opt.min_shapes) {
        throw ValidationError("bad shape count range");
    }
    const int W = opt.width, H = opt.height;

    SynthSample out;
    out.image = RgbImage(W, H);
    out.mask = BinaryMask(W, H);

    // background: sky band over an asphalt/earth body, both non-green
    int theme = static_cast<int>(rng.uniform_int(0, 2));
    double sky_r = 130 + rng.uniform(-20, 20);
    double sky_g = sky_r + rng.uniform(10, 25);
    double sky_b = sky_g + rng.uniform(40, 70);
    double body_v = theme == 2 ? 120 + rng.uniform(-20, 20) : 110 + rng.uniform(-30, 40);
    double body_r = theme == 2 ? body_v + 25 : body_v;            // brown vs gray
    double body_g = theme == 2 ? body_v - 5 : body_v;
    double body_b = theme == 2 ? body_v - 30 : body_v;
    int horizon = static_cast<int>(rng.uniform_int(H / 4, H / 2));
    double bg_noise = 8.0;

    for (int y = 0; y < H; ++y) {
        bool sky = y < horizon;
        double shade = 1.0 - 0.15 * (static_cast<double>(y) / H);  // mild vertical falloff
        for (int x = 0; x < W; ++x) {
            double r = (sky ? sky_r : body_r) * shade + rng.uniform(-bg_noise, bg_noise);
            double g = (sky ? sky_g : body_g) * shade + rng.uniform(-bg_noise, bg_noise);
            double b = (sky ? sky_b : body_b) * shade + rng.uniform(-bg_noise, bg_noise);
            out.image.set(x, y, clamp8(r), clamp8(g), clamp8(b));
        }
    }

    if (opt.distractors) {
        int n_dis = static_cast<int>(rng.uniform_int(1, 3));
        for (int i = 0; i < n_dis; ++i) {
            Shape s = random_shape(rng, W, H);
            // green-dominant but muted: passes a fixed color threshold while
            // being visually distinct from vegetation
            s.base_r = 90 + rng.uniform(0, 30);
            s.base_g = s.base_r + rng.uniform(25, 45);
            s.base_b = s.base_r + rng.uniform(-15, 5);
            paint_shape(out.image, rng, s, 5.0, nullptr);
        }
    }

    int n_shapes = static_cast<int>(rng.uniform_int(opt.min_shapes, opt.max_shapes));
    for (int i = 0; i < n_shapes; ++i) {
        Shape s = random_shape(rng, W, H);
        s.base_r = 30 + rng.uniform(0, 40);
        s.base_g = 135 + rng.uniform(0, 60);
        s.base_b = 35 + rng.uniform(0, 45);
        paint_shape(out.image, rng, s, 6.0, &out.mask);
    }

    out.gvi = gvi_of_mask(out.mask);
    return out;
}

std::vector<ImageRecord> generate_synth_dataset(const std::string& dir, int n,
                                                uint64_t seed, const SynthOptions& opt) {
    if (n < 1) throw ValidationError("dataset size must be >= 1");
    std::error_code ec;
    fs::create_directories(dir, ec);
    fs::create_directories(fs::path(dir) / "masks", ec);

    Rng rng(seed);
    std::vector<ImageRecord> records;
    records.reserve(n);
    for (int i = 0; i < n; ++i) {
        SynthSample s = generate_synth_image(rng, opt);
        char name[32];
        std::snprintf(name, sizeof(name), "synth%05d", i);
        std::string img_path = (fs::path(dir) / (std::string(name) + ".png")).string();
        std::string mask_path =
            (fs::path(dir) / "masks" / (std::string(name) + "_mask.png")).string();
        write_png_file(img_path, s.image);
        write_png_file(mask_path, s.mask);

        ImageRecord r;
        r.image_id = name;
        r.point_id = name;
        r.lat = 0.0;
        r.lon = 0.0;
        r.heading = 0.0;
        r.pitch = 0.0;
        r.image_path = img_path;
        r.mask_path = mask_path;
        r.gvi_label = s.gvi;
        records.push_back(std::move(r));
    }
    write_manifest((fs::path(dir) / "manifest.jsonl").string(), records);
    return records;
}

}  // namespace greenview
