#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "greenview/config.hpp"
#include "greenview/errors.hpp"
#include "greenview/pipeline.hpp"
#include "greenview/synth.hpp"
#include "greenview/util.hpp"

using namespace greenview;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) {
        path = fs::temp_directory_path() / name;
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

// half-green 16x16 test image: top half saturated green, bottom gray
RgbImage half_green() {
    RgbImage img(16, 16);
    for (int y = 0; y < 16; ++y) {
        for (int x = 0; x < 16; ++x) {
            if (y < 8) {
                img.set(x, y, 40, 180, 60);
            } else {
                img.set(x, y, 110, 110, 110);
            }
        }
    }
    return img;
}

std::vector<ImageRecord> make_manifest(const fs::path& dir, int n) {
    std::vector<ImageRecord> records;
    for (int i = 0; i < n; ++i) {
        std::string id = "img" + std::to_string(i);
        std::string path = (dir / (id + ".png")).string();
        write_png_file(path, half_green());
        ImageRecord r;
        r.image_id = id;
        r.point_id = "pt" + std::to_string(i / 2);  // two images per point
        r.lat = 10.0 + i;
        r.lon = 20.0 + i;
        r.heading = (i % 2) * 180.0;
        r.image_path = path;
        records.push_back(std::move(r));
    }
    return records;
}

}  // namespace

TEST_CASE("run_segment meanshift on half-green synthetics gives GVI 0.5") {
    TempDir dir("gv_seg_halfgreen");
    auto records = make_manifest(dir.path, 4);
    SegmentParams p;
    p.mask_dir = (dir.path / "masks").string();
    SegmentOutcome out = run_segment(records, p);
    REQUIRE(out.items.size() == 4);
    CHECK(out.errors.empty());
    for (const auto& it : out.items) {
        CHECK(it.gvi == 0.5);
        REQUIRE(it.mask_path.has_value());
        CHECK(gvi_of_mask(read_mask_file(*it.mask_path)) == 0.5);
    }
}

TEST_CASE("import backend passes mask fractions through exactly") {
    TempDir dir("gv_seg_import");
    auto records = make_manifest(dir.path, 2);
    BinaryMask m(16, 16);
    for (int x = 0; x < 16; ++x) m.set(x, 0, true);  // 16/256
    std::string mask_path = (dir.path / "m.png").string();
    write_png_file(mask_path, m);
    records[0].mask_path = mask_path;
    // records[1] lacks mask_path -> per-record error

    SegmentParams p;
    p.backend = SegmentBackend::Import;
    p.mask_dir = (dir.path / "masks").string();
    SegmentOutcome out = run_segment(records, p);
    REQUIRE(out.items.size() == 1);
    CHECK(out.items[0].gvi == 16.0 / 256.0);
    REQUIRE(out.errors.size() == 1);
    CHECK(out.errors[0].image_id == "img1");
}

TEST_CASE("unreadable image is isolated; accounting always balances") {
    TempDir dir("gv_seg_partial");
    auto records = make_manifest(dir.path, 5);
    records[2].image_path = (dir.path / "nope.png").string();
    SegmentParams p;
    p.mask_dir.clear();
    SegmentOutcome out = run_segment(records, p);
    CHECK(out.items.size() == 4);
    CHECK(out.errors.size() == 1);
    CHECK(out.items.size() + out.errors.size() == records.size());
    CHECK(out.errors[0].image_id == "img2");
}

TEST_CASE("nnet backends fail at startup on a missing checkpoint") {
    TempDir dir("gv_seg_startup");
    auto records = make_manifest(dir.path, 1);
    SegmentParams p;
    p.backend = SegmentBackend::NnetSeg;
    p.checkpoint_path = (dir.path / "missing.gvnet").string();
    CHECK_THROWS_AS(run_segment(records, p), IoError);
    p.checkpoint_path.clear();
    CHECK_THROWS_AS(run_segment(records, p), ValidationError);
}

TEST_CASE("segment output is byte-identical across runs and parallelism") {
    TempDir dir("gv_seg_determinism");
    auto records = make_manifest(dir.path, 6);

    auto run = [&](const std::string& tag, unsigned par) {
        SegmentParams p;
        p.parallelism = par;
        p.mask_dir = (dir.path / tag / "masks").string();
        SegmentOutcome out = run_segment(records, p);
        std::string results = (dir.path / tag / "results.jsonl").string();
        write_results(results, out.items);
        return read_file_bytes(results);
    };
    auto a = run("a", 1);
    auto b = run("b", 4);
    auto c = run("c", 1);
    CHECK(a == b);
    CHECK(a == c);
    CHECK(read_file_bytes((dir.path / "a/masks/img0.png").string()) ==
          read_file_bytes((dir.path / "b/masks/img0.png").string()));
}

TEST_CASE("results JSONL round trip") {
    TempDir dir("gv_results_roundtrip");
    auto records = make_manifest(dir.path, 2);
    SegmentParams p;
    p.mask_dir = (dir.path / "masks").string();
    SegmentOutcome out = run_segment(records, p);
    std::string path = (dir.path / "results.jsonl").string();
    write_results(path, out.items);
    auto back = load_results(path);
    REQUIRE(back.size() == out.items.size());
    for (size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].image_id == out.items[i].image_id);
        CHECK(back[i].gvi == out.items[i].gvi);
        CHECK(back[i].point_id == out.items[i].point_id);
        REQUIRE(back[i].mask_path.has_value());
        CHECK(fs::equivalent(*back[i].mask_path, *out.items[i].mask_path));
    }
}

TEST_CASE("run_eval perfect import predictions and id mismatch errors") {
    TempDir dir("gv_eval");
    SynthOptions opt;
    opt.width = 32;
    opt.height = 32;
    auto records = generate_synth_dataset((dir.path / "data").string(), 5, 3, opt);

    SegmentParams p;
    p.backend = SegmentBackend::Import;
    p.mask_dir = (dir.path / "masks").string();
    SegmentOutcome out = run_segment(records, p);
    REQUIRE(out.errors.empty());

    EvalReport rep = run_eval(out.items, records);
    CHECK(rep.n == 5);
    REQUIRE(rep.mean_iou.has_value());
    CHECK(*rep.mean_iou == 1.0);
    CHECK(rep.mean_abs_error == 0.0);
    CHECK(rep.err_q05 == 0.0);
    CHECK(rep.err_q95 == 0.0);
    // identical pred/truth GVIs make the correlation undefined only if the
    // truths are constant; synthetic GVIs vary, so r = 1
    REQUIRE(rep.pearson_r.has_value());
    CHECK(*rep.pearson_r == doctest::Approx(1.0).epsilon(1e-12));

    auto bad = out.items;
    bad[0].image_id = "stranger";
    CHECK_THROWS_WITH_AS(run_eval(bad, records), doctest::Contains("stranger"),
                         ValidationError);
}

TEST_CASE("gvi-only predictions produce a report without IoU") {
    TempDir dir("gv_eval_gvionly");
    SynthOptions opt;
    opt.width = 32;
    opt.height = 32;
    auto records = generate_synth_dataset((dir.path / "data").string(), 4, 9, opt);

    std::vector<SegmentItem> items;
    for (const auto& r : records) {
        SegmentItem it;
        it.image_id = r.image_id;
        it.point_id = r.point_id;
        it.gvi = *r.gvi_label + 0.01;  // no mask_path: end-to-end style
        items.push_back(std::move(it));
    }
    EvalReport rep = run_eval(items, records);
    CHECK_FALSE(rep.mean_iou.has_value());
    CHECK(rep.mean_abs_error == doctest::Approx(0.01).epsilon(1e-9));
    nlohmann::json j = report_to_json(rep);
    CHECK_FALSE(j.contains("mean_iou"));
    CHECK(j.contains("mean_abs_error"));
    CHECK(j.contains("err_q05"));
}

TEST_CASE("aggregate_point_gvi means, determinism and omissions") {
    std::vector<SegmentItem> items;
    auto add = [&](const std::string& img, const std::string& pt, double gvi) {
        SegmentItem it;
        it.image_id = img;
        it.point_id = pt;
        it.lat = 1;
        it.lon = 2;
        it.gvi = gvi;
        items.push_back(it);
    };
    add("b", "p1", 0.4);
    add("a", "p1", 0.2);
    add("c", "p2", 0.9);

    AggregateResult agg = aggregate_point_gvi(items, {"p1", "p2", "p3"});
    REQUIRE(agg.points.size() == 2);
    CHECK(agg.points[0].point_id == "p1");
    CHECK(agg.points[0].gvi == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(agg.points[0].images.size() == 2);
    CHECK(agg.points[1].gvi == 0.9);  // single image equals aggregate
    REQUIRE(agg.omitted_points.size() == 1);
    CHECK(agg.omitted_points[0] == "p3");

    // shuffled input gives the same output
    std::swap(items[0], items[2]);
    AggregateResult agg2 = aggregate_point_gvi(items, {});
    CHECK(agg2.points[0].point_id == "p1");
    CHECK(agg2.points[0].gvi == doctest::Approx(0.3).epsilon(1e-15));

    SegmentItem orphan;
    orphan.image_id = "x";
    CHECK_THROWS_AS(aggregate_point_gvi({orphan}, {}), ValidationError);
}

TEST_CASE("export_geojson format and round trip") {
    PointGvi p1;
    p1.point_id = "p1";
    p1.lat = 42.123456789;
    p1.lon = -71.5;
    p1.gvi = 0.3333333;
    p1.images.resize(2);
    PointGvi p2;
    p2.point_id = "p2";
    p2.lat = 1;
    p2.lon = 2;
    p2.gvi = 0.5;

    nlohmann::json gj = export_geojson({p1, p2});
    CHECK(gj["type"] == "FeatureCollection");
    REQUIRE(gj["features"].size() == 2);
    auto& f = gj["features"][0];
    CHECK(f["geometry"]["coordinates"][0] == -71.5);  // lon first
    CHECK(f["geometry"]["coordinates"][1] == doctest::Approx(42.123456789));
    CHECK(f["properties"]["n_images"] == 2);

    // round trip through text preserves gvi to 6 decimals
    nlohmann::json back = nlohmann::json::parse(gj.dump());
    double gvi = back["features"][0]["properties"]["gvi"].get<double>();
    CHECK(std::abs(gvi - 0.3333333) < 5e-7);

    CHECK(export_geojson({})["features"].empty());
}

TEST_CASE("run_bench rows are monotone and validated") {
    TempDir dir("gv_bench");
    SynthOptions opt;
    opt.width = 32;
    opt.height = 32;
    auto records = generate_synth_dataset((dir.path / "data").string(), 8, 5, opt);

    SegmentParams p;
    p.parallelism = 2;
    BenchReport rep = run_bench(records, p, {2, 8});
    REQUIRE(rep.rows.size() == 2);
    CHECK(rep.rows[0].image_count == 2);
    CHECK(rep.rows[1].image_count == 8);
    CHECK(rep.rows[0].seconds <= rep.rows[1].seconds);
    CHECK(rep.rows[1].images_per_sec > 0.0);

    CHECK_THROWS_AS(run_bench(records, p, {100}), ValidationError);
    CHECK_THROWS_AS(run_bench(records, p, {}), ValidationError);
}

TEST_CASE("synthetic generator: exact labels, determinism, distractor rules") {
    TempDir dir("gv_synth");
    SynthOptions opt;
    opt.width = 64;
    opt.height = 64;
    opt.distractors = true;
    auto records = generate_synth_dataset((dir.path / "d1").string(), 6, 11, opt);
    REQUIRE(records.size() == 6);
    for (const auto& r : records) {
        REQUIRE(r.mask_path.has_value());
        BinaryMask mask = read_mask_file(*r.mask_path);
        CHECK(*r.gvi_label == gvi_of_mask(mask));  // exact by construction
    }

    // same seed, same bytes
    auto again = generate_synth_dataset((dir.path / "d2").string(), 6, 11, opt);
    for (size_t i = 0; i < records.size(); ++i) {
        CHECK(read_file_bytes(records[i].image_path) ==
              read_file_bytes(again[i].image_path));
    }

    // manifest written alongside is loadable
    ManifestLoad load = load_manifest((dir.path / "d1" / "manifest.jsonl").string(), true);
    CHECK(load.records.size() == 6);
    CHECK(load.errors.empty());
}

TEST_CASE("config file parsing, overrides and echo") {
    TempDir dir("gv_config");
    auto path = dir.path / "gv.conf";
    {
        std::ofstream out(path);
        out << "# defaults\n";
        out << "meanshift.h_s = 5.5\n";
        out << "parallelism = 2\n";
        out << "fetch.headings = 0, 120, 240\n";
    }
    AppConfig cfg;
    cfg.load_file(path.string());
    CHECK(cfg.get_double("meanshift.h_s", 7.0) == 5.5);
    cfg.set("parallelism", "8");  // CLI override wins
    CHECK(cfg.get_int("parallelism", 4) == 8);
    CHECK(cfg.get_list("fetch.headings", {}).size() == 3);
    CHECK(cfg.get_double("green.t_dom", 10.0) == 10.0);  // default recorded

    nlohmann::json echo = cfg.echo();
    CHECK(echo["meanshift.h_s"] == "5.5");
    CHECK(echo["parallelism"] == "8");
    CHECK(echo["green.t_dom"] == "10");

    {
        std::ofstream out(path);
        out << "not a key value line\n";
    }
    AppConfig bad;
    CHECK_THROWS_AS(bad.load_file(path.string()), ParseError);
}
