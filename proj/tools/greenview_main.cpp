// greenview: street-level tree-cover quantification pipeline.
//
// One subcommand per pipeline stage: sample -> fetch -> segment -> gvi ->
// eval / gradcam / bench / export, plus a seeded synthetic-data generator.
// Exit codes: 0 success, 1 hard error, 2 partial failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "greenview/config.hpp"
#include "greenview/errors.hpp"
#include "greenview/gradcam.hpp"
#include "greenview/geo.hpp"
#include "greenview/imagery.hpp"
#include "greenview/meanshift.hpp"
#include "greenview/nnet.hpp"
#include "greenview/pipeline.hpp"
#include "greenview/synth.hpp"

namespace fs = std::filesystem;
using namespace greenview;

namespace {

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    fs::path p(path);
    if (p.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(p.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write file: " + path);
    out << text;
    if (!out) throw IoError("write failed: " + path);
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

MeanShiftParams meanshift_from_config(const AppConfig& cfg) {
    MeanShiftParams p;
    p.h_s = cfg.get_double("meanshift.h_s", p.h_s);
    p.h_r = cfg.get_double("meanshift.h_r", p.h_r);
    p.min_region = cfg.get_int("meanshift.min_region", p.min_region);
    p.max_iters = cfg.get_int("meanshift.max_iters", p.max_iters);
    p.eps = cfg.get_double("meanshift.eps", p.eps);
    return p;
}

GreenParams green_from_config(const AppConfig& cfg) {
    GreenParams g;
    g.t_dom = cfg.get_double("green.t_dom", g.t_dom);
    g.t_excess = cfg.get_double("green.t_excess", g.t_excess);
    return g;
}

NetConfig netcfg_from_config(const AppConfig& cfg, HeadKind head) {
    NetConfig nc;
    nc.input_h = cfg.get_int("net.input_h", nc.input_h);
    nc.input_w = cfg.get_int("net.input_w", nc.input_w);
    auto chans = cfg.get_list("net.channels", {8, 16});
    nc.conv_channels.clear();
    for (double c : chans) nc.conv_channels.push_back(static_cast<int>(c));
    nc.head = head;
    nc.init_seed = static_cast<uint64_t>(cfg.get_int("net.init_seed", 1));
    return nc;
}

// Reports record-level failures on stderr and map them to exit code 2.
int finish_partial(const std::vector<RecordError>& errors, size_t ok_count) {
    for (const auto& e : errors) {
        std::cerr << "error: " << e.image_id << ": " << e.message << "\n";
    }
    std::cerr << ok_count << " succeeded, " << errors.size() << " failed\n";
    return errors.empty() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"street-level green view index pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "key = value config file");

    AppConfig cfg;

    // ---- sample -------------------------------------------------------------
    auto* sample = app.add_subcommand("sample", "sample points along OSM road networks");
    std::string sample_osm, sample_out = "points.jsonl", sample_filter;
    double sample_spacing = -1.0;
    sample->add_option("--osm", sample_osm, "OSM XML extract")->required();
    sample->add_option("--out", sample_out, "output points JSONL");
    sample->add_option("--spacing", sample_spacing, "spacing in meters (default 1000)");
    sample->add_option("--highway-filter", sample_filter,
                       "comma list of highway classes to keep (default: all)");

    // ---- fetch --------------------------------------------------------------
    auto* fetch = app.add_subcommand("fetch", "resolve sample points to images");
    std::string fetch_points, fetch_backend = "local", fetch_local_dir;
    std::string fetch_out_dir = "images", fetch_manifest = "images/manifest.jsonl";
    std::string fetch_headings, fetch_pitches;
    int fetch_parallelism = -1;
    fetch->add_option("--points", fetch_points, "points JSONL from `sample`")->required();
    fetch->add_option("--backend", fetch_backend, "local | http");
    fetch->add_option("--local-dir", fetch_local_dir, "image directory for the local backend");
    fetch->add_option("--out-dir", fetch_out_dir, "directory for fetched PNGs");
    fetch->add_option("--manifest", fetch_manifest, "output manifest path");
    fetch->add_option("--headings", fetch_headings, "comma list of headings (default 0..300/60)");
    fetch->add_option("--pitches", fetch_pitches, "comma list of pitches (default 0)");
    fetch->add_option("--parallelism", fetch_parallelism, "concurrent fetches");

    // ---- segment ------------------------------------------------------------
    auto* segment = app.add_subcommand("segment", "compute vegetation masks / GVI per image");
    std::string seg_manifest, seg_backend = "meanshift", seg_mask_dir = "masks";
    std::string seg_results = "results.jsonl", seg_checkpoint;
    int seg_parallelism = -1;
    double seg_hs = -1, seg_hr = -1, seg_eps = -1, seg_tdom = -1, seg_texcess = -1;
    int seg_min_region = -1, seg_max_iters = -1;
    segment->add_option("--manifest", seg_manifest, "input manifest JSONL")->required();
    segment->add_option("--backend", seg_backend, "meanshift | nnet-seg | nnet-reg | import");
    segment->add_option("--mask-dir", seg_mask_dir, "directory for mask PNGs");
    segment->add_option("--results", seg_results, "output results JSONL");
    segment->add_option("--checkpoint", seg_checkpoint, "net checkpoint (nnet backends)");
    segment->add_option("--parallelism", seg_parallelism, "worker threads");
    segment->add_option("--h-s", seg_hs, "mean-shift spatial bandwidth");
    segment->add_option("--h-r", seg_hr, "mean-shift range bandwidth");
    segment->add_option("--min-region", seg_min_region, "minimum region size in pixels");
    segment->add_option("--max-iters", seg_max_iters, "mean-shift iteration cap");
    segment->add_option("--eps", seg_eps, "mean-shift convergence threshold");
    segment->add_option("--t-dom", seg_tdom, "green dominance margin");
    segment->add_option("--t-excess", seg_texcess, "green excess threshold");

    // ---- gvi ----------------------------------------------------------------
    auto* gvi_cmd = app.add_subcommand("gvi", "aggregate per-image GVI to per-point GVI");
    std::string gvi_results, gvi_out = "point_gvi.json", gvi_points;
    gvi_cmd->add_option("--results", gvi_results, "results JSONL from `segment`")->required();
    gvi_cmd->add_option("--out", gvi_out, "output JSON");
    gvi_cmd->add_option("--points", gvi_points,
                        "points JSONL; points without imagery are reported");

    // ---- train ---------------------------------------------------------------
    auto* train_cmd = app.add_subcommand("train", "train a GVI estimator");
    std::string train_manifest, train_head = "regression", train_out = "model.gvnet";
    std::string train_report, train_ckpt_dir;
    double train_lr = -1, train_momentum = -1;
    int train_epochs = -1, train_batch = -1;
    int64_t train_seed = -1;
    train_cmd->add_option("--manifest", train_manifest, "labelled manifest JSONL")->required();
    train_cmd->add_option("--head", train_head, "regression | segmentation");
    train_cmd->add_option("--out", train_out, "final checkpoint path");
    train_cmd->add_option("--report", train_report, "training report JSON");
    train_cmd->add_option("--checkpoint-dir", train_ckpt_dir,
                          "per-epoch checkpoint directory (default: <out>.epochs)");
    train_cmd->add_option("--lr", train_lr, "learning rate");
    train_cmd->add_option("--momentum", train_momentum, "SGD momentum");
    train_cmd->add_option("--epochs", train_epochs, "epoch count");
    train_cmd->add_option("--batch", train_batch, "batch size");
    train_cmd->add_option("--seed", train_seed, "training seed");

    // ---- eval ----------------------------------------------------------------
    auto* eval_cmd = app.add_subcommand("eval", "score predictions against labelled masks");
    std::string eval_pred, eval_truth, eval_out = "report.json", eval_csv;
    eval_cmd->add_option("--pred", eval_pred, "results JSONL from `segment`")->required();
    eval_cmd->add_option("--truth", eval_truth, "labelled manifest JSONL")->required();
    eval_cmd->add_option("--out", eval_out, "report JSON");
    eval_cmd->add_option("--csv", eval_csv, "optional per-image CSV");

    // ---- gradcam ---------------------------------------------------------------
    auto* cam_cmd = app.add_subcommand("gradcam", "explain a regressor prediction");
    std::string cam_checkpoint, cam_image, cam_out = "overlay.png";
    int cam_layer = -1;
    cam_cmd->add_option("--checkpoint", cam_checkpoint, "regression checkpoint")->required();
    cam_cmd->add_option("--image", cam_image, "input PNG")->required();
    cam_cmd->add_option("--out", cam_out, "overlay PNG (sidecar JSON written next to it)");
    cam_cmd->add_option("--layer", cam_layer, "conv layer stack index (default: last conv)");

    // ---- bench ----------------------------------------------------------------
    auto* bench_cmd = app.add_subcommand("bench", "throughput of a backend at several sizes");
    std::string bench_backend = "meanshift", bench_manifest, bench_checkpoint;
    std::string bench_out = "bench.json", bench_counts = "100,1000";
    std::string bench_dir = "bench_images", bench_mode = "identical";
    int bench_parallelism = -1;
    int64_t bench_seed = 7;
    bench_cmd->add_option("--backend", bench_backend, "meanshift | nnet-seg | nnet-reg | import");
    bench_cmd->add_option("--manifest", bench_manifest,
                          "manifest to bench on (default: synthesized images)");
    bench_cmd->add_option("--checkpoint", bench_checkpoint, "net checkpoint (nnet backends)");
    bench_cmd->add_option("--counts", bench_counts, "comma list of image counts");
    bench_cmd->add_option("--out", bench_out, "report JSON");
    bench_cmd->add_option("--parallelism", bench_parallelism, "worker threads");
    bench_cmd->add_option("--synth-dir", bench_dir, "where synthesized bench images go");
    bench_cmd->add_option("--synth-mode", bench_mode, "identical | varied");
    bench_cmd->add_option("--seed", bench_seed, "synthesis seed");

    // ---- export ----------------------------------------------------------------
    auto* export_cmd = app.add_subcommand("export", "GeoJSON of per-point GVI");
    std::string export_gvi, export_out = "points.geojson";
    export_cmd->add_option("--gvi", export_gvi, "point GVI JSON from `gvi`")->required();
    export_cmd->add_option("--out", export_out, "output GeoJSON");

    // ---- synth ----------------------------------------------------------------
    auto* synth_cmd = app.add_subcommand("synth", "generate a labelled synthetic dataset");
    std::string synth_dir = "synth_data";
    int synth_n = 100, synth_w = 128, synth_h = 128, synth_min = 1, synth_max = 3;
    int64_t synth_seed = 7;
    bool synth_distractors = false;
    synth_cmd->add_option("--out-dir", synth_dir, "dataset directory");
    synth_cmd->add_option("--n", synth_n, "image count");
    synth_cmd->add_option("--seed", synth_seed, "generator seed");
    synth_cmd->add_option("--width", synth_w, "image width");
    synth_cmd->add_option("--height", synth_h, "image height");
    synth_cmd->add_option("--min-shapes", synth_min, "minimum green shapes per image");
    synth_cmd->add_option("--max-shapes", synth_max, "maximum green shapes per image");
    synth_cmd->add_flag("--distractors", synth_distractors, "inject gray-green distractors");

    CLI11_PARSE(app, argc, argv);

    try {
        if (!config_path.empty()) cfg.load_file(config_path);

        if (*sample) {
            if (sample_spacing > 0) cfg.set("sample.spacing_m", format_compact(sample_spacing));
            if (!sample_filter.empty()) cfg.set("sample.highway_filter", sample_filter);
            double spacing = cfg.get_double("sample.spacing_m", 1000.0);
            std::string filter = cfg.get_string("sample.highway_filter", "");
            std::vector<std::string> filter_list;
            std::stringstream ss(filter);
            std::string tok;
            while (std::getline(ss, tok, ',')) {
                if (!tok.empty()) filter_list.push_back(tok);
            }
            RoadNetwork net = parse_osm_xml(read_text_file(sample_osm), filter_list);
            auto points = sample_points(net, spacing);
            write_text_file(sample_out, sample_points_to_jsonl(points));
            std::cerr << points.size() << " points from " << net.ways.size() << " ways\n";
            return 0;
        }

        if (*fetch) {
            if (fetch_parallelism > 0) {
                cfg.set("parallelism", std::to_string(fetch_parallelism));
            }
            if (!fetch_headings.empty()) cfg.set("fetch.headings", fetch_headings);
            if (!fetch_pitches.empty()) cfg.set("fetch.pitches", fetch_pitches);
            auto headings = cfg.get_list("fetch.headings", {0, 60, 120, 180, 240, 300});
            auto pitches = cfg.get_list("fetch.pitches", {0});
            int width = cfg.get_int("fetch.width", 400);
            int height = cfg.get_int("fetch.height", 400);
            double fov = cfg.get_double("fetch.fov", 90.0);
            unsigned par = static_cast<unsigned>(cfg.get_int("parallelism", 4));

            auto points = sample_points_from_jsonl(read_text_file(fetch_points));
            std::vector<ImageRequest> requests;
            for (const auto& pt : points) {
                for (double h : headings) {
                    for (double pitch : pitches) {
                        ImageRequest r;
                        r.point = pt;
                        r.heading = h;
                        r.pitch = pitch;
                        r.fov = fov;
                        r.width = width;
                        r.height = height;
                        requests.push_back(std::move(r));
                    }
                }
            }

            std::unique_ptr<ImageryBackend> backend;
            if (fetch_backend == "local") {
                if (fetch_local_dir.empty()) {
                    throw ValidationError("--local-dir is required for the local backend");
                }
                backend = std::make_unique<LocalBackend>(fetch_local_dir);
            } else if (fetch_backend == "http") {
                HttpBackendConfig hc;
                hc.image_url_template =
                    cfg.get_string("url.image_template", kDefaultImageUrlTemplate);
                hc.metadata_url_template =
                    cfg.get_string("url.metadata_template", kDefaultMetadataUrlTemplate);
                hc.max_attempts = cfg.get_int("retry.max_attempts", 3);
                hc.backoff_initial_ms = cfg.get_int("retry.backoff_ms", 100);
                const char* key = std::getenv("GREENVIEW_API_KEY");
                if (!key || !*key) {
                    throw ValidationError("GREENVIEW_API_KEY is not set");
                }
                hc.api_key = key;
                backend = std::make_unique<HttpBackend>(hc);
            } else {
                throw ValidationError("unknown fetch backend: " + fetch_backend);
            }

            FetchResult res = fetch_images(requests, *backend, par, fetch_out_dir, fetch_manifest);
            return finish_partial(res.errors, res.records.size());
        }

        if (*segment) {
            if (seg_parallelism > 0) cfg.set("parallelism", std::to_string(seg_parallelism));
            if (seg_hs > 0) cfg.set("meanshift.h_s", format_compact(seg_hs));
            if (seg_hr > 0) cfg.set("meanshift.h_r", format_compact(seg_hr));
            if (seg_min_region > 0) cfg.set("meanshift.min_region", std::to_string(seg_min_region));
            if (seg_max_iters > 0) cfg.set("meanshift.max_iters", std::to_string(seg_max_iters));
            if (seg_eps > 0) cfg.set("meanshift.eps", format_compact(seg_eps));
            if (seg_tdom >= 0) cfg.set("green.t_dom", format_compact(seg_tdom));
            if (seg_texcess >= 0) cfg.set("green.t_excess", format_compact(seg_texcess));

            SegmentParams p;
            p.backend = segment_backend_from_string(seg_backend);
            p.meanshift = meanshift_from_config(cfg);
            p.green = green_from_config(cfg);
            p.checkpoint_path = seg_checkpoint;
            p.parallelism = static_cast<unsigned>(cfg.get_int("parallelism", 4));
            p.mask_dir = seg_mask_dir;

            ManifestLoad load = load_manifest(seg_manifest, true);
            SegmentOutcome out = run_segment(load.records, p);
            write_results(seg_results, out.items);

            std::vector<RecordError> all_errors = load.errors;
            all_errors.insert(all_errors.end(), out.errors.begin(), out.errors.end());
            return finish_partial(all_errors, out.items.size());
        }

        if (*gvi_cmd) {
            auto items = load_results(gvi_results);
            std::vector<std::string> known;
            if (!gvi_points.empty()) {
                for (const auto& p : sample_points_from_jsonl(read_text_file(gvi_points))) {
                    known.push_back(p.point_id);
                }
            }
            AggregateResult agg = aggregate_point_gvi(items, known);
            nlohmann::json j{{"config", cfg.echo()},
                             {"points", point_gvi_to_json(agg.points)},
                             {"omitted_points", agg.omitted_points}};
            write_json_file(gvi_out, j);
            std::cerr << agg.points.size() << " points aggregated";
            if (!agg.omitted_points.empty()) {
                std::cerr << ", " << agg.omitted_points.size() << " points had no imagery";
            }
            std::cerr << "\n";
            return 0;
        }

        if (*train_cmd) {
            if (train_lr > 0) cfg.set("train.lr", format_compact(train_lr, 10));
            if (train_momentum >= 0) cfg.set("train.momentum", format_compact(train_momentum, 10));
            if (train_epochs > 0) cfg.set("train.epochs", std::to_string(train_epochs));
            if (train_batch > 0) cfg.set("train.batch", std::to_string(train_batch));
            if (train_seed >= 0) cfg.set("train.seed", std::to_string(train_seed));

            HeadKind head;
            if (train_head == "regression") {
                head = HeadKind::Regression;
            } else if (train_head == "segmentation") {
                head = HeadKind::Segmentation;
            } else {
                throw ValidationError("unknown head: " + train_head);
            }

            NetConfig nc = netcfg_from_config(cfg, head);
            TrainConfig tc;
            tc.learning_rate = cfg.get_double("train.lr", 0.01);
            tc.momentum = cfg.get_double("train.momentum", 0.9);
            tc.epochs = cfg.get_int("train.epochs", 10);
            tc.batch_size = cfg.get_int("train.batch", 16);
            tc.seed = static_cast<uint64_t>(cfg.get_int("train.seed", 1));
            tc.checkpoint_dir =
                train_ckpt_dir.empty() ? train_out + ".epochs" : train_ckpt_dir;

            auto dataset = dataset_from_manifest(train_manifest, nc);
            ConvNet net(nc);
            tc.on_epoch = [](int epoch, double loss) {
                std::cerr << "epoch " << epoch << ": loss " << loss << "\n";
                return true;
            };
            TrainResult result = train(net, dataset, tc);
            net.save(train_out);

            if (!train_report.empty()) {
                nlohmann::json j{{"config", cfg.echo()},
                                 {"loss_curve", result.loss_curve},
                                 {"epochs_run", result.epochs_run},
                                 {"param_count", net.param_count()},
                                 {"checkpoint", train_out}};
                write_json_file(train_report, j);
            }
            std::cerr << "saved " << train_out << " (" << net.param_count() << " parameters)\n";
            return 0;
        }

        if (*eval_cmd) {
            auto pred = load_results(eval_pred);
            ManifestLoad truth = load_manifest(eval_truth, false);
            if (!truth.errors.empty()) {
                throw ValidationError("truth manifest has invalid records, e.g. " +
                                      truth.errors.front().image_id + ": " +
                                      truth.errors.front().message);
            }
            EvalReport rep = run_eval(pred, truth.records);
            nlohmann::json j = report_to_json(rep);
            j["config"] = cfg.echo();
            write_json_file(eval_out, j);
            if (!eval_csv.empty()) write_text_file(eval_csv, report_per_image_csv(rep));

            std::cout << "n=" << rep.n;
            if (rep.mean_iou) std::cout << " mean_iou=" << *rep.mean_iou;
            std::cout << " mae=" << rep.mean_abs_error;
            if (rep.pearson_r) std::cout << " r=" << *rep.pearson_r;
            std::cout << " band=[" << rep.err_q05 << "," << rep.err_q95 << "]\n";
            return 0;
        }

        if (*cam_cmd) {
            ConvNet net = ConvNet::load(cam_checkpoint);
            RgbImage img = read_png_file(cam_image);
            GradCamResult res = grad_cam(net, img, cam_layer);
            write_png_file(cam_out, render_overlay(img, res.heatmap));
            nlohmann::json j{{"config", cfg.echo()},
                             {"image", cam_image},
                             {"layer_index", res.layer_index},
                             {"prediction", res.prediction}};
            write_json_file(cam_out + ".json", j);
            std::cout << "prediction " << res.prediction << ", overlay " << cam_out << "\n";
            return 0;
        }

        if (*bench_cmd) {
            if (bench_parallelism > 0) cfg.set("parallelism", std::to_string(bench_parallelism));
            SegmentParams p;
            p.backend = segment_backend_from_string(bench_backend);
            p.meanshift = meanshift_from_config(cfg);
            p.green = green_from_config(cfg);
            p.checkpoint_path = bench_checkpoint;
            p.parallelism = static_cast<unsigned>(cfg.get_int("parallelism", 4));

            std::vector<size_t> counts;
            {
                std::stringstream ss(bench_counts);
                std::string tok;
                while (std::getline(ss, tok, ',')) {
                    if (!tok.empty()) counts.push_back(std::stoul(tok));
                }
            }
            if (counts.empty()) throw ValidationError("no bench counts given");

            std::vector<ImageRecord> records;
            if (!bench_manifest.empty()) {
                ManifestLoad load = load_manifest(bench_manifest, false);
                records = load.records;
            } else {
                size_t need = *std::max_element(counts.begin(), counts.end());
                SynthOptions opt;
                Rng rng(static_cast<uint64_t>(bench_seed));
                if (bench_mode == "identical") {
                    SynthSample s = generate_synth_image(rng, opt);
                    std::string path = (fs::path(bench_dir) / "bench.png").string();
                    write_png_file(path, s.image);
                    for (size_t i = 0; i < need; ++i) {
                        ImageRecord r;
                        char id[32];
                        std::snprintf(id, sizeof(id), "bench%06zu", i);
                        r.image_id = id;
                        r.image_path = path;
                        records.push_back(std::move(r));
                    }
                } else {
                    records = generate_synth_dataset(bench_dir, static_cast<int>(need),
                                                     static_cast<uint64_t>(bench_seed), opt);
                }
            }

            BenchReport rep = run_bench(records, p, counts);
            nlohmann::json j = bench_to_json(rep);
            j["config"] = cfg.echo();
            write_json_file(bench_out, j);
            std::cout << bench_table(rep);
            return 0;
        }

        if (*export_cmd) {
            nlohmann::json in = nlohmann::json::parse(read_text_file(export_gvi));
            std::vector<PointGvi> points =
                point_gvi_from_json(in.contains("points") ? in["points"] : in);
            write_json_file(export_out, export_geojson(points));
            std::cerr << points.size() << " features written to " << export_out << "\n";
            return 0;
        }

        if (*synth_cmd) {
            SynthOptions opt;
            opt.width = synth_w;
            opt.height = synth_h;
            opt.min_shapes = synth_min;
            opt.max_shapes = synth_max;
            opt.distractors = synth_distractors;
            auto records = generate_synth_dataset(synth_dir, synth_n,
                                                  static_cast<uint64_t>(synth_seed), opt);
            std::cerr << records.size() << " images in " << synth_dir << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
