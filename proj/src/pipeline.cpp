#include "greenview/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "greenview/errors.hpp"
#include "greenview/util.hpp"

namespace fs = std::filesystem;

namespace greenview {

SegmentBackend segment_backend_from_string(const std::string& name) {
    if (name == "meanshift") return SegmentBackend::Meanshift;
    if (name == "nnet-seg") return SegmentBackend::NnetSeg;
    if (name == "nnet-reg") return SegmentBackend::NnetReg;
    if (name == "import") return SegmentBackend::Import;
    throw ValidationError("unknown segmentation backend: " + name);
}

std::string to_string(SegmentBackend b) {
    switch (b) {
        case SegmentBackend::Meanshift: return "meanshift";
        case SegmentBackend::NnetSeg: return "nnet-seg";
        case SegmentBackend::NnetReg: return "nnet-reg";
        case SegmentBackend::Import: return "import";
    }
    return "?";
}

namespace {

struct Slot {
    SegmentItem item;
    std::optional<RecordError> error;
};

}  // namespace

SegmentOutcome run_segment(const std::vector<ImageRecord>& records, const SegmentParams& p) {
    p.meanshift.validate();
    p.green.validate();

    // checkpoint problems must surface before any image work starts
    std::optional<ConvNet> net;
    if (p.backend == SegmentBackend::NnetSeg || p.backend == SegmentBackend::NnetReg) {
        if (p.checkpoint_path.empty()) {
            throw ValidationError("backend " + to_string(p.backend) + " requires a checkpoint");
        }
        net.emplace(ConvNet::load(p.checkpoint_path));
        const bool want_seg = p.backend == SegmentBackend::NnetSeg;
        if ((net->config().head == HeadKind::Segmentation) != want_seg) {
            throw ValidationError("checkpoint head does not match backend " + to_string(p.backend));
        }
    }
    const bool write_masks = !p.mask_dir.empty() && p.backend != SegmentBackend::NnetReg;
    if (write_masks) {
        std::error_code ec;
        fs::create_directories(p.mask_dir, ec);
    }

    std::vector<Slot> slots(records.size());
    parallel_for(records.size(), p.parallelism, [&](size_t i) {
        const ImageRecord& rec = records[i];
        Slot& slot = slots[i];
        try {
            std::optional<BinaryMask> mask;
            double gvi = 0.0;
            switch (p.backend) {
                case SegmentBackend::Meanshift: {
                    RgbImage img = read_png_file(rec.image_path);
                    mask = segment_vegetation(img, p.meanshift, p.green, 1);
                    gvi = gvi_of_mask(*mask);
                    break;
                }
                case SegmentBackend::NnetSeg: {
                    RgbImage img = read_png_file(rec.image_path);
                    mask = predict_mask(*net, img);
                    gvi = gvi_of_mask(*mask);
                    break;
                }
                case SegmentBackend::NnetReg: {
                    RgbImage img = read_png_file(rec.image_path);
                    gvi = predict_gvi(*net, img);
                    break;
                }
                case SegmentBackend::Import: {
                    if (!rec.mask_path) {
                        throw ValidationError("import backend requires mask_path");
                    }
                    mask = read_mask_file(*rec.mask_path);
                    gvi = gvi_of_mask(*mask);
                    break;
                }
            }

            SegmentItem& it = slot.item;
            it.image_id = rec.image_id;
            it.point_id = rec.point_id;
            it.lat = rec.lat;
            it.lon = rec.lon;
            it.heading = rec.heading;
            it.pitch = rec.pitch;
            it.gvi = gvi;
            if (mask && write_masks) {
                std::string mp = (fs::path(p.mask_dir) / (rec.image_id + ".png")).string();
                write_png_file(mp, *mask);
                it.mask_path = mp;
            }
        } catch (const std::exception& e) {
            slot.error = RecordError{rec.image_id, e.what()};
        }
    });

    SegmentOutcome out;
    for (auto& s : slots) {
        if (s.error) {
            out.errors.push_back(std::move(*s.error));
        } else {
            out.items.push_back(std::move(s.item));
        }
    }
    std::sort(out.items.begin(), out.items.end(),
              [](const SegmentItem& a, const SegmentItem& b) { return a.image_id < b.image_id; });
    std::sort(out.errors.begin(), out.errors.end(),
              [](const RecordError& a, const RecordError& b) { return a.image_id < b.image_id; });
    return out;
}

void write_results(const std::string& path, const std::vector<SegmentItem>& items) {
    fs::path p(path);
    if (p.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(p.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write results: " + path);
    fs::path base = p.parent_path();
    for (const auto& it : items) {
        nlohmann::json j{{"image_id", it.image_id}, {"lat", it.lat},
                         {"lon", it.lon},           {"heading", it.heading},
                         {"pitch", it.pitch},       {"gvi", it.gvi}};
        if (!it.point_id.empty()) j["point_id"] = it.point_id;
        if (it.mask_path) {
            std::error_code ec;
            fs::path rel = fs::relative(*it.mask_path, base, ec);
            j["mask_path"] = (ec || rel.empty()) ? *it.mask_path : rel.generic_string();
        }
        out << j.dump() << "\n";
    }
    if (!out) throw IoError("results write failed: " + path);
}

std::vector<SegmentItem> load_results(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open results: " + path);
    fs::path base = fs::path(path).parent_path();
    std::vector<SegmentItem> items;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            nlohmann::json j = nlohmann::json::parse(line);
            SegmentItem it;
            it.image_id = j.at("image_id").get<std::string>();
            it.lat = j.value("lat", 0.0);
            it.lon = j.value("lon", 0.0);
            it.heading = j.value("heading", 0.0);
            it.pitch = j.value("pitch", 0.0);
            it.gvi = j.at("gvi").get<double>();
            it.point_id = j.value("point_id", "");
            if (j.contains("mask_path")) {
                fs::path mp(j["mask_path"].get<std::string>());
                it.mask_path = mp.is_absolute() ? mp.string() : (base / mp).string();
            }
            items.push_back(std::move(it));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("results line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return items;
}

EvalReport run_eval(const std::vector<SegmentItem>& pred,
                    const std::vector<ImageRecord>& truth) {
    std::map<std::string, const ImageRecord*> truth_by_id;
    for (const auto& r : truth) truth_by_id[r.image_id] = &r;

    std::vector<std::string> missing_truth, missing_pred;
    std::map<std::string, const SegmentItem*> pred_by_id;
    for (const auto& it : pred) {
        pred_by_id[it.image_id] = &it;
        if (!truth_by_id.count(it.image_id)) missing_truth.push_back(it.image_id);
    }
    for (const auto& r : truth) {
        if (!pred_by_id.count(r.image_id)) missing_pred.push_back(r.image_id);
    }
    if (!missing_truth.empty() || !missing_pred.empty()) {
        std::ostringstream os;
        os << "prediction/truth id mismatch.";
        if (!missing_truth.empty()) {
            os << " no truth for:";
            for (const auto& id : missing_truth) os << " " << id;
            os << ".";
        }
        if (!missing_pred.empty()) {
            os << " no prediction for:";
            for (const auto& id : missing_pred) os << " " << id;
        }
        throw ValidationError(os.str());
    }
    if (pred.empty()) throw ValidationError("nothing to evaluate");

    bool has_masks = std::all_of(pred.begin(), pred.end(),
                                 [](const SegmentItem& it) { return it.mask_path.has_value(); });

    std::vector<ImageEval> evals;
    evals.reserve(pred.size());
    for (const auto& it : pred) {
        const ImageRecord& rec = *truth_by_id[it.image_id];
        ImageEval e;
        if (has_masks) {
            if (!rec.mask_path) {
                throw ValidationError("truth manifest lacks mask_path for " + rec.image_id);
            }
            BinaryMask pm = read_mask_file(*it.mask_path);
            BinaryMask tm = read_mask_file(*rec.mask_path);
            e = eval_pair(pm, tm);
        } else {
            double gvi_true;
            if (rec.mask_path) {
                gvi_true = gvi_of_mask(read_mask_file(*rec.mask_path));
            } else if (rec.gvi_label) {
                gvi_true = *rec.gvi_label;
            } else {
                throw ValidationError("truth manifest lacks labels for " + rec.image_id);
            }
            e.gvi_pred = it.gvi;
            e.gvi_true = gvi_true;
            e.delta = e.gvi_pred - e.gvi_true;
        }
        e.image_id = it.image_id;
        evals.push_back(std::move(e));
    }
    return make_report(std::move(evals), has_masks);
}

nlohmann::json report_to_json(const EvalReport& rep) {
    nlohmann::json per = nlohmann::json::array();
    for (const auto& e : rep.per_image) {
        nlohmann::json j{{"image_id", e.image_id},
                         {"gvi_true", e.gvi_true},
                         {"gvi_pred", e.gvi_pred},
                         {"delta", e.delta}};
        if (e.iou) {
            j["iou"] = *e.iou;
            j["tp"] = *e.tp;
            j["fp"] = *e.fp;
            j["fn"] = *e.fn;
            j["tn"] = *e.tn;
        }
        per.push_back(std::move(j));
    }
    nlohmann::json j{{"n", rep.n},
                     {"mean_abs_error", rep.mean_abs_error},
                     {"err_q05", rep.err_q05},
                     {"err_q95", rep.err_q95},
                     {"per_image", std::move(per)}};
    if (rep.mean_iou) j["mean_iou"] = *rep.mean_iou;
    if (rep.pearson_r) j["pearson_r"] = *rep.pearson_r;
    return j;
}

std::string report_per_image_csv(const EvalReport& rep) {
    std::ostringstream os;
    os << "image_id,gvi_true,gvi_pred,delta,iou,tp,fp,fn,tn\n";
    for (const auto& e : rep.per_image) {
        os << e.image_id << "," << e.gvi_true << "," << e.gvi_pred << "," << e.delta << ",";
        if (e.iou) {
            os << *e.iou << "," << *e.tp << "," << *e.fp << "," << *e.fn << "," << *e.tn;
        } else {
            os << ",,,,";
        }
        os << "\n";
    }
    return os.str();
}

AggregateResult aggregate_point_gvi(const std::vector<SegmentItem>& items,
                                    const std::vector<std::string>& known_point_ids) {
    std::map<std::string, PointGvi> groups;
    for (const auto& it : items) {
        if (it.point_id.empty()) {
            throw ValidationError("image " + it.image_id + " has no point_id");
        }
        PointGvi& pg = groups[it.point_id];
        if (pg.images.empty()) {
            pg.point_id = it.point_id;
            pg.lat = it.lat;
            pg.lon = it.lon;
        }
        pg.images.push_back({it.image_id, it.heading, it.pitch, it.gvi});
    }

    AggregateResult out;
    for (auto& [id, pg] : groups) {
        std::sort(pg.images.begin(), pg.images.end(),
                  [](const PointGvi::PerImage& a, const PointGvi::PerImage& b) {
                      return a.image_id < b.image_id;
                  });
        double sum = 0.0;
        for (const auto& im : pg.images) sum += im.gvi;
        pg.gvi = sum / static_cast<double>(pg.images.size());
        out.points.push_back(std::move(pg));
    }
    // std::map iteration is already sorted by point_id
    for (const auto& id : known_point_ids) {
        if (!groups.count(id)) out.omitted_points.push_back(id);
    }
    std::sort(out.omitted_points.begin(), out.omitted_points.end());
    return out;
}

nlohmann::json point_gvi_to_json(const std::vector<PointGvi>& points) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : points) {
        nlohmann::json imgs = nlohmann::json::array();
        for (const auto& im : p.images) {
            imgs.push_back({{"image_id", im.image_id},
                            {"heading", im.heading},
                            {"pitch", im.pitch},
                            {"gvi", im.gvi}});
        }
        arr.push_back({{"point_id", p.point_id},
                       {"lat", p.lat},
                       {"lon", p.lon},
                       {"gvi", p.gvi},
                       {"images", std::move(imgs)}});
    }
    return arr;
}

std::vector<PointGvi> point_gvi_from_json(const nlohmann::json& j) {
    std::vector<PointGvi> out;
    for (const auto& e : j) {
        PointGvi p;
        p.point_id = e.at("point_id").get<std::string>();
        p.lat = e.at("lat").get<double>();
        p.lon = e.at("lon").get<double>();
        p.gvi = e.at("gvi").get<double>();
        if (e.contains("images")) {
            for (const auto& im : e["images"]) {
                p.images.push_back({im.at("image_id").get<std::string>(),
                                    im.value("heading", 0.0), im.value("pitch", 0.0),
                                    im.at("gvi").get<double>()});
            }
        }
        out.push_back(std::move(p));
    }
    return out;
}

nlohmann::json export_geojson(const std::vector<PointGvi>& points) {
    nlohmann::json features = nlohmann::json::array();
    for (const auto& p : points) {
        features.push_back(
            {{"type", "Feature"},
             {"geometry",
              {{"type", "Point"}, {"coordinates", {p.lon, p.lat}}}},  // lon,lat order
             {"properties",
              {{"point_id", p.point_id},
               {"gvi", p.gvi},
               {"n_images", p.images.size()}}}});
    }
    return nlohmann::json{{"type", "FeatureCollection"}, {"features", std::move(features)}};
}

BenchReport run_bench(const std::vector<ImageRecord>& records, const SegmentParams& p,
                      std::vector<size_t> counts) {
    std::sort(counts.begin(), counts.end());
    counts.erase(std::unique(counts.begin(), counts.end()), counts.end());
    if (counts.empty()) throw ValidationError("bench needs at least one count");
    if (counts.back() > records.size()) {
        throw ValidationError("bench count " + std::to_string(counts.back()) +
                              " exceeds available images (" + std::to_string(records.size()) +
                              ")");
    }

    SegmentParams bp = p;
    bp.mask_dir.clear();  // time the GVI computation, not mask encoding

    BenchReport rep;
    rep.backend = to_string(p.backend);
    rep.parallelism = p.parallelism;
    for (size_t count : counts) {
        std::vector<ImageRecord> subset(records.begin(), records.begin() + count);
        auto t0 = std::chrono::steady_clock::now();
        SegmentOutcome out = run_segment(subset, bp);
        auto t1 = std::chrono::steady_clock::now();
        if (!out.errors.empty()) {
            throw ValidationError("bench run failed on " + out.errors.front().image_id + ": " +
                                  out.errors.front().message);
        }
        double secs = std::chrono::duration<double>(t1 - t0).count();
        rep.rows.push_back({count, secs, secs > 0.0 ? count / secs : 0.0});
    }
    return rep;
}

nlohmann::json bench_to_json(const BenchReport& rep) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : rep.rows) {
        rows.push_back({{"image_count", r.image_count},
                        {"seconds", r.seconds},
                        {"images_per_sec", r.images_per_sec}});
    }
    return nlohmann::json{
        {"backend", rep.backend}, {"parallelism", rep.parallelism}, {"rows", std::move(rows)}};
}

std::vector<TrainSample> dataset_from_manifest(const std::string& manifest_path,
                                               const NetConfig& nc) {
    ManifestLoad load = load_manifest(manifest_path, false);
    if (!load.errors.empty()) {
        throw ValidationError("manifest has invalid records, e.g. " +
                              load.errors.front().image_id + ": " +
                              load.errors.front().message);
    }
    if (load.records.empty()) throw ValidationError("empty training dataset");

    std::vector<TrainSample> data;
    data.reserve(load.records.size());
    for (const auto& rec : load.records) {
        TrainSample s;
        s.id = rec.image_id;
        RgbImage img = read_png_file(rec.image_path);
        s.image = image_to_tensor(resize_nearest(img, nc.input_w, nc.input_h));
        if (nc.head == HeadKind::Segmentation) {
            if (!rec.mask_path) {
                throw ValidationError("record " + rec.image_id + " lacks mask_path");
            }
            BinaryMask m = read_mask_file(*rec.mask_path);
            s.mask = mask_to_tensor(resize_nearest(m, nc.input_w, nc.input_h));
        } else {
            if (rec.gvi_label) {
                s.gvi = static_cast<float>(*rec.gvi_label);
            } else if (rec.mask_path) {
                s.gvi = static_cast<float>(gvi_of_mask(read_mask_file(*rec.mask_path)));
            } else {
                throw ValidationError("record " + rec.image_id + " has no gvi or mask label");
            }
        }
        data.push_back(std::move(s));
    }
    return data;
}

std::string bench_table(const BenchReport& rep) {
    std::ostringstream os;
    os << "backend: " << rep.backend << "  parallelism: " << rep.parallelism << "\n";
    os << "  images      seconds   images/sec\n";
    char buf[96];
    for (const auto& r : rep.rows) {
        std::snprintf(buf, sizeof(buf), "%8zu %12.3f %12.2f\n", r.image_count, r.seconds,
                      r.images_per_sec);
        os << buf;
    }
    return os.str();
}

}  // namespace greenview
