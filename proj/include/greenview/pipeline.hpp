#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "greenview/imagery.hpp"
#include "greenview/meanshift.hpp"
#include "greenview/metrics.hpp"
#include "greenview/nnet.hpp"

namespace greenview {

enum class SegmentBackend { Meanshift, NnetSeg, NnetReg, Import };

SegmentBackend segment_backend_from_string(const std::string& name);
std::string to_string(SegmentBackend b);

struct SegmentParams {
    SegmentBackend backend = SegmentBackend::Meanshift;
    MeanShiftParams meanshift;
    GreenParams green;
    std::string checkpoint_path;  // required for the nnet backends
    unsigned parallelism = 1;
    std::string mask_dir;         // masks written here unless empty
};

// Per-image GVI (and mask, for mask-producing backends).
struct SegmentItem {
    std::string image_id;
    std::string point_id;
    double lat = 0.0, lon = 0.0;
    double heading = 0.0, pitch = 0.0;
    double gvi = 0.0;
    std::optional<std::string> mask_path;
};

struct SegmentOutcome {
    std::vector<SegmentItem> items;    // sorted by image_id
    std::vector<RecordError> errors;   // per-image failures; processing continues
};

// Runs the chosen backend over every record. Failures are isolated per
// image; a missing/invalid checkpoint is a startup error thrown before any
// work. Output is independent of parallelism.
SegmentOutcome run_segment(const std::vector<ImageRecord>& records, const SegmentParams& p);

// JSON-lines results serialization (mask paths relative to the file).
void write_results(const std::string& path, const std::vector<SegmentItem>& items);
std::vector<SegmentItem> load_results(const std::string& path);

// Pairs predictions with labelled truth records by image id (exact match
// both ways; mismatches raise a validation error listing offenders). IoU
// fields populate only when both sides carry masks.
EvalReport run_eval(const std::vector<SegmentItem>& pred,
                    const std::vector<ImageRecord>& truth);

nlohmann::json report_to_json(const EvalReport& rep);
std::string report_per_image_csv(const EvalReport& rep);

// Per-point aggregation: unweighted arithmetic mean over a point's images.
struct PointGvi {
    std::string point_id;
    double lat = 0.0, lon = 0.0;
    struct PerImage {
        std::string image_id;
        double heading = 0.0, pitch = 0.0;
        double gvi = 0.0;
    };
    std::vector<PerImage> images;
    double gvi = 0.0;
};

struct AggregateResult {
    std::vector<PointGvi> points;           // sorted by point_id
    std::vector<std::string> omitted_points;  // known points with zero images
};

AggregateResult aggregate_point_gvi(const std::vector<SegmentItem>& items,
                                    const std::vector<std::string>& known_point_ids = {});

nlohmann::json point_gvi_to_json(const std::vector<PointGvi>& points);
std::vector<PointGvi> point_gvi_from_json(const nlohmann::json& j);

// GeoJSON FeatureCollection of Point features ([lon, lat]) with gvi and
// n_images properties.
nlohmann::json export_geojson(const std::vector<PointGvi>& points);

struct BenchRow {
    size_t image_count = 0;
    double seconds = 0.0;
    double images_per_sec = 0.0;
};

struct BenchReport {
    std::string backend;
    unsigned parallelism = 1;
    std::vector<BenchRow> rows;  // one per requested count, ascending
};

// End-to-end wall clock (decode included) for processing `count` images per
// row. Counts are deduplicated and sorted ascending.
BenchReport run_bench(const std::vector<ImageRecord>& records, const SegmentParams& p,
                      std::vector<size_t> counts);

nlohmann::json bench_to_json(const BenchReport& rep);
std::string bench_table(const BenchReport& rep);

// Builds a training set from a labelled manifest: images resampled to the
// net input size; regression labels come from the gvi field or, failing
// that, the mask's pixel fraction; segmentation labels from the mask.
// Invalid records are a hard error (training needs clean data).
std::vector<TrainSample> dataset_from_manifest(const std::string& manifest_path,
                                               const NetConfig& nc);

}  // namespace greenview
