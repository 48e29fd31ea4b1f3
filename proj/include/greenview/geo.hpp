#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace greenview {

struct GeoPoint {
    double lat = 0.0;  // degrees, WGS84
    double lon = 0.0;
};

struct Way {
    int64_t id = 0;
    std::vector<int64_t> node_ids;  // ordered, >= 2 entries
    std::string highway;            // value of the highway tag
};

struct RoadNetwork {
    std::map<int64_t, GeoPoint> nodes;
    std::vector<Way> ways;
};

struct SamplePoint {
    std::string point_id;
    double lat = 0.0;
    double lon = 0.0;
    int64_t way_id = 0;
    double offset_m = 0.0;  // meters from way start, < way length
};

// Parses the OSM-XML subset (node / way / nd / tag elements). Only ways
// carrying a highway tag are kept; when `highway_filter` is non-empty, the
// tag value must additionally be in the filter set. Throws ParseError with
// a line number on malformed XML and ValidationError when a way references
// a missing node or violates a coordinate/shape invariant.
RoadNetwork parse_osm_xml(const std::string& document,
                          const std::vector<std::string>& highway_filter = {});

// Great-circle distance in meters, Earth radius 6,371,000 m.
double haversine_m(const GeoPoint& a, const GeoPoint& b);

// Emits points at arc-length offsets 0, s, 2s, ... < way length for each
// way, positions linearly interpolated in lat/lon between nodes. Ordered by
// (way id, offset). point_id = "<way_id>-<index>".
std::vector<SamplePoint> sample_points(const RoadNetwork& net, double spacing_m);

// JSON-lines serialization (fields point_id, lat, lon, way_id, offset_m).
std::string sample_points_to_jsonl(const std::vector<SamplePoint>& points);
std::vector<SamplePoint> sample_points_from_jsonl(const std::string& text);

}  // namespace greenview
