#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "greenview/geo.hpp"
#include "greenview/raster.hpp"

namespace greenview {

struct ImageRequest {
    SamplePoint point;
    double heading = 0.0;  // degrees, normalized into [0,360)
    double pitch = 0.0;    // degrees in [-90,90]
    double fov = 90.0;     // degrees in (0,180]
    int width = 400;
    int height = 400;

    // Normalizes heading and throws ValidationError on out-of-range fields.
    void normalize_and_validate();
    std::string image_id() const;  // point_id + heading + pitch
};

struct ImageRecord {
    std::string image_id;
    std::string point_id;
    double lat = 0.0;
    double lon = 0.0;
    double heading = 0.0;
    double pitch = 0.0;
    std::string image_path;            // resolved (absolute or cwd-relative)
    std::optional<std::string> mask_path;
    std::optional<double> gvi_label;   // scalar label for regression training
};

// Deterministic request URL from a template with {lat} {lon} {heading}
// {pitch} {fov} {width} {height} {key} placeholders.
extern const char* kDefaultImageUrlTemplate;
extern const char* kDefaultMetadataUrlTemplate;
std::string build_request_url(const ImageRequest& req, const std::string& key,
                              const std::string& url_template = kDefaultImageUrlTemplate);

struct Availability {
    bool available = false;
    std::optional<std::string> pano_date;
};

// Source of street-level imagery. Implementations must be safe to call from
// multiple threads.
class ImageryBackend {
public:
    virtual ~ImageryBackend() = default;
    // PNG payload for the request. Throws TransportError on network-level
    // failure and IoError/CodecError on bad local data.
    virtual std::vector<uint8_t> fetch(const ImageRequest& req) = 0;
    virtual Availability availability(const SamplePoint& point) = 0;
};

// Serves images from a directory of "<image_id>.png" files; fetch returns the
// file bytes verbatim so runs are bit-deterministic. An optional
// "<point_id>.meta.json" sidecar supplies the pano date.
class LocalBackend : public ImageryBackend {
public:
    explicit LocalBackend(std::string dir);
    std::vector<uint8_t> fetch(const ImageRequest& req) override;
    Availability availability(const SamplePoint& point) override;

private:
    std::string dir_;
};

struct HttpBackendConfig {
    std::string image_url_template = kDefaultImageUrlTemplate;
    std::string metadata_url_template = kDefaultMetadataUrlTemplate;
    std::string api_key;
    int max_attempts = 3;
    int backoff_initial_ms = 100;  // doubles per retry; 0 disables sleeping
};

// HTTP GET against a static street-view endpoint with bounded retries and
// exponential backoff. 5xx and transport failures retry; 4xx fail straight
// away; metadata status ZERO_RESULTS maps to "not available".
class HttpBackend : public ImageryBackend {
public:
    explicit HttpBackend(HttpBackendConfig cfg);
    std::vector<uint8_t> fetch(const ImageRequest& req) override;
    Availability availability(const SamplePoint& point) override;

private:
    std::string get_with_retries(const std::string& url, bool* not_found);
    HttpBackendConfig cfg_;
};

struct RecordError {
    std::string image_id;
    std::string message;
};

struct ManifestLoad {
    std::vector<ImageRecord> records;
    std::vector<RecordError> errors;  // per-record failures; load continues
};

// JSON-lines manifest: one record per line with image_id, lat, lon, heading,
// pitch, image_path and optional point_id, mask_path, gvi. Relative paths are
// resolved against the manifest's directory. Duplicate image ids are a hard
// error; missing fields or undecodable images (when check_images) are
// collected per record.
ManifestLoad load_manifest(const std::string& path, bool check_images = true);
void write_manifest(const std::string& path, const std::vector<ImageRecord>& records);

struct FetchResult {
    std::vector<ImageRecord> records;  // sorted by image_id
    std::vector<RecordError> errors;
};

// Fetches every request (concurrently up to `parallelism`), writes PNGs into
// out_dir and a manifest at manifest_path. Output order is deterministic
// regardless of completion order.
FetchResult fetch_images(const std::vector<ImageRequest>& requests, ImageryBackend& backend,
                         unsigned parallelism, const std::string& out_dir,
                         const std::string& manifest_path);

}  // namespace greenview
