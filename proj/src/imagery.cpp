#include "greenview/imagery.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "greenview/errors.hpp"
#include "greenview/util.hpp"

namespace fs = std::filesystem;

namespace greenview {

const char* kDefaultImageUrlTemplate =
    "https://maps.googleapis.com/maps/api/streetview"
    "?location={lat},{lon}&size={width}x{height}&heading={heading}&pitch={pitch}"
    "&fov={fov}&key={key}";
const char* kDefaultMetadataUrlTemplate =
    "https://maps.googleapis.com/maps/api/streetview/metadata"
    "?location={lat},{lon}&key={key}";

void ImageRequest::normalize_and_validate() {
    heading = std::fmod(heading, 360.0);
    if (heading < 0.0) heading += 360.0;
    if (pitch < -90.0 || pitch > 90.0) {
        throw ValidationError("pitch must be in [-90,90]");
    }
    if (fov <= 0.0 || fov > 180.0) {
        throw ValidationError("fov must be in (0,180]");
    }
    if (width < 1 || width > 2048 || height < 1 || height > 2048) {
        throw ValidationError("image size must be in [1,2048]");
    }
}

std::string ImageRequest::image_id() const {
    return point.point_id + "_h" + format_compact(heading) + "_p" + format_compact(pitch);
}

namespace {

void replace_all(std::string& s, const std::string& from, const std::string& to) {
    size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
}

}  // namespace

std::string build_request_url(const ImageRequest& req, const std::string& key,
                              const std::string& url_template) {
    ImageRequest r = req;
    r.normalize_and_validate();
    std::string url = url_template;
    replace_all(url, "{lat}", format_compact(r.point.lat));
    replace_all(url, "{lon}", format_compact(r.point.lon));
    replace_all(url, "{heading}", format_compact(r.heading));
    replace_all(url, "{pitch}", format_compact(r.pitch));
    replace_all(url, "{fov}", format_compact(r.fov));
    replace_all(url, "{width}", std::to_string(r.width));
    replace_all(url, "{height}", std::to_string(r.height));
    replace_all(url, "{key}", key);
    return url;
}

// ---- local backend ---------------------------------------------------------

LocalBackend::LocalBackend(std::string dir) : dir_(std::move(dir)) {
    if (!fs::is_directory(dir_)) {
        throw IoError("local imagery directory does not exist: " + dir_);
    }
}

std::vector<uint8_t> LocalBackend::fetch(const ImageRequest& req) {
    ImageRequest r = req;
    r.normalize_and_validate();
    fs::path p = fs::path(dir_) / (r.image_id() + ".png");
    if (!fs::exists(p)) {
        throw IoError("no local image for " + r.image_id());
    }
    return read_file_bytes(p.string());
}

Availability LocalBackend::availability(const SamplePoint& point) {
    Availability a;
    std::string prefix = point.point_id + "_h";
    for (const auto& entry : fs::directory_iterator(dir_)) {
        if (!entry.is_regular_file()) continue;
        std::string name = entry.path().filename().string();
        if (name.rfind(prefix, 0) == 0 && entry.path().extension() == ".png") {
            a.available = true;
            break;
        }
    }
    fs::path meta = fs::path(dir_) / (point.point_id + ".meta.json");
    if (a.available && fs::exists(meta)) {
        try {
            auto bytes = read_file_bytes(meta.string());
            auto j = nlohmann::json::parse(bytes.begin(), bytes.end());
            if (j.contains("date")) a.pano_date = j["date"].get<std::string>();
        } catch (const std::exception&) {
            // sidecar is advisory; ignore malformed metadata
        }
    }
    return a;
}

// ---- HTTP backend ----------------------------------------------------------

HttpBackend::HttpBackend(HttpBackendConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.max_attempts < 1) throw ValidationError("max_attempts must be >= 1");
}

namespace {

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string target;  // /path?query
};

SplitUrl split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw ValidationError("URL missing scheme: " + url);
    }
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        return {url, "/"};
    }
    return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

std::string HttpBackend::get_with_retries(const std::string& url, bool* not_found) {
    SplitUrl parts = split_url(url);
    std::string last_error;
    int backoff = cfg_.backoff_initial_ms;

    for (int attempt = 1; attempt <= cfg_.max_attempts; ++attempt) {
        if (attempt > 1 && backoff > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
            backoff *= 2;
        }
        httplib::Client client(parts.origin);
        client.set_connection_timeout(10, 0);
        client.set_read_timeout(30, 0);
        auto res = client.Get(parts.target);
        if (!res) {
            last_error = "connection failed: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 500) {
            last_error = "server error " + std::to_string(res->status);
            continue;
        }
        if (res->status == 404) {
            if (not_found) {
                *not_found = true;
                return {};
            }
            throw TransportError("HTTP 404 for " + parts.target);
        }
        if (res->status != 200) {
            throw TransportError("HTTP " + std::to_string(res->status) + " for " + parts.target);
        }
        return res->body;
    }
    throw TransportError("request failed after " + std::to_string(cfg_.max_attempts) +
                         " attempts: " + last_error);
}

std::vector<uint8_t> HttpBackend::fetch(const ImageRequest& req) {
    std::string url = build_request_url(req, cfg_.api_key, cfg_.image_url_template);
    std::string body = get_with_retries(url, nullptr);
    return std::vector<uint8_t>(body.begin(), body.end());
}

Availability HttpBackend::availability(const SamplePoint& point) {
    ImageRequest probe;
    probe.point = point;
    std::string url = build_request_url(probe, cfg_.api_key, cfg_.metadata_url_template);
    bool not_found = false;
    std::string body = get_with_retries(url, &not_found);
    Availability a;
    if (not_found) return a;
    try {
        auto j = nlohmann::json::parse(body);
        std::string status = j.value("status", "");
        a.available = status == "OK";
        if (j.contains("date")) a.pano_date = j["date"].get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw TransportError(std::string("bad metadata response: ") + e.what());
    }
    return a;
}

// ---- manifests ---------------------------------------------------------------

namespace {

std::string resolve_path(const fs::path& base_dir, const std::string& p) {
    fs::path fp(p);
    if (fp.is_absolute()) return fp.lexically_normal().string();
    return (base_dir / fp).lexically_normal().string();
}

std::string relativize(const fs::path& base_dir, const std::string& p) {
    std::error_code ec;
    fs::path rel = fs::relative(p, base_dir, ec);
    if (ec || rel.empty() || rel.native().starts_with("..")) return p;
    return rel.generic_string();
}

nlohmann::json record_to_json(const ImageRecord& r, const fs::path& base_dir) {
    nlohmann::json j{{"image_id", r.image_id}, {"lat", r.lat},
                     {"lon", r.lon},           {"heading", r.heading},
                     {"pitch", r.pitch},       {"image_path", relativize(base_dir, r.image_path)}};
    if (!r.point_id.empty()) j["point_id"] = r.point_id;
    if (r.mask_path) j["mask_path"] = relativize(base_dir, *r.mask_path);
    if (r.gvi_label) j["gvi"] = *r.gvi_label;
    return j;
}

}  // namespace

ManifestLoad load_manifest(const std::string& path, bool check_images) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest: " + path);
    fs::path base_dir = fs::path(path).parent_path();

    ManifestLoad out;
    std::set<std::string> seen_ids;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;

        std::string id = "line " + std::to_string(lineno);
        try {
            nlohmann::json j = nlohmann::json::parse(line);
            if (j.contains("image_id")) id = j["image_id"].get<std::string>();

            ImageRecord r;
            r.image_id = j.at("image_id").get<std::string>();
            if (!seen_ids.insert(r.image_id).second) {
                throw ValidationError("duplicate image_id '" + r.image_id + "' in manifest");
            }
            r.lat = j.at("lat").get<double>();
            r.lon = j.at("lon").get<double>();
            r.heading = j.at("heading").get<double>();
            r.pitch = j.at("pitch").get<double>();
            if (!j.contains("image_path")) {
                throw ParseError("missing image_path");
            }
            r.image_path = resolve_path(base_dir, j["image_path"].get<std::string>());
            if (j.contains("point_id")) r.point_id = j["point_id"].get<std::string>();
            if (j.contains("mask_path")) {
                r.mask_path = resolve_path(base_dir, j["mask_path"].get<std::string>());
            }
            if (j.contains("gvi")) r.gvi_label = j["gvi"].get<double>();

            if (check_images) {
                read_png_file(r.image_path);  // decodability check
            }
            out.records.push_back(std::move(r));
        } catch (const ValidationError&) {
            throw;  // duplicate ids abort the whole load
        } catch (const std::exception& e) {
            out.errors.push_back({id, e.what()});
        }
    }
    return out;
}

void write_manifest(const std::string& path, const std::vector<ImageRecord>& records) {
    fs::path p(path);
    if (p.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(p.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write manifest: " + path);
    fs::path base_dir = p.parent_path();
    for (const auto& r : records) {
        out << record_to_json(r, base_dir).dump() << "\n";
    }
    if (!out) throw IoError("manifest write failed: " + path);
}

FetchResult fetch_images(const std::vector<ImageRequest>& requests, ImageryBackend& backend,
                         unsigned parallelism, const std::string& out_dir,
                         const std::string& manifest_path) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);

    struct Slot {
        ImageRecord record;
        std::optional<RecordError> error;
    };
    std::vector<Slot> slots(requests.size());

    parallel_for(requests.size(), parallelism, [&](size_t i) {
        ImageRequest req = requests[i];
        Slot& slot = slots[i];
        try {
            req.normalize_and_validate();
            std::string id = req.image_id();
            std::vector<uint8_t> bytes = backend.fetch(req);
            decode_png(bytes);  // payload must be decodable as RGB
            std::string file = (fs::path(out_dir) / (id + ".png")).string();
            write_file_bytes(file, bytes);

            slot.record.image_id = id;
            slot.record.point_id = req.point.point_id;
            slot.record.lat = req.point.lat;
            slot.record.lon = req.point.lon;
            slot.record.heading = req.heading;
            slot.record.pitch = req.pitch;
            slot.record.image_path = file;
        } catch (const std::exception& e) {
            slot.error = RecordError{req.point.point_id + " (+h" + format_compact(req.heading) +
                                         ")",
                                     e.what()};
        }
    });

    FetchResult out;
    for (auto& slot : slots) {
        if (slot.error) {
            out.errors.push_back(std::move(*slot.error));
        } else {
            out.records.push_back(std::move(slot.record));
        }
    }
    std::sort(out.records.begin(), out.records.end(),
              [](const ImageRecord& a, const ImageRecord& b) { return a.image_id < b.image_id; });
    std::sort(out.errors.begin(), out.errors.end(),
              [](const RecordError& a, const RecordError& b) { return a.image_id < b.image_id; });
    write_manifest(manifest_path, out.records);
    return out;
}

}  // namespace greenview
