#include "greenview/geo.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <sstream>

#include <nlohmann/json.hpp>

#include "greenview/errors.hpp"
#include "greenview/util.hpp"

namespace greenview {

namespace {

constexpr double kEarthRadiusM = 6371000.0;
constexpr double kDegToRad = 0.017453292519943295;

// Minimal event parser for the OSM-XML subset: start tags, end tags,
// self-closing tags, attributes, comments and an optional XML declaration.
// Tracks line numbers for error reporting.
class XmlScanner {
public:
    explicit XmlScanner(const std::string& text) : text_(text) {}

    struct Element {
        std::string name;
        std::map<std::string, std::string> attrs;
        bool self_closing = false;
        bool closing = false;  // </name>
    };

    // Returns false at end of input.
    bool next(Element& out) {
        for (;;) {
            skip_until_tag();
            if (pos_ >= text_.size()) return false;
            // pos_ is at '<'
            if (starts_with("<!--")) {
                skip_comment();
                continue;
            }
            if (starts_with("<?")) {
                skip_declaration();
                continue;
            }
            parse_tag(out);
            return true;
        }
    }

    size_t line() const { return line_; }

private:
    bool starts_with(const char* s) const {
        return text_.compare(pos_, std::strlen(s), s) == 0;
    }

    void advance(size_t n) {
        for (size_t i = 0; i < n && pos_ < text_.size(); ++i, ++pos_) {
            if (text_[pos_] == '\n') ++line_;
        }
    }

    void skip_until_tag() {
        while (pos_ < text_.size() && text_[pos_] != '<') {
            char c = text_[pos_];
            if (c != ' ' && c != '\t' && c != '\r' && c != '\n') {
                // OSM extracts have no meaningful text content; reject stray
                // characters only when they are not inter-element whitespace.
                fail("unexpected character outside element");
            }
            advance(1);
        }
    }

    void skip_comment() {
        size_t end = text_.find("-->", pos_);
        if (end == std::string::npos) fail("unterminated comment");
        advance(end + 3 - pos_);
    }

    void skip_declaration() {
        size_t end = text_.find("?>", pos_);
        if (end == std::string::npos) fail("unterminated XML declaration");
        advance(end + 2 - pos_);
    }

    void skip_space() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
            advance(1);
        }
    }

    static bool name_char(char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == ':' || c == '-';
    }

    void parse_tag(Element& out) {
        out.attrs.clear();
        out.self_closing = false;
        out.closing = false;
        advance(1);  // consume '<'
        if (pos_ < text_.size() && text_[pos_] == '/') {
            out.closing = true;
            advance(1);
        }
        size_t start = pos_;
        while (pos_ < text_.size() && name_char(text_[pos_])) advance(1);
        if (pos_ == start) fail("expected element name");
        out.name = text_.substr(start, pos_ - start);

        for (;;) {
            skip_space();
            if (pos_ >= text_.size()) fail("unterminated tag");
            char c = text_[pos_];
            if (c == '>') {
                advance(1);
                return;
            }
            if (c == '/') {
                advance(1);
                if (pos_ >= text_.size() || text_[pos_] != '>') fail("malformed self-closing tag");
                advance(1);
                out.self_closing = true;
                return;
            }
            if (out.closing) fail("attributes not allowed in closing tag");
            // attribute
            size_t astart = pos_;
            while (pos_ < text_.size() && name_char(text_[pos_])) advance(1);
            if (pos_ == astart) fail("expected attribute name");
            std::string key = text_.substr(astart, pos_ - astart);
            skip_space();
            if (pos_ >= text_.size() || text_[pos_] != '=') fail("expected '=' after attribute name");
            advance(1);
            skip_space();
            if (pos_ >= text_.size() || (text_[pos_] != '"' && text_[pos_] != '\'')) {
                fail("expected quoted attribute value");
            }
            char quote = text_[pos_];
            advance(1);
            size_t vstart = pos_;
            while (pos_ < text_.size() && text_[pos_] != quote) advance(1);
            if (pos_ >= text_.size()) fail("unterminated attribute value");
            out.attrs[key] = decode_entities(text_.substr(vstart, pos_ - vstart));
            advance(1);
        }
    }

    std::string decode_entities(const std::string& s) const {
        if (s.find('&') == std::string::npos) return s;
        std::string out;
        out.reserve(s.size());
        for (size_t i = 0; i < s.size();) {
            if (s[i] != '&') {
                out += s[i++];
                continue;
            }
            if (s.compare(i, 5, "&amp;") == 0) { out += '&'; i += 5; }
            else if (s.compare(i, 4, "&lt;") == 0) { out += '<'; i += 4; }
            else if (s.compare(i, 4, "&gt;") == 0) { out += '>'; i += 4; }
            else if (s.compare(i, 6, "&quot;") == 0) { out += '"'; i += 6; }
            else if (s.compare(i, 6, "&apos;") == 0) { out += '\''; i += 6; }
            else { out += s[i++]; }
        }
        return out;
    }

    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError("OSM-XML parse error at line " + std::to_string(line_) + ": " + msg);
    }

    const std::string& text_;
    size_t pos_ = 0;
    size_t line_ = 1;
};

int64_t parse_id(const std::map<std::string, std::string>& attrs, size_t line) {
    auto it = attrs.find("id");
    if (it == attrs.end()) {
        throw ParseError("OSM-XML parse error at line " + std::to_string(line) +
                         ": missing id attribute");
    }
    try {
        return std::stoll(it->second);
    } catch (const std::exception&) {
        throw ParseError("OSM-XML parse error at line " + std::to_string(line) +
                         ": bad id '" + it->second + "'");
    }
}

double parse_coord(const std::map<std::string, std::string>& attrs, const char* key,
                   size_t line) {
    auto it = attrs.find(key);
    if (it == attrs.end()) {
        throw ParseError("OSM-XML parse error at line " + std::to_string(line) +
                         ": node missing " + std::string(key));
    }
    try {
        size_t used = 0;
        double v = std::stod(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument("trailing chars");
        return v;
    } catch (const std::exception&) {
        throw ParseError("OSM-XML parse error at line " + std::to_string(line) +
                         ": bad coordinate '" + it->second + "'");
    }
}

}  // namespace

RoadNetwork parse_osm_xml(const std::string& document,
                          const std::vector<std::string>& highway_filter) {
    XmlScanner scanner(document);
    XmlScanner::Element el;
    RoadNetwork net;

    bool in_way = false;
    Way way;
    bool way_has_highway = false;
    std::string way_highway;

    while (scanner.next(el)) {
        if (el.closing) {
            if (el.name == "way") {
                if (!in_way) {
                    throw ParseError("OSM-XML parse error at line " +
                                     std::to_string(scanner.line()) + ": stray </way>");
                }
                in_way = false;
                bool keep = way_has_highway &&
                            (highway_filter.empty() ||
                             std::find(highway_filter.begin(), highway_filter.end(),
                                       way_highway) != highway_filter.end());
                if (keep) {
                    way.highway = way_highway;
                    net.ways.push_back(way);
                }
            }
            continue;
        }
        if (el.name == "node") {
            int64_t id = parse_id(el.attrs, scanner.line());
            GeoPoint p{parse_coord(el.attrs, "lat", scanner.line()),
                       parse_coord(el.attrs, "lon", scanner.line())};
            if (p.lat < -90.0 || p.lat > 90.0 || p.lon < -180.0 || p.lon > 180.0) {
                throw ValidationError("node " + std::to_string(id) +
                                      " has out-of-range coordinates");
            }
            net.nodes[id] = p;
        } else if (el.name == "way") {
            way = Way{};
            way.id = parse_id(el.attrs, scanner.line());
            way_has_highway = false;
            way_highway.clear();
            in_way = !el.self_closing;
        } else if (el.name == "nd" && in_way) {
            auto it = el.attrs.find("ref");
            if (it == el.attrs.end()) {
                throw ParseError("OSM-XML parse error at line " +
                                 std::to_string(scanner.line()) + ": nd missing ref");
            }
            try {
                way.node_ids.push_back(std::stoll(it->second));
            } catch (const std::exception&) {
                throw ParseError("OSM-XML parse error at line " +
                                 std::to_string(scanner.line()) + ": bad nd ref '" +
                                 it->second + "'");
            }
        } else if (el.name == "tag" && in_way) {
            auto k = el.attrs.find("k");
            auto v = el.attrs.find("v");
            if (k != el.attrs.end() && k->second == "highway") {
                way_has_highway = true;
                way_highway = v != el.attrs.end() ? v->second : "";
            }
        }
        // other elements (bounds, relation members, node tags) are ignored
    }
    if (in_way) {
        throw ParseError("OSM-XML parse error at line " + std::to_string(scanner.line()) +
                         ": unterminated <way>");
    }

    for (const auto& w : net.ways) {
        if (w.node_ids.size() < 2) {
            throw ValidationError("way " + std::to_string(w.id) + " has fewer than 2 nodes");
        }
        for (int64_t nid : w.node_ids) {
            if (!net.nodes.count(nid)) {
                throw ValidationError("way " + std::to_string(w.id) +
                                      " references missing node " + std::to_string(nid));
            }
        }
    }
    return net;
}

double haversine_m(const GeoPoint& a, const GeoPoint& b) {
    double phi1 = a.lat * kDegToRad;
    double phi2 = b.lat * kDegToRad;
    double dphi = (b.lat - a.lat) * kDegToRad;
    double dlam = (b.lon - a.lon) * kDegToRad;
    double s1 = std::sin(dphi / 2.0);
    double s2 = std::sin(dlam / 2.0);
    double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
    return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(h)));
}

std::vector<SamplePoint> sample_points(const RoadNetwork& net, double spacing_m) {
    if (spacing_m <= 0.0) throw ValidationError("spacing must be > 0");

    std::vector<const Way*> ways;
    ways.reserve(net.ways.size());
    for (const auto& w : net.ways) ways.push_back(&w);
    std::sort(ways.begin(), ways.end(),
              [](const Way* a, const Way* b) { return a->id < b->id; });

    std::vector<SamplePoint> out;
    for (const Way* w : ways) {
        // cumulative arc length over the polyline
        std::vector<double> cum{0.0};
        cum.reserve(w->node_ids.size());
        for (size_t i = 1; i < w->node_ids.size(); ++i) {
            const GeoPoint& a = net.nodes.at(w->node_ids[i - 1]);
            const GeoPoint& b = net.nodes.at(w->node_ids[i]);
            cum.push_back(cum.back() + haversine_m(a, b));
        }
        double total = cum.back();
        size_t seg = 0;
        int index = 0;
        for (double target = 0.0; target < total; target = spacing_m * ++index) {
            while (seg + 1 < cum.size() && cum[seg + 1] < target) ++seg;
            const GeoPoint& a = net.nodes.at(w->node_ids[seg]);
            const GeoPoint& b = net.nodes.at(w->node_ids[seg + 1]);
            double seg_len = cum[seg + 1] - cum[seg];
            double f = seg_len > 0.0 ? (target - cum[seg]) / seg_len : 0.0;
            SamplePoint p;
            p.way_id = w->id;
            p.offset_m = target;
            p.lat = a.lat + f * (b.lat - a.lat);
            p.lon = a.lon + f * (b.lon - a.lon);
            p.point_id = std::to_string(w->id) + "-" + std::to_string(index);
            out.push_back(std::move(p));
        }
    }
    return out;
}

std::string sample_points_to_jsonl(const std::vector<SamplePoint>& points) {
    std::ostringstream os;
    for (const auto& p : points) {
        nlohmann::json j{{"point_id", p.point_id}, {"lat", p.lat},      {"lon", p.lon},
                         {"way_id", p.way_id},     {"offset_m", p.offset_m}};
        os << j.dump() << "\n";
    }
    return os.str();
}

std::vector<SamplePoint> sample_points_from_jsonl(const std::string& text) {
    std::vector<SamplePoint> out;
    std::istringstream is(text);
    std::string line;
    size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("points JSONL line " + std::to_string(lineno) + ": " + e.what());
        }
        SamplePoint p;
        try {
            p.point_id = j.at("point_id").get<std::string>();
            p.lat = j.at("lat").get<double>();
            p.lon = j.at("lon").get<double>();
            p.way_id = j.at("way_id").get<int64_t>();
            p.offset_m = j.at("offset_m").get<double>();
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("points JSONL line " + std::to_string(lineno) + ": " + e.what());
        }
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace greenview
