#include "greenview/config.hpp"

#include <fstream>
#include <sstream>

#include "greenview/errors.hpp"
#include "greenview/util.hpp"

namespace greenview {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

void AppConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos) {
            throw ParseError("config line " + std::to_string(lineno) +
                             ": expected key = value");
        }
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty()) {
            throw ParseError("config line " + std::to_string(lineno) + ": empty key");
        }
        values_[key] = value;
    }
}

void AppConfig::set(const std::string& key, const std::string& value) {
    values_[key] = value;
}

bool AppConfig::has(const std::string& key) const { return values_.count(key) > 0; }

std::string AppConfig::get_string(const std::string& key, const std::string& def) const {
    auto it = values_.find(key);
    std::string v = it != values_.end() ? it->second : def;
    used_[key] = v;
    return v;
}

double AppConfig::get_double(const std::string& key, double def) const {
    auto it = values_.find(key);
    if (it == values_.end()) {
        used_[key] = format_compact(def, 10);
        return def;
    }
    try {
        double v = std::stod(it->second);
        used_[key] = it->second;
        return v;
    } catch (const std::exception&) {
        throw ParseError("config key " + key + ": not a number: " + it->second);
    }
}

int AppConfig::get_int(const std::string& key, int def) const {
    auto it = values_.find(key);
    if (it == values_.end()) {
        used_[key] = std::to_string(def);
        return def;
    }
    try {
        int v = std::stoi(it->second);
        used_[key] = it->second;
        return v;
    } catch (const std::exception&) {
        throw ParseError("config key " + key + ": not an integer: " + it->second);
    }
}

bool AppConfig::get_bool(const std::string& key, bool def) const {
    auto it = values_.find(key);
    if (it == values_.end()) {
        used_[key] = def ? "true" : "false";
        return def;
    }
    const std::string& v = it->second;
    used_[key] = v;
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ParseError("config key " + key + ": not a boolean: " + v);
}

std::vector<double> AppConfig::get_list(const std::string& key,
                                        const std::vector<double>& def) const {
    auto it = values_.find(key);
    if (it == values_.end()) {
        std::string s;
        for (size_t i = 0; i < def.size(); ++i) {
            if (i) s += ",";
            s += format_compact(def[i]);
        }
        used_[key] = s;
        return def;
    }
    std::vector<double> out;
    std::stringstream ss(it->second);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (tok.empty()) continue;
        try {
            out.push_back(std::stod(tok));
        } catch (const std::exception&) {
            throw ParseError("config key " + key + ": bad list entry: " + tok);
        }
    }
    used_[key] = it->second;
    return out;
}

nlohmann::json AppConfig::echo() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : used_) j[k] = v;
    return j;
}

}  // namespace greenview
