#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace greenview {

// Flat key=value configuration ('#' comments, dotted keys for grouping).
// CLI flags override file values via set(). Every lookup records the
// effective value so reports can echo exactly the configuration that was
// used.
class AppConfig {
public:
    AppConfig() = default;

    // Throws ParseError on malformed lines, IoError when unreadable.
    void load_file(const std::string& path);

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const;

    std::string get_string(const std::string& key, const std::string& def) const;
    double get_double(const std::string& key, double def) const;
    int get_int(const std::string& key, int def) const;
    bool get_bool(const std::string& key, bool def) const;
    std::vector<double> get_list(const std::string& key,
                                 const std::vector<double>& def) const;

    // Effective values of every key looked up so far (sorted by key).
    nlohmann::json echo() const;

private:
    std::map<std::string, std::string> values_;
    mutable std::map<std::string, std::string> used_;
};

}  // namespace greenview
