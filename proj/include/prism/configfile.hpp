#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "prism/montecarlo.hpp"
#include "prism/pipeline.hpp"

// Minimal TOML-style config reader: [section] headers, key = value pairs
// with strings, numbers, booleans and flat arrays. Keys address values as
// "section.key".

namespace prism::configfile {

struct Value {
    std::string raw;
    std::vector<std::string> array;  // non-empty when the value was [a, b, c]
    bool is_array = false;

    double as_double() const;
    long long as_int() const;
    bool as_bool() const;
    const std::string& as_string() const { return raw; }
    std::vector<double> as_double_array() const;
};

class Config {
public:
    static Config parse_file(const std::string& path);
    static Config parse_string(const std::string& text);

    bool has(const std::string& dotted_key) const;
    const Value& at(const std::string& dotted_key) const;

    double get_double(const std::string& key, double fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::string get_string(const std::string& key,
                           const std::string& fallback) const;

    const std::map<std::string, Value>& entries() const { return values_; }

private:
    std::map<std::string, Value> values_;
};

/// Builds a pipeline RunConfig from the [run], [world], [costs] and
/// [roles] sections; unset keys fall back to the standard operating
/// configuration (K=3, R=1, S=3, temperatures 0.7/0, p=0.4, eps0=0.2).
pipeline::RunConfig load_run_config(const Config& config);

/// Builds a sweep grid from the [sweep] section (axis arrays plus
/// trials).
montecarlo::SweepGrid load_sweep_grid(const Config& config);

}  // namespace prism::configfile
