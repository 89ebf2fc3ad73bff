#pragma once
#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "vrp/data_pipeline.hpp"
#include "vrp/errors.hpp"
#include "vrp/nn.hpp"
#include "vrp/serialize.hpp"

namespace vrp {

// Flat `key=value` configuration files; '#' starts a comment.
using KvMap = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t");
    return s.substr(begin, end - begin + 1);
}

}  // namespace detail

inline KvMap parse_kv_text(std::istream& in, const std::string& source) {
    KvMap kv;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(source + ": line " + std::to_string(line_no) +
                              ": expected key=value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(source + ": line " + std::to_string(line_no) +
                                           ": empty key");
        if (kv.count(key)) throw ConfigError(source + ": duplicate key '" + key + "'");
        kv[key] = value;
    }
    return kv;
}

inline KvMap parse_kv_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    return parse_kv_text(in, path.filename().string());
}

// Typed lookups with consumption tracking, so unknown keys can be rejected.
class KvReader {
  public:
    KvReader(KvMap kv, std::string source) : kv_(std::move(kv)), source_(std::move(source)) {}

    bool has(const std::string& key) const { return kv_.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& fallback) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        used_.insert(key);
        return it->second;
    }

    double get_double(const std::string& key, double fallback) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        used_.insert(key);
        return parse_one_double(key, it->second);
    }

    std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        used_.insert(key);
        return parse_one_uint(key, it->second);
    }

    bool get_bool(const std::string& key, bool fallback) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        used_.insert(key);
        if (it->second == "true" || it->second == "1") return true;
        if (it->second == "false" || it->second == "0") return false;
        throw ConfigError(source_ + ": key '" + key + "' must be true or false");
    }

    std::vector<double> get_double_list(const std::string& key,
                                        const std::vector<double>& fallback) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        used_.insert(key);
        std::vector<double> out;
        for (const auto& item : split_list(it->second))
            out.push_back(parse_one_double(key, item));
        return out;
    }

    std::vector<std::uint64_t> get_uint_list(const std::string& key,
                                             const std::vector<std::uint64_t>& fallback) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        used_.insert(key);
        std::vector<std::uint64_t> out;
        for (const auto& item : split_list(it->second))
            out.push_back(parse_one_uint(key, item));
        return out;
    }

    std::vector<std::string> get_string_list(const std::string& key,
                                             const std::vector<std::string>& fallback) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        used_.insert(key);
        return split_list(it->second);
    }

    void reject_unknown() const {
        for (const auto& [key, value] : kv_) {
            if (!used_.count(key))
                throw ConfigError(source_ + ": unknown key '" + key + "'");
        }
    }

  private:
    std::vector<std::string> split_list(const std::string& value) const {
        std::vector<std::string> out;
        std::stringstream ss(value);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = detail::trim(item);
            if (item.empty())
                throw ConfigError(source_ + ": empty list item in '" + value + "'");
            out.push_back(item);
        }
        if (out.empty()) throw ConfigError(source_ + ": empty list");
        return out;
    }

    double parse_one_double(const std::string& key, const std::string& value) const {
        try {
            return parse_double(value);
        } catch (const std::exception&) {
            throw ConfigError(source_ + ": key '" + key + "': cannot parse number '" +
                              value + "'");
        }
    }

    std::uint64_t parse_one_uint(const std::string& key, const std::string& value) const {
        try {
            std::size_t pos = 0;
            const auto v = std::stoull(value, &pos);
            if (pos != value.size()) throw std::invalid_argument(value);
            return v;
        } catch (const std::exception&) {
            throw ConfigError(source_ + ": key '" + key + "': cannot parse integer '" +
                              value + "'");
        }
    }

    KvMap kv_;
    std::string source_;
    std::set<std::string> used_;
};

inline PreprocessConfig preprocess_config_from_reader(KvReader& r) {
    PreprocessConfig cfg;
    cfg.window_seconds = r.get_double("window_seconds", cfg.window_seconds);
    cfg.overlap_seconds = r.get_double("overlap_seconds", cfg.overlap_seconds);
    cfg.label_shift_seconds = r.get_double("label_shift_seconds", cfg.label_shift_seconds);
    cfg.variance_threshold = r.get_double("variance_threshold", cfg.variance_threshold);
    validate_preprocess_config(cfg);
    return cfg;
}

inline PreprocessConfig preprocess_config_from_file(const std::filesystem::path& path) {
    KvReader r(parse_kv_file(path), path.filename().string());
    PreprocessConfig cfg = preprocess_config_from_reader(r);
    r.reject_unknown();
    return cfg;
}

inline SyntheticConfig synthetic_config_from_reader(KvReader& r) {
    SyntheticConfig cfg;
    cfg.n_participants = r.get_uint("n_participants", cfg.n_participants);
    cfg.samples_per_participant =
        r.get_uint("samples_per_participant", cfg.samples_per_participant);
    cfg.n_stable_features = r.get_uint("n_stable_features", cfg.n_stable_features);
    cfg.n_spurious_features = r.get_uint("n_spurious_features", cfg.n_spurious_features);
    cfg.noise_std = r.get_double("noise_std", cfg.noise_std);
    cfg.spurious_coeff_std = r.get_double("spurious_coeff_std", cfg.spurious_coeff_std);
    cfg.seed = r.get_uint("seed", cfg.seed);
    validate_synthetic_config(cfg);
    return cfg;
}

inline SyntheticConfig synthetic_config_from_file(const std::filesystem::path& path) {
    KvReader r(parse_kv_file(path), path.filename().string());
    SyntheticConfig cfg = synthetic_config_from_reader(r);
    r.reject_unknown();
    return cfg;
}

inline TrainConfig train_config_from_reader(KvReader& r) {
    TrainConfig cfg;
    cfg.epochs = r.get_uint("epochs", cfg.epochs);
    cfg.batch_size = r.get_uint("batch_size", cfg.batch_size);
    cfg.learning_rate = r.get_double("learning_rate", cfg.learning_rate);
    cfg.beta1 = r.get_double("beta1", cfg.beta1);
    cfg.beta2 = r.get_double("beta2", cfg.beta2);
    cfg.epsilon = r.get_double("epsilon", cfg.epsilon);
    validate_train_config(cfg);
    return cfg;
}

}  // namespace vrp
