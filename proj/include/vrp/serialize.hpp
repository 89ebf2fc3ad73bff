#pragma once
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vrp/calibration.hpp"
#include "vrp/errors.hpp"
#include "vrp/metrics.hpp"
#include "vrp/nn.hpp"
#include "vrp/pruning.hpp"

namespace vrp {

// Shortest decimal form that parses back to the identical double.
inline std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

inline double parse_double(const std::string& s) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw DataError("cannot parse number '" + s + "'");
    return v;
}

namespace detail {

inline void check_finite(const std::vector<double>& values, const std::string& what) {
    for (double v : values)
        if (!std::isfinite(v)) throw NumericError(what + " contains a non-finite value");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Model checkpoints: layer specs plus row-major weight/bias/mask arrays.
// nlohmann::json emits the shortest round-trip decimal form for doubles, so
// save -> load is value-exact.
// ---------------------------------------------------------------------------

inline nlohmann::json model_to_json(const MLPModel& model) {
    nlohmann::json j;
    j["layers"] = nlohmann::json::array();
    for (const auto& spec : model.layers) {
        j["layers"].push_back({{"input_dim", spec.input_dim},
                               {"output_dim", spec.output_dim},
                               {"activation", activation_name(spec.activation)}});
    }
    j["weights"] = nlohmann::json::array();
    j["biases"] = nlohmann::json::array();
    j["masks"] = nlohmann::json::array();
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        detail::check_finite(model.weights[l].data, "weights");
        detail::check_finite(model.biases[l], "biases");
        j["weights"].push_back(model.weights[l].data);
        j["biases"].push_back(model.biases[l]);
        std::vector<int> mask(model.masks[l].data.size());
        for (std::size_t i = 0; i < mask.size(); ++i) {
            const double v = model.masks[l].data[i];
            if (v != 0.0 && v != 1.0)
                throw NumericError("mask entries must be exactly 0 or 1");
            mask[i] = v != 0.0 ? 1 : 0;
        }
        j["masks"].push_back(mask);
    }
    return j;
}

inline MLPModel model_from_json(const nlohmann::json& j) {
    MLPModel model;
    if (!j.contains("layers") || !j.contains("weights") || !j.contains("biases") ||
        !j.contains("masks"))
        throw DataError("checkpoint: missing layers/weights/biases/masks");
    for (const auto& spec : j.at("layers")) {
        model.layers.push_back({spec.at("input_dim").get<std::size_t>(),
                                spec.at("output_dim").get<std::size_t>(),
                                activation_from_name(spec.at("activation").get<std::string>())});
    }
    validate_specs(model.layers);
    const std::size_t n = model.layers.size();
    if (j.at("weights").size() != n || j.at("biases").size() != n || j.at("masks").size() != n)
        throw DataError("checkpoint: array counts do not match layer count");
    for (std::size_t l = 0; l < n; ++l) {
        const auto& spec = model.layers[l];
        Matrix w(spec.output_dim, spec.input_dim);
        auto wdata = j.at("weights")[l].get<std::vector<double>>();
        if (wdata.size() != w.size())
            throw DataError("checkpoint: weight size mismatch at layer " + std::to_string(l));
        w.data = std::move(wdata);
        model.weights.push_back(std::move(w));

        auto b = j.at("biases")[l].get<std::vector<double>>();
        if (b.size() != spec.output_dim)
            throw DataError("checkpoint: bias size mismatch at layer " + std::to_string(l));
        model.biases.push_back(std::move(b));

        Matrix m(spec.output_dim, spec.input_dim);
        auto mdata = j.at("masks")[l].get<std::vector<int>>();
        if (mdata.size() != m.size())
            throw DataError("checkpoint: mask size mismatch at layer " + std::to_string(l));
        for (std::size_t i = 0; i < mdata.size(); ++i) {
            if (mdata[i] != 0 && mdata[i] != 1)
                throw DataError("checkpoint: mask entries must be 0 or 1");
            m.data[i] = static_cast<double>(mdata[i]);
        }
        model.masks.push_back(std::move(m));
    }
    return model;
}

inline void save_model(const MLPModel& model, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << model_to_json(model).dump(2) << "\n";
}

inline MLPModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint " + path.string() + ": " + e.what());
    }
    try {
        return model_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint " + path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Calibration statistics, keyed by layer index and group id.
// ---------------------------------------------------------------------------

inline nlohmann::json moments_to_json(const std::vector<LayerMoments>& layers) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& m : layers) {
        arr.push_back({{"act_sq", m.act_sq},
                       {"grad_sq", m.grad_sq},
                       {"sample_count", m.sample_count}});
    }
    return arr;
}

inline std::vector<LayerMoments> moments_from_json(const nlohmann::json& arr) {
    std::vector<LayerMoments> layers;
    for (const auto& jm : arr) {
        LayerMoments m;
        m.act_sq = jm.at("act_sq").get<std::vector<double>>();
        m.grad_sq = jm.at("grad_sq").get<std::vector<double>>();
        m.sample_count = jm.at("sample_count").get<std::size_t>();
        layers.push_back(std::move(m));
    }
    return layers;
}

inline void save_calibration(const CalibrationStats& stats,
                             const std::filesystem::path& path) {
    nlohmann::json j;
    j["global"] = moments_to_json(stats.global);
    j["per_group"] = nlohmann::json::object();
    for (const auto& [gid, layers] : stats.per_group)
        j["per_group"][gid] = moments_to_json(layers);
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

inline CalibrationStats load_calibration(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open calibration file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
        CalibrationStats stats;
        stats.global = moments_from_json(j.at("global"));
        for (const auto& [gid, arr] : j.at("per_group").items())
            stats.per_group[gid] = moments_from_json(arr);
        return stats;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("calibration file " + path.string() + ": " + e.what());
    }
}

// Standalone mask export: one `layer,row,col` line per zeroed entry, sorted.
inline void export_mask(const PruneMask& mask, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "layer,row,col\n";
    for (std::size_t l = 0; l < mask.layers.size(); ++l) {
        const Matrix& m = mask.layers[l];
        for (std::size_t r = 0; r < m.rows; ++r)
            for (std::size_t c = 0; c < m.cols; ++c)
                if (m(r, c) == 0.0) out << l << ',' << r << ',' << c << '\n';
    }
}

inline nlohmann::json report_to_json(const EvalReport& r) {
    nlohmann::json j;
    j["mse"] = r.mse;
    j["ccc"] = r.ccc;
    j["ccc_group_mean"] = r.ccc_group_mean;
    j["per_group_mse"] = r.per_group_mse;
    j["per_group_ccc"] = r.per_group_ccc;
    j["mse_group_variance"] = r.mse_group_variance;
    j["risk_j"] = r.risk_j;
    j["lambda_var"] = r.lambda_var;
    j["n_samples"] = r.n_samples;
    return j;
}

}  // namespace vrp
