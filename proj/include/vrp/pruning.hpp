#pragma once
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "vrp/calibration.hpp"
#include "vrp/errors.hpp"
#include "vrp/nn.hpp"

namespace vrp {

enum class ScoreKind { PhiMean, PhiGroup, VrScore, AbsWeight };

// Per-connection scores, shape-aligned with the model's weight matrices.
struct ConnectionScore {
    ScoreKind kind = ScoreKind::PhiMean;
    std::vector<Matrix> layers;
};

struct PruneMask {
    std::vector<Matrix> layers;  // binary, same shapes as the weights
    double achieved_sparsity = 0.0;
};

struct VrConfig {
    double lambda_var = 1.0;
};

namespace detail {

inline void check_stats_shapes(const std::vector<LayerMoments>& stats,
                               const MLPModel& model) {
    if (stats.size() != model.layer_count())
        throw ShapeError("saliency: stats layer count does not match model");
    for (std::size_t l = 0; l < stats.size(); ++l) {
        if (stats[l].act_sq.size() != model.layers[l].input_dim ||
            stats[l].grad_sq.size() != model.layers[l].output_dim)
            throw ShapeError("saliency: stats shape mismatch at layer " + std::to_string(l));
    }
}

inline ConnectionScore phi_from_moments(const std::vector<LayerMoments>& stats,
                                        const MLPModel& model, ScoreKind kind) {
    check_stats_shapes(stats, model);
    ConnectionScore score;
    score.kind = kind;
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        const Matrix weff = model.effective_weights(l);
        Matrix phi(weff.rows, weff.cols);
        for (std::size_t r = 0; r < weff.rows; ++r) {
            const double g2 = stats[l].grad_sq[r];
            for (std::size_t c = 0; c < weff.cols; ++c) {
                const double w = weff(r, c);
                phi(r, c) = 0.5 * stats[l].act_sq[c] * g2 * w * w;
            }
        }
        score.layers.push_back(std::move(phi));
    }
    return score;
}

}  // namespace detail

// phi_ij = 1/2 * E[a_i^2] * E[g_j^2] * W_ij^2, on masked weights.
inline ConnectionScore saliency_phi(const std::vector<LayerMoments>& stats,
                                    const MLPModel& model) {
    return detail::phi_from_moments(stats, model, ScoreKind::PhiMean);
}

// Group-wise counterpart using E_g[a_i^2] and E_g[g_j^2].
inline ConnectionScore saliency_phi_group(const CalibrationStats& stats,
                                          const MLPModel& model, const std::string& group) {
    auto it = stats.per_group.find(group);
    if (it == stats.per_group.end())
        throw ShapeError("saliency_phi_group: unknown group '" + group + "'");
    return detail::phi_from_moments(it->second, model, ScoreKind::PhiGroup);
}

inline std::map<std::string, ConnectionScore> group_saliencies(
    const CalibrationStats& stats, const MLPModel& model) {
    std::map<std::string, ConnectionScore> out;
    for (const auto& [gid, layers] : stats.per_group)
        out.emplace(gid, detail::phi_from_moments(layers, model, ScoreKind::PhiGroup));
    return out;
}

// S_ij = mean_g(phi^(g)_ij) + lambda_var * Var_g(phi^(g)_ij), elementwise with
// an unweighted mean and population variance over groups.
inline ConnectionScore score_vr(const std::map<std::string, ConnectionScore>& group_scores,
                                const VrConfig& cfg) {
    if (group_scores.empty()) throw ShapeError("score_vr: no groups");
    if (cfg.lambda_var < 0.0 || !std::isfinite(cfg.lambda_var))
        throw ConfigError("score_vr: lambda_var must be finite and >= 0");

    const ConnectionScore& first = group_scores.begin()->second;
    for (const auto& [gid, score] : group_scores) {
        if (score.layers.size() != first.layers.size())
            throw ShapeError("score_vr: group '" + gid + "' layer count mismatch");
        for (std::size_t l = 0; l < score.layers.size(); ++l)
            if (!score.layers[l].same_shape(first.layers[l]))
                throw ShapeError("score_vr: group '" + gid + "' shape mismatch");
    }

    const double n_groups = static_cast<double>(group_scores.size());
    ConnectionScore out;
    out.kind = ScoreKind::VrScore;
    for (std::size_t l = 0; l < first.layers.size(); ++l) {
        Matrix s(first.layers[l].rows, first.layers[l].cols);
        for (std::size_t idx = 0; idx < s.data.size(); ++idx) {
            double mean = 0.0;
            for (const auto& [gid, score] : group_scores)
                mean += score.layers[l].data[idx];
            mean /= n_groups;
            double var = 0.0;
            for (const auto& [gid, score] : group_scores) {
                const double d = score.layers[l].data[idx] - mean;
                var += d * d;
            }
            var /= n_groups;
            s.data[idx] = mean + cfg.lambda_var * var;
        }
        out.layers.push_back(std::move(s));
    }
    return out;
}

// |W| of the masked weights; the magnitude-pruning criterion.
inline ConnectionScore abs_weight_scores(const MLPModel& model) {
    ConnectionScore out;
    out.kind = ScoreKind::AbsWeight;
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        Matrix m = model.effective_weights(l);
        for (double& v : m.data) v = std::abs(v);
        out.layers.push_back(std::move(m));
    }
    return out;
}

inline double achieved_sparsity(const PruneMask& mask) {
    std::size_t zeros = 0, total = 0;
    for (const auto& m : mask.layers) {
        total += m.size();
        for (double v : m.data)
            if (v == 0.0) ++zeros;
    }
    return total == 0 ? 0.0 : static_cast<double>(zeros) / static_cast<double>(total);
}

namespace detail {

struct Candidate {
    double score;
    std::uint32_t layer, row, col;

    bool operator<(const Candidate& o) const {
        return std::tie(score, layer, row, col) < std::tie(o.score, o.layer, o.row, o.col);
    }
};

// Zeroes the `count` lowest-ranked candidates on top of the model's current mask.
inline PruneMask mask_lowest(const MLPModel& model, std::vector<Candidate>& candidates,
                             std::size_t count) {
    std::sort(candidates.begin(), candidates.end());
    PruneMask mask;
    mask.layers = model.masks;
    for (std::size_t i = 0; i < count; ++i)
        mask.layers[candidates[i].layer](candidates[i].row, candidates[i].col) = 0.0;
    mask.achieved_sparsity = achieved_sparsity(mask);
    return mask;
}

}  // namespace detail

// Prunes the floor(s * N_active) smallest-score connections pooled across all
// layers; already-masked entries never re-enter the candidate pool. Ties break
// by (layer, row, col).
inline PruneMask prune_global_by_score(const MLPModel& model, const ConnectionScore& scores,
                                       double s) {
    if (!(s >= 0.0 && s < 1.0)) throw ConfigError("sparsity must be in [0, 1)");
    if (scores.layers.size() != model.layer_count())
        throw ShapeError("prune_global_by_score: score layer count mismatch");

    std::vector<detail::Candidate> candidates;
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        if (!scores.layers[l].same_shape(model.weights[l]))
            throw ShapeError("prune_global_by_score: score shape mismatch at layer " +
                             std::to_string(l));
        const Matrix& mask = model.masks[l];
        const Matrix& sc = scores.layers[l];
        for (std::size_t r = 0; r < mask.rows; ++r)
            for (std::size_t c = 0; c < mask.cols; ++c)
                if (mask(r, c) != 0.0)
                    candidates.push_back({sc(r, c), static_cast<std::uint32_t>(l),
                                          static_cast<std::uint32_t>(r),
                                          static_cast<std::uint32_t>(c)});
    }
    const std::size_t count = static_cast<std::size_t>(
        std::floor(s * static_cast<double>(candidates.size())));
    return detail::mask_lowest(model, candidates, count);
}

// Independent magnitude thresholds per layer: floor(s_l * N_l) smallest-|W|
// connections of each layer are removed.
inline PruneMask prune_layerwise(const MLPModel& model, const std::vector<double>& s_l) {
    if (s_l.size() != model.layer_count())
        throw ConfigError("prune_layerwise: need one sparsity per layer");
    for (double s : s_l)
        if (!(s >= 0.0 && s < 1.0)) throw ConfigError("sparsity must be in [0, 1)");

    PruneMask mask;
    mask.layers = model.masks;
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        const Matrix weff = model.effective_weights(l);
        std::vector<detail::Candidate> candidates;
        for (std::size_t r = 0; r < weff.rows; ++r)
            for (std::size_t c = 0; c < weff.cols; ++c)
                if (model.masks[l](r, c) != 0.0)
                    candidates.push_back({std::abs(weff(r, c)), static_cast<std::uint32_t>(l),
                                          static_cast<std::uint32_t>(r),
                                          static_cast<std::uint32_t>(c)});
        std::sort(candidates.begin(), candidates.end());
        const std::size_t count = static_cast<std::size_t>(
            std::floor(s_l[l] * static_cast<double>(candidates.size())));
        for (std::size_t i = 0; i < count; ++i)
            mask.layers[l](candidates[i].row, candidates[i].col) = 0.0;
    }
    mask.achieved_sparsity = achieved_sparsity(mask);
    return mask;
}

// Keeps the top-K hidden neurons per layer by L2 norm of their incoming masked
// weights (ties by neuron index) and rebuilds a smaller model: dropped rows
// disappear from W^(l)/b^(l) and the matching columns from W^(l+1). The
// reduced model computes exactly the same function as the masked original.
inline MLPModel prune_neurons_incoming_norm(const MLPModel& model,
                                            const std::vector<std::size_t>& keep_counts) {
    const std::size_t hidden_layers = model.layer_count() - 1;
    if (keep_counts.size() != hidden_layers)
        throw ConfigError("prune_neurons: need one budget per hidden layer");

    std::vector<std::vector<std::size_t>> retained(hidden_layers);
    for (std::size_t l = 0; l < hidden_layers; ++l) {
        const std::size_t width = model.layers[l].output_dim;
        if (keep_counts[l] < 1 || keep_counts[l] > width)
            throw ConfigError("prune_neurons: budget for layer " + std::to_string(l) +
                              " out of range [1, " + std::to_string(width) + "]");
        const Matrix weff = model.effective_weights(l);
        std::vector<std::pair<double, std::size_t>> ranked(width);
        for (std::size_t r = 0; r < width; ++r) {
            ranked[r] = {std::sqrt(dot(weff.row_ptr(r), weff.row_ptr(r), weff.cols)), r};
        }
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        retained[l].reserve(keep_counts[l]);
        for (std::size_t i = 0; i < keep_counts[l]; ++i)
            retained[l].push_back(ranked[i].second);
        std::sort(retained[l].begin(), retained[l].end());
    }

    MLPModel reduced;
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        const bool slice_rows = l < hidden_layers;
        const bool slice_cols = l > 0;
        const std::vector<std::size_t>* rows = slice_rows ? &retained[l] : nullptr;
        const std::vector<std::size_t>* cols = slice_cols ? &retained[l - 1] : nullptr;

        const std::size_t out_dim = rows ? rows->size() : model.layers[l].output_dim;
        const std::size_t in_dim = cols ? cols->size() : model.layers[l].input_dim;
        reduced.layers.push_back({in_dim, out_dim, model.layers[l].activation});

        Matrix w(out_dim, in_dim), m(out_dim, in_dim);
        std::vector<double> b(out_dim);
        for (std::size_t r = 0; r < out_dim; ++r) {
            const std::size_t src_r = rows ? (*rows)[r] : r;
            b[r] = model.biases[l][src_r];
            for (std::size_t c = 0; c < in_dim; ++c) {
                const std::size_t src_c = cols ? (*cols)[c] : c;
                w(r, c) = model.weights[l](src_r, src_c);
                m(r, c) = model.masks[l](src_r, src_c);
            }
        }
        reduced.weights.push_back(std::move(w));
        reduced.masks.push_back(std::move(m));
        reduced.biases.push_back(std::move(b));
    }
    return reduced;
}

// Uniform neuron budgets K_l = round((1 - s) * width_l), clamped to >= 1, so
// neuron pruning shares the sparsity axis with the connection methods.
inline std::vector<std::size_t> default_neuron_budgets(const MLPModel& model, double s) {
    if (!(s >= 0.0 && s < 1.0)) throw ConfigError("sparsity must be in [0, 1)");
    std::vector<std::size_t> budgets;
    for (std::size_t l = 0; l + 1 < model.layer_count(); ++l) {
        const double width = static_cast<double>(model.layers[l].output_dim);
        auto k = static_cast<std::size_t>(std::llround((1.0 - s) * width));
        budgets.push_back(std::clamp<std::size_t>(k, 1, model.layers[l].output_dim));
    }
    return budgets;
}

// Returns a copy of the model wearing the given mask.
inline MLPModel with_mask(const MLPModel& model, const PruneMask& mask) {
    if (mask.layers.size() != model.layer_count())
        throw ShapeError("with_mask: layer count mismatch");
    MLPModel out = model;
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        if (!mask.layers[l].same_shape(model.masks[l]))
            throw ShapeError("with_mask: shape mismatch at layer " + std::to_string(l));
        out.masks[l] = mask.layers[l];
    }
    return out;
}

}  // namespace vrp
