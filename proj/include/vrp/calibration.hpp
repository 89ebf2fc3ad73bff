#pragma once
#include <algorithm>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "vrp/dataset.hpp"
#include "vrp/errors.hpp"
#include "vrp/nn.hpp"

namespace vrp {

// Second moments gathered in the calibration pass for one layer:
// act_sq[i] = E[a_i^2] over the layer's inputs, grad_sq[j] = E[g_j^2] over
// its pre-activation gradients.
struct LayerMoments {
    std::vector<double> act_sq;
    std::vector<double> grad_sq;
    std::size_t sample_count = 0;
};

struct CalibrationStats {
    std::vector<LayerMoments> global;
    std::map<std::string, std::vector<LayerMoments>> per_group;
};

namespace detail {

struct MomentAccumulator {
    std::vector<std::vector<double>> act_sum;
    std::vector<std::vector<double>> grad_sum;
    std::size_t count = 0;

    explicit MomentAccumulator(const MLPModel& model) {
        for (const auto& spec : model.layers) {
            act_sum.emplace_back(spec.input_dim, 0.0);
            grad_sum.emplace_back(spec.output_dim, 0.0);
        }
    }

    void add(const ForwardTrace& trace, const BackwardTrace& grads) {
        for (std::size_t l = 0; l < act_sum.size(); ++l) {
            const Matrix& a = trace.inputs[l];
            for (std::size_t b = 0; b < a.rows; ++b) {
                const double* row = a.row_ptr(b);
                for (std::size_t i = 0; i < a.cols; ++i)
                    act_sum[l][i] += row[i] * row[i];
            }
            const Matrix& g = grads.preact_grads[l];
            for (std::size_t b = 0; b < g.rows; ++b) {
                const double* row = g.row_ptr(b);
                for (std::size_t j = 0; j < g.cols; ++j)
                    grad_sum[l][j] += row[j] * row[j];
            }
        }
        count += trace.predictions.size();
    }

    std::vector<LayerMoments> finalize() const {
        std::vector<LayerMoments> out;
        const double n = static_cast<double>(count);
        for (std::size_t l = 0; l < act_sum.size(); ++l) {
            LayerMoments m;
            m.sample_count = count;
            m.act_sq.resize(act_sum[l].size());
            m.grad_sq.resize(grad_sum[l].size());
            for (std::size_t i = 0; i < m.act_sq.size(); ++i)
                m.act_sq[i] = act_sum[l][i] / n;
            for (std::size_t j = 0; j < m.grad_sq.size(); ++j)
                m.grad_sq[j] = grad_sum[l][j] / n;
            out.push_back(std::move(m));
        }
        return out;
    }
};

}  // namespace detail

// One forward/backward pass over the calibration set. Gradients use the
// unaveraged per-sample squared error, so group and global moments are plain
// means of the same per-sample quantities. Groups are processed in sorted id
// order and the model is left untouched.
inline CalibrationStats calibrate(const MLPModel& model, const WindowedDataset& calib) {
    if (calib.empty()) throw DataError("calibrate: empty calibration set");
    if (calib.features.cols != model.input_dim())
        throw ShapeError("calibrate: dataset width does not match model input");

    std::map<std::string, std::vector<std::size_t>> group_rows;
    for (std::size_t i = 0; i < calib.size(); ++i)
        group_rows[calib.group_ids[i]].push_back(i);

    detail::MomentAccumulator global_acc(model);
    CalibrationStats stats;
    for (const auto& [gid, rows] : group_rows) {
        if (rows.size() < 2)
            std::cerr << "warning: calibration group '" << gid << "' has "
                      << rows.size() << " sample(s); its moments will be noisy\n";
        Matrix batch(rows.size(), calib.features.cols);
        std::vector<double> targets(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const double* src = calib.features.row_ptr(rows[i]);
            std::copy(src, src + calib.features.cols, batch.row_ptr(i));
            targets[i] = calib.targets[rows[i]];
        }
        ForwardTrace trace = forward(model, batch);
        std::vector<double> dpred(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i)
            dpred[i] = 2.0 * (trace.predictions[i] - targets[i]);
        BackwardTrace grads = backprop(model, trace, dpred);

        detail::MomentAccumulator group_acc(model);
        group_acc.add(trace, grads);
        global_acc.add(trace, grads);
        stats.per_group[gid] = group_acc.finalize();
    }
    stats.global = global_acc.finalize();
    return stats;
}

// Sample-count-weighted mean of the per-group moments; reproduces the global
// moments up to floating-point association.
inline std::vector<LayerMoments> merge_group_moments(const CalibrationStats& stats) {
    if (stats.per_group.empty()) throw ShapeError("merge_group_moments: no groups");
    const std::size_t layer_count = stats.global.size();
    std::vector<LayerMoments> merged(layer_count);
    std::size_t total = 0;
    for (const auto& [gid, layers] : stats.per_group) {
        if (layers.size() != layer_count)
            throw ShapeError("merge_group_moments: group '" + gid +
                             "' has a different layer count");
        total += layers.front().sample_count;
    }
    for (std::size_t l = 0; l < layer_count; ++l) {
        merged[l].act_sq.assign(stats.global[l].act_sq.size(), 0.0);
        merged[l].grad_sq.assign(stats.global[l].grad_sq.size(), 0.0);
        merged[l].sample_count = total;
        for (const auto& [gid, layers] : stats.per_group) {
            const double w = static_cast<double>(layers[l].sample_count) /
                             static_cast<double>(total);
            for (std::size_t i = 0; i < merged[l].act_sq.size(); ++i)
                merged[l].act_sq[i] += w * layers[l].act_sq[i];
            for (std::size_t j = 0; j < merged[l].grad_sq.size(); ++j)
                merged[l].grad_sq[j] += w * layers[l].grad_sq[j];
        }
    }
    return merged;
}

}  // namespace vrp
