#pragma once
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "vrp/dataset.hpp"
#include "vrp/errors.hpp"
#include "vrp/matrix.hpp"
#include "vrp/rng.hpp"

namespace vrp {

enum class Activation { Relu, Linear };

inline std::string activation_name(Activation a) {
    return a == Activation::Relu ? "relu" : "linear";
}

inline Activation activation_from_name(const std::string& s) {
    if (s == "relu") return Activation::Relu;
    if (s == "linear") return Activation::Linear;
    throw ConfigError("unknown activation: " + s);
}

struct LayerSpec {
    std::size_t input_dim = 0;
    std::size_t output_dim = 0;
    Activation activation = Activation::Linear;
};

// Dense feed-forward regressor with a binary connection mask per layer.
// The effective weight of layer l is weights[l] .* masks[l]; entries with
// mask 0 contribute nothing to the forward pass and receive no update.
struct MLPModel {
    std::vector<LayerSpec> layers;
    std::vector<Matrix> weights;  // output_dim x input_dim
    std::vector<std::vector<double>> biases;
    std::vector<Matrix> masks;  // entries exactly 0 or 1

    std::size_t layer_count() const { return layers.size(); }
    std::size_t input_dim() const { return layers.front().input_dim; }

    Matrix effective_weights(std::size_t l) const {
        return hadamard(weights[l], masks[l]);
    }

    std::size_t weight_count() const {
        std::size_t n = 0;
        for (const auto& w : weights) n += w.size();
        return n;
    }

    std::size_t active_weight_count() const {
        std::size_t n = 0;
        for (const auto& m : masks)
            for (double v : m.data)
                if (v != 0.0) ++n;
        return n;
    }
};

inline std::vector<LayerSpec> mlp_specs(std::size_t input_dim,
                                        const std::vector<std::size_t>& hidden) {
    std::vector<LayerSpec> specs;
    std::size_t in = input_dim;
    for (std::size_t h : hidden) {
        specs.push_back({in, h, Activation::Relu});
        in = h;
    }
    specs.push_back({in, 1, Activation::Linear});
    return specs;
}

// The two reference architectures: one 256-unit hidden layer, and hidden
// layers of sizes 768/512/384/192, both with a scalar linear output.
inline std::vector<LayerSpec> two_layer_specs(std::size_t input_dim) {
    return mlp_specs(input_dim, {256});
}

inline std::vector<LayerSpec> five_layer_specs(std::size_t input_dim) {
    return mlp_specs(input_dim, {768, 512, 384, 192});
}

inline void validate_specs(const std::vector<LayerSpec>& specs) {
    if (specs.empty()) throw ConfigError("model needs at least one layer");
    for (const auto& s : specs) {
        if (s.input_dim == 0 || s.output_dim == 0)
            throw ConfigError("layer dimensions must be positive");
    }
    for (std::size_t l = 0; l + 1 < specs.size(); ++l) {
        if (specs[l].output_dim != specs[l + 1].input_dim) {
            throw ConfigError("layer " + std::to_string(l) + " output_dim " +
                              std::to_string(specs[l].output_dim) +
                              " does not match layer " + std::to_string(l + 1) +
                              " input_dim " + std::to_string(specs[l + 1].input_dim));
        }
    }
    const auto& last = specs.back();
    if (last.output_dim != 1 || last.activation != Activation::Linear)
        throw ConfigError("final layer must be a scalar linear output");
}

// He initialisation: W ~ N(0, 2/fan_in), biases zero, all mask entries 1.
inline MLPModel init_model(const std::vector<LayerSpec>& specs, std::uint64_t seed) {
    validate_specs(specs);
    Rng rng(seed);
    MLPModel model;
    model.layers = specs;
    for (const auto& s : specs) {
        Matrix w(s.output_dim, s.input_dim);
        const double stddev = std::sqrt(2.0 / static_cast<double>(s.input_dim));
        for (double& x : w.data) x = rng.normal(stddev);
        model.weights.push_back(std::move(w));
        model.biases.emplace_back(s.output_dim, 0.0);
        model.masks.push_back(Matrix::ones(s.output_dim, s.input_dim));
    }
    return model;
}

struct ForwardTrace {
    std::vector<Matrix> inputs;       // a^(l): batch x input_dim, inputs[0] is the raw batch
    std::vector<Matrix> preacts;      // z^(l): batch x output_dim
    std::vector<double> predictions;  // z of the final (scalar) layer
};

inline ForwardTrace forward(const MLPModel& model, const Matrix& batch) {
    if (batch.cols != model.input_dim()) {
        throw ShapeError("forward: batch has " + std::to_string(batch.cols) +
                         " features, model expects " + std::to_string(model.input_dim()));
    }
    ForwardTrace trace;
    trace.inputs.reserve(model.layer_count());
    trace.preacts.reserve(model.layer_count());
    Matrix act = batch;
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        trace.inputs.push_back(act);
        Matrix z = matmul_nt(act, model.effective_weights(l));
        const auto& b = model.biases[l];
        for (std::size_t i = 0; i < z.rows; ++i) {
            double* row = z.row_ptr(i);
            for (std::size_t j = 0; j < z.cols; ++j) row[j] += b[j];
        }
        if (l + 1 < model.layer_count()) {
            act = z;
            if (model.layers[l].activation == Activation::Relu) {
                for (double& x : act.data) x = x > 0.0 ? x : 0.0;
            }
        }
        trace.preacts.push_back(std::move(z));
    }
    const Matrix& out = trace.preacts.back();
    trace.predictions.resize(out.rows);
    for (std::size_t i = 0; i < out.rows; ++i) trace.predictions[i] = out(i, 0);
    return trace;
}

inline std::vector<double> predict(const MLPModel& model, const Matrix& batch) {
    return forward(model, batch).predictions;
}

struct BackwardTrace {
    std::vector<Matrix> preact_grads;  // dL/dz^(l): batch x output_dim
    std::vector<Matrix> weight_grads;  // output_dim x input_dim
    std::vector<std::vector<double>> bias_grads;
    double loss = 0.0;
};

// Backpropagation from an arbitrary per-sample dL/dprediction vector.
// Training uses the batch-mean MSE scaling; calibration feeds the unaveraged
// per-sample squared-error derivative instead.
inline BackwardTrace backprop(const MLPModel& model, const ForwardTrace& trace,
                              const std::vector<double>& dloss_dpred) {
    const std::size_t layer_count = model.layer_count();
    if (trace.preacts.size() != layer_count || trace.inputs.size() != layer_count)
        throw ShapeError("backprop: trace does not match model");
    const std::size_t batch = trace.preacts.back().rows;
    if (dloss_dpred.size() != batch)
        throw ShapeError("backprop: dloss/dpred length does not match batch");

    BackwardTrace grads;
    grads.preact_grads.resize(layer_count);
    grads.weight_grads.resize(layer_count);
    grads.bias_grads.resize(layer_count);

    Matrix dz(batch, 1);
    for (std::size_t i = 0; i < batch; ++i) dz(i, 0) = dloss_dpred[i];

    for (std::size_t li = layer_count; li-- > 0;) {
        const Matrix& a = trace.inputs[li];

        // dW = dz^T * a, db = column sums of dz
        Matrix dw(dz.cols, a.cols);
        std::vector<double> db(dz.cols, 0.0);
        for (std::size_t b = 0; b < batch; ++b) {
            const double* zrow = dz.row_ptr(b);
            const double* arow = a.row_ptr(b);
            for (std::size_t j = 0; j < dz.cols; ++j) {
                const double g = zrow[j];
                db[j] += g;
                if (g != 0.0) {
                    double* wrow = dw.row_ptr(j);
                    for (std::size_t i = 0; i < a.cols; ++i) wrow[i] += g * arow[i];
                }
            }
        }
        grads.weight_grads[li] = std::move(dw);
        grads.bias_grads[li] = std::move(db);
        grads.preact_grads[li] = dz;

        if (li == 0) break;

        // da^(l) = dz^(l) * W_eff^(l), then through the previous activation.
        const Matrix weff = model.effective_weights(li);
        Matrix da(batch, weff.cols);
        for (std::size_t b = 0; b < batch; ++b) {
            const double* zrow = dz.row_ptr(b);
            double* drow = da.row_ptr(b);
            for (std::size_t j = 0; j < weff.rows; ++j) {
                const double g = zrow[j];
                if (g == 0.0) continue;
                const double* wrow = weff.row_ptr(j);
                for (std::size_t i = 0; i < weff.cols; ++i) drow[i] += g * wrow[i];
            }
        }
        if (model.layers[li - 1].activation == Activation::Relu) {
            const Matrix& zprev = trace.preacts[li - 1];
            for (std::size_t i = 0; i < da.data.size(); ++i) {
                if (zprev.data[i] <= 0.0) da.data[i] = 0.0;
            }
        }
        dz = std::move(da);
    }
    return grads;
}

// Gradients of the batch-mean squared error. Gradients at masked-out weights
// are reported as-is; the optimizer re-applies the mask.
inline BackwardTrace backward(const MLPModel& model, const ForwardTrace& trace,
                              const std::vector<double>& targets) {
    const std::size_t batch = trace.predictions.size();
    if (targets.size() != batch)
        throw ShapeError("backward: targets length does not match batch size");
    if (batch == 0) throw ShapeError("backward: empty batch");

    std::vector<double> dpred(batch);
    double loss = 0.0;
    const double inv_batch = 1.0 / static_cast<double>(batch);
    for (std::size_t i = 0; i < batch; ++i) {
        const double err = trace.predictions[i] - targets[i];
        loss += err * err;
        dpred[i] = 2.0 * err * inv_batch;
    }
    BackwardTrace grads = backprop(model, trace, dpred);
    grads.loss = loss * inv_batch;
    return grads;
}

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 200;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;
};

inline void validate_train_config(const TrainConfig& c) {
    if (c.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(c.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (c.beta1 < 0.0 || c.beta1 >= 1.0 || c.beta2 < 0.0 || c.beta2 >= 1.0)
        throw ConfigError("beta1/beta2 must be in [0, 1)");
}

struct AdamState {
    std::vector<Matrix> m_w, v_w;
    std::vector<std::vector<double>> m_b, v_b;
    std::size_t step = 0;

    static AdamState init(const MLPModel& model) {
        AdamState s;
        for (std::size_t l = 0; l < model.layer_count(); ++l) {
            s.m_w.emplace_back(model.weights[l].rows, model.weights[l].cols);
            s.v_w.emplace_back(model.weights[l].rows, model.weights[l].cols);
            s.m_b.emplace_back(model.biases[l].size(), 0.0);
            s.v_b.emplace_back(model.biases[l].size(), 0.0);
        }
        return s;
    }
};

// Standard Adam with bias correction. Gradients at pruned weights are zeroed
// before the moment update and the mask is re-applied afterwards, so pruned
// weights stay exactly 0.
inline void adam_step(MLPModel& model, const BackwardTrace& grads, AdamState& state,
                      const TrainConfig& cfg) {
    if (state.m_w.size() != model.layer_count())
        throw ShapeError("adam_step: state does not match model");
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);

    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        Matrix& w = model.weights[l];
        const Matrix& mask = model.masks[l];
        const Matrix& gw = grads.weight_grads[l];
        if (!w.same_shape(gw)) throw ShapeError("adam_step: gradient shape mismatch");
        Matrix& mw = state.m_w[l];
        Matrix& vw = state.v_w[l];
        for (std::size_t i = 0; i < w.data.size(); ++i) {
            const double g = gw.data[i] * mask.data[i];
            mw.data[i] = cfg.beta1 * mw.data[i] + (1.0 - cfg.beta1) * g;
            vw.data[i] = cfg.beta2 * vw.data[i] + (1.0 - cfg.beta2) * g * g;
            const double mhat = mw.data[i] / bc1;
            const double vhat = vw.data[i] / bc2;
            w.data[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
            w.data[i] *= mask.data[i];
        }
        auto& b = model.biases[l];
        const auto& gb = grads.bias_grads[l];
        auto& mb = state.m_b[l];
        auto& vb = state.v_b[l];
        for (std::size_t i = 0; i < b.size(); ++i) {
            mb[i] = cfg.beta1 * mb[i] + (1.0 - cfg.beta1) * gb[i];
            vb[i] = cfg.beta2 * vb[i] + (1.0 - cfg.beta2) * gb[i] * gb[i];
            b[i] -= cfg.learning_rate * (mb[i] / bc1) / (std::sqrt(vb[i] / bc2) + cfg.epsilon);
        }
    }
}

// Mini-batch training with a per-epoch Fisher-Yates shuffle; the last partial
// batch is kept. Returns the per-epoch training MSE (each sample counted once).
inline std::vector<double> train(MLPModel& model, const WindowedDataset& train_set,
                                 const TrainConfig& cfg) {
    validate_train_config(cfg);
    if (train_set.empty()) throw DataError("train: empty dataset");
    if (train_set.features.cols != model.input_dim())
        throw ShapeError("train: dataset width does not match model input");

    const std::size_t n = train_set.size();
    AdamState state = AdamState::init(model);
    Rng rng(cfg.seed);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    std::vector<double> history;
    history.reserve(cfg.epochs);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_sq_err = 0.0;
        for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
            const std::size_t end = std::min(n, begin + cfg.batch_size);
            const std::size_t b = end - begin;
            Matrix batch(b, train_set.features.cols);
            std::vector<double> targets(b);
            for (std::size_t i = 0; i < b; ++i) {
                const std::size_t src = order[begin + i];
                const double* row = train_set.features.row_ptr(src);
                std::copy(row, row + train_set.features.cols, batch.row_ptr(i));
                targets[i] = train_set.targets[src];
            }
            ForwardTrace trace = forward(model, batch);
            BackwardTrace grads = backward(model, trace, targets);
            adam_step(model, grads, state, cfg);
            epoch_sq_err += grads.loss * static_cast<double>(b);
        }
        const double epoch_loss = epoch_sq_err / static_cast<double>(n);
        if (!std::isfinite(epoch_loss))
            throw NumericError("train: loss diverged at epoch " + std::to_string(epoch));
        history.push_back(epoch_loss);
    }
    return history;
}

}  // namespace vrp
