#pragma once
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "vrp/dataset.hpp"
#include "vrp/errors.hpp"
#include "vrp/matrix.hpp"
#include "vrp/rng.hpp"

namespace vrp {

// One gameplay session: telemetry rows on a uniform 1 Hz grid plus the raw
// (unbounded) arousal annotation stream aligned to the same timestamps.
struct SessionTrace {
    std::string participant_id;
    std::string game_id;
    std::vector<double> timestamps;
    Matrix features;  // time x raw_feature_dim
    std::vector<double> arousal;
    std::vector<std::string> feature_names;

    std::size_t length() const { return timestamps.size(); }
};

struct PreprocessConfig {
    double window_seconds = 3.0;
    double overlap_seconds = 1.0;
    double label_shift_seconds = 1.0;
    double variance_threshold = 0.01;
};

inline void validate_preprocess_config(const PreprocessConfig& c) {
    if (!(c.overlap_seconds >= 0.0) || !(c.overlap_seconds < c.window_seconds))
        throw ConfigError("preprocess: need 0 <= overlap < window");
    if (c.label_shift_seconds < 0.0) throw ConfigError("preprocess: shift must be >= 0");
    if (c.variance_threshold < 0.0) throw ConfigError("preprocess: threshold must be >= 0");
}

// ---------------------------------------------------------------------------
// Session CSV ingestion
//
// Schema: header `timestamp,participant_id,game_id,arousal,<feature_1>,...`,
// UTF-8, decimal point, one file per session, timestamps in seconds.
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

inline double parse_cell(const std::string& cell, const std::string& file,
                         std::size_t row, const std::string& column) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(cell, &pos);
        if (pos != cell.size()) throw std::invalid_argument(cell);
        if (!std::isfinite(v)) {
            throw DataError(file + ": row " + std::to_string(row) +
                            ": non-finite value in column " + column);
        }
        return v;
    } catch (const DataError&) {
        throw;
    } catch (const std::exception&) {
        throw DataError(file + ": row " + std::to_string(row) +
                        ": cannot parse '" + cell + "' in column " + column);
    }
}

}  // namespace detail

inline SessionTrace load_session_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open session file " + path.string());
    const std::string fname = path.filename().string();

    std::string line;
    if (!std::getline(in, line)) throw DataError(fname + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = detail::split_csv_line(line);
    const std::vector<std::string> required = {"timestamp", "participant_id", "game_id",
                                               "arousal"};
    if (header.size() < required.size())
        throw DataError(fname + ": header is missing required columns");
    for (std::size_t i = 0; i < required.size(); ++i) {
        if (header[i] != required[i])
            throw DataError(fname + ": expected column '" + required[i] + "' at position " +
                            std::to_string(i) + ", found '" + header[i] + "'");
    }

    SessionTrace trace;
    trace.feature_names.assign(header.begin() + 4, header.end());
    const std::size_t dim = trace.feature_names.size();

    std::vector<std::vector<double>> rows;
    std::size_t row_no = 1;
    while (std::getline(in, line)) {
        ++row_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw DataError(fname + ": row " + std::to_string(row_no) + ": expected " +
                            std::to_string(header.size()) + " cells, found " +
                            std::to_string(cells.size()));
        const double ts = detail::parse_cell(cells[0], fname, row_no, "timestamp");
        if (!trace.timestamps.empty() && ts <= trace.timestamps.back())
            throw DataError(fname + ": row " + std::to_string(row_no) +
                            ": timestamps must be strictly increasing");
        if (trace.timestamps.empty()) {
            trace.participant_id = cells[1];
            trace.game_id = cells[2];
        } else if (cells[1] != trace.participant_id || cells[2] != trace.game_id) {
            throw DataError(fname + ": row " + std::to_string(row_no) +
                            ": participant/game id changes within one session file");
        }
        trace.timestamps.push_back(ts);
        trace.arousal.push_back(detail::parse_cell(cells[3], fname, row_no, "arousal"));
        std::vector<double> feat(dim);
        for (std::size_t j = 0; j < dim; ++j)
            feat[j] = detail::parse_cell(cells[4 + j], fname, row_no, trace.feature_names[j]);
        rows.push_back(std::move(feat));
    }
    if (rows.empty()) throw DataError(fname + ": no data rows");

    trace.features = Matrix(rows.size(), dim);
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(rows[i].begin(), rows[i].end(), trace.features.row_ptr(i));
    return trace;
}

// Nearest-sample resampling onto a uniform 1 Hz grid starting at the first
// timestamp. Ties pick the earlier sample.
inline SessionTrace resample_1hz(const SessionTrace& trace) {
    const std::size_t n = trace.length();
    const double t0 = trace.timestamps.front();
    const double span = trace.timestamps.back() - t0;
    const std::size_t grid_len = static_cast<std::size_t>(std::floor(span)) + 1;

    SessionTrace out;
    out.participant_id = trace.participant_id;
    out.game_id = trace.game_id;
    out.feature_names = trace.feature_names;
    out.features = Matrix(grid_len, trace.features.cols);
    out.timestamps.resize(grid_len);
    out.arousal.resize(grid_len);

    std::size_t cursor = 0;
    for (std::size_t k = 0; k < grid_len; ++k) {
        const double t = t0 + static_cast<double>(k);
        while (cursor + 1 < n &&
               std::abs(trace.timestamps[cursor + 1] - t) <
                   std::abs(trace.timestamps[cursor] - t)) {
            ++cursor;
        }
        out.timestamps[k] = t;
        out.arousal[k] = trace.arousal[cursor];
        const double* src = trace.features.row_ptr(cursor);
        std::copy(src, src + trace.features.cols, out.features.row_ptr(k));
    }
    return out;
}

// Loads every *.csv under `path` (or a single file), in sorted filename order,
// resampled to the 1 Hz grid.
inline std::vector<SessionTrace> load_sessions(const std::filesystem::path& path) {
    namespace fs = std::filesystem;
    std::vector<fs::path> files;
    if (fs::is_regular_file(path)) {
        files.push_back(path);
    } else if (fs::is_directory(path)) {
        for (const auto& entry : fs::directory_iterator(path)) {
            if (entry.is_regular_file() && entry.path().extension() == ".csv")
                files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
    } else {
        throw DataError("data path does not exist: " + path.string());
    }
    if (files.empty()) throw DataError("no session CSV files under " + path.string());

    std::vector<SessionTrace> traces;
    traces.reserve(files.size());
    for (const auto& f : files) traces.push_back(resample_1hz(load_session_csv(f)));
    return traces;
}

// ---------------------------------------------------------------------------
// Windowing and label handling
// ---------------------------------------------------------------------------

struct Window {
    std::vector<double> features;  // per-timestep vectors concatenated in time order
    std::size_t start = 0;         // first timestep index
    std::size_t steps = 0;         // timesteps covered
};

struct WindowingResult {
    std::vector<Window> windows;
    bool too_short = false;  // trace shorter than one window
};

// Sliding windows with stride = window - overlap on the 1 Hz grid;
// count = floor((T - W) / stride) + 1.
inline WindowingResult window_features(const SessionTrace& trace,
                                       const PreprocessConfig& cfg) {
    validate_preprocess_config(cfg);
    const std::size_t w = static_cast<std::size_t>(std::llround(cfg.window_seconds));
    const std::size_t stride =
        static_cast<std::size_t>(std::llround(cfg.window_seconds - cfg.overlap_seconds));
    if (w == 0 || stride == 0) throw ConfigError("window and stride must round to >= 1 s");

    WindowingResult result;
    const std::size_t t_len = trace.length();
    if (t_len < w) {
        result.too_short = true;
        return result;
    }
    const std::size_t count = (t_len - w) / stride + 1;
    const std::size_t dim = trace.features.cols;
    result.windows.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        Window win;
        win.start = k * stride;
        win.steps = w;
        win.features.resize(w * dim);
        for (std::size_t s = 0; s < w; ++s) {
            const double* row = trace.features.row_ptr(win.start + s);
            std::copy(row, row + dim, win.features.begin() + s * dim);
        }
        result.windows.push_back(std::move(win));
    }
    return result;
}

inline std::vector<std::string> windowed_feature_names(
    const std::vector<std::string>& names, std::size_t steps) {
    std::vector<std::string> out;
    out.reserve(names.size() * steps);
    for (std::size_t s = 0; s < steps; ++s)
        for (const auto& n : names) out.push_back(n + "@t" + std::to_string(s));
    return out;
}

// Reaction-delay compensation: the value reported at time t becomes the
// annotation at t + shift; the final `shift` seconds are dropped.
inline std::vector<double> shift_labels(const std::vector<double>& arousal,
                                        std::size_t shift_steps) {
    if (shift_steps >= arousal.size()) return {};
    return std::vector<double>(arousal.begin() + shift_steps, arousal.end());
}

struct WindowLabels {
    std::vector<double> targets;           // one per kept window
    std::vector<std::size_t> kept_windows; // indices into the window list
};

inline WindowLabels average_labels(const std::vector<double>& labels,
                                   const std::vector<Window>& windows) {
    WindowLabels out;
    for (std::size_t k = 0; k < windows.size(); ++k) {
        const std::size_t begin = windows[k].start;
        const std::size_t end = std::min(labels.size(), begin + windows[k].steps);
        if (begin >= end) continue;  // window lost all labels to the shift
        double s = 0.0;
        for (std::size_t i = begin; i < end; ++i) s += labels[i];
        out.targets.push_back(s / static_cast<double>(end - begin));
        out.kept_windows.push_back(k);
    }
    return out;
}

inline WindowLabels shift_and_average_labels(const SessionTrace& trace,
                                             const std::vector<Window>& windows,
                                             const PreprocessConfig& cfg) {
    const std::size_t shift =
        static_cast<std::size_t>(std::llround(cfg.label_shift_seconds));
    return average_labels(shift_labels(trace.arousal, shift), windows);
}

// Per-trace min-max normalisation of a label stream; a constant stream maps to 0.
inline std::vector<double> normalize_to_unit(const std::vector<double>& values) {
    if (values.empty()) return {};
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    const double lo = *mn, hi = *mx;
    std::vector<double> out(values.size(), 0.0);
    if (hi > lo) {
        const double range = hi - lo;
        for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - lo) / range;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Column normalisation and variance filtering
// ---------------------------------------------------------------------------

struct MinMaxStats {
    std::vector<double> min;
    std::vector<double> max;
};

inline MinMaxStats minmax_fit(const WindowedDataset& ds) {
    if (ds.empty()) throw DataError("minmax_fit: empty dataset");
    MinMaxStats stats;
    stats.min.assign(ds.features.cols, 0.0);
    stats.max.assign(ds.features.cols, 0.0);
    for (std::size_t j = 0; j < ds.features.cols; ++j) {
        double lo = ds.features(0, j), hi = ds.features(0, j);
        for (std::size_t i = 1; i < ds.features.rows; ++i) {
            lo = std::min(lo, ds.features(i, j));
            hi = std::max(hi, ds.features(i, j));
        }
        stats.min[j] = lo;
        stats.max[j] = hi;
    }
    return stats;
}

// Maps columns through (x - min) / (max - min) with clipping to [0, 1];
// constant columns (max == min) map to 0.
inline WindowedDataset apply_minmax(const WindowedDataset& ds, const MinMaxStats& stats) {
    if (stats.min.size() != ds.features.cols)
        throw ShapeError("apply_minmax: stats width mismatch");
    WindowedDataset out = ds;
    for (std::size_t j = 0; j < ds.features.cols; ++j) {
        const double lo = stats.min[j];
        const double range = stats.max[j] - lo;
        for (std::size_t i = 0; i < ds.features.rows; ++i) {
            double v = 0.0;
            if (range > 0.0) v = std::clamp((ds.features(i, j) - lo) / range, 0.0, 1.0);
            out.features(i, j) = v;
        }
    }
    return out;
}

inline std::pair<WindowedDataset, MinMaxStats> minmax_normalize(const WindowedDataset& ds) {
    MinMaxStats stats = minmax_fit(ds);
    return {apply_minmax(ds, stats), stats};
}

// Indices of columns whose population variance is >= threshold, order preserved.
inline std::vector<std::size_t> variance_filter(const WindowedDataset& ds,
                                                double threshold) {
    if (ds.empty()) throw DataError("variance_filter: empty dataset");
    std::vector<std::size_t> keep;
    const double n = static_cast<double>(ds.features.rows);
    for (std::size_t j = 0; j < ds.features.cols; ++j) {
        double m = 0.0;
        for (std::size_t i = 0; i < ds.features.rows; ++i) m += ds.features(i, j);
        m /= n;
        double var = 0.0;
        for (std::size_t i = 0; i < ds.features.rows; ++i) {
            const double d = ds.features(i, j) - m;
            var += d * d;
        }
        var /= n;
        if (var >= threshold) keep.push_back(j);
    }
    if (keep.empty())
        throw DataError("variance_filter: every feature column fell below the threshold");
    return keep;
}

inline WindowedDataset select_columns(const WindowedDataset& ds,
                                      const std::vector<std::size_t>& indices) {
    WindowedDataset out;
    out.targets = ds.targets;
    out.group_ids = ds.group_ids;
    out.features = Matrix(ds.features.rows, indices.size());
    for (std::size_t i = 0; i < ds.features.rows; ++i)
        for (std::size_t j = 0; j < indices.size(); ++j)
            out.features(i, j) = ds.features(i, indices[j]);
    out.feature_names.reserve(indices.size());
    for (std::size_t j : indices) out.feature_names.push_back(ds.feature_names[j]);
    return out;
}

// ---------------------------------------------------------------------------
// Participant-disjoint splitting and the full preprocessing pass
// ---------------------------------------------------------------------------

struct SplitRatios {
    double train = 0.6;
    double val = 0.2;
    double test = 0.2;
};

inline void validate_ratios(const SplitRatios& r) {
    if (!(r.train > 0.0 && r.val > 0.0 && r.test > 0.0))
        throw ConfigError("split ratios must be positive");
    if (std::abs(r.train + r.val + r.test - 1.0) > 1e-9)
        throw ConfigError("split ratios must sum to 1");
}

struct ParticipantPartition {
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::vector<std::string> test;
};

// Shuffles the sorted participant set with the seed and cuts by cumulative
// ratio on participant count.
inline ParticipantPartition split_participants(std::vector<std::string> ids,
                                               const SplitRatios& ratios,
                                               std::uint64_t seed) {
    validate_ratios(ratios);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    if (ids.size() < 3) throw DataError("split needs at least 3 participants");

    Rng rng(seed);
    rng.shuffle(ids);
    const double n = static_cast<double>(ids.size());
    const std::size_t c1 = static_cast<std::size_t>(std::floor(n * ratios.train));
    const std::size_t c2 =
        static_cast<std::size_t>(std::floor(n * (ratios.train + ratios.val)));

    ParticipantPartition part;
    part.train.assign(ids.begin(), ids.begin() + c1);
    part.val.assign(ids.begin() + c1, ids.begin() + c2);
    part.test.assign(ids.begin() + c2, ids.end());
    if (part.train.empty() || part.val.empty() || part.test.empty())
        throw ConfigError("split ratios leave an empty partition");
    return part;
}

// Windows the sessions of one partition. Labels are shifted, then normalised
// per trace, then averaged per window; features stay raw here.
inline WindowedDataset build_windowed(const std::vector<const SessionTrace*>& sessions,
                                      const PreprocessConfig& cfg) {
    WindowedDataset ds;
    std::vector<std::vector<double>> rows;
    const std::size_t shift =
        static_cast<std::size_t>(std::llround(cfg.label_shift_seconds));
    for (const SessionTrace* trace : sessions) {
        WindowingResult wr = window_features(*trace, cfg);
        if (wr.too_short) {
            std::cerr << "warning: session of participant " << trace->participant_id
                      << " is shorter than one window; skipped\n";
            continue;
        }
        const std::vector<double> labels =
            normalize_to_unit(shift_labels(trace->arousal, shift));
        WindowLabels wl = average_labels(labels, wr.windows);
        for (std::size_t k = 0; k < wl.kept_windows.size(); ++k) {
            rows.push_back(std::move(wr.windows[wl.kept_windows[k]].features));
            ds.targets.push_back(wl.targets[k]);
            ds.group_ids.push_back(trace->participant_id);
        }
        if (ds.feature_names.empty() && !wr.windows.empty())
            ds.feature_names =
                windowed_feature_names(trace->feature_names, wr.windows.front().steps);
    }
    if (!rows.empty()) {
        ds.features = Matrix(rows.size(), rows.front().size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != ds.features.cols)
                throw DataError("sessions disagree on raw feature dimensionality");
            std::copy(rows[i].begin(), rows[i].end(), ds.features.row_ptr(i));
        }
    }
    return ds;
}

// Full preprocessing pass: participant-disjoint split, windowing, label
// shift/normalise/average, feature min-max fitted on train (applied with
// clipping elsewhere), and the train-fitted variance filter.
inline EnvironmentSplit split_by_participant(const std::vector<SessionTrace>& sessions,
                                             const SplitRatios& ratios, std::uint64_t seed,
                                             const PreprocessConfig& cfg = {}) {
    validate_preprocess_config(cfg);
    std::vector<std::string> ids;
    ids.reserve(sessions.size());
    for (const auto& s : sessions) ids.push_back(s.participant_id);
    ParticipantPartition part = split_participants(ids, ratios, seed);

    auto collect = [&](const std::vector<std::string>& members) {
        std::set<std::string> want(members.begin(), members.end());
        std::vector<const SessionTrace*> out;
        for (const auto& s : sessions)
            if (want.count(s.participant_id)) out.push_back(&s);
        return out;
    };

    WindowedDataset train_raw = build_windowed(collect(part.train), cfg);
    WindowedDataset val_raw = build_windowed(collect(part.val), cfg);
    WindowedDataset test_raw = build_windowed(collect(part.test), cfg);
    if (train_raw.empty()) throw DataError("training partition produced no windows");
    if (val_raw.empty()) throw DataError("validation partition produced no windows");
    if (test_raw.empty()) throw DataError("test partition produced no windows");

    auto [train_norm, stats] = minmax_normalize(train_raw);
    WindowedDataset val_norm = apply_minmax(val_raw, stats);
    WindowedDataset test_norm = apply_minmax(test_raw, stats);

    const std::vector<std::size_t> keep =
        variance_filter(train_norm, cfg.variance_threshold);

    EnvironmentSplit split;
    split.train = select_columns(train_norm, keep);
    split.val = select_columns(val_norm, keep);
    split.test = select_columns(test_norm, keep);
    return split;
}

// ---------------------------------------------------------------------------
// Synthetic multi-environment data
// ---------------------------------------------------------------------------

struct SyntheticConfig {
    std::size_t n_participants = 20;
    std::size_t samples_per_participant = 300;
    std::size_t n_stable_features = 10;
    std::size_t n_spurious_features = 30;
    double noise_std = 0.1;
    double spurious_coeff_std = 0.5;
    std::uint64_t seed = 0;
};

inline void validate_synthetic_config(const SyntheticConfig& c) {
    if (c.n_participants < 1 || c.samples_per_participant < 1 ||
        c.n_stable_features < 1 || c.n_spurious_features < 1)
        throw ConfigError("synthetic: counts must be >= 1");
    if (c.noise_std < 0.0 || c.spurious_coeff_std < 0.0)
        throw ConfigError("synthetic: std values must be >= 0");
}

// Parameters the generator drew, plus the affine label squash
// y_unit = (y_raw - y_offset) / y_scale. Exposed so tests can undo the squash.
struct SyntheticTruth {
    std::vector<double> stable_coeffs;
    std::map<std::string, std::vector<double>> spurious_coeffs;
    double y_offset = 0.0;
    double y_scale = 1.0;
};

struct SyntheticData {
    std::vector<SessionTrace> sessions;
    SyntheticTruth truth;
};

// Stable features share one coefficient vector; spurious features get
// participant-specific coefficients, which is what makes per-participant
// input-output relationships drift.
inline SyntheticData generate_synthetic_with_truth(const SyntheticConfig& cfg) {
    validate_synthetic_config(cfg);
    Rng rng(cfg.seed);
    const std::size_t dim = cfg.n_stable_features + cfg.n_spurious_features;

    SyntheticData out;
    out.truth.stable_coeffs.resize(cfg.n_stable_features);
    for (double& b : out.truth.stable_coeffs) b = rng.normal();

    std::vector<std::vector<double>> raw_targets(cfg.n_participants);
    for (std::size_t p = 0; p < cfg.n_participants; ++p) {
        std::string pid = "p";
        const std::string num = std::to_string(p);
        pid += std::string(num.size() < 3 ? 3 - num.size() : 0, '0') + num;

        std::vector<double> spur(cfg.n_spurious_features);
        for (double& b : spur) b = rng.normal(cfg.spurious_coeff_std);

        SessionTrace trace;
        trace.participant_id = pid;
        trace.game_id = "synthetic";
        trace.features = Matrix(cfg.samples_per_participant, dim);
        trace.timestamps.resize(cfg.samples_per_participant);
        trace.arousal.resize(cfg.samples_per_participant);
        for (std::size_t j = 0; j < cfg.n_stable_features; ++j)
            trace.feature_names.push_back("stable_" + std::to_string(j));
        for (std::size_t j = 0; j < cfg.n_spurious_features; ++j)
            trace.feature_names.push_back("spurious_" + std::to_string(j));

        raw_targets[p].resize(cfg.samples_per_participant);
        for (std::size_t t = 0; t < cfg.samples_per_participant; ++t) {
            trace.timestamps[t] = static_cast<double>(t);
            double y = rng.normal(cfg.noise_std);
            double* row = trace.features.row_ptr(t);
            for (std::size_t j = 0; j < dim; ++j) row[j] = rng.normal();
            for (std::size_t j = 0; j < cfg.n_stable_features; ++j)
                y += out.truth.stable_coeffs[j] * row[j];
            for (std::size_t j = 0; j < cfg.n_spurious_features; ++j)
                y += spur[j] * row[cfg.n_stable_features + j];
            raw_targets[p][t] = y;
        }
        out.truth.spurious_coeffs[pid] = std::move(spur);
        out.sessions.push_back(std::move(trace));
    }

    double lo = raw_targets[0][0], hi = raw_targets[0][0];
    for (const auto& ys : raw_targets)
        for (double y : ys) {
            lo = std::min(lo, y);
            hi = std::max(hi, y);
        }
    out.truth.y_offset = lo;
    out.truth.y_scale = hi > lo ? hi - lo : 1.0;
    for (std::size_t p = 0; p < cfg.n_participants; ++p) {
        for (std::size_t t = 0; t < cfg.samples_per_participant; ++t) {
            out.sessions[p].arousal[t] =
                hi > lo ? (raw_targets[p][t] - lo) / (hi - lo) : 0.5;
        }
    }
    return out;
}

inline std::vector<SessionTrace> generate_synthetic(const SyntheticConfig& cfg) {
    return generate_synthetic_with_truth(cfg).sessions;
}

}  // namespace vrp
