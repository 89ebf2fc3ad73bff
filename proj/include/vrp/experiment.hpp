#pragma once
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "vrp/calibration.hpp"
#include "vrp/config.hpp"
#include "vrp/data_pipeline.hpp"
#include "vrp/errors.hpp"
#include "vrp/metrics.hpp"
#include "vrp/nn.hpp"
#include "vrp/pruning.hpp"
#include "vrp/serialize.hpp"

namespace vrp {

enum class Method { CpVr, CpG, CpL, NpIn };

inline std::string method_name(Method m) {
    switch (m) {
        case Method::CpVr: return "CP-VR";
        case Method::CpG: return "CP-G";
        case Method::CpL: return "CP-L";
        case Method::NpIn: return "NP-IN";
    }
    return "?";
}

inline Method method_from_name(const std::string& s) {
    if (s == "CP-VR") return Method::CpVr;
    if (s == "CP-G") return Method::CpG;
    if (s == "CP-L") return Method::CpL;
    if (s == "NP-IN") return Method::NpIn;
    throw ConfigError("unknown pruning method '" + s +
                      "' (expected CP-VR, CP-G, CP-L or NP-IN)");
}

enum class Architecture { TwoLayer, FiveLayer, Custom };

inline std::string architecture_name(Architecture a) {
    switch (a) {
        case Architecture::TwoLayer: return "two_layer";
        case Architecture::FiveLayer: return "five_layer";
        case Architecture::Custom: return "custom";
    }
    return "?";
}

struct ExperimentConfig {
    bool synthetic = true;
    std::string csv_dir;

    Architecture architecture = Architecture::TwoLayer;
    std::vector<std::size_t> hidden_layers;  // used when architecture == Custom

    TrainConfig train;  // per-run seed is derived from the sweep seed
    std::vector<Method> methods{Method::CpVr, Method::CpG, Method::CpL, Method::NpIn};
    std::vector<double> sparsities{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14};
    double lambda_var = 1.0;
    SplitRatios ratios;
    PreprocessConfig preprocess;
    SyntheticConfig synth;
    bool record_timing = false;
    std::size_t threads = 1;
};

inline void validate_experiment_config(const ExperimentConfig& cfg) {
    if (cfg.methods.empty()) throw ConfigError("experiment: methods must be nonempty");
    if (cfg.seeds.empty()) throw ConfigError("experiment: seeds must be nonempty");
    if (cfg.sparsities.empty()) throw ConfigError("experiment: sparsities must be nonempty");
    for (double s : cfg.sparsities)
        if (!(s >= 0.0 && s < 1.0)) throw ConfigError("experiment: sparsities must be in [0, 1)");
    if (cfg.architecture == Architecture::Custom && cfg.hidden_layers.empty())
        throw ConfigError("experiment: custom architecture needs hidden_layers");
    if (!cfg.synthetic && cfg.csv_dir.empty())
        throw ConfigError("experiment: csv data source needs csv_dir");
    validate_ratios(cfg.ratios);
    validate_train_config(cfg.train);
    validate_preprocess_config(cfg.preprocess);
    if (cfg.lambda_var < 0.0) throw ConfigError("experiment: lambda_var must be >= 0");
}

inline std::vector<LayerSpec> architecture_specs(const ExperimentConfig& cfg,
                                                 std::size_t input_dim) {
    switch (cfg.architecture) {
        case Architecture::TwoLayer: return two_layer_specs(input_dim);
        case Architecture::FiveLayer: return five_layer_specs(input_dim);
        case Architecture::Custom: return mlp_specs(input_dim, cfg.hidden_layers);
    }
    throw ConfigError("experiment: bad architecture");
}

inline ExperimentConfig experiment_config_from_file(const std::filesystem::path& path) {
    KvReader r(parse_kv_file(path), path.filename().string());
    ExperimentConfig cfg;

    const std::string data = r.get_string("data", "synthetic");
    if (data == "synthetic") {
        cfg.synthetic = true;
    } else if (data == "csv") {
        cfg.synthetic = false;
        cfg.csv_dir = r.get_string("csv_dir", "");
    } else {
        throw ConfigError("experiment: data must be 'synthetic' or 'csv'");
    }

    const std::string arch = r.get_string("architecture", "two_layer");
    if (arch == "two_layer") {
        cfg.architecture = Architecture::TwoLayer;
    } else if (arch == "five_layer") {
        cfg.architecture = Architecture::FiveLayer;
    } else if (arch == "custom") {
        cfg.architecture = Architecture::Custom;
        for (auto h : r.get_uint_list("hidden_layers", {}))
            cfg.hidden_layers.push_back(static_cast<std::size_t>(h));
    } else {
        throw ConfigError("experiment: architecture must be two_layer, five_layer or custom");
    }

    cfg.train = train_config_from_reader(r);
    std::vector<Method> methods;
    for (const auto& name :
         r.get_string_list("methods", {"CP-VR", "CP-G", "CP-L", "NP-IN"}))
        methods.push_back(method_from_name(name));
    cfg.methods = methods;
    cfg.sparsities = r.get_double_list("sparsities", cfg.sparsities);
    cfg.seeds = r.get_uint_list("seeds", cfg.seeds);
    cfg.lambda_var = r.get_double("lambda_var", cfg.lambda_var);
    cfg.ratios.train = r.get_double("train_ratio", cfg.ratios.train);
    cfg.ratios.val = r.get_double("val_ratio", cfg.ratios.val);
    cfg.ratios.test = r.get_double("test_ratio", cfg.ratios.test);
    cfg.preprocess = preprocess_config_from_reader(r);
    cfg.synth = synthetic_config_from_reader(r);
    cfg.record_timing = r.get_bool("record_timing", cfg.record_timing);
    cfg.threads = static_cast<std::size_t>(r.get_uint("threads", cfg.threads));
    r.reject_unknown();
    validate_experiment_config(cfg);
    return cfg;
}

// ---------------------------------------------------------------------------
// Sweep execution
// ---------------------------------------------------------------------------

struct SweepRow {
    std::string method;
    double sparsity = 0.0;
    std::uint64_t seed = 0;
    double ccc_pooled = 0.0;
    double ccc_group_mean = 0.0;
    double mse = 0.0;
    double mse_group_var = 0.0;
    double risk_j = 0.0;
    double achieved_sparsity = 0.0;
    double wall_time_s = 0.0;
};

inline EvalReport evaluate_model(const MLPModel& model, const WindowedDataset& ds,
                                 double lambda_var) {
    if (ds.empty()) throw DataError("evaluate: empty dataset");
    return make_report(predict(model, ds.features), ds.targets, ds.group_ids, lambda_var);
}

namespace detail {

// Seed streams for the independent random decisions of one sweep run.
enum : std::uint64_t { kSeedData = 0, kSeedSplit = 1, kSeedInit = 2, kSeedTrain = 3 };

inline std::vector<SweepRow> run_seed(const ExperimentConfig& cfg, std::uint64_t seed,
                                      const std::vector<SessionTrace>* csv_sessions) {
    std::vector<SessionTrace> generated;
    const std::vector<SessionTrace>* sessions = csv_sessions;
    if (cfg.synthetic) {
        SyntheticConfig synth = cfg.synth;
        synth.seed = derive_seed(seed, kSeedData);
        generated = generate_synthetic(synth);
        sessions = &generated;
    }

    EnvironmentSplit split = split_by_participant(*sessions, cfg.ratios,
                                                  derive_seed(seed, kSeedSplit),
                                                  cfg.preprocess);

    MLPModel model = init_model(architecture_specs(cfg, split.train.features.cols),
                                derive_seed(seed, kSeedInit));
    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(seed, kSeedTrain);
    train(model, split.train, tc);

    const CalibrationStats stats = calibrate(model, split.val);
    const std::size_t dense_weight_count = model.weight_count();

    // Scores are sparsity-independent, so compute them once per method.
    std::map<Method, ConnectionScore> method_scores;
    for (Method m : cfg.methods) {
        if (m == Method::CpVr)
            method_scores.emplace(m, score_vr(group_saliencies(stats, model),
                                              VrConfig{cfg.lambda_var}));
        else if (m == Method::CpG)
            method_scores.emplace(m, abs_weight_scores(model));
    }

    std::vector<SweepRow> rows;
    rows.reserve(cfg.methods.size() * cfg.sparsities.size());
    for (Method m : cfg.methods) {
        for (double s : cfg.sparsities) {
            const auto t0 = std::chrono::steady_clock::now();
            SweepRow row;
            row.method = method_name(m);
            row.sparsity = s;
            row.seed = seed;

            EvalReport report;
            if (m == Method::NpIn) {
                MLPModel reduced =
                    prune_neurons_incoming_norm(model, default_neuron_budgets(model, s));
                report = evaluate_model(reduced, split.test, cfg.lambda_var);
                row.achieved_sparsity =
                    1.0 - static_cast<double>(reduced.weight_count()) /
                              static_cast<double>(dense_weight_count);
            } else {
                PruneMask mask;
                if (m == Method::CpL) {
                    mask = prune_layerwise(model,
                                           std::vector<double>(model.layer_count(), s));
                } else {
                    mask = prune_global_by_score(model, method_scores.at(m), s);
                }
                report = evaluate_model(with_mask(model, mask), split.test, cfg.lambda_var);
                row.achieved_sparsity = mask.achieved_sparsity;
            }
            row.ccc_pooled = report.ccc;
            row.ccc_group_mean = report.ccc_group_mean;
            row.mse = report.mse;
            row.mse_group_var = report.mse_group_variance;
            row.risk_j = report.risk_j;
            if (cfg.record_timing) {
                row.wall_time_s =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                        .count();
            }
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

}  // namespace detail

// Runs the full (seed x method x sparsity) grid. Each seed gets its own data
// generation (synthetic source), split, initialisation and shuffling streams,
// so seeds can execute concurrently; rows come back ordered by
// (seed, method, sparsity) as listed in the config.
inline std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg) {
    validate_experiment_config(cfg);
    std::vector<SessionTrace> csv_sessions;
    if (!cfg.synthetic) csv_sessions = load_sessions(cfg.csv_dir);

    std::vector<std::vector<SweepRow>> per_seed(cfg.seeds.size());
    const std::size_t workers =
        std::max<std::size_t>(1, std::min(cfg.threads, cfg.seeds.size()));
    if (workers == 1) {
        for (std::size_t i = 0; i < cfg.seeds.size(); ++i)
            per_seed[i] = detail::run_seed(cfg, cfg.seeds[i],
                                           cfg.synthetic ? nullptr : &csv_sessions);
    } else {
        std::vector<std::thread> pool;
        std::exception_ptr failure;
        std::mutex failure_mutex;
        std::atomic<std::size_t> next{0};
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < cfg.seeds.size();
                     i = next.fetch_add(1)) {
                    try {
                        per_seed[i] = detail::run_seed(
                            cfg, cfg.seeds[i], cfg.synthetic ? nullptr : &csv_sessions);
                    } catch (...) {
                        std::lock_guard<std::mutex> lock(failure_mutex);
                        if (!failure) failure = std::current_exception();
                    }
                }
            });
        }
        for (auto& t : pool) t.join();
        if (failure) std::rethrow_exception(failure);
    }

    std::vector<SweepRow> rows;
    rows.reserve(cfg.seeds.size() * cfg.methods.size() * cfg.sparsities.size());
    for (auto& seed_rows : per_seed)
        for (auto& row : seed_rows) rows.push_back(std::move(row));
    return rows;
}

// ---------------------------------------------------------------------------
// Results CSV, summary, plot series
// ---------------------------------------------------------------------------

inline constexpr const char* kResultsHeader =
    "method,sparsity,seed,ccc_pooled,ccc_group_mean,mse,mse_group_var,risk_j,"
    "achieved_sparsity,wall_time_s";

inline void write_results_csv(const std::vector<SweepRow>& rows,
                              const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << kResultsHeader << "\n";
    for (const auto& r : rows) {
        out << r.method << ',' << format_double(r.sparsity) << ',' << r.seed << ','
            << format_double(r.ccc_pooled) << ',' << format_double(r.ccc_group_mean) << ','
            << format_double(r.mse) << ',' << format_double(r.mse_group_var) << ','
            << format_double(r.risk_j) << ',' << format_double(r.achieved_sparsity) << ','
            << format_double(r.wall_time_s) << '\n';
    }
}

inline std::vector<SweepRow> read_results_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open results file " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kResultsHeader)
        throw DataError(path.string() + ": unexpected header '" + line + "'");
    std::vector<SweepRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != 10)
            throw DataError(path.string() + ": line " + std::to_string(line_no) +
                            ": expected 10 fields");
        SweepRow r;
        r.method = cells[0];
        r.sparsity = parse_double(cells[1]);
        r.seed = std::stoull(cells[2]);
        r.ccc_pooled = parse_double(cells[3]);
        r.ccc_group_mean = parse_double(cells[4]);
        r.mse = parse_double(cells[5]);
        r.mse_group_var = parse_double(cells[6]);
        r.risk_j = parse_double(cells[7]);
        r.achieved_sparsity = parse_double(cells[8]);
        r.wall_time_s = parse_double(cells[9]);
        rows.push_back(std::move(r));
    }
    return rows;
}

struct MetricSummary {
    double mean = 0.0;
    double std_dev = 0.0;  // population standard deviation across seeds
};

struct SummaryRow {
    std::string method;
    double sparsity = 0.0;
    std::size_t n_seeds = 0;
    MetricSummary ccc_pooled, ccc_group_mean, mse, mse_group_var, risk_j,
        achieved_sparsity, wall_time_s;
};

namespace detail {

inline MetricSummary summarize_values(const std::vector<double>& values) {
    MetricSummary s;
    s.mean = mean_of(values);
    s.std_dev = std::sqrt(population_variance(values));
    return s;
}

}  // namespace detail

// Aggregates rows across seeds per (method, sparsity) pair, preserving the
// first-appearance order of pairs.
inline std::vector<SummaryRow> summarize(const std::vector<SweepRow>& rows) {
    if (rows.empty()) throw DataError("summarize: no rows");
    std::vector<std::pair<std::string, double>> order;
    std::map<std::pair<std::string, double>, std::vector<const SweepRow*>> buckets;
    for (const auto& r : rows) {
        const auto key = std::make_pair(r.method, r.sparsity);
        auto [it, inserted] = buckets.try_emplace(key);
        if (inserted) order.push_back(key);
        it->second.push_back(&r);
    }

    std::vector<SummaryRow> out;
    out.reserve(order.size());
    for (const auto& key : order) {
        const auto& group = buckets[key];
        SummaryRow s;
        s.method = key.first;
        s.sparsity = key.second;
        s.n_seeds = group.size();
        auto gather = [&](auto member) {
            std::vector<double> v;
            v.reserve(group.size());
            for (const SweepRow* r : group) v.push_back(r->*member);
            return detail::summarize_values(v);
        };
        s.ccc_pooled = gather(&SweepRow::ccc_pooled);
        s.ccc_group_mean = gather(&SweepRow::ccc_group_mean);
        s.mse = gather(&SweepRow::mse);
        s.mse_group_var = gather(&SweepRow::mse_group_var);
        s.risk_j = gather(&SweepRow::risk_j);
        s.achieved_sparsity = gather(&SweepRow::achieved_sparsity);
        s.wall_time_s = gather(&SweepRow::wall_time_s);
        out.push_back(std::move(s));
    }
    return out;
}

inline constexpr const char* kSummaryHeader =
    "method,sparsity,n_seeds,"
    "ccc_pooled_mean,ccc_pooled_std,ccc_group_mean_mean,ccc_group_mean_std,"
    "mse_mean,mse_std,mse_group_var_mean,mse_group_var_std,risk_j_mean,risk_j_std,"
    "achieved_sparsity_mean,achieved_sparsity_std,wall_time_s_mean,wall_time_s_std";

inline void write_summary_csv(const std::vector<SummaryRow>& rows,
                              const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << kSummaryHeader << "\n";
    for (const auto& r : rows) {
        out << r.method << ',' << format_double(r.sparsity) << ',' << r.n_seeds;
        for (const MetricSummary* m :
             {&r.ccc_pooled, &r.ccc_group_mean, &r.mse, &r.mse_group_var, &r.risk_j,
              &r.achieved_sparsity, &r.wall_time_s}) {
            out << ',' << format_double(m->mean) << ',' << format_double(m->std_dev);
        }
        out << '\n';
    }
}

// One plot-ready series file per method: sparsity, mean CCC, std CCC, in
// ascending sparsity order.
inline std::vector<std::filesystem::path> emit_plot_data(
    const std::vector<SummaryRow>& summary, const std::filesystem::path& out_dir,
    const std::string& label) {
    if (summary.empty()) throw DataError("emit_plot_data: empty summary");
    std::vector<std::string> methods;
    std::map<std::string, std::vector<const SummaryRow*>> by_method;
    for (const auto& row : summary) {
        auto [it, inserted] = by_method.try_emplace(row.method);
        if (inserted) methods.push_back(row.method);
        it->second.push_back(&row);
    }

    std::vector<std::filesystem::path> written;
    for (const auto& method : methods) {
        auto series = by_method[method];
        std::sort(series.begin(), series.end(), [](const SummaryRow* a, const SummaryRow* b) {
            return a->sparsity < b->sparsity;
        });
        const std::filesystem::path path =
            out_dir / ("plot_" + method + "_" + label + ".csv");
        std::ofstream out(path);
        if (!out) throw DataError("cannot write " + path.string());
        out << "sparsity,mean_ccc,std_ccc\n";
        for (const SummaryRow* row : series) {
            out << format_double(row->sparsity) << ',' << format_double(row->ccc_pooled.mean)
                << ',' << format_double(row->ccc_pooled.std_dev) << '\n';
        }
        written.push_back(path);
    }
    return written;
}

// ---------------------------------------------------------------------------
// Windowed dataset CSV (output of `preprocess`, input of train/calibrate/
// evaluate): header `group_id,target,<feature names>`.
// ---------------------------------------------------------------------------

inline void write_windowed_csv(const WindowedDataset& ds,
                               const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "group_id,target";
    for (const auto& name : ds.feature_names) out << ',' << name;
    out << '\n';
    for (std::size_t i = 0; i < ds.size(); ++i) {
        out << ds.group_ids[i] << ',' << format_double(ds.targets[i]);
        const double* row = ds.features.row_ptr(i);
        for (std::size_t j = 0; j < ds.features.cols; ++j)
            out << ',' << format_double(row[j]);
        out << '\n';
    }
}

inline WindowedDataset read_windowed_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = detail::split_csv_line(line);
    if (header.size() < 3 || header[0] != "group_id" || header[1] != "target")
        throw DataError(path.string() + ": expected header group_id,target,<features>");

    WindowedDataset ds;
    ds.feature_names.assign(header.begin() + 2, header.end());
    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw DataError(path.string() + ": line " + std::to_string(line_no) +
                            ": wrong field count");
        ds.group_ids.push_back(cells[0]);
        ds.targets.push_back(parse_double(cells[1]));
        std::vector<double> feat(ds.feature_names.size());
        for (std::size_t j = 0; j < feat.size(); ++j) feat[j] = parse_double(cells[2 + j]);
        rows.push_back(std::move(feat));
    }
    if (rows.empty()) throw DataError(path.string() + ": no data rows");
    ds.features = Matrix(rows.size(), ds.feature_names.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(rows[i].begin(), rows[i].end(), ds.features.row_ptr(i));
    return ds;
}

// Writes a session trace back out in the session CSV schema.
inline void write_session_csv(const SessionTrace& trace,
                              const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "timestamp,participant_id,game_id,arousal";
    for (const auto& name : trace.feature_names) out << ',' << name;
    out << '\n';
    for (std::size_t t = 0; t < trace.length(); ++t) {
        out << format_double(trace.timestamps[t]) << ',' << trace.participant_id << ','
            << trace.game_id << ',' << format_double(trace.arousal[t]);
        const double* row = trace.features.row_ptr(t);
        for (std::size_t j = 0; j < trace.features.cols; ++j)
            out << ',' << format_double(row[j]);
        out << '\n';
    }
}

}  // namespace vrp
