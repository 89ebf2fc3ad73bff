// vrprune: train, calibrate, prune and evaluate small arousal-regression MLPs,
// or run the full (method x sparsity x seed) sweep in one go.
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vrp/calibration.hpp"
#include "vrp/config.hpp"
#include "vrp/data_pipeline.hpp"
#include "vrp/experiment.hpp"
#include "vrp/metrics.hpp"
#include "vrp/nn.hpp"
#include "vrp/pruning.hpp"
#include "vrp/serialize.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw vrp::DataError("cannot create output directory " + dir.string());
}

vrp::ExperimentConfig load_experiment_config(const std::string& config_path) {
    if (config_path.empty()) return vrp::ExperimentConfig{};
    return vrp::experiment_config_from_file(config_path);
}

int cmd_generate(const std::string& config_path, const std::string& out_dir,
                 std::int64_t seed_override) {
    vrp::SyntheticConfig cfg;
    if (!config_path.empty()) {
        // Accepts either a standalone synthetic config or a full experiment
        // config (recognised by its `data` key).
        const vrp::KvMap kv = vrp::parse_kv_file(config_path);
        if (kv.count("data")) {
            cfg = vrp::experiment_config_from_file(config_path).synth;
        } else {
            cfg = vrp::synthetic_config_from_file(config_path);
        }
    }
    if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
    ensure_dir(out_dir);
    const auto sessions = vrp::generate_synthetic(cfg);
    for (const auto& trace : sessions)
        vrp::write_session_csv(trace, fs::path(out_dir) / (trace.participant_id + ".csv"));
    std::cout << "wrote " << sessions.size() << " session files to " << out_dir << "\n";
    return 0;
}

int cmd_preprocess(const std::string& data_dir, const std::string& config_path,
                   const std::string& out_dir, std::int64_t seed) {
    vrp::PreprocessConfig prep;
    vrp::SplitRatios ratios;
    if (!config_path.empty()) {
        vrp::KvReader r(vrp::parse_kv_file(config_path),
                        fs::path(config_path).filename().string());
        prep = vrp::preprocess_config_from_reader(r);
        ratios.train = r.get_double("train_ratio", ratios.train);
        ratios.val = r.get_double("val_ratio", ratios.val);
        ratios.test = r.get_double("test_ratio", ratios.test);
        r.reject_unknown();
    }
    const auto sessions = vrp::load_sessions(data_dir);
    const auto split = vrp::split_by_participant(
        sessions, ratios, seed >= 0 ? static_cast<std::uint64_t>(seed) : 0, prep);
    ensure_dir(out_dir);
    vrp::write_windowed_csv(split.train, fs::path(out_dir) / "train.csv");
    vrp::write_windowed_csv(split.val, fs::path(out_dir) / "val.csv");
    vrp::write_windowed_csv(split.test, fs::path(out_dir) / "test.csv");
    std::cout << "train/val/test samples: " << split.train.size() << "/" << split.val.size()
              << "/" << split.test.size() << ", features: " << split.train.features.cols
              << "\n";
    return 0;
}

int cmd_train(const std::string& data_dir, const std::string& config_path,
              const std::string& out_dir, std::int64_t seed) {
    const vrp::ExperimentConfig cfg = load_experiment_config(config_path);
    const auto train_set = vrp::read_windowed_csv(fs::path(data_dir) / "train.csv");

    vrp::TrainConfig tc = cfg.train;
    if (seed >= 0) tc.seed = static_cast<std::uint64_t>(seed);
    vrp::MLPModel model = vrp::init_model(
        vrp::architecture_specs(cfg, train_set.features.cols), tc.seed);
    const auto history = vrp::train(model, train_set, tc);

    ensure_dir(out_dir);
    vrp::save_model(model, fs::path(out_dir) / "model.json");
    std::ofstream hist(fs::path(out_dir) / "loss_history.csv");
    hist << "epoch,train_mse\n";
    for (std::size_t e = 0; e < history.size(); ++e)
        hist << e << ',' << vrp::format_double(history[e]) << '\n';
    std::cout << "final train mse: " << history.back() << ", model written to "
              << (fs::path(out_dir) / "model.json").string() << "\n";
    return 0;
}

int cmd_calibrate(const std::string& model_path, const std::string& data_dir,
                  const std::string& out_path) {
    const vrp::MLPModel model = vrp::load_model(model_path);
    const auto val_set = vrp::read_windowed_csv(fs::path(data_dir) / "val.csv");
    const vrp::CalibrationStats stats = vrp::calibrate(model, val_set);
    vrp::save_calibration(stats, out_path);
    std::cout << "calibrated on " << val_set.size() << " samples across "
              << stats.per_group.size() << " groups\n";
    return 0;
}

int cmd_prune(const std::string& model_path, const std::string& calib_path,
              const std::string& method_name, double sparsity, double lambda_var,
              const std::string& out_dir) {
    const vrp::MLPModel model = vrp::load_model(model_path);
    const vrp::Method method = vrp::method_from_name(method_name);
    ensure_dir(out_dir);

    vrp::MLPModel pruned;
    if (method == vrp::Method::NpIn) {
        pruned = vrp::prune_neurons_incoming_norm(
            model, vrp::default_neuron_budgets(model, sparsity));
    } else {
        vrp::PruneMask mask;
        if (method == vrp::Method::CpVr) {
            if (calib_path.empty())
                throw vrp::ConfigError("CP-VR needs --calib <calibration file>");
            const auto stats = vrp::load_calibration(calib_path);
            const auto scores =
                vrp::score_vr(vrp::group_saliencies(stats, model), vrp::VrConfig{lambda_var});
            mask = vrp::prune_global_by_score(model, scores, sparsity);
        } else if (method == vrp::Method::CpG) {
            mask = vrp::prune_global_by_score(model, vrp::abs_weight_scores(model), sparsity);
        } else {
            mask = vrp::prune_layerwise(
                model, std::vector<double>(model.layer_count(), sparsity));
        }
        vrp::export_mask(mask, fs::path(out_dir) / "mask.csv");
        pruned = vrp::with_mask(model, mask);
        std::cout << "achieved sparsity: " << mask.achieved_sparsity << "\n";
    }
    vrp::save_model(pruned, fs::path(out_dir) / "pruned_model.json");
    return 0;
}

int cmd_evaluate(const std::string& model_path, const std::string& data_dir,
                 double lambda_var, const std::string& out_path) {
    const vrp::MLPModel model = vrp::load_model(model_path);
    const auto test_set = vrp::read_windowed_csv(fs::path(data_dir) / "test.csv");
    const vrp::EvalReport report = vrp::evaluate_model(model, test_set, lambda_var);
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        if (!out) throw vrp::DataError("cannot write " + out_path);
        out << vrp::report_to_json(report).dump(2) << "\n";
    }
    std::cout << "mse=" << report.mse << " ccc=" << report.ccc
              << " ccc_group_mean=" << report.ccc_group_mean
              << " mse_group_var=" << report.mse_group_variance
              << " risk_j=" << report.risk_j << "\n";
    return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& out_dir) {
    const vrp::ExperimentConfig cfg = load_experiment_config(config_path);
    const auto rows = vrp::run_sweep(cfg);
    ensure_dir(out_dir);
    vrp::write_results_csv(rows, fs::path(out_dir) / "results.csv");
    const auto summary = vrp::summarize(rows);
    vrp::write_summary_csv(summary, fs::path(out_dir) / "summary.csv");
    vrp::emit_plot_data(summary, out_dir, vrp::architecture_name(cfg.architecture));
    std::cout << rows.size() << " rows written to "
              << (fs::path(out_dir) / "results.csv").string() << "\n";
    return 0;
}

int cmd_summarize(const std::string& results_path, const std::string& out_dir,
                  const std::string& label) {
    const auto rows = vrp::read_results_csv(results_path);
    const auto summary = vrp::summarize(rows);
    ensure_dir(out_dir);
    vrp::write_summary_csv(summary, fs::path(out_dir) / "summary.csv");
    vrp::emit_plot_data(summary, out_dir, label);
    std::cout << summary.size() << " summary rows written to "
              << (fs::path(out_dir) / "summary.csv").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Variance-regularised pruning toolkit for arousal-regression MLPs"};
    app.require_subcommand(1);

    std::string config_path, out_dir = ".", data_dir, model_path, calib_path;
    std::string method_name, results_path, label = "model", report_path;
    std::int64_t seed = -1;
    double sparsity = 0.0, lambda_var = 1.0;

    auto* generate = app.add_subcommand("generate", "Write synthetic session CSVs");
    generate->add_option("--config", config_path, "synthetic key=value config");
    generate->add_option("--out", out_dir, "output directory")->required();
    generate->add_option("--seed", seed, "seed override");

    auto* preprocess =
        app.add_subcommand("preprocess", "Window, normalise and split session CSVs");
    preprocess->add_option("--data", data_dir, "directory of session CSVs")->required();
    preprocess->add_option("--config", config_path, "preprocess key=value config");
    preprocess->add_option("--out", out_dir, "output directory")->required();
    preprocess->add_option("--seed", seed, "participant split seed");

    auto* train = app.add_subcommand("train", "Train a dense model on train.csv");
    train->add_option("--data", data_dir, "preprocessed dataset directory")->required();
    train->add_option("--config", config_path, "experiment key=value config");
    train->add_option("--out", out_dir, "output directory")->required();
    train->add_option("--seed", seed, "training seed override");

    auto* calibrate =
        app.add_subcommand("calibrate", "Collect activation/gradient moments on val.csv");
    calibrate->add_option("--model", model_path, "model checkpoint")->required();
    calibrate->add_option("--data", data_dir, "preprocessed dataset directory")->required();
    calibrate->add_option("--out", report_path, "calibration output file")->required();

    auto* prune = app.add_subcommand("prune", "Apply one pruning method at one sparsity");
    prune->add_option("--model", model_path, "model checkpoint")->required();
    prune->add_option("--calib", calib_path, "calibration file (CP-VR)");
    prune->add_option("--method", method_name, "CP-VR | CP-G | CP-L | NP-IN")->required();
    prune->add_option("--sparsity", sparsity, "target sparsity in [0,1)")->required();
    auto* prune_lambda = prune->add_option("--lambda", lambda_var, "variance penalty weight");
    prune->add_option("--config", config_path, "experiment config supplying lambda_var");
    prune->add_option("--out", out_dir, "output directory")->required();

    auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint on test.csv");
    evaluate->add_option("--model", model_path, "model checkpoint")->required();
    evaluate->add_option("--data", data_dir, "preprocessed dataset directory")->required();
    auto* eval_lambda = evaluate->add_option("--lambda", lambda_var, "variance penalty weight");
    evaluate->add_option("--config", config_path, "experiment config supplying lambda_var");
    evaluate->add_option("--out", report_path, "evaluation report JSON");

    auto* sweep = app.add_subcommand("sweep", "Run the full method x sparsity x seed grid");
    sweep->add_option("--config", config_path, "experiment key=value config");
    sweep->add_option("--out", out_dir, "output directory")->required();

    auto* summarize = app.add_subcommand("summarize", "Aggregate a results CSV across seeds");
    summarize->add_option("--results", results_path, "results.csv from sweep")->required();
    summarize->add_option("--out", out_dir, "output directory")->required();
    summarize->add_option("--label", label, "architecture label for plot filenames");

    try {
        app.parse(argc, argv);
        if (generate->parsed()) return cmd_generate(config_path, out_dir, seed);
        if (preprocess->parsed()) return cmd_preprocess(data_dir, config_path, out_dir, seed);
        if (train->parsed()) return cmd_train(data_dir, config_path, out_dir, seed);
        if (calibrate->parsed()) return cmd_calibrate(model_path, data_dir, report_path);
        if (prune->parsed()) {
            if (!config_path.empty() && prune_lambda->count() == 0)
                lambda_var = vrp::experiment_config_from_file(config_path).lambda_var;
            return cmd_prune(model_path, calib_path, method_name, sparsity, lambda_var,
                             out_dir);
        }
        if (evaluate->parsed()) {
            if (!config_path.empty() && eval_lambda->count() == 0)
                lambda_var = vrp::experiment_config_from_file(config_path).lambda_var;
            return cmd_evaluate(model_path, data_dir, lambda_var, report_path);
        }
        if (sweep->parsed()) return cmd_sweep(config_path, out_dir);
        if (summarize->parsed()) return cmd_summarize(results_path, out_dir, label);
        return 0;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    } catch (const vrp::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const vrp::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const vrp::ShapeError& e) {
        std::cerr << "shape error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const vrp::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
