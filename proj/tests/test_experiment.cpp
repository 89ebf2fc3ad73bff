#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vrp/experiment.hpp"

using namespace vrp;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("vrp_exp_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

// Small, fast sweep configuration for tests.
ExperimentConfig tiny_config() {
    ExperimentConfig cfg;
    cfg.synth.n_participants = 6;
    cfg.synth.samples_per_participant = 40;
    cfg.synth.n_stable_features = 3;
    cfg.synth.n_spurious_features = 3;
    cfg.architecture = Architecture::Custom;
    cfg.hidden_layers = {8};
    cfg.train.epochs = 5;
    cfg.train.batch_size = 32;
    cfg.methods = {Method::CpVr, Method::CpG};
    cfg.sparsities = {0.0, 0.5};
    cfg.seeds = {0, 1};
    return cfg;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

TEST_CASE("run_sweep: grid completeness and row order") {
    const auto cfg = tiny_config();
    const auto rows = run_sweep(cfg);
    REQUIRE(rows.size() == cfg.methods.size() * cfg.sparsities.size() * cfg.seeds.size());

    std::size_t idx = 0;
    for (std::uint64_t seed : cfg.seeds)
        for (Method m : cfg.methods)
            for (double s : cfg.sparsities) {
                REQUIRE(rows[idx].seed == seed);
                REQUIRE(rows[idx].method == method_name(m));
                REQUIRE(rows[idx].sparsity == s);
                ++idx;
            }
}

TEST_CASE("run_sweep: sparsity-zero rows match the dense model across methods") {
    auto cfg = tiny_config();
    cfg.methods = {Method::CpVr, Method::CpG, Method::CpL, Method::NpIn};
    cfg.sparsities = {0.0};
    cfg.seeds = {3};
    const auto rows = run_sweep(cfg);
    REQUIRE(rows.size() == 4);
    for (const auto& r : rows) {
        REQUIRE(r.ccc_pooled == rows[0].ccc_pooled);
        REQUIRE(r.mse == rows[0].mse);
        REQUIRE(r.risk_j == rows[0].risk_j);
        REQUIRE(r.achieved_sparsity == 0.0);
    }
}

TEST_CASE("run_sweep: single dense point equals a standalone evaluation") {
    auto cfg = tiny_config();
    cfg.methods = {Method::CpG};
    cfg.sparsities = {0.0};
    cfg.seeds = {0};
    const auto rows = run_sweep(cfg);
    REQUIRE(rows.size() == 1);

    // rebuild the same run by hand
    SyntheticConfig synth = cfg.synth;
    synth.seed = derive_seed(0, 0);
    const auto sessions = generate_synthetic(synth);
    const auto split =
        split_by_participant(sessions, cfg.ratios, derive_seed(0, 1), cfg.preprocess);
    auto model = init_model(architecture_specs(cfg, split.train.features.cols),
                            derive_seed(0, 2));
    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(0, 3);
    train(model, split.train, tc);
    const auto report = evaluate_model(model, split.test, cfg.lambda_var);

    REQUIRE(rows[0].ccc_pooled == report.ccc);
    REQUIRE(rows[0].mse == report.mse);
    REQUIRE(rows[0].risk_j == report.risk_j);
}

TEST_CASE("run_sweep: deterministic, and seed rows are isolated") {
    const auto cfg = tiny_config();
    const auto a = run_sweep(cfg);
    const auto b = run_sweep(cfg);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i].ccc_pooled == b[i].ccc_pooled);
        REQUIRE(a[i].mse == b[i].mse);
        REQUIRE(a[i].achieved_sparsity == b[i].achieved_sparsity);
    }

    auto solo = tiny_config();
    solo.seeds = {1};
    const auto only_seed1 = run_sweep(solo);
    std::size_t offset = cfg.methods.size() * cfg.sparsities.size();  // seed 1 block
    for (std::size_t i = 0; i < only_seed1.size(); ++i) {
        REQUIRE(only_seed1[i].ccc_pooled == a[offset + i].ccc_pooled);
        REQUIRE(only_seed1[i].mse == a[offset + i].mse);
    }
}

TEST_CASE("run_sweep: record_timing fills the wall-time column") {
    auto cfg = tiny_config();
    cfg.seeds = {0};
    cfg.record_timing = true;
    const auto rows = run_sweep(cfg);
    double total = 0.0;
    for (const auto& r : rows) {
        REQUIRE(r.wall_time_s >= 0.0);
        total += r.wall_time_s;
    }
    REQUIRE(total > 0.0);

    cfg.record_timing = false;
    for (const auto& r : run_sweep(cfg)) REQUIRE(r.wall_time_s == 0.0);
}

TEST_CASE("results CSV: byte-identical writes and exact round trip") {
    TempDir dir;
    const auto rows = run_sweep(tiny_config());
    const fs::path p1 = dir.path / "a.csv";
    const fs::path p2 = dir.path / "b.csv";
    write_results_csv(rows, p1);
    write_results_csv(rows, p2);
    REQUIRE(slurp(p1) == slurp(p2));

    const auto parsed = read_results_csv(p1);
    REQUIRE(parsed.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        REQUIRE(parsed[i].method == rows[i].method);
        REQUIRE(parsed[i].sparsity == rows[i].sparsity);
        REQUIRE(parsed[i].seed == rows[i].seed);
        REQUIRE(parsed[i].ccc_pooled == rows[i].ccc_pooled);
        REQUIRE(parsed[i].wall_time_s == rows[i].wall_time_s);
    }
}

TEST_CASE("summarize: seed aggregation") {
    std::vector<SweepRow> rows;
    SweepRow r;
    r.method = "CP-G";
    r.sparsity = 0.5;

    SECTION("single seed has zero std") {
        r.seed = 0;
        r.ccc_pooled = 0.7;
        rows.push_back(r);
        const auto summary = summarize(rows);
        REQUIRE(summary.size() == 1);
        REQUIRE(summary[0].n_seeds == 1);
        REQUIRE(summary[0].ccc_pooled.mean == 0.7);
        REQUIRE(summary[0].ccc_pooled.std_dev == 0.0);
    }

    SECTION("two seeds give population statistics") {
        r.seed = 0;
        r.ccc_pooled = 0.4;
        rows.push_back(r);
        r.seed = 1;
        r.ccc_pooled = 0.6;
        rows.push_back(r);
        const auto summary = summarize(rows);
        REQUIRE(summary[0].ccc_pooled.mean == Catch::Approx(0.5).margin(1e-15));
        REQUIRE(summary[0].ccc_pooled.std_dev == Catch::Approx(0.1).margin(1e-15));
    }

    SECTION("the default grid flattens to 36 summary rows") {
        rows.clear();
        const std::vector<std::string> methods{"CP-VR", "CP-G", "CP-L", "NP-IN"};
        for (int seed = 0; seed < 15; ++seed)
            for (const auto& m : methods)
                for (int s = 0; s <= 8; ++s) {
                    SweepRow row;
                    row.method = m;
                    row.sparsity = 0.1 * s;
                    row.seed = static_cast<std::uint64_t>(seed);
                    rows.push_back(row);
                }
        REQUIRE(rows.size() == 540);
        REQUIRE(summarize(rows).size() == 36);
    }

    SECTION("empty input is rejected") {
        REQUIRE_THROWS_AS(summarize(rows), DataError);
    }
}

TEST_CASE("emit_plot_data: one monotone series per method") {
    TempDir dir;
    std::vector<SweepRow> rows;
    for (int s = 8; s >= 0; --s) {  // deliberately reversed
        SweepRow r;
        r.method = "CP-VR";
        r.sparsity = 0.1 * s;
        r.seed = 0;
        r.ccc_pooled = 1.0 - 0.05 * s;
        rows.push_back(r);
    }
    const auto summary = summarize(rows);
    const auto files = emit_plot_data(summary, dir.path, "two_layer");
    REQUIRE(files.size() == 1);
    REQUIRE(files[0].filename() == "plot_CP-VR_two_layer.csv");

    std::ifstream in(files[0]);
    std::string line;
    std::getline(in, line);
    REQUIRE(line == "sparsity,mean_ccc,std_ccc");
    double prev = -1.0;
    std::size_t count = 0;
    while (std::getline(in, line)) {
        const double x = parse_double(line.substr(0, line.find(',')));
        REQUIRE(x > prev);
        prev = x;
        ++count;
    }
    REQUIRE(count == 9);

    REQUIRE_THROWS_AS(emit_plot_data({}, dir.path, "x"), DataError);
}

TEST_CASE("experiment config: file parsing, defaults and errors") {
    TempDir dir;
    const fs::path path = dir.path / "exp.cfg";

    SECTION("defaults match the reference protocol") {
        std::ofstream(path) << "data = synthetic\n";
        const auto cfg = experiment_config_from_file(path);
        REQUIRE(cfg.train.epochs == 100);
        REQUIRE(cfg.train.batch_size == 200);
        REQUIRE(cfg.train.learning_rate == 1e-3);
        REQUIRE(cfg.train.beta1 == 0.9);
        REQUIRE(cfg.train.beta2 == 0.999);
        REQUIRE(cfg.seeds.size() == 15);
        REQUIRE(cfg.sparsities.size() == 9);
        REQUIRE(cfg.sparsities.front() == 0.0);
        REQUIRE(cfg.sparsities.back() == 0.8);
        REQUIRE(cfg.methods.size() == 4);
        REQUIRE(cfg.lambda_var == 1.0);
        REQUIRE(cfg.ratios.train == 0.6);
        REQUIRE_FALSE(cfg.record_timing);
        // 4 methods x 9 sparsities x 15 seeds
        REQUIRE(cfg.methods.size() * cfg.sparsities.size() * cfg.seeds.size() == 540);
    }

    SECTION("explicit values override") {
        std::ofstream(path) << "data = synthetic\n"
                            << "architecture = custom\n"
                            << "hidden_layers = 16,8\n"
                            << "methods = CP-G, NP-IN\n"
                            << "sparsities = 0, 0.4\n"
                            << "seeds = 5, 6, 7\n"
                            << "epochs = 3\n"
                            << "lambda_var = 2.5\n"
                            << "n_participants = 4\n";
        const auto cfg = experiment_config_from_file(path);
        REQUIRE(cfg.architecture == Architecture::Custom);
        REQUIRE(cfg.hidden_layers == std::vector<std::size_t>{16, 8});
        REQUIRE(cfg.methods == std::vector<Method>{Method::CpG, Method::NpIn});
        REQUIRE(cfg.seeds == std::vector<std::uint64_t>{5, 6, 7});
        REQUIRE(cfg.train.epochs == 3);
        REQUIRE(cfg.lambda_var == 2.5);
        REQUIRE(cfg.synth.n_participants == 4);
    }

    SECTION("unknown keys are config errors") {
        std::ofstream(path) << "data = synthetic\ntypo_key = 1\n";
        REQUIRE_THROWS_AS(experiment_config_from_file(path), ConfigError);
    }

    SECTION("bad method names are config errors") {
        std::ofstream(path) << "data = synthetic\nmethods = CP-X\n";
        REQUIRE_THROWS_AS(experiment_config_from_file(path), ConfigError);
    }

    SECTION("csv source requires a directory") {
        std::ofstream(path) << "data = csv\n";
        REQUIRE_THROWS_AS(experiment_config_from_file(path), ConfigError);
    }

    SECTION("missing file is a config error") {
        REQUIRE_THROWS_AS(experiment_config_from_file(dir.path / "none.cfg"), ConfigError);
    }
}

TEST_CASE("run_sweep: csv data source matches in-memory synthetic source") {
    TempDir dir;
    auto cfg = tiny_config();
    cfg.seeds = {2};

    // materialise the same sessions the in-memory path would generate
    SyntheticConfig synth = cfg.synth;
    synth.seed = derive_seed(2, 0);
    const auto sessions = generate_synthetic(synth);
    for (const auto& s : sessions)
        write_session_csv(s, dir.path / (s.participant_id + ".csv"));

    const auto mem_rows = run_sweep(cfg);

    auto csv_cfg = cfg;
    csv_cfg.synthetic = false;
    csv_cfg.csv_dir = dir.path.string();
    const auto csv_rows = run_sweep(csv_cfg);

    REQUIRE(csv_rows.size() == mem_rows.size());
    for (std::size_t i = 0; i < csv_rows.size(); ++i) {
        REQUIRE(csv_rows[i].ccc_pooled == Catch::Approx(mem_rows[i].ccc_pooled).margin(1e-12));
        REQUIRE(csv_rows[i].mse == Catch::Approx(mem_rows[i].mse).margin(1e-12));
    }
}

TEST_CASE("windowed dataset CSV round trip") {
    TempDir dir;
    WindowedDataset ds;
    ds.features = Matrix(3, 2);
    ds.features.data = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
    ds.targets = {0.25, 0.5, 0.75};
    ds.group_ids = {"a", "a", "b"};
    ds.feature_names = {"x@t0", "x@t1"};
    const fs::path path = dir.path / "train.csv";
    write_windowed_csv(ds, path);
    const auto loaded = read_windowed_csv(path);
    REQUIRE(loaded.features.data == ds.features.data);
    REQUIRE(loaded.targets == ds.targets);
    REQUIRE(loaded.group_ids == ds.group_ids);
    REQUIRE(loaded.feature_names == ds.feature_names);
}
