#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <unistd.h>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

using namespace std::string_literals;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("vrp_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
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

std::string tool() {
    const char* bin = std::getenv("VRPRUNE_BIN");
    REQUIRE(bin != nullptr);
    return bin;
}

int run(const std::string& args) {
    const std::string cmd = tool() + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

TEST_CASE("cli: end-to-end generate/preprocess/train/calibrate/prune/evaluate") {
    TempDir dir;
    const fs::path cfg_path = dir.path / "exp.cfg";
    std::ofstream(cfg_path) << "data = synthetic\n"
                            << "architecture = custom\n"
                            << "hidden_layers = 8\n"
                            << "epochs = 5\n"
                            << "batch_size = 32\n"
                            << "n_participants = 6\n"
                            << "samples_per_participant = 40\n"
                            << "n_stable_features = 3\n"
                            << "n_spurious_features = 3\n";

    const fs::path data = dir.path / "data";
    const fs::path prep = dir.path / "prep";
    const fs::path run_dir = dir.path / "run";

    REQUIRE(run("generate --config " + cfg_path.string() + " --out " + data.string() +
                " --seed 1") == 0);
    REQUIRE(fs::exists(data / "p000.csv"));

    REQUIRE(run("preprocess --data " + data.string() + " --out " + prep.string() +
                " --seed 1") == 0);
    REQUIRE(fs::exists(prep / "train.csv"));
    REQUIRE(fs::exists(prep / "val.csv"));
    REQUIRE(fs::exists(prep / "test.csv"));

    REQUIRE(run("train --data " + prep.string() + " --config " + cfg_path.string() +
                " --out " + run_dir.string() + " --seed 2") == 0);
    REQUIRE(fs::exists(run_dir / "model.json"));

    const fs::path calib = run_dir / "calib.json";
    REQUIRE(run("calibrate --model " + (run_dir / "model.json").string() + " --data " +
                prep.string() + " --out " + calib.string()) == 0);
    REQUIRE(fs::exists(calib));

    REQUIRE(run("prune --model " + (run_dir / "model.json").string() + " --calib " +
                calib.string() + " --method CP-VR --sparsity 0.5 --out " +
                run_dir.string()) == 0);
    REQUIRE(fs::exists(run_dir / "pruned_model.json"));
    REQUIRE(fs::exists(run_dir / "mask.csv"));

    REQUIRE(run("evaluate --model " + (run_dir / "pruned_model.json").string() +
                " --data " + prep.string() + " --out " +
                (run_dir / "report.json").string()) == 0);
    REQUIRE(fs::exists(run_dir / "report.json"));
}

TEST_CASE("cli: sweep and summarize produce matching summaries") {
    TempDir dir;
    const fs::path cfg_path = dir.path / "exp.cfg";
    std::ofstream(cfg_path) << "data = synthetic\n"
                            << "architecture = custom\n"
                            << "hidden_layers = 8\n"
                            << "epochs = 4\n"
                            << "batch_size = 32\n"
                            << "n_participants = 6\n"
                            << "samples_per_participant = 40\n"
                            << "n_stable_features = 3\n"
                            << "n_spurious_features = 3\n"
                            << "methods = CP-G, CP-L\n"
                            << "sparsities = 0, 0.5\n"
                            << "seeds = 0, 1\n";
    const fs::path out = dir.path / "out";
    REQUIRE(run("sweep --config " + cfg_path.string() + " --out " + out.string()) == 0);
    REQUIRE(fs::exists(out / "results.csv"));
    REQUIRE(fs::exists(out / "summary.csv"));
    REQUIRE(fs::exists(out / "plot_CP-G_custom.csv"));
    REQUIRE(fs::exists(out / "plot_CP-L_custom.csv"));

    const fs::path re_out = dir.path / "re";
    REQUIRE(run("summarize --results " + (out / "results.csv").string() + " --out " +
                re_out.string() + " --label custom") == 0);
    REQUIRE(slurp(re_out / "summary.csv") == slurp(out / "summary.csv"));
    REQUIRE(slurp(re_out / "plot_CP-G_custom.csv") == slurp(out / "plot_CP-G_custom.csv"));
}

TEST_CASE("cli: exit codes distinguish config, data, and shape failures") {
    TempDir dir;

    SECTION("missing config file -> 2") {
        REQUIRE(run("sweep --config " + (dir.path / "none.cfg").string() + " --out " +
                    dir.path.string()) == 2);
    }

    SECTION("invalid method name -> 2") {
        const fs::path cfg = dir.path / "bad.cfg";
        std::ofstream(cfg) << "data = synthetic\nmethods = CP-X\n";
        REQUIRE(run("sweep --config " + cfg.string() + " --out " + dir.path.string()) == 2);
    }

    SECTION("unparseable flags -> 2") {
        REQUIRE(run("sweep --no-such-flag") == 2);
    }

    SECTION("unreachable data -> 3") {
        REQUIRE(run("preprocess --data " + (dir.path / "nope").string() + " --out " +
                    dir.path.string()) == 3);
    }

    SECTION("model/data width mismatch -> 4") {
        // tiny dataset and an incompatible checkpoint
        std::ofstream(dir.path / "test.csv") << "group_id,target,f0\na,0.5,0.1\nb,0.25,0.2\n";
        std::ofstream(dir.path / "model.json")
            << R"({"layers":[{"input_dim":3,"output_dim":1,"activation":"linear"}],)"
            << R"("weights":[[0.1,0.2,0.3]],"biases":[[0]],"masks":[[1,1,1]]})";
        REQUIRE(run("evaluate --model " + (dir.path / "model.json").string() + " --data " +
                    dir.path.string()) == 4);
    }
}
