#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <unistd.h>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vrp/calibration.hpp"
#include "vrp/nn.hpp"
#include "vrp/pruning.hpp"
#include "vrp/rng.hpp"
#include "vrp/serialize.hpp"

using namespace vrp;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("vrp_ser_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
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

}  // namespace

TEST_CASE("format_double: shortest round-trip form") {
    for (double v : {0.1, 1.0 / 3.0, 2.0, 1e-300, 123456.789, -0.25}) {
        REQUIRE(parse_double(format_double(v)) == v);
    }
    REQUIRE(format_double(0.1) == "0.1");
    REQUIRE(format_double(2.0) == "2");
}

TEST_CASE("model checkpoint: value-exact round trip") {
    TempDir dir;
    auto model = init_model(mlp_specs(7, {5, 3}), 123);
    model.masks[0](2, 3) = 0.0;
    model.weights[0](2, 3) = 0.0;
    model.weights[1](0, 0) = 0.1;          // awkward decimals
    model.weights[1](1, 1) = 1.0 / 3.0;
    model.biases[2][0] = -1e-17;

    const fs::path path = dir.path / "model.json";
    save_model(model, path);
    const auto loaded = load_model(path);

    REQUIRE(loaded.layer_count() == model.layer_count());
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        REQUIRE(loaded.layers[l].input_dim == model.layers[l].input_dim);
        REQUIRE(loaded.layers[l].output_dim == model.layers[l].output_dim);
        REQUIRE(loaded.layers[l].activation == model.layers[l].activation);
        REQUIRE(loaded.weights[l].data == model.weights[l].data);
        REQUIRE(loaded.biases[l] == model.biases[l]);
        REQUIRE(loaded.masks[l].data == model.masks[l].data);
    }
}

TEST_CASE("model checkpoint: malformed inputs are data errors") {
    TempDir dir;
    const fs::path path = dir.path / "bad.json";

    std::ofstream(path) << "{\"layers\": []}";
    REQUIRE_THROWS_AS(load_model(path), DataError);

    std::ofstream(path) << "not json";
    REQUIRE_THROWS_AS(load_model(path), DataError);

    REQUIRE_THROWS_AS(load_model(dir.path / "missing.json"), DataError);
}

TEST_CASE("calibration stats: round trip keyed by layer and group") {
    TempDir dir;
    Rng rng(5);
    const auto model = init_model(mlp_specs(4, {3}), 7);
    WindowedDataset ds;
    ds.features = Matrix(20, 4);
    for (double& v : ds.features.data) v = rng.normal();
    ds.targets.resize(20);
    for (double& t : ds.targets) t = rng.uniform();
    ds.group_ids.resize(20);
    for (std::size_t i = 0; i < 20; ++i) ds.group_ids[i] = i < 11 ? "alice" : "bob";

    const auto stats = calibrate(model, ds);
    const fs::path path = dir.path / "calib.json";
    save_calibration(stats, path);
    const auto loaded = load_calibration(path);

    REQUIRE(loaded.per_group.size() == 2);
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        REQUIRE(loaded.global[l].act_sq == stats.global[l].act_sq);
        REQUIRE(loaded.global[l].grad_sq == stats.global[l].grad_sq);
        REQUIRE(loaded.global[l].sample_count == stats.global[l].sample_count);
    }
    REQUIRE(loaded.per_group.at("alice")[0].act_sq == stats.per_group.at("alice")[0].act_sq);
    REQUIRE(loaded.per_group.at("bob")[1].grad_sq == stats.per_group.at("bob")[1].grad_sq);
}

TEST_CASE("export_mask: sorted (layer,row,col) triples of zeroed entries") {
    TempDir dir;
    PruneMask mask;
    mask.layers = {Matrix::ones(2, 2), Matrix::ones(1, 2)};
    mask.layers[0](1, 0) = 0.0;
    mask.layers[0](0, 1) = 0.0;
    mask.layers[1](0, 1) = 0.0;

    const fs::path path = dir.path / "mask.csv";
    export_mask(mask, path);
    std::ifstream in(path);
    std::stringstream buf;
    buf << in.rdbuf();
    REQUIRE(buf.str() == "layer,row,col\n0,0,1\n0,1,0\n1,0,1\n");
}
