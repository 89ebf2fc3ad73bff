#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "vrp/metrics.hpp"
#include "vrp/rng.hpp"

using namespace vrp;

namespace {

// Direct-formula oracle with a separate accumulation path (raw moments).
double oracle_ccc(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        syy += y[i] * y[i];
        sxy += x[i] * y[i];
    }
    const double mx = sx / n, my = sy / n;
    const double vx = sxx / n - mx * mx;
    const double vy = syy / n - my * my;
    const double cov = sxy / n - mx * my;
    return 2.0 * cov / (vx + vy + (mx - my) * (mx - my));
}

double oracle_pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        syy += y[i] * y[i];
        sxy += x[i] * y[i];
    }
    const double mx = sx / n, my = sy / n;
    return (sxy / n - mx * my) /
           std::sqrt((sxx / n - mx * mx) * (syy / n - my * my));
}

}  // namespace

TEST_CASE("mse basics") {
    REQUIRE(mse({1.0, 2.0}, {1.0, 2.0}) == 0.0);
    REQUIRE(mse({0.0, 0.0}, {1.0, 1.0}) == 1.0);
    REQUIRE(mse({0.2, 0.8}, {0.0, 1.0}) == Catch::Approx(0.04).margin(1e-15));
    REQUIRE_THROWS_AS(mse({1.0}, {1.0, 2.0}), ShapeError);
}

TEST_CASE("ccc: exact hand case") {
    const double v = ccc({1.0, 2.0, 3.0, 4.0}, {1.5, 2.5, 3.5, 4.5});
    REQUIRE(v == Catch::Approx(10.0 / 11.0).margin(1e-12));
}

TEST_CASE("ccc: perfect and degenerate cases") {
    REQUIRE(ccc({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}) == 1.0);
    // constant prediction at the target mean: zero covariance
    REQUIRE(ccc({2.0, 2.0, 2.0}, {1.0, 2.0, 3.0}) == 0.0);
    // both constant and equal
    REQUIRE(ccc({5.0, 5.0}, {5.0, 5.0}) == 1.0);
    REQUIRE_THROWS_AS(ccc({1.0}, {1.0}), ShapeError);
}

TEST_CASE("ccc: matches the direct-formula oracle on random pairs") {
    Rng rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + rng.below(40);
        std::vector<double> x(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = rng.normal();
            y[i] = 0.5 * x[i] + rng.normal();
        }
        REQUIRE(ccc(x, y) == Catch::Approx(oracle_ccc(x, y)).margin(1e-12));
    }
}

TEST_CASE("ccc: symmetry, range, and relation to Pearson") {
    Rng rng(13);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> x(20), y(20);
        for (std::size_t i = 0; i < 20; ++i) {
            x[i] = rng.normal();
            y[i] = rng.normal();
        }
        const double c = ccc(x, y);
        REQUIRE(c == ccc(y, x));
        REQUIRE(c >= -1.0);
        REQUIRE(c <= 1.0);
        REQUIRE(std::abs(c) <= std::abs(oracle_pearson(x, y)) + 1e-12);
    }
}

TEST_CASE("ccc: constant offset strictly decreases agreement") {
    std::vector<double> x{0.1, 0.4, 0.9, 0.3};
    std::vector<double> shifted = x;
    for (double& v : shifted) v += 0.25;
    REQUIRE(ccc(x, shifted) < 1.0);
    REQUIRE(ccc(x, x) == 1.0);
}

TEST_CASE("group_mse: trivial splits") {
    const auto single = group_mse({1.0, 2.0}, {0.0, 0.0}, {"a", "a"});
    REQUIRE(single.size() == 1);
    REQUIRE(single.at("a") == mse({1.0, 2.0}, {0.0, 0.0}));

    const auto two =
        group_mse({1.0, 1.0, 0.0, 0.0}, {0.0, 0.0, 0.0, 0.0}, {"a", "a", "b", "b"});
    REQUIRE(two.at("a") == 1.0);
    REQUIRE(two.at("b") == 0.0);
}

TEST_CASE("group_mse: weighted recombination equals pooled MSE") {
    Rng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t groups = 2 + rng.below(9);
        std::vector<double> pred, target;
        std::vector<std::string> gids;
        for (std::size_t g = 0; g < groups; ++g) {
            const std::size_t n = 1 + rng.below(20);
            for (std::size_t i = 0; i < n; ++i) {
                pred.push_back(rng.normal());
                target.push_back(rng.normal());
                gids.push_back("g" + std::to_string(g));
            }
        }
        const auto per_group = group_mse(pred, target, gids);
        std::map<std::string, std::size_t> counts;
        for (const auto& g : gids) counts[g]++;
        double recombined = 0.0;
        for (const auto& [g, v] : per_group)
            recombined += v * static_cast<double>(counts[g]);
        recombined /= static_cast<double>(pred.size());
        REQUIRE(recombined == Catch::Approx(mse(pred, target)).margin(1e-12));
    }
}

TEST_CASE("risk_j: degenerate and hand cases") {
    REQUIRE(risk_j({{"a", 0.3}}, 0.3, 5.0) == 0.3);
    REQUIRE(risk_j({{"a", 0.1}, {"b", 0.5}}, 0.3, 0.0) == 0.3);
    // population variance of {0.1, 0.3} is 0.01
    REQUIRE(risk_j({{"a", 0.1}, {"b", 0.3}}, 0.2, 1.0) ==
            Catch::Approx(0.21).margin(1e-15));
}

TEST_CASE("risk_j: monotone in lambda when group variance is positive") {
    const std::map<std::string, double> groups{{"a", 0.1}, {"b", 0.4}};
    double prev = risk_j(groups, 0.25, 0.0);
    for (double lam : {0.5, 1.0, 2.0, 10.0}) {
        const double j = risk_j(groups, 0.25, lam);
        REQUIRE(j > prev);
        prev = j;
    }
}

TEST_CASE("make_report: internal consistency") {
    Rng rng(91);
    std::vector<double> pred, target;
    std::vector<std::string> gids;
    for (std::size_t g = 0; g < 4; ++g) {
        for (std::size_t i = 0; i < 12; ++i) {
            pred.push_back(rng.uniform());
            target.push_back(rng.uniform());
            gids.push_back("p" + std::to_string(g));
        }
    }
    const auto report = make_report(pred, target, gids, 1.5);
    REQUIRE(report.n_samples == pred.size());
    REQUIRE(report.risk_j ==
            Catch::Approx(report.mse + 1.5 * report.mse_group_variance).margin(1e-15));
    std::size_t total = 0;
    for (const auto& [g, n] : report.per_group_count) total += n;
    REQUIRE(total == report.n_samples);
    REQUIRE(report.per_group_ccc.size() == 4);
}
