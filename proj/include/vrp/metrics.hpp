#pragma once
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "vrp/errors.hpp"
#include "vrp/matrix.hpp"

namespace vrp {

inline double mse(const std::vector<double>& pred, const std::vector<double>& target) {
    if (pred.size() != target.size()) throw ShapeError("mse: length mismatch");
    if (pred.empty()) throw ShapeError("mse: empty input");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        s += d * d;
    }
    return s / static_cast<double>(pred.size());
}

// Lin's concordance correlation coefficient with population (1/N) moments:
//   CCC = 2 cov / (var_p + var_t + (mean_p - mean_t)^2).
// Both inputs constant and equal -> 1; any other zero denominator -> 0.
inline double ccc(const std::vector<double>& pred, const std::vector<double>& target) {
    if (pred.size() != target.size()) throw ShapeError("ccc: length mismatch");
    if (pred.size() < 2) throw ShapeError("ccc: need at least 2 samples");
    const double n = static_cast<double>(pred.size());
    double mp = 0.0, mt = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        mp += pred[i];
        mt += target[i];
    }
    mp /= n;
    mt /= n;
    double vp = 0.0, vt = 0.0, cov = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double dp = pred[i] - mp;
        const double dt = target[i] - mt;
        vp += dp * dp;
        vt += dt * dt;
        cov += dp * dt;
    }
    vp /= n;
    vt /= n;
    cov /= n;
    const double gap = mp - mt;
    const double denom = vp + vt + gap * gap;
    if (denom == 0.0) return (vp == 0.0 && vt == 0.0 && mp == mt) ? 1.0 : 0.0;
    return 2.0 * cov / denom;
}

inline std::map<std::string, double> group_mse(const std::vector<double>& pred,
                                               const std::vector<double>& target,
                                               const std::vector<std::string>& groups) {
    if (pred.size() != target.size() || pred.size() != groups.size())
        throw ShapeError("group_mse: length mismatch");
    if (pred.empty()) throw ShapeError("group_mse: empty input");
    std::map<std::string, double> sums;
    std::map<std::string, std::size_t> counts;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        sums[groups[i]] += d * d;
        counts[groups[i]] += 1;
    }
    std::map<std::string, double> out;
    for (const auto& [g, s] : sums) out[g] = s / static_cast<double>(counts[g]);
    return out;
}

// J = MSE + lambda_var * Var_g(MSE^(g)), with an unweighted population
// variance over groups (each participant counts once).
inline double risk_j(const std::map<std::string, double>& group_mses, double global_mse,
                     double lambda_var) {
    if (group_mses.empty()) throw ShapeError("risk_j: no groups");
    std::vector<double> values;
    values.reserve(group_mses.size());
    for (const auto& [g, v] : group_mses) values.push_back(v);
    return global_mse + lambda_var * population_variance(values);
}

struct EvalReport {
    double mse = 0.0;
    double ccc = 0.0;  // pooled over all samples
    double ccc_group_mean = 0.0;
    std::map<std::string, double> per_group_mse;
    std::map<std::string, double> per_group_ccc;
    std::map<std::string, std::size_t> per_group_count;
    double mse_group_variance = 0.0;
    double risk_j = 0.0;
    double lambda_var = 0.0;
    std::size_t n_samples = 0;
};

inline EvalReport make_report(const std::vector<double>& pred,
                              const std::vector<double>& target,
                              const std::vector<std::string>& groups, double lambda_var) {
    EvalReport r;
    r.lambda_var = lambda_var;
    r.n_samples = pred.size();
    r.mse = mse(pred, target);
    r.ccc = ccc(pred, target);
    r.per_group_mse = group_mse(pred, target, groups);
    for (std::size_t i = 0; i < groups.size(); ++i) r.per_group_count[groups[i]] += 1;

    std::vector<double> group_values;
    for (const auto& [g, v] : r.per_group_mse) group_values.push_back(v);
    r.mse_group_variance = population_variance(group_values);
    r.risk_j = r.mse + lambda_var * r.mse_group_variance;

    // Per-group CCC for diagnostics; singleton groups are skipped.
    double ccc_sum = 0.0;
    std::size_t ccc_groups = 0;
    for (const auto& [g, count] : r.per_group_count) {
        if (count < 2) continue;
        std::vector<double> gp, gt;
        gp.reserve(count);
        gt.reserve(count);
        for (std::size_t i = 0; i < groups.size(); ++i) {
            if (groups[i] == g) {
                gp.push_back(pred[i]);
                gt.push_back(target[i]);
            }
        }
        const double c = ccc(gp, gt);
        r.per_group_ccc[g] = c;
        ccc_sum += c;
        ++ccc_groups;
    }
    r.ccc_group_mean = ccc_groups > 0 ? ccc_sum / static_cast<double>(ccc_groups) : 0.0;
    return r;
}

}  // namespace vrp
