#pragma once
#include <string>
#include <vector>

#include "vrp/matrix.hpp"

namespace vrp {

// Model-ready samples: one row per window, one participant id per row.
// Feature values and targets are in [0, 1] once the pipeline has normalised
// them.
struct WindowedDataset {
    Matrix features;                         // samples x feature_dim
    std::vector<double> targets;             // samples
    std::vector<std::string> group_ids;      // samples
    std::vector<std::string> feature_names;  // feature_dim

    std::size_t size() const { return targets.size(); }
    bool empty() const { return targets.empty(); }
};

struct EnvironmentSplit {
    WindowedDataset train;
    WindowedDataset val;
    WindowedDataset test;
};

}  // namespace vrp
