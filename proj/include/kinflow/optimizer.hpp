#pragma once

#include "kinflow/config.hpp"
#include "kinflow/tensor.hpp"

#include <vector>

namespace kinflow {

// Decoupled-weight-decay Adam over a fixed list of parameter blocks, with
// global-norm gradient clipping applied before the moment updates.
class AdamW {
public:
    AdamW(const OptimizerConfig& cfg, const std::vector<Index>& block_sizes);

    // params and grads are parallel views over the same block layout.
    void step(const std::vector<double*>& params, const std::vector<double*>& grads);

    int steps_taken() const { return step_count_; }

private:
    OptimizerConfig cfg_;
    std::vector<Index> sizes_;
    std::vector<Eigen::ArrayXd> m_, v_;
    int step_count_ = 0;
};

}  // namespace kinflow
