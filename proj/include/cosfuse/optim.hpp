#pragma once

#include <limits>
#include <vector>

#include "cosfuse/graph.hpp"
#include "cosfuse/tensor.hpp"

namespace cosfuse {

struct SgdConfig {
    double learning_rate = 0.1;
    double clip_norm = 5.0;
};

// L2 norm over the concatenation of all gradients.
double global_grad_norm(const Graph& g, const std::vector<Var>& vars);

// One SGD update with global-norm clipping. `vars` are the bound graph leaves
// after backward(); `hosts` point at the owning tensors that get updated in
// place. Returns the pre-clip gradient norm.
double sgd_step(const Graph& g, const std::vector<Var>& vars,
                const std::vector<Tensor*>& hosts, const SgdConfig& cfg);

// Halves the learning rate when a dev metric fails to improve for `patience`
// consecutive observations.
struct LrSchedule {
    double lr = 0.1;
    int patience = 2;
    double best = std::numeric_limits<double>::infinity();
    int stalled = 0;

    // Feed one dev metric (lower is better). Returns true when the rate was
    // just halved.
    bool observe(double metric);
};

}  // namespace cosfuse
