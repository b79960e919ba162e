#include "cosfuse/optim.hpp"

#include <cmath>

#include "cosfuse/errors.hpp"

namespace cosfuse {

double global_grad_norm(const Graph& g, const std::vector<Var>& vars) {
    double sq = 0.0;
    for (Var v : vars) {
        const Tensor grad = g.grad(v);
        for (double x : grad.data()) sq += x * x;
    }
    return std::sqrt(sq);
}

double sgd_step(const Graph& g, const std::vector<Var>& vars,
                const std::vector<Tensor*>& hosts, const SgdConfig& cfg) {
    if (vars.size() != hosts.size()) {
        throw contract_error("sgd_step: " + std::to_string(vars.size()) + " vars vs " +
                             std::to_string(hosts.size()) + " host tensors");
    }
    const double norm = global_grad_norm(g, vars);
    double scale = 1.0;
    if (cfg.clip_norm > 0.0 && norm > cfg.clip_norm) scale = cfg.clip_norm / norm;
    const double step = cfg.learning_rate * scale;
    for (size_t i = 0; i < vars.size(); ++i) {
        Tensor* host = hosts[i];
        const Tensor grad = g.grad(vars[i]);
        if (!host->same_shape(grad)) {
            throw contract_error("sgd_step: host shape " + host->shape_str() +
                                 " does not match grad shape " + grad.shape_str());
        }
        for (int j = 0; j < grad.size(); ++j) host->at(j) -= step * grad.at(j);
    }
    return norm;
}

bool LrSchedule::observe(double metric) {
    if (metric < best) {
        best = metric;
        stalled = 0;
        return false;
    }
    if (++stalled >= patience) {
        lr /= 2.0;
        stalled = 0;
        return true;
    }
    return false;
}

}  // namespace cosfuse
