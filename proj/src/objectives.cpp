#include "cosfuse/objectives.hpp"

#include <string>

#include "cosfuse/errors.hpp"

namespace cosfuse {

namespace {

Var nll_of_target(Graph& g, Var p, int y_t, const char* what) {
    const int v = g.val(p).size();
    if (y_t < 0 || y_t >= v) {
        throw lookup_error(std::string(what) + ": target id " + std::to_string(y_t) +
                           " out of range for distribution over " +
                           std::to_string(v) + " tokens");
    }
    return g.scale(g.log(g.pick(p, y_t)), -1.0);
}

Var reg_from_cos(Graph& g, Var cos) {
    return g.add_scalar(g.scale(cos, -1.0), 1.0);
}

void validate_reg(const RegularizationConfig& reg) {
    if (reg.lambda < 0.0) {
        throw config_error("regularization weight must be >= 0, got " +
                           std::to_string(reg.lambda));
    }
}

void validate_fusion(const FusionConfig& fusion) {
    if (!(fusion.tau > 0.0)) {
        throw config_error("fusion temperature must be positive, got " +
                           std::to_string(fusion.tau));
    }
    if (fusion.lambda_f < 0.0 || fusion.lambda_f > 1.0) {
        throw config_error("fusion weight must lie in [0, 1], got " +
                           std::to_string(fusion.lambda_f));
    }
}

void check_alignment(const std::vector<DecoderStepOutput>& outputs,
                     const std::vector<int>& targets) {
    if (outputs.size() != targets.size()) {
        throw contract_error("objective: " + std::to_string(outputs.size()) +
                             " decoder steps vs " + std::to_string(targets.size()) +
                             " targets");
    }
    if (targets.empty()) {
        throw data_error("objective: empty target sequence");
    }
}

}  // namespace

Var asr_loss(Graph& g, Var p, int y_t) {
    return nll_of_target(g, p, y_t, "asr_loss");
}

Var reg_loss(Graph& g, Var e_tilde, Var e_target) {
    if (g.requires_grad(e_target)) {
        throw contract_error("reg_loss: target embedding must be frozen");
    }
    return reg_from_cos(g, g.cosine(e_tilde, e_target));
}

Var cosine_softmax(Graph& g, Var e_tilde, Var table, double tau) {
    return g.softmax_temp(g.cosine_table(e_tilde, table), tau);
}

Var cosine_softmax(Graph& g, Var e_tilde, const EmbeddingTable& table, double tau) {
    return cosine_softmax(g, e_tilde, g.constant(table.matrix), tau);
}

Var fuse(Graph& g, Var p_phi, Var p_theta, double lambda_f) {
    if (lambda_f < 0.0 || lambda_f > 1.0) {
        throw config_error("fusion weight must lie in [0, 1], got " +
                           std::to_string(lambda_f));
    }
    if (lambda_f == 0.0) {
        return p_phi;
    }
    if (lambda_f == 1.0) {
        return p_theta;
    }
    return g.add(g.scale(p_phi, 1.0 - lambda_f), g.scale(p_theta, lambda_f));
}

Var fused_loss(Graph& g, Var p_fused, int y_t) {
    return nll_of_target(g, p_fused, y_t, "fused_loss");
}

LossBreakdown combined_objective(Graph& g,
                                 const std::vector<DecoderStepOutput>& outputs,
                                 const std::vector<int>& targets,
                                 const EmbeddingTable& table,
                                 const RegularizationConfig& reg) {
    validate_reg(reg);
    check_alignment(outputs, targets);

    LossBreakdown out;
    out.steps = static_cast<int>(targets.size());
    Var acc;
    for (size_t t = 0; t < targets.size(); t++) {
        Var a = asr_loss(g, outputs[t].p_phi, targets[t]);
        out.data_term += g.val(a).item();
        Var term = a;
        if (reg.lambda > 0.0) {
            Var cos = g.cosine(outputs[t].e_tilde, g.constant(table.row(targets[t])));
            Var r = reg_from_cos(g, cos);
            out.reg_term += g.val(r).item();
            out.mean_cosine += g.val(cos).item();
            term = g.add(a, g.scale(r, reg.lambda));
        }
        acc = (t == 0) ? term : g.add(acc, term);
    }
    out.mean_cosine /= out.steps;
    out.total = acc;
    out.total_value = g.val(acc).item();
    return out;
}

LossBreakdown combined_fused_objective(Graph& g,
                                       const std::vector<DecoderStepOutput>& outputs,
                                       const std::vector<int>& targets,
                                       const EmbeddingTable& table,
                                       const RegularizationConfig& reg,
                                       const FusionConfig& fusion) {
    validate_reg(reg);
    validate_fusion(fusion);
    if (fusion.lambda_f == 0.0) {
        return combined_objective(g, outputs, targets, table, reg);
    }
    check_alignment(outputs, targets);

    LossBreakdown out;
    out.steps = static_cast<int>(targets.size());
    const Var table_var = g.constant(table.matrix);
    Var acc;
    for (size_t t = 0; t < targets.size(); t++) {
        Var cosines = g.cosine_table(outputs[t].e_tilde, table_var);
        Var p_theta = g.softmax_temp(cosines, fusion.tau);
        Var p_fused = fuse(g, outputs[t].p_phi, p_theta, fusion.lambda_f);
        Var f = fused_loss(g, p_fused, targets[t]);
        out.data_term += g.val(f).item();
        Var term = f;
        if (reg.lambda > 0.0) {
            Var cos = g.pick(cosines, targets[t]);
            Var r = reg_from_cos(g, cos);
            out.reg_term += g.val(r).item();
            out.mean_cosine += g.val(cos).item();
            term = g.add(f, g.scale(r, reg.lambda));
        } else {
            out.mean_cosine += g.val(g.pick(cosines, targets[t])).item();
        }
        acc = (t == 0) ? term : g.add(acc, term);
    }
    out.mean_cosine /= out.steps;
    out.total = acc;
    out.total_value = g.val(acc).item();
    return out;
}

}  // namespace cosfuse
