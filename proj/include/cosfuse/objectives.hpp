#pragma once

#include <vector>

#include "cosfuse/embedding.hpp"
#include "cosfuse/graph.hpp"
#include "cosfuse/seq2seq.hpp"

namespace cosfuse {

struct RegularizationConfig {
    double lambda = 10.0;
};

struct FusionConfig {
    double tau = 0.1;
    double lambda_f = 0.1;
};

// Per-utterance objective, summed over target steps. `total` is the scalar
// node to backpropagate; the doubles are its decomposition for logging.
struct LossBreakdown {
    Var total;
    double total_value = 0.0;
    double data_term = 0.0;  // sum of -log P(y_t), plain or fused
    double reg_term = 0.0;   // sum of 1 - cos(e_tilde_t, e_{y_t}), unweighted
    double mean_cosine = 0.0;
    int steps = 0;
};

// -log p[y_t].
Var asr_loss(Graph& g, Var p, int y_t);

// 1 - cos(e_tilde, e_target). The target must be a frozen node.
Var reg_loss(Graph& g, Var e_tilde, Var e_target);

// softmax(cos(e_tilde, e_v) / tau) over every table row. `table` is a frozen
// [V x D] node; only e_tilde receives gradient.
Var cosine_softmax(Graph& g, Var e_tilde, Var table, double tau);
Var cosine_softmax(Graph& g, Var e_tilde, const EmbeddingTable& table, double tau);

// (1 - lambda_f) * p_phi + lambda_f * p_theta. The endpoints return the
// input node itself, so degenerate configs reduce bit-exactly.
Var fuse(Graph& g, Var p_phi, Var p_theta, double lambda_f);

// -log p_fused[y_t].
Var fused_loss(Graph& g, Var p_fused, int y_t);

// sum_t [ -log P_phi(y_t) + lambda * (1 - cos(e_tilde_t, e_{y_t})) ].
// lambda = 0 skips the table entirely and equals the plain likelihood sum.
LossBreakdown combined_objective(Graph& g,
                                 const std::vector<DecoderStepOutput>& outputs,
                                 const std::vector<int>& targets,
                                 const EmbeddingTable& table,
                                 const RegularizationConfig& reg);

// sum_t [ -log P_fused(y_t) + lambda * (1 - cos(e_tilde_t, e_{y_t})) ] with
// P_fused from cosine_softmax + fuse. lambda_f = 0 falls back to
// combined_objective bit-exactly.
LossBreakdown combined_fused_objective(Graph& g,
                                       const std::vector<DecoderStepOutput>& outputs,
                                       const std::vector<int>& targets,
                                       const EmbeddingTable& table,
                                       const RegularizationConfig& reg,
                                       const FusionConfig& fusion);

}  // namespace cosfuse
