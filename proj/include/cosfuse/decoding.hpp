#pragma once

#include <vector>

#include "cosfuse/embedding.hpp"
#include "cosfuse/graph.hpp"
#include "cosfuse/objectives.hpp"
#include "cosfuse/rnnlm.hpp"
#include "cosfuse/seq2seq.hpp"

namespace cosfuse {

// One beam entry. `state` is a handle into the graph beam_search builds; it is
// only meaningful during the search itself.
struct Hypothesis {
    std::vector<int> tokens;  // includes the closing EOS once finished
    double score = 0.0;       // sum of per-step log scores, unnormalized
    bool finished = false;
    DecoderState state;
};

struct DecodeConfig {
    enum class Mode { baseline, fused };

    int beam = 20;
    int max_len = 50;
    Mode mode = Mode::baseline;
    FusionConfig fusion;
    // Shallow-fusion weight on LM log-probs. 0 disables the LM term entirely.
    double lm_weight = 0.0;
    bool length_normalize = false;

    void validate() const;
};

// Decode-time distribution for one step: p_phi in baseline mode, the fused
// mixture in fused mode. `table_node` must be a frozen graph node holding the
// embedding matrix; it is required (and only read) in fused mode.
Var step_distribution(Graph& g, const DecoderStepOutput& out, Var table_node,
                      const DecodeConfig& cfg);
// Convenience overload that installs the table as a graph constant.
Var step_distribution(Graph& g, const DecoderStepOutput& out,
                      const EmbeddingTable* table, const DecodeConfig& cfg);

// Standard beam search over step_distribution, with optional additive
// lm_weight * log P_LM shallow fusion. Returns hypotheses ranked best-first;
// ties break toward lexicographically smaller token sequences.
std::vector<Hypothesis> beam_search(const ModelParams& model, const Tensor& features,
                                    const EmbeddingTable* table, const LMParams* lm,
                                    const DecodeConfig& cfg);

// Argmax decoding (beam 1, no LM). The returned sequence has the closing EOS
// stripped.
std::vector<int> greedy_decode(const ModelParams& model, const Tensor& features,
                               const EmbeddingTable* table, const DecodeConfig& cfg);

}  // namespace cosfuse
