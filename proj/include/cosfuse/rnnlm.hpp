#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cosfuse/graph.hpp"
#include "cosfuse/seq2seq.hpp"
#include "cosfuse/tensor.hpp"

namespace cosfuse {

// Next-token recurrent LM over the shared vocabulary. Sentences are token-id
// sequences framed as SOS ... EOS.
struct LMConfig {
    int vocab_size = 0;
    int embed_dim = 32;
    int hidden = 64;
    int epochs = 10;
    double learning_rate = 0.1;
    double clip_norm = 5.0;
    uint64_t seed = 1;

    void validate() const;
};

struct LMParams {
    LMConfig config;
    Tensor embedding;     // [V x E]
    GruParams rnn;        // input E, hidden H
    Tensor w_out, b_out;  // [V x H], [V]

    // Rank-2 tensors uniform(-0.1, 0.1) from cfg.seed, biases zero.
    static LMParams init(const LMConfig& cfg);

    template <typename Self, typename Fn>
    static void visit(Self& self, Fn&& fn) {
        fn("embedding", self.embedding);
        fn("rnn.wz", self.rnn.wz);
        fn("rnn.uz", self.rnn.uz);
        fn("rnn.bz", self.rnn.bz);
        fn("rnn.wr", self.rnn.wr);
        fn("rnn.ur", self.rnn.ur);
        fn("rnn.br", self.rnn.br);
        fn("rnn.wh", self.rnn.wh);
        fn("rnn.uh", self.rnn.uh);
        fn("rnn.bh", self.rnn.bh);
        fn("w_out", self.w_out);
        fn("b_out", self.b_out);
    }

    template <typename Fn>
    void for_each_param(Fn&& fn) {
        visit(*this, fn);
    }
    template <typename Fn>
    void for_each_param(Fn&& fn) const {
        visit(*this, fn);
    }

    std::vector<std::pair<std::string, Tensor>> named_tensors() const;
};

struct BoundLM {
    LMConfig config;
    Var embedding;
    BoundGru rnn;
    Var w_out, b_out;
    // Same order as LMParams::for_each_param.
    std::vector<std::pair<std::string, Var>> named;
};

BoundLM bind_lm(Graph& g, const LMParams& params, bool trainable);
BoundLM bind_lm_vars(const LMConfig& cfg, const std::vector<std::string>& names,
                     const std::vector<Var>& vars);

struct LMState {
    Var h;
    bool initialized = false;
};

LMState lm_init_state(Graph& g, const BoundLM& m);

// Consumes `token`, returns the log-probability vector [V] for the next token
// and the advanced state.
std::pair<Var, LMState> lm_score_step(Graph& g, const BoundLM& m, const LMState& state,
                                      int token);

struct LMTrainResult {
    LMParams params;
    // Training-set perplexity; entry 0 is measured before any update, entry k
    // after epoch k.
    std::vector<double> epoch_perplexity;
};

LMTrainResult lm_train(const std::vector<std::vector<int>>& corpus, const LMConfig& cfg);

// exp of mean next-token NLL over the corpus; EOS is a target, SOS is not.
double perplexity(const LMParams& params, const std::vector<std::vector<int>>& corpus);

}  // namespace cosfuse
