#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cosfuse/graph.hpp"
#include "cosfuse/tensor.hpp"

namespace cosfuse {

struct ModelConfig {
    int feat_dim = 16;
    int enc_hidden = 32;   // per direction
    int dec_hidden = 32;   // H
    int embed_dim = 16;    // D, must match the frozen table
    int vocab_size = 0;    // V
    int ftheta_hidden = 32;
    uint64_t seed = 1;

    int enc_dim() const { return 2 * enc_hidden; }
    void validate() const;
};

// One gated recurrent cell. w*: [hidden x input], u*: [hidden x hidden],
// b*: [hidden].
struct GruParams {
    Tensor wz, uz, bz;
    Tensor wr, ur, br;
    Tensor wh, uh, bh;
};

GruParams gru_param_shapes(int input, int hidden);

// Host-side weights. The layout is fixed by ModelConfig alone so checkpoints
// can be validated shape by shape.
struct ModelParams {
    ModelConfig config;
    GruParams enc_fwd, enc_bwd, dec;
    Tensor att_query;       // [H x A]
    Tensor att_key;         // [enc_dim x A]
    Tensor w_phi, b_phi;    // [V x H], [V]
    Tensor w_theta1, b_theta1;  // [ftheta_hidden x H], [ftheta_hidden]
    Tensor w_theta2, b_theta2;  // [D x ftheta_hidden], [D]
    Tensor input_embedding;     // [V x D], learned, not the frozen table

    // Rank-2 tensors uniform(-0.1, 0.1) from cfg.seed, biases zero.
    static ModelParams init(const ModelConfig& cfg);

    template <typename Self, typename Fn>
    static void visit(Self& self, Fn&& fn) {
        auto gru = [&fn](const std::string& prefix, auto& p) {
            fn(prefix + ".wz", p.wz);
            fn(prefix + ".uz", p.uz);
            fn(prefix + ".bz", p.bz);
            fn(prefix + ".wr", p.wr);
            fn(prefix + ".ur", p.ur);
            fn(prefix + ".br", p.br);
            fn(prefix + ".wh", p.wh);
            fn(prefix + ".uh", p.uh);
            fn(prefix + ".bh", p.bh);
        };
        gru("enc_fwd", self.enc_fwd);
        gru("enc_bwd", self.enc_bwd);
        gru("dec", self.dec);
        fn("att_query", self.att_query);
        fn("att_key", self.att_key);
        fn("w_phi", self.w_phi);
        fn("b_phi", self.b_phi);
        fn("w_theta1", self.w_theta1);
        fn("b_theta1", self.b_theta1);
        fn("w_theta2", self.w_theta2);
        fn("b_theta2", self.b_theta2);
        fn("input_embedding", self.input_embedding);
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

struct BoundGru {
    Var wz, uz, bz, wr, ur, br, wh, uh, bh;
};

// Model weights registered as nodes of one Graph, either trainable params or
// frozen constants. Rebuilt per graph, cheap.
struct BoundModel {
    ModelConfig config;
    BoundGru enc_fwd, enc_bwd, dec;
    Var att_query, att_key;
    Var w_phi, b_phi;
    Var w_theta1, b_theta1, w_theta2, b_theta2;
    Var input_embedding;
    // Same order as ModelParams::for_each_param.
    std::vector<std::pair<std::string, Var>> named;
};

BoundModel bind_model(Graph& g, const ModelParams& params, bool trainable);
// Assemble from pre-made leaves (used by finite-difference checks).
BoundModel bind_model_vars(const ModelConfig& cfg,
                           const std::vector<std::string>& names,
                           const std::vector<Var>& vars);

struct DecoderState {
    Var h;
    bool initialized = false;
};

struct DecoderStepOutput {
    Var h;        // [H]
    Var p_phi;    // [V], softmax of the word transform
    Var e_tilde;  // [D], projected embedding
    Var attn;     // [T_in], attention weights
};

Var gru_cell(Graph& g, const BoundGru& cell, Var x, Var h);

// Bidirectional pass over the frames; one [T x enc_dim] state matrix.
Var encode(Graph& g, const BoundModel& m, const Tensor& features);

DecoderState init_decoder_state(Graph& g, const BoundModel& m);

std::pair<DecoderStepOutput, DecoderState> decoder_step(Graph& g,
                                                        const BoundModel& m,
                                                        int prev_token,
                                                        const DecoderState& state,
                                                        Var enc_states);

// Step t consumes ground-truth y_{t-1} (y_0 = SOS); output t aligns with
// targets[t]. Targets must be non-empty and end with EOS.
std::vector<DecoderStepOutput> teacher_forced_rollout(Graph& g, const BoundModel& m,
                                                      const Tensor& features,
                                                      const std::vector<int>& targets);

}  // namespace cosfuse
