#include "cosfuse/seq2seq.hpp"

#include <random>
#include <string>
#include <unordered_map>

#include "cosfuse/errors.hpp"
#include "cosfuse/vocab.hpp"

namespace cosfuse {

void ModelConfig::validate() const {
    if (feat_dim < 1 || enc_hidden < 1 || dec_hidden < 1 || embed_dim < 1 ||
        vocab_size < 1 || ftheta_hidden < 1) {
        throw config_error("model sizes must all be >= 1");
    }
}

GruParams gru_param_shapes(int input, int hidden) {
    GruParams p;
    p.wz = Tensor::zeros({hidden, input});
    p.uz = Tensor::zeros({hidden, hidden});
    p.bz = Tensor::zeros({hidden});
    p.wr = Tensor::zeros({hidden, input});
    p.ur = Tensor::zeros({hidden, hidden});
    p.br = Tensor::zeros({hidden});
    p.wh = Tensor::zeros({hidden, input});
    p.uh = Tensor::zeros({hidden, hidden});
    p.bh = Tensor::zeros({hidden});
    return p;
}

ModelParams ModelParams::init(const ModelConfig& cfg) {
    cfg.validate();
    ModelParams p;
    p.config = cfg;
    p.enc_fwd = gru_param_shapes(cfg.feat_dim, cfg.enc_hidden);
    p.enc_bwd = gru_param_shapes(cfg.feat_dim, cfg.enc_hidden);
    p.dec = gru_param_shapes(cfg.embed_dim + cfg.enc_dim(), cfg.dec_hidden);
    const int att = cfg.dec_hidden;
    p.att_query = Tensor::zeros({cfg.dec_hidden, att});
    p.att_key = Tensor::zeros({cfg.enc_dim(), att});
    p.w_phi = Tensor::zeros({cfg.vocab_size, cfg.dec_hidden});
    p.b_phi = Tensor::zeros({cfg.vocab_size});
    p.w_theta1 = Tensor::zeros({cfg.ftheta_hidden, cfg.dec_hidden});
    p.b_theta1 = Tensor::zeros({cfg.ftheta_hidden});
    p.w_theta2 = Tensor::zeros({cfg.embed_dim, cfg.ftheta_hidden});
    p.b_theta2 = Tensor::zeros({cfg.embed_dim});
    p.input_embedding = Tensor::zeros({cfg.vocab_size, cfg.embed_dim});

    std::mt19937_64 gen(cfg.seed);
    std::uniform_real_distribution<double> dist(-0.1, 0.1);
    p.for_each_param([&](const std::string&, Tensor& t) {
        if (t.rank() == 2) {
            for (double& v : t.data()) {
                v = dist(gen);
            }
        }
    });
    return p;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named_tensors() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for_each_param([&out](const std::string& name, const Tensor& t) {
        out.emplace_back(name, t);
    });
    return out;
}

BoundModel bind_model(Graph& g, const ModelParams& params, bool trainable) {
    params.config.validate();
    std::vector<std::string> names;
    std::vector<Var> vars;
    params.for_each_param([&](const std::string& name, const Tensor& t) {
        names.push_back(name);
        vars.push_back(trainable ? g.param(t) : g.constant(t));
    });
    return bind_model_vars(params.config, names, vars);
}

BoundModel bind_model_vars(const ModelConfig& cfg,
                           const std::vector<std::string>& names,
                           const std::vector<Var>& vars) {
    if (names.size() != vars.size()) {
        throw contract_error("bind: name/var count mismatch");
    }
    std::unordered_map<std::string, Var> byname;
    for (size_t i = 0; i < names.size(); i++) {
        byname.emplace(names[i], vars[i]);
    }
    auto get = [&byname](const std::string& n) {
        auto it = byname.find(n);
        if (it == byname.end()) {
            throw contract_error("bind: missing parameter " + n);
        }
        return it->second;
    };
    auto gru = [&get](const std::string& prefix) {
        BoundGru c;
        c.wz = get(prefix + ".wz");
        c.uz = get(prefix + ".uz");
        c.bz = get(prefix + ".bz");
        c.wr = get(prefix + ".wr");
        c.ur = get(prefix + ".ur");
        c.br = get(prefix + ".br");
        c.wh = get(prefix + ".wh");
        c.uh = get(prefix + ".uh");
        c.bh = get(prefix + ".bh");
        return c;
    };

    BoundModel m;
    m.config = cfg;
    m.enc_fwd = gru("enc_fwd");
    m.enc_bwd = gru("enc_bwd");
    m.dec = gru("dec");
    m.att_query = get("att_query");
    m.att_key = get("att_key");
    m.w_phi = get("w_phi");
    m.b_phi = get("b_phi");
    m.w_theta1 = get("w_theta1");
    m.b_theta1 = get("b_theta1");
    m.w_theta2 = get("w_theta2");
    m.b_theta2 = get("b_theta2");
    m.input_embedding = get("input_embedding");
    for (size_t i = 0; i < names.size(); i++) {
        m.named.emplace_back(names[i], vars[i]);
    }
    return m;
}

Var gru_cell(Graph& g, const BoundGru& cell, Var x, Var h) {
    Var z = g.sigmoid(g.add(g.add(g.matvec(cell.wz, x), g.matvec(cell.uz, h)),
                            cell.bz));
    Var r = g.sigmoid(g.add(g.add(g.matvec(cell.wr, x), g.matvec(cell.ur, h)),
                            cell.br));
    Var hh = g.tanh(g.add(
        g.add(g.matvec(cell.wh, x), g.matvec(cell.uh, g.mul(r, h))), cell.bh));
    // (1 - z) h + z hh, written as h + z (hh - h).
    return g.add(h, g.mul(z, g.sub(hh, h)));
}

Var encode(Graph& g, const BoundModel& m, const Tensor& features) {
    if (features.rank() != 2) {
        throw shape_error("encode: features must be [T x feat_dim], got " +
                          features.shape_str());
    }
    if (features.cols() != m.config.feat_dim) {
        throw shape_error("encode: feature dim " + std::to_string(features.cols()) +
                          " does not match configured " +
                          std::to_string(m.config.feat_dim));
    }
    const int t_in = features.rows();
    if (t_in < 1) {
        throw data_error("encode: empty feature sequence");
    }

    Var feats = g.constant(features);
    Var h0 = g.constant(Tensor::zeros({m.config.enc_hidden}));
    std::vector<Var> fwd(static_cast<size_t>(t_in));
    std::vector<Var> bwd(static_cast<size_t>(t_in));
    Var h = h0;
    for (int t = 0; t < t_in; t++) {
        h = gru_cell(g, m.enc_fwd, g.slice_row(feats, t), h);
        fwd[static_cast<size_t>(t)] = h;
    }
    h = h0;
    for (int t = t_in - 1; t >= 0; t--) {
        h = gru_cell(g, m.enc_bwd, g.slice_row(feats, t), h);
        bwd[static_cast<size_t>(t)] = h;
    }
    std::vector<Var> rows(static_cast<size_t>(t_in));
    for (int t = 0; t < t_in; t++) {
        rows[static_cast<size_t>(t)] =
            g.concat(fwd[static_cast<size_t>(t)], bwd[static_cast<size_t>(t)]);
    }
    return g.stack_rows(rows);
}

DecoderState init_decoder_state(Graph& g, const BoundModel& m) {
    return {g.constant(Tensor::zeros({m.config.dec_hidden})), true};
}

std::pair<DecoderStepOutput, DecoderState> decoder_step(Graph& g,
                                                        const BoundModel& m,
                                                        int prev_token,
                                                        const DecoderState& state,
                                                        Var enc_states) {
    if (!state.initialized) {
        throw contract_error("decoder_step: state not initialized");
    }
    if (prev_token < 0 || prev_token >= m.config.vocab_size) {
        throw lookup_error("decoder_step: token id " + std::to_string(prev_token) +
                           " out of range for V=" +
                           std::to_string(m.config.vocab_size));
    }

    Var emb = g.slice_row(m.input_embedding, prev_token);
    Var q = g.vecmat(state.h, m.att_query);      // [A]
    Var keys = g.matmul(enc_states, m.att_key);  // [T x A]
    Var attn = g.softmax(g.matvec(keys, q));
    Var context = g.vecmat(attn, enc_states);

    Var h = gru_cell(g, m.dec, g.concat(emb, context), state.h);
    Var p_phi = g.softmax(g.add(g.matvec(m.w_phi, h), m.b_phi));
    Var hidden = g.tanh(g.add(g.matvec(m.w_theta1, h), m.b_theta1));
    Var e_tilde = g.add(g.matvec(m.w_theta2, hidden), m.b_theta2);

    DecoderStepOutput out{h, p_phi, e_tilde, attn};
    return {out, DecoderState{h, true}};
}

std::vector<DecoderStepOutput> teacher_forced_rollout(Graph& g, const BoundModel& m,
                                                      const Tensor& features,
                                                      const std::vector<int>& targets) {
    if (targets.empty()) {
        throw data_error("rollout: empty target sequence");
    }
    if (targets.back() != Vocab::kEos) {
        throw data_error("rollout: target sequence must end with EOS");
    }
    Var enc = encode(g, m, features);
    DecoderState state = init_decoder_state(g, m);
    std::vector<DecoderStepOutput> outputs;
    outputs.reserve(targets.size());
    int prev = Vocab::kSos;
    for (int y : targets) {
        auto [out, next] = decoder_step(g, m, prev, state, enc);
        outputs.push_back(out);
        state = next;
        prev = y;
    }
    return outputs;
}

}  // namespace cosfuse
