#include "cosfuse/rnnlm.hpp"

#include <cmath>
#include <random>
#include <unordered_map>

#include "cosfuse/errors.hpp"
#include "cosfuse/optim.hpp"
#include "cosfuse/vocab.hpp"

namespace cosfuse {

void LMConfig::validate() const {
    if (vocab_size < 1 || embed_dim < 1 || hidden < 1) {
        throw config_error("lm sizes must all be >= 1");
    }
    if (epochs < 1) {
        throw config_error("lm epochs must be >= 1");
    }
}

LMParams LMParams::init(const LMConfig& cfg) {
    cfg.validate();
    LMParams p;
    p.config = cfg;
    p.embedding = Tensor::zeros({cfg.vocab_size, cfg.embed_dim});
    p.rnn = gru_param_shapes(cfg.embed_dim, cfg.hidden);
    p.w_out = Tensor::zeros({cfg.vocab_size, cfg.hidden});
    p.b_out = Tensor::zeros({cfg.vocab_size});

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

std::vector<std::pair<std::string, Tensor>> LMParams::named_tensors() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for_each_param([&out](const std::string& name, const Tensor& t) {
        out.emplace_back(name, t);
    });
    return out;
}

BoundLM bind_lm(Graph& g, const LMParams& params, bool trainable) {
    params.config.validate();
    std::vector<std::string> names;
    std::vector<Var> vars;
    params.for_each_param([&](const std::string& name, const Tensor& t) {
        names.push_back(name);
        vars.push_back(trainable ? g.param(t) : g.constant(t));
    });
    return bind_lm_vars(params.config, names, vars);
}

BoundLM bind_lm_vars(const LMConfig& cfg, const std::vector<std::string>& names,
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
    BoundLM m;
    m.config = cfg;
    m.embedding = get("embedding");
    m.rnn.wz = get("rnn.wz");
    m.rnn.uz = get("rnn.uz");
    m.rnn.bz = get("rnn.bz");
    m.rnn.wr = get("rnn.wr");
    m.rnn.ur = get("rnn.ur");
    m.rnn.br = get("rnn.br");
    m.rnn.wh = get("rnn.wh");
    m.rnn.uh = get("rnn.uh");
    m.rnn.bh = get("rnn.bh");
    m.w_out = get("w_out");
    m.b_out = get("b_out");
    for (size_t i = 0; i < names.size(); i++) {
        m.named.emplace_back(names[i], vars[i]);
    }
    return m;
}

LMState lm_init_state(Graph& g, const BoundLM& m) {
    LMState s;
    s.h = g.constant(Tensor::zeros({m.config.hidden}));
    s.initialized = true;
    return s;
}

std::pair<Var, LMState> lm_score_step(Graph& g, const BoundLM& m, const LMState& state,
                                      int token) {
    if (!state.initialized) {
        throw contract_error("lm_score_step: state not initialized");
    }
    if (token < 0 || token >= m.config.vocab_size) {
        throw lookup_error("lm_score_step: token id " + std::to_string(token) +
                           " outside vocab of size " + std::to_string(m.config.vocab_size));
    }
    Var emb = g.slice_row(m.embedding, token);
    Var h = gru_cell(g, m.rnn, emb, state.h);
    Var logits = g.add(g.matvec(m.w_out, h), m.b_out);
    Var logp = g.log(g.softmax(logits));
    LMState next;
    next.h = h;
    next.initialized = true;
    return {logp, next};
}

namespace {

void check_sentence(const std::vector<int>& sent, int vocab_size) {
    if (sent.size() < 2 || sent.front() != Vocab::kSos || sent.back() != Vocab::kEos) {
        throw data_error("lm corpus sentences must be framed as SOS ... EOS");
    }
    for (int id : sent) {
        if (id < 0 || id >= vocab_size) {
            throw data_error("lm corpus token id " + std::to_string(id) +
                             " outside vocab of size " + std::to_string(vocab_size));
        }
    }
}

// Sum of next-token NLLs for one sentence; targets are sent[1..].
Var sentence_nll(Graph& g, const BoundLM& m, const std::vector<int>& sent) {
    LMState state = lm_init_state(g, m);
    Var total;
    for (size_t t = 0; t + 1 < sent.size(); t++) {
        auto [logp, next] = lm_score_step(g, m, state, sent[t]);
        Var nll = g.scale(g.pick(logp, sent[t + 1]), -1.0);
        total = t == 0 ? nll : g.add(total, nll);
        state = next;
    }
    return total;
}

}  // namespace

double perplexity(const LMParams& params, const std::vector<std::vector<int>>& corpus) {
    if (corpus.empty()) {
        throw data_error("perplexity: empty corpus");
    }
    double nll = 0.0;
    size_t tokens = 0;
    for (const auto& sent : corpus) {
        check_sentence(sent, params.config.vocab_size);
        Graph g;
        BoundLM m = bind_lm(g, params, false);
        nll += g.val(sentence_nll(g, m, sent)).item();
        tokens += sent.size() - 1;
    }
    return std::exp(nll / static_cast<double>(tokens));
}

LMTrainResult lm_train(const std::vector<std::vector<int>>& corpus, const LMConfig& cfg) {
    cfg.validate();
    if (corpus.empty()) {
        throw data_error("lm_train: empty corpus");
    }
    for (const auto& sent : corpus) {
        check_sentence(sent, cfg.vocab_size);
    }

    LMTrainResult result;
    result.params = LMParams::init(cfg);
    result.epoch_perplexity.push_back(perplexity(result.params, corpus));

    SgdConfig sgd;
    sgd.learning_rate = cfg.learning_rate;
    sgd.clip_norm = cfg.clip_norm;
    std::vector<Tensor*> hosts;  // member tensors have stable addresses
    result.params.for_each_param(
        [&hosts](const std::string&, Tensor& t) { hosts.push_back(&t); });
    size_t step = 0;
    for (int epoch = 0; epoch < cfg.epochs; epoch++) {
        for (const auto& sent : corpus) {
            Graph g;
            BoundLM m = bind_lm(g, result.params, true);
            Var loss = sentence_nll(g, m, sent);
            if (!g.val(loss).all_finite()) {
                throw numeric_error("lm_train: non-finite loss at step " +
                                    std::to_string(step));
            }
            g.backward(loss);
            std::vector<Var> vars;
            for (const auto& [name, v] : m.named) {
                (void)name;
                vars.push_back(v);
            }
            sgd_step(g, vars, hosts, sgd);
            step++;
        }
        result.epoch_perplexity.push_back(perplexity(result.params, corpus));
    }
    return result;
}

}  // namespace cosfuse
