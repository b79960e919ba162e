#include "cosfuse/decoding.hpp"

#include <algorithm>

#include "cosfuse/errors.hpp"
#include "cosfuse/vocab.hpp"

namespace cosfuse {

void DecodeConfig::validate() const {
    if (beam < 1) {
        throw config_error("beam size must be >= 1");
    }
    if (max_len < 1) {
        throw config_error("max output length must be >= 1");
    }
    if (lm_weight < 0.0) {
        throw config_error("lm weight must be >= 0");
    }
    if (mode == Mode::fused) {
        if (fusion.tau <= 0.0) {
            throw config_error("fusion temperature must be > 0");
        }
        if (fusion.lambda_f < 0.0 || fusion.lambda_f > 1.0) {
            throw config_error("fusion weight must lie in [0, 1]");
        }
    }
}

Var step_distribution(Graph& g, const DecoderStepOutput& out, Var table_node,
                      const DecodeConfig& cfg) {
    cfg.validate();
    if (cfg.mode == DecodeConfig::Mode::baseline) {
        return out.p_phi;
    }
    if (!table_node.valid()) {
        throw config_error("fused decoding requires an embedding table");
    }
    if (cfg.fusion.lambda_f == 0.0) {
        return out.p_phi;
    }
    Var p_theta = cosine_softmax(g, out.e_tilde, table_node, cfg.fusion.tau);
    return fuse(g, out.p_phi, p_theta, cfg.fusion.lambda_f);
}

Var step_distribution(Graph& g, const DecoderStepOutput& out,
                      const EmbeddingTable* table, const DecodeConfig& cfg) {
    Var table_node;
    if (table != nullptr) {
        table_node = g.constant(table->matrix);
    }
    return step_distribution(g, out, table_node, cfg);
}

namespace {

struct BeamItem {
    Hypothesis hyp;
    LMState lm_state;
};

bool better(const Hypothesis& a, const Hypothesis& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.tokens < b.tokens;
}

double ranking_score(const Hypothesis& h, bool length_normalize) {
    if (!length_normalize || h.tokens.empty()) return h.score;
    return h.score / static_cast<double>(h.tokens.size());
}

}  // namespace

std::vector<Hypothesis> beam_search(const ModelParams& model, const Tensor& features,
                                    const EmbeddingTable* table, const LMParams* lm,
                                    const DecodeConfig& cfg) {
    cfg.validate();
    model.config.validate();
    if (cfg.mode == DecodeConfig::Mode::fused) {
        if (table == nullptr) {
            throw config_error("fused decoding requires an embedding table");
        }
        if (table->vocab_size() != model.config.vocab_size) {
            throw config_error("embedding table has " + std::to_string(table->vocab_size()) +
                               " rows but the model vocabulary has " +
                               std::to_string(model.config.vocab_size));
        }
        if (table->dim() != model.config.embed_dim) {
            throw config_error("embedding table dim " + std::to_string(table->dim()) +
                               " does not match model embed dim " +
                               std::to_string(model.config.embed_dim));
        }
    }
    const bool use_lm = cfg.lm_weight > 0.0;
    if (use_lm && lm == nullptr) {
        throw config_error("lm weight is positive but no language model was given");
    }
    if (use_lm && lm->config.vocab_size != model.config.vocab_size) {
        throw config_error("lm and model vocabulary sizes disagree");
    }

    Graph g;
    BoundModel bm = bind_model(g, model, false);
    Var enc = encode(g, bm, features);
    Var table_node;
    if (cfg.mode == DecodeConfig::Mode::fused) {
        table_node = g.constant(table->matrix);
    }
    BoundLM blm;
    if (use_lm) {
        blm = bind_lm(g, *lm, false);
    }

    const int vocab = model.config.vocab_size;
    BeamItem start;
    start.hyp.state = init_decoder_state(g, bm);
    if (use_lm) {
        start.lm_state = lm_init_state(g, blm);
    }
    std::vector<BeamItem> live = {start};
    std::vector<BeamItem> finished;

    for (int step = 0; step < cfg.max_len && !live.empty(); step++) {
        std::vector<BeamItem> candidates = finished;
        for (const BeamItem& item : live) {
            const int prev = item.hyp.tokens.empty() ? Vocab::kSos : item.hyp.tokens.back();
            auto [out, next_state] = decoder_step(g, bm, prev, item.hyp.state, enc);
            // copies: node storage may move as the graph keeps growing
            const Tensor logs = g.val(g.log(step_distribution(g, out, table_node, cfg)));
            Tensor lm_logs;
            LMState next_lm;
            if (use_lm) {
                auto [lm_logp, advanced] = lm_score_step(g, blm, item.lm_state, prev);
                lm_logs = g.val(lm_logp);
                next_lm = advanced;
            }
            for (int v = 0; v < vocab; v++) {
                BeamItem cand;
                cand.hyp.tokens = item.hyp.tokens;
                cand.hyp.tokens.push_back(v);
                cand.hyp.score = item.hyp.score + logs.at(v);
                if (use_lm) {
                    cand.hyp.score += cfg.lm_weight * lm_logs.at(v);
                    cand.lm_state = next_lm;
                }
                cand.hyp.finished = v == Vocab::kEos;
                cand.hyp.state = next_state;
                candidates.push_back(std::move(cand));
            }
        }
        std::sort(candidates.begin(), candidates.end(),
                  [](const BeamItem& a, const BeamItem& b) { return better(a.hyp, b.hyp); });
        if (static_cast<int>(candidates.size()) > cfg.beam) {
            candidates.resize(static_cast<size_t>(cfg.beam));
        }
        live.clear();
        finished.clear();
        for (BeamItem& c : candidates) {
            (c.hyp.finished ? finished : live).push_back(std::move(c));
        }
    }

    std::vector<Hypothesis> ranked;
    for (BeamItem& item : finished) ranked.push_back(std::move(item.hyp));
    for (BeamItem& item : live) ranked.push_back(std::move(item.hyp));
    std::sort(ranked.begin(), ranked.end(),
              [&cfg](const Hypothesis& a, const Hypothesis& b) {
                  const double sa = ranking_score(a, cfg.length_normalize);
                  const double sb = ranking_score(b, cfg.length_normalize);
                  if (sa != sb) return sa > sb;
                  return a.tokens < b.tokens;
              });
    return ranked;
}

std::vector<int> greedy_decode(const ModelParams& model, const Tensor& features,
                               const EmbeddingTable* table, const DecodeConfig& cfg) {
    DecodeConfig greedy = cfg;
    greedy.beam = 1;
    greedy.lm_weight = 0.0;
    greedy.length_normalize = false;
    std::vector<Hypothesis> ranked = beam_search(model, features, table, nullptr, greedy);
    std::vector<int> tokens = ranked.front().tokens;
    if (!tokens.empty() && tokens.back() == Vocab::kEos) {
        tokens.pop_back();
    }
    return tokens;
}

}  // namespace cosfuse
