#include "cosfuse/training.hpp"

#include <cmath>
#include <limits>

#include "cosfuse/decoding.hpp"
#include "cosfuse/errors.hpp"
#include "cosfuse/optim.hpp"
#include "cosfuse/vocab.hpp"

namespace cosfuse {

TrainMode parse_train_mode(const std::string& name) {
    if (name == "baseline") return TrainMode::baseline;
    if (name == "reg") return TrainMode::reg;
    if (name == "fused") return TrainMode::fused;
    throw config_error("unknown training mode '" + name +
                       "' (expected baseline, reg, or fused)");
}

std::string train_mode_name(TrainMode mode) {
    switch (mode) {
        case TrainMode::baseline: return "baseline";
        case TrainMode::reg: return "reg";
        case TrainMode::fused: return "fused";
    }
    throw config_error("invalid training mode value");
}

TrainConfig TrainConfig::normalized() const {
    TrainConfig out = *this;
    if (mode == TrainMode::baseline) {
        out.reg.lambda = 0.0;
        out.fusion.lambda_f = 0.0;
    } else if (mode == TrainMode::reg) {
        out.fusion.lambda_f = 0.0;
    }
    return out;
}

void TrainConfig::validate() const {
    model.validate();
    if (epochs < 1) {
        throw config_error("epochs must be >= 1");
    }
    if (batch_size < 1) {
        throw config_error("batch size must be >= 1");
    }
    if (learning_rate <= 0.0) {
        throw config_error("learning rate must be > 0");
    }
    if (lr_patience < 1) {
        throw config_error("lr patience must be >= 1");
    }
    if (reg.lambda < 0.0) {
        throw config_error("regularization weight must be >= 0");
    }
    if (fusion.tau <= 0.0) {
        throw config_error("fusion temperature must be > 0");
    }
    if (fusion.lambda_f < 0.0 || fusion.lambda_f > 1.0) {
        throw config_error("fusion weight must lie in [0, 1]");
    }
}

namespace {

void check_table(const EmbeddingTable* table, const TrainConfig& cfg) {
    if (cfg.mode == TrainMode::baseline) {
        return;  // never read; a null table is fine
    }
    if (table == nullptr) {
        throw config_error(train_mode_name(cfg.mode) +
                           " mode requires an embedding table");
    }
    if (table->vocab_size() != cfg.model.vocab_size) {
        throw config_error("embedding table has " + std::to_string(table->vocab_size()) +
                           " rows but the model vocabulary has " +
                           std::to_string(cfg.model.vocab_size));
    }
    if (table->dim() != cfg.model.embed_dim) {
        throw config_error("embedding table dim " + std::to_string(table->dim()) +
                           " does not match model embed dim " +
                           std::to_string(cfg.model.embed_dim));
    }
}

DecodeConfig decode_config_for(const TrainConfig& cfg, int ref_len) {
    DecodeConfig dc;
    dc.beam = 1;
    dc.max_len = 2 * ref_len + 4;
    if (cfg.mode == TrainMode::fused) {
        dc.mode = DecodeConfig::Mode::fused;
        dc.fusion = cfg.fusion;
    }
    return dc;
}

}  // namespace

double dataset_token_error(const ModelParams& params, const Dataset& data,
                           const EmbeddingTable* table, const TrainConfig& cfg_in) {
    const TrainConfig cfg = cfg_in.normalized();
    if (data.items.empty()) {
        throw data_error("token error: empty dataset");
    }
    const EmbeddingTable* decode_table = cfg.mode == TrainMode::fused ? table : nullptr;
    long long edits = 0;
    long long ref_tokens = 0;
    for (const Utterance& utt : data.items) {
        std::vector<int> ref(utt.targets.begin(), utt.targets.end());
        if (!ref.empty() && ref.back() == Vocab::kEos) {
            ref.pop_back();
        }
        std::vector<int> hyp = greedy_decode(
            params, utt.features, decode_table,
            decode_config_for(cfg, static_cast<int>(ref.size())));
        if (ref.empty()) {
            edits += static_cast<long long>(hyp.size());
            continue;
        }
        WerReport r = wer(ref, hyp);
        edits += r.substitutions + r.insertions + r.deletions;
        ref_tokens += r.ref_len;
    }
    if (ref_tokens == 0) {
        throw data_error("token error: dataset has no reference tokens");
    }
    return static_cast<double>(edits) / static_cast<double>(ref_tokens);
}

double dataset_mean_cosine(const ModelParams& params, const Dataset& data,
                           const EmbeddingTable& table) {
    if (data.items.empty()) {
        throw data_error("mean cosine: empty dataset");
    }
    double sum = 0.0;
    long long steps = 0;
    for (const Utterance& utt : data.items) {
        Graph g;
        BoundModel bm = bind_model(g, params, false);
        auto outputs = teacher_forced_rollout(g, bm, utt.features, utt.targets);
        for (size_t t = 0; t < outputs.size(); t++) {
            Var cos = g.cosine(outputs[t].e_tilde, g.constant(table.row(utt.targets[t])));
            sum += g.val(cos).item();
            steps++;
        }
    }
    return sum / static_cast<double>(steps);
}

TrainResult asr_train(const Dataset& train, const Dataset& dev,
                      const EmbeddingTable* table, const TrainConfig& cfg_in,
                      const std::function<void(const StepLog&)>& on_step,
                      const std::function<void(const EpochLog&)>& on_epoch) {
    const TrainConfig cfg = cfg_in.normalized();
    cfg.validate();
    check_table(table, cfg);
    if (train.items.empty() || dev.items.empty()) {
        throw data_error("asr_train: empty train or dev set");
    }

    // baseline never reads the table; hand the objective an empty stand-in
    EmbeddingTable dummy;
    dummy.matrix = Tensor::mat(0, cfg.model.embed_dim, {});
    const EmbeddingTable& objective_table = table != nullptr ? *table : dummy;

    TrainResult result;
    ModelParams params = ModelParams::init(cfg.model);
    std::vector<Tensor*> hosts;
    params.for_each_param([&hosts](const std::string&, Tensor& t) { hosts.push_back(&t); });

    LrSchedule sched;
    sched.lr = cfg.learning_rate;
    sched.patience = cfg.lr_patience;
    SgdConfig sgd;
    sgd.clip_norm = cfg.clip_norm;

    result.best_dev_error = std::numeric_limits<double>::infinity();
    int utterances_done = 0;
    for (int epoch = 1; epoch <= cfg.epochs; epoch++) {
        const double epoch_lr = sched.lr;
        double loss_sum = 0.0;
        size_t i = 0;
        while (i < train.items.size()) {
            const size_t end = std::min(i + static_cast<size_t>(cfg.batch_size),
                                        train.items.size());
            Graph g;
            BoundModel bm = bind_model(g, params, true);
            Var batch_loss;
            for (size_t j = i; j < end; j++) {
                const Utterance& utt = train.items[j];
                auto outputs = teacher_forced_rollout(g, bm, utt.features, utt.targets);
                LossBreakdown lb =
                    cfg.mode == TrainMode::fused
                        ? combined_fused_objective(g, outputs, utt.targets,
                                                   objective_table, cfg.reg, cfg.fusion)
                        : combined_objective(g, outputs, utt.targets, objective_table,
                                             cfg.reg);
                utterances_done++;
                if (!std::isfinite(lb.total_value)) {
                    throw numeric_error("asr_train: non-finite loss at step " +
                                        std::to_string(utterances_done));
                }
                if (on_step) {
                    on_step(StepLog{utterances_done, lb.total_value, lb.data_term,
                                    lb.reg_term, lb.mean_cosine});
                }
                loss_sum += lb.total_value;
                batch_loss = (j == i) ? lb.total : g.add(batch_loss, lb.total);
            }
            g.backward(batch_loss);
            std::vector<Var> vars;
            for (const auto& [name, v] : bm.named) {
                (void)name;
                vars.push_back(v);
            }
            sgd.learning_rate = sched.lr;
            sgd_step(g, vars, hosts, sgd);
            i = end;
        }

        const double dev_error = dataset_token_error(params, dev, table, cfg);
        if (dev_error < result.best_dev_error) {
            result.best_dev_error = dev_error;
            result.best_epoch = epoch;
            result.best = params;
        }
        const bool halved = sched.observe(dev_error);
        result.epochs.push_back(EpochLog{
            epoch, loss_sum / static_cast<double>(train.items.size()), dev_error,
            epoch_lr, halved});
        if (on_epoch) {
            on_epoch(result.epochs.back());
        }
    }
    return result;
}

}  // namespace cosfuse
