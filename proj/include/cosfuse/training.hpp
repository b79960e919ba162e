#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cosfuse/corpus.hpp"
#include "cosfuse/embedding.hpp"
#include "cosfuse/objectives.hpp"
#include "cosfuse/seq2seq.hpp"

namespace cosfuse {

// baseline: plain likelihood; reg: likelihood + cosine pull toward the frozen
// table; fused: the mixture distribution in the loss, plus the same pull.
enum class TrainMode { baseline, reg, fused };

TrainMode parse_train_mode(const std::string& name);
std::string train_mode_name(TrainMode mode);

struct TrainConfig {
    TrainMode mode = TrainMode::baseline;
    ModelConfig model;
    RegularizationConfig reg;
    FusionConfig fusion;
    int epochs = 10;
    int batch_size = 1;
    double learning_rate = 0.1;
    double clip_norm = 5.0;
    int lr_patience = 2;  // dev-error stalls before the rate is halved

    // baseline forces lambda = 0 and lambda_f = 0; reg forces lambda_f = 0.
    TrainConfig normalized() const;
    void validate() const;
};

struct StepLog {
    int step = 0;  // utterances processed so far
    double total = 0.0;
    double data_term = 0.0;
    double reg_term = 0.0;
    double mean_cosine = 0.0;
};

struct EpochLog {
    int epoch = 0;  // 1-based
    double mean_train_loss = 0.0;
    double dev_error = 0.0;       // greedy-decode token error on dev
    double learning_rate = 0.0;   // rate in effect during the epoch
    bool lr_halved = false;
};

struct TrainResult {
    ModelParams best;  // checkpoint with the lowest dev error
    double best_dev_error = 0.0;
    int best_epoch = 0;
    std::vector<EpochLog> epochs;
};

// Teacher-forced SGD with global-norm clipping; dev greedy decode after each
// epoch selects the returned checkpoint. `table` may be null only in baseline
// mode. Deterministic from cfg.model.seed. Throws numeric_error with the
// offending update index if the loss goes non-finite.
TrainResult asr_train(const Dataset& train, const Dataset& dev,
                      const EmbeddingTable* table, const TrainConfig& cfg,
                      const std::function<void(const StepLog&)>& on_step = {},
                      const std::function<void(const EpochLog&)>& on_epoch = {});

// Corpus-level token error of greedy decoding: total edit distance over total
// reference length.
double dataset_token_error(const ModelParams& params, const Dataset& data,
                           const EmbeddingTable* table, const TrainConfig& cfg);

// Mean cos(e_tilde_t, e_{y_t}) over all teacher-forced steps of a dataset.
double dataset_mean_cosine(const ModelParams& params, const Dataset& data,
                           const EmbeddingTable& table);

}  // namespace cosfuse
