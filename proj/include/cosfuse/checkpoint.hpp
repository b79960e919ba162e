#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cosfuse/objectives.hpp"
#include "cosfuse/rnnlm.hpp"
#include "cosfuse/seq2seq.hpp"
#include "cosfuse/training.hpp"

namespace cosfuse {

// JSON checkpoint: format_version, configs, vocabulary, and every parameter
// tensor by name. Doubles survive the round trip bit-exactly.
struct AsrCheckpoint {
    ModelParams params;
    TrainMode mode = TrainMode::baseline;
    FusionConfig fusion;  // read at decode time in fused mode
    uint64_t vocab_hash = 0;
    std::vector<std::string> tokens;  // content words; reserved ids implied
};

void save_asr_checkpoint(const AsrCheckpoint& ckpt, const std::string& path);
AsrCheckpoint load_asr_checkpoint(const std::string& path);

struct LMCheckpoint {
    LMParams params;
    uint64_t vocab_hash = 0;
    std::vector<std::string> tokens;  // content words; reserved ids implied
};

void save_lm_checkpoint(const LMCheckpoint& ckpt, const std::string& path);
LMCheckpoint load_lm_checkpoint(const std::string& path);

}  // namespace cosfuse
