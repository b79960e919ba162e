#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cosfuse/tensor.hpp"
#include "cosfuse/vocab.hpp"

namespace cosfuse {

// V x D matrix of token embeddings. Tables handed to the ASR are frozen:
// training must never touch them (checked by hashing in the test suites).
struct EmbeddingTable {
    Tensor matrix;
    bool frozen = true;

    int vocab_size() const { return matrix.rows(); }
    int dim() const { return matrix.cols(); }

    Tensor row(int id) const;

    // FNV-1a over the raw matrix bytes.
    uint64_t content_hash() const;
};

struct EmbedTrainConfig {
    enum class Mode { skipgram, cbow };
    Mode mode = Mode::skipgram;
    int window = 5;
    int negatives = 5;
    int epochs = 5;
    double learning_rate = 0.025;
    int dim = 256;
    uint64_t seed = 1;
};

// Text format: first line "V D", then V lines of "token v1 ... vD".
// Reserved tokens absent from the file get deterministic pseudo-random unit
// rows derived from seed 0.
std::pair<Vocab, EmbeddingTable> load_embeddings(const std::string& path);
void save_embeddings(const Vocab& vocab, const EmbeddingTable& table,
                     const std::string& path);

// Skip-gram / CBOW with negative sampling from unigram^0.75. Deterministic
// given cfg.seed; returns the input-side vectors. `on_epoch` fires after each
// pass with the 1-based epoch number.
EmbeddingTable train_embeddings(const std::vector<std::vector<int>>& corpus,
                                int vocab_size, const EmbedTrainConfig& cfg,
                                const std::function<void(int)>& on_epoch = {});

// Top-k neighbours by cosine, query excluded, ties broken by ascending id.
std::vector<std::pair<int, double>> nearest_neighbors(const EmbeddingTable& table,
                                                      int token_id, int k);

}  // namespace cosfuse
