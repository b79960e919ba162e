#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cosfuse/tensor.hpp"
#include "cosfuse/vocab.hpp"

namespace cosfuse {

// Lowercase, split on whitespace, unknown words map to UNK.
std::vector<int> tokenize(const Vocab& vocab, const std::string& text);
// Space-joined tokens; reserved ids are dropped.
std::string detokenize(const Vocab& vocab, const std::vector<int>& ids);

struct Utterance {
    std::string utterance_id;
    Tensor features;           // [frames x feat_dim]
    std::vector<int> targets;  // ends with EOS
    std::string text;
};

struct Dataset {
    std::string split;
    std::vector<Utterance> items;
};

// Pseudo-ASR task: a Markov chain over content words, one prototype feature
// vector per word, and 1-3 noisy frames emitted per spoken word.
struct SyntheticTaskSpec {
    int vocab = 50;  // content words beyond the reserved four
    int feat_dim = 16;
    int min_frames = 1;
    int max_frames = 3;
    double noise_sigma = 0.5;
    double concentration = 1.0;  // Dirichlet parameter for transition rows
    int train_utterances = 300;
    int dev_utterances = 100;
    int min_len = 3;  // words per utterance
    int max_len = 12;
    int text_sentences = 2000;  // text-only sentences beyond the train transcripts
    uint64_t seed = 1;

    void validate() const;
};

struct SyntheticTask {
    Vocab vocab;
    Dataset train;
    Dataset dev;
    // Train transcripts followed by the extra text-only sentences.
    std::vector<std::string> text;
    Tensor prototypes;  // [vocab x feat_dim], row i belongs to content word i
};

SyntheticTask generate_synthetic_task(const SyntheticTaskSpec& spec);

struct WerReport {
    int substitutions = 0;
    int insertions = 0;
    int deletions = 0;
    int ref_len = 0;
    double wer = 0.0;  // (S + I + D) / ref_len
};

// Minimal edit-distance alignment; ties prefer substitution, then insertion,
// then deletion. Reference must be non-empty.
WerReport wer(const std::vector<int>& ref, const std::vector<int>& hyp);
WerReport wer(const std::vector<std::string>& ref, const std::vector<std::string>& hyp);

// One JSON object per line: {utterance_id, features, text}. Loading tokenizes
// the text against `vocab` and appends EOS.
void save_dataset(const Dataset& d, const std::string& path);
Dataset load_dataset(const std::string& path, const Vocab& vocab,
                     const std::string& split);

void save_text(const std::vector<std::string>& lines, const std::string& path);
std::vector<std::string> load_text(const std::string& path);

// Vocab over the sorted unique lowercased words of `lines`.
Vocab vocab_from_text(const std::vector<std::string>& lines);

std::vector<std::vector<int>> tokenize_lines(const Vocab& vocab,
                                             const std::vector<std::string>& lines);

}  // namespace cosfuse
