#include "cosfuse/cli.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cosfuse/checkpoint.hpp"
#include "cosfuse/corpus.hpp"
#include "cosfuse/decoding.hpp"
#include "cosfuse/embedding.hpp"
#include "cosfuse/errors.hpp"
#include "cosfuse/rnnlm.hpp"
#include "cosfuse/training.hpp"
#include "cosfuse/vocab.hpp"

namespace cosfuse {

namespace {

using nlohmann::json;

void emit(const json& line) {
    std::cout << line.dump() << "\n";
}

void emit_error(const std::string& message) {
    std::cerr << json{{"event", "error"}, {"message", message}}.dump() << "\n";
}

json read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw config_error("cannot read config file " + path);
    }
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw config_error(path + ": " + e.what());
    }
    if (!doc.is_object()) {
        throw config_error(path + ": config must be a JSON object");
    }
    return doc;
}

template <typename T>
void take_field(json& obj, const std::string& context, const char* key, T& out) {
    auto it = obj.find(key);
    if (it == obj.end()) {
        return;
    }
    try {
        out = it->get<T>();
    } catch (const json::exception&) {
        throw config_error(context + ": field '" + key + "' has the wrong type");
    }
    obj.erase(it);
}

void reject_unknown(const json& obj, const std::string& context) {
    if (!obj.empty()) {
        throw config_error(context + ": unknown field '" + obj.begin().key() + "'");
    }
}

json take_section(json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end()) {
        return json::object();
    }
    if (!it->is_object()) {
        throw config_error(std::string(key) + " must be a JSON object");
    }
    json section = *it;
    obj.erase(it);
    return section;
}

// CLI overrides are parsed into a shadow struct before the config file is
// read; these record which flags were given so they can win afterwards.
template <typename S>
struct FieldOverrides {
    std::vector<std::function<void(S&)>> fns;

    void apply(S& target) const {
        for (const auto& f : fns) {
            f(target);
        }
    }
};

template <typename S, typename M>
CLI::Option* bind_field(CLI::App* cmd, const std::string& flag, S& shadow,
                        M S::*member, FieldOverrides<S>& ov, const std::string& desc) {
    CLI::Option* opt = cmd->add_option(flag, shadow.*member, desc);
    ov.fns.push_back([opt, &shadow, member](S& target) {
        if (opt->count() > 0) {
            target.*member = shadow.*member;
        }
    });
    return opt;
}

std::vector<std::string> content_tokens(const Vocab& vocab) {
    std::vector<std::string> out;
    for (int i = Vocab::kNumReserved; i < vocab.size(); i++) {
        out.push_back(vocab.token(i));
    }
    return out;
}

std::vector<std::string> split_words(const std::string& line) {
    std::istringstream ss(line);
    std::vector<std::string> out;
    std::string word;
    while (ss >> word) {
        for (char& c : word) {
            c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
        out.push_back(word);
    }
    return out;
}

// Vocabulary over the transcripts of a dataset file; the first pass only
// reads the text fields.
Vocab dataset_vocab(const std::string& path) {
    const Dataset probe = load_dataset(path, Vocab(), "probe");
    std::vector<std::string> texts;
    for (const Utterance& utt : probe.items) {
        texts.push_back(utt.text);
    }
    return vocab_from_text(texts);
}

struct Command {
    CLI::App* sub = nullptr;
    std::function<void()> body;
};

// ---- gen-data ----

void apply_task_spec_json(json obj, SyntheticTaskSpec& s) {
    const std::string ctx = "task spec";
    take_field(obj, ctx, "vocab", s.vocab);
    take_field(obj, ctx, "feat_dim", s.feat_dim);
    take_field(obj, ctx, "min_frames", s.min_frames);
    take_field(obj, ctx, "max_frames", s.max_frames);
    take_field(obj, ctx, "noise_sigma", s.noise_sigma);
    take_field(obj, ctx, "concentration", s.concentration);
    take_field(obj, ctx, "train_utterances", s.train_utterances);
    take_field(obj, ctx, "dev_utterances", s.dev_utterances);
    take_field(obj, ctx, "min_len", s.min_len);
    take_field(obj, ctx, "max_len", s.max_len);
    take_field(obj, ctx, "text_sentences", s.text_sentences);
    take_field(obj, ctx, "seed", s.seed);
    reject_unknown(obj, ctx);
}

struct GenDataState {
    std::string spec_path;
    std::string out_dir;
    bool quiet = false;
    SyntheticTaskSpec shadow;
    FieldOverrides<SyntheticTaskSpec> ov;
};

Command setup_gen_data(CLI::App& app) {
    auto st = std::make_shared<GenDataState>();
    CLI::App* cmd = app.add_subcommand("gen-data", "Generate a synthetic pseudo-ASR task");
    cmd->add_option("--spec", st->spec_path, "task spec JSON file");
    cmd->add_option("--out", st->out_dir, "output directory")->required();
    cmd->add_flag("--quiet", st->quiet, "suppress progress logs");
    bind_field(cmd, "--vocab", st->shadow, &SyntheticTaskSpec::vocab, st->ov,
               "content words");
    bind_field(cmd, "--feat_dim", st->shadow, &SyntheticTaskSpec::feat_dim, st->ov,
               "feature dimension");
    bind_field(cmd, "--min_frames", st->shadow, &SyntheticTaskSpec::min_frames, st->ov,
               "min frames per word");
    bind_field(cmd, "--max_frames", st->shadow, &SyntheticTaskSpec::max_frames, st->ov,
               "max frames per word");
    bind_field(cmd, "--noise_sigma", st->shadow, &SyntheticTaskSpec::noise_sigma, st->ov,
               "frame noise stddev");
    bind_field(cmd, "--concentration", st->shadow, &SyntheticTaskSpec::concentration,
               st->ov, "Dirichlet concentration of transition rows");
    bind_field(cmd, "--train_utterances", st->shadow,
               &SyntheticTaskSpec::train_utterances, st->ov, "train utterances");
    bind_field(cmd, "--dev_utterances", st->shadow, &SyntheticTaskSpec::dev_utterances,
               st->ov, "dev utterances");
    bind_field(cmd, "--min_len", st->shadow, &SyntheticTaskSpec::min_len, st->ov,
               "min words per utterance");
    bind_field(cmd, "--max_len", st->shadow, &SyntheticTaskSpec::max_len, st->ov,
               "max words per utterance");
    bind_field(cmd, "--text_sentences", st->shadow, &SyntheticTaskSpec::text_sentences,
               st->ov, "extra text-only sentences");
    bind_field(cmd, "--seed", st->shadow, &SyntheticTaskSpec::seed, st->ov, "rng seed");

    return {cmd, [st]() {
        SyntheticTaskSpec spec;
        if (!st->spec_path.empty()) {
            apply_task_spec_json(read_config_file(st->spec_path), spec);
        }
        st->ov.apply(spec);
        spec.validate();
        const SyntheticTask task = generate_synthetic_task(spec);
        std::error_code ec;
        std::filesystem::create_directories(st->out_dir, ec);
        if (ec) {
            throw io_error("cannot create " + st->out_dir + ": " + ec.message());
        }
        const std::string dir = st->out_dir + "/";
        save_dataset(task.train, dir + "train.jsonl");
        save_dataset(task.dev, dir + "dev.jsonl");
        save_text(task.text, dir + "text.txt");
        emit({{"event", "gen-data"},
              {"train", task.train.items.size()},
              {"dev", task.dev.items.size()},
              {"text_lines", task.text.size()},
              {"vocab", task.vocab.size()},
              {"out", st->out_dir}});
    }};
}

// ---- embed-train ----

struct EmbedTrainState {
    std::string corpus;
    std::string out;
    std::string mode = "skipgram";
    bool quiet = false;
    EmbedTrainConfig shadow;
    FieldOverrides<EmbedTrainConfig> ov;
};

Command setup_embed_train(CLI::App& app) {
    auto st = std::make_shared<EmbedTrainState>();
    CLI::App* cmd = app.add_subcommand("embed-train", "Train word embeddings on a text corpus");
    cmd->add_option("--corpus", st->corpus, "text corpus, one sentence per line")->required();
    cmd->add_option("--out", st->out, "output embedding file")->required();
    cmd->add_option("--mode", st->mode, "skipgram or cbow");
    cmd->add_flag("--quiet", st->quiet, "suppress progress logs");
    bind_field(cmd, "--dim", st->shadow, &EmbedTrainConfig::dim, st->ov,
               "embedding dimension");
    bind_field(cmd, "--window", st->shadow, &EmbedTrainConfig::window, st->ov,
               "context window");
    bind_field(cmd, "--negatives", st->shadow, &EmbedTrainConfig::negatives, st->ov,
               "negative samples per target");
    bind_field(cmd, "--epochs", st->shadow, &EmbedTrainConfig::epochs, st->ov, "epochs");
    bind_field(cmd, "--learning_rate", st->shadow, &EmbedTrainConfig::learning_rate,
               st->ov, "initial learning rate");
    bind_field(cmd, "--seed", st->shadow, &EmbedTrainConfig::seed, st->ov, "rng seed");

    return {cmd, [st]() {
        EmbedTrainConfig cfg;
        st->ov.apply(cfg);
        if (st->mode == "skipgram") {
            cfg.mode = EmbedTrainConfig::Mode::skipgram;
        } else if (st->mode == "cbow") {
            cfg.mode = EmbedTrainConfig::Mode::cbow;
        } else {
            throw config_error("unknown embedding mode '" + st->mode +
                               "' (expected skipgram or cbow)");
        }
        const std::vector<std::string> lines = load_text(st->corpus);
        const Vocab vocab = vocab_from_text(lines);
        if (vocab.size() <= Vocab::kNumReserved) {
            throw data_error("embedding corpus has no words");
        }
        const auto sentences = tokenize_lines(vocab, lines);
        const bool quiet = st->quiet;
        EmbeddingTable table =
            train_embeddings(sentences, vocab.size(), cfg, [quiet](int epoch) {
                if (!quiet) {
                    emit({{"event", "epoch"}, {"epoch", epoch}});
                }
            });
        save_embeddings(vocab, table, st->out);
        emit({{"event", "embed-train"},
              {"vocab", vocab.size()},
              {"dim", cfg.dim},
              {"mode", st->mode},
              {"out", st->out}});
    }};
}

// ---- lm-train ----

void apply_lm_json(json obj, LMConfig& cfg) {
    const std::string ctx = "lm config";
    if (obj.contains("vocab_size")) {
        throw config_error(ctx + ": vocab_size is derived from the corpus");
    }
    take_field(obj, ctx, "embed_dim", cfg.embed_dim);
    take_field(obj, ctx, "hidden", cfg.hidden);
    take_field(obj, ctx, "epochs", cfg.epochs);
    take_field(obj, ctx, "learning_rate", cfg.learning_rate);
    take_field(obj, ctx, "clip_norm", cfg.clip_norm);
    take_field(obj, ctx, "seed", cfg.seed);
    reject_unknown(obj, ctx);
}

struct LmTrainState {
    std::string corpus;
    std::string config_path;
    std::string out;
    bool quiet = false;
    LMConfig shadow;
    FieldOverrides<LMConfig> ov;
};

Command setup_lm_train(CLI::App& app) {
    auto st = std::make_shared<LmTrainState>();
    CLI::App* cmd = app.add_subcommand("lm-train", "Train the recurrent language model");
    cmd->add_option("--corpus", st->corpus, "text corpus, one sentence per line")->required();
    cmd->add_option("--config", st->config_path, "LM config JSON file");
    cmd->add_option("--out", st->out, "output checkpoint file")->required();
    cmd->add_flag("--quiet", st->quiet, "suppress progress logs");
    bind_field(cmd, "--embed_dim", st->shadow, &LMConfig::embed_dim, st->ov,
               "embedding dimension");
    bind_field(cmd, "--hidden", st->shadow, &LMConfig::hidden, st->ov, "hidden units");
    bind_field(cmd, "--epochs", st->shadow, &LMConfig::epochs, st->ov, "epochs");
    bind_field(cmd, "--learning_rate", st->shadow, &LMConfig::learning_rate, st->ov,
               "learning rate");
    bind_field(cmd, "--clip_norm", st->shadow, &LMConfig::clip_norm, st->ov,
               "gradient clip norm");
    bind_field(cmd, "--seed", st->shadow, &LMConfig::seed, st->ov, "rng seed");

    return {cmd, [st]() {
        LMConfig cfg;
        if (!st->config_path.empty()) {
            apply_lm_json(read_config_file(st->config_path), cfg);
        }
        st->ov.apply(cfg);
        const std::vector<std::string> lines = load_text(st->corpus);
        const Vocab vocab = vocab_from_text(lines);
        if (vocab.size() <= Vocab::kNumReserved) {
            throw data_error("language model corpus has no words");
        }
        std::vector<std::vector<int>> corpus;
        for (const auto& sent : tokenize_lines(vocab, lines)) {
            std::vector<int> framed;
            framed.push_back(Vocab::kSos);
            framed.insert(framed.end(), sent.begin(), sent.end());
            framed.push_back(Vocab::kEos);
            corpus.push_back(std::move(framed));
        }
        cfg.vocab_size = vocab.size();
        cfg.validate();
        const LMTrainResult res = lm_train(corpus, cfg);
        if (!st->quiet) {
            // entry 0 is measured before any update
            for (size_t i = 0; i < res.epoch_perplexity.size(); i++) {
                emit({{"event", "epoch"},
                      {"epoch", i},
                      {"perplexity", res.epoch_perplexity[i]}});
            }
        }
        LMCheckpoint ckpt;
        ckpt.params = res.params;
        ckpt.vocab_hash = vocab.hash();
        ckpt.tokens = content_tokens(vocab);
        save_lm_checkpoint(ckpt, st->out);
        emit({{"event", "lm-train"},
              {"vocab", vocab.size()},
              {"perplexity", res.epoch_perplexity.back()},
              {"out", st->out}});
    }};
}

// ---- asr-train ----

void apply_train_json(json obj, TrainConfig& cfg, std::string& mode_name,
                      bool& feat_dim_set, bool& embed_dim_set) {
    take_field(obj, "config", "mode", mode_name);
    json model = take_section(obj, "model");
    if (model.contains("vocab_size")) {
        throw config_error("model.vocab_size is derived from the data");
    }
    feat_dim_set = feat_dim_set || model.contains("feat_dim");
    embed_dim_set = embed_dim_set || model.contains("embed_dim");
    take_field(model, "model", "feat_dim", cfg.model.feat_dim);
    take_field(model, "model", "enc_hidden", cfg.model.enc_hidden);
    take_field(model, "model", "dec_hidden", cfg.model.dec_hidden);
    take_field(model, "model", "embed_dim", cfg.model.embed_dim);
    take_field(model, "model", "ftheta_hidden", cfg.model.ftheta_hidden);
    take_field(model, "model", "seed", cfg.model.seed);
    reject_unknown(model, "model");
    json reg = take_section(obj, "reg");
    take_field(reg, "reg", "lambda", cfg.reg.lambda);
    reject_unknown(reg, "reg");
    json fusion = take_section(obj, "fusion");
    take_field(fusion, "fusion", "tau", cfg.fusion.tau);
    take_field(fusion, "fusion", "lambda_f", cfg.fusion.lambda_f);
    reject_unknown(fusion, "fusion");
    json train = take_section(obj, "train");
    take_field(train, "train", "epochs", cfg.epochs);
    take_field(train, "train", "batch_size", cfg.batch_size);
    take_field(train, "train", "learning_rate", cfg.learning_rate);
    take_field(train, "train", "clip_norm", cfg.clip_norm);
    take_field(train, "train", "lr_patience", cfg.lr_patience);
    reject_unknown(train, "train");
    reject_unknown(obj, "config");
}

struct AsrTrainState {
    std::string config_path;
    std::string data_dir;
    std::string embeddings;
    std::string mode;
    std::string out;
    bool quiet = false;
    TrainConfig shadow;
    FieldOverrides<ModelConfig> ov_model;
    FieldOverrides<RegularizationConfig> ov_reg;
    FieldOverrides<FusionConfig> ov_fusion;
    FieldOverrides<TrainConfig> ov_train;
    CLI::Option* feat_dim_opt = nullptr;
    CLI::Option* embed_dim_opt = nullptr;
    CLI::Option* mode_opt = nullptr;
};

Command setup_asr_train(CLI::App& app) {
    auto st = std::make_shared<AsrTrainState>();
    CLI::App* cmd = app.add_subcommand("asr-train", "Train the attention seq2seq recognizer");
    cmd->add_option("--config", st->config_path, "training config JSON file");
    cmd->add_option("--data", st->data_dir, "directory with train.jsonl and dev.jsonl")
        ->required();
    cmd->add_option("--embeddings", st->embeddings, "frozen embedding file");
    st->mode_opt = cmd->add_option("--mode", st->mode, "baseline, reg, or fused");
    cmd->add_option("--out", st->out, "output checkpoint file")->required();
    cmd->add_flag("--quiet", st->quiet, "suppress progress logs");
    st->feat_dim_opt = bind_field(cmd, "--model.feat_dim", st->shadow.model,
                                  &ModelConfig::feat_dim, st->ov_model,
                                  "feature dimension");
    bind_field(cmd, "--model.enc_hidden", st->shadow.model, &ModelConfig::enc_hidden,
               st->ov_model, "encoder hidden units per direction");
    bind_field(cmd, "--model.dec_hidden", st->shadow.model, &ModelConfig::dec_hidden,
               st->ov_model, "decoder hidden units");
    st->embed_dim_opt = bind_field(cmd, "--model.embed_dim", st->shadow.model,
                                   &ModelConfig::embed_dim, st->ov_model,
                                   "embedding dimension");
    bind_field(cmd, "--model.ftheta_hidden", st->shadow.model,
               &ModelConfig::ftheta_hidden, st->ov_model,
               "hidden units of the embedding head");
    bind_field(cmd, "--model.seed", st->shadow.model, &ModelConfig::seed, st->ov_model,
               "init seed");
    bind_field(cmd, "--reg.lambda", st->shadow.reg, &RegularizationConfig::lambda,
               st->ov_reg, "cosine regularizer weight");
    bind_field(cmd, "--fusion.tau", st->shadow.fusion, &FusionConfig::tau, st->ov_fusion,
               "cosine softmax temperature");
    bind_field(cmd, "--fusion.lambda_f", st->shadow.fusion, &FusionConfig::lambda_f,
               st->ov_fusion, "fused mixture weight");
    bind_field(cmd, "--train.epochs", st->shadow, &TrainConfig::epochs, st->ov_train,
               "epochs");
    bind_field(cmd, "--train.batch_size", st->shadow, &TrainConfig::batch_size,
               st->ov_train, "utterances per update");
    bind_field(cmd, "--train.learning_rate", st->shadow, &TrainConfig::learning_rate,
               st->ov_train, "initial learning rate");
    bind_field(cmd, "--train.clip_norm", st->shadow, &TrainConfig::clip_norm,
               st->ov_train, "gradient clip norm");
    bind_field(cmd, "--train.lr_patience", st->shadow, &TrainConfig::lr_patience,
               st->ov_train, "stalled epochs before the rate is halved");

    return {cmd, [st]() {
        TrainConfig cfg;
        std::string mode_name;
        bool feat_dim_set = false;
        bool embed_dim_set = false;
        if (!st->config_path.empty()) {
            apply_train_json(read_config_file(st->config_path), cfg, mode_name,
                             feat_dim_set, embed_dim_set);
        }
        st->ov_model.apply(cfg.model);
        st->ov_reg.apply(cfg.reg);
        st->ov_fusion.apply(cfg.fusion);
        st->ov_train.apply(cfg);
        feat_dim_set = feat_dim_set || st->feat_dim_opt->count() > 0;
        embed_dim_set = embed_dim_set || st->embed_dim_opt->count() > 0;
        if (st->mode_opt->count() > 0) {
            mode_name = st->mode;
        }
        cfg.mode = mode_name.empty() ? TrainMode::baseline : parse_train_mode(mode_name);

        EmbeddingTable table;
        Vocab vocab;
        bool have_table = false;
        if (cfg.mode != TrainMode::baseline) {
            if (st->embeddings.empty()) {
                throw config_error(train_mode_name(cfg.mode) +
                                   " mode requires --embeddings");
            }
            std::tie(vocab, table) = load_embeddings(st->embeddings);
            if (!embed_dim_set) {
                cfg.model.embed_dim = table.dim();
            } else if (cfg.model.embed_dim != table.dim()) {
                throw config_error("model.embed_dim " +
                                   std::to_string(cfg.model.embed_dim) +
                                   " does not match embedding dim " +
                                   std::to_string(table.dim()));
            }
            have_table = true;
        } else if (!st->embeddings.empty()) {
            emit({{"event", "warning"},
                  {"message", "baseline mode ignores --embeddings"}});
        }

        const std::string train_path = st->data_dir + "/train.jsonl";
        const std::string dev_path = st->data_dir + "/dev.jsonl";
        if (!have_table) {
            vocab = dataset_vocab(train_path);
        }
        const Dataset train = load_dataset(train_path, vocab, "train");
        const Dataset dev = load_dataset(dev_path, vocab, "dev");
        if (train.items.empty()) {
            throw data_error("train set is empty");
        }
        cfg.model.vocab_size = vocab.size();
        const int data_feat = train.items.front().features.cols();
        if (!feat_dim_set) {
            cfg.model.feat_dim = data_feat;
        } else if (cfg.model.feat_dim != data_feat) {
            throw config_error("model.feat_dim " + std::to_string(cfg.model.feat_dim) +
                               " does not match the data feature dim " +
                               std::to_string(data_feat));
        }
        cfg.validate();

        const bool quiet = st->quiet;
        const TrainResult res = asr_train(
            train, dev, have_table ? &table : nullptr, cfg,
            [quiet](const StepLog& s) {
                if (!quiet) {
                    emit({{"event", "step"},
                          {"step", s.step},
                          {"total", s.total},
                          {"data", s.data_term},
                          {"reg", s.reg_term},
                          {"mean_cosine", s.mean_cosine}});
                }
            },
            [quiet](const EpochLog& e) {
                if (!quiet) {
                    emit({{"event", "epoch"},
                          {"epoch", e.epoch},
                          {"mean_train_loss", e.mean_train_loss},
                          {"dev_error", e.dev_error},
                          {"learning_rate", e.learning_rate},
                          {"lr_halved", e.lr_halved}});
                }
            });

        AsrCheckpoint ckpt;
        ckpt.params = res.best;
        ckpt.mode = cfg.mode;
        ckpt.fusion = cfg.normalized().fusion;
        ckpt.vocab_hash = vocab.hash();
        ckpt.tokens = content_tokens(vocab);
        save_asr_checkpoint(ckpt, st->out);
        emit({{"event", "asr-train"},
              {"mode", train_mode_name(cfg.mode)},
              {"best_epoch", res.best_epoch},
              {"best_dev_error", res.best_dev_error},
              {"out", st->out}});
    }};
}

// ---- decode ----

// Re-runs the winning hypothesis teacher-forced and records the five most
// probable tokens of each step's output distribution.
json replay_top5(const ModelParams& params, const Tensor& features,
                 const std::vector<int>& tokens, const EmbeddingTable* table,
                 const DecodeConfig& cfg, const Vocab& vocab) {
    Graph g;
    const BoundModel bm = bind_model(g, params, false);
    const Var enc = encode(g, bm, features);
    Var table_node;
    if (cfg.mode == DecodeConfig::Mode::fused) {
        table_node = g.constant(table->matrix);
    }
    DecoderState state = init_decoder_state(g, bm);
    json steps = json::array();
    int prev = Vocab::kSos;
    for (int tok : tokens) {
        auto [step_out, next_state] = decoder_step(g, bm, prev, state, enc);
        // copy: node storage may move as the graph keeps growing
        const Tensor logs = g.val(g.log(step_distribution(g, step_out, table_node, cfg)));
        std::vector<int> order(static_cast<size_t>(logs.size()));
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&logs](int a, int b) {
            if (logs.at(a) != logs.at(b)) {
                return logs.at(a) > logs.at(b);
            }
            return a < b;
        });
        json tops = json::array();
        for (size_t k = 0; k < order.size() && k < 5; k++) {
            tops.push_back(json::array({vocab.token(order[k]), logs.at(order[k])}));
        }
        steps.push_back(tops);
        state = next_state;
        prev = tok;
    }
    return steps;
}

struct DecodeState {
    std::string checkpoint;
    std::string data;
    std::string embeddings;
    std::string lm;
    std::string out;
    int beam = 20;
    int max_len = 50;
    double lm_weight = 0.0;
    bool length_normalize = false;
    bool verbose = false;
    bool quiet = false;
    CLI::Option* lm_weight_opt = nullptr;
};

Command setup_decode(CLI::App& app) {
    auto st = std::make_shared<DecodeState>();
    CLI::App* cmd = app.add_subcommand("decode", "Beam-search decode a dataset");
    cmd->add_option("--checkpoint", st->checkpoint, "recognizer checkpoint")->required();
    cmd->add_option("--data", st->data, "dataset JSONL file")->required();
    cmd->add_option("--embeddings", st->embeddings,
                    "frozen embedding file (fused checkpoints)");
    cmd->add_option("--lm", st->lm, "language model checkpoint");
    cmd->add_option("--out", st->out, "output JSONL file")->required();
    cmd->add_option("--beam", st->beam, "beam size");
    cmd->add_option("--max_len", st->max_len, "output length cap");
    st->lm_weight_opt = cmd->add_option("--lm-weight", st->lm_weight,
                                        "shallow fusion weight (0.3 when --lm is given)");
    cmd->add_flag("--length_normalize", st->length_normalize,
                  "rank by score divided by length");
    cmd->add_flag("--verbose", st->verbose, "record per-step top-5 tokens");
    cmd->add_flag("--quiet", st->quiet, "suppress progress logs");

    return {cmd, [st]() {
        const AsrCheckpoint ckpt = load_asr_checkpoint(st->checkpoint);
        const Vocab vocab = Vocab::from_tokens(ckpt.tokens);
        const Dataset data = load_dataset(st->data, vocab, "decode");

        DecodeConfig cfg;
        cfg.beam = st->beam;
        cfg.max_len = st->max_len;
        cfg.length_normalize = st->length_normalize;

        EmbeddingTable table;
        const EmbeddingTable* table_ptr = nullptr;
        if (ckpt.mode == TrainMode::fused) {
            if (st->embeddings.empty()) {
                throw config_error("decoding a fused checkpoint requires --embeddings");
            }
            auto [emb_vocab, emb_table] = load_embeddings(st->embeddings);
            if (emb_vocab.hash() != ckpt.vocab_hash) {
                throw config_error(
                    "embedding vocabulary does not match the checkpoint");
            }
            if (emb_table.dim() != ckpt.params.config.embed_dim) {
                throw config_error("embedding dim " + std::to_string(emb_table.dim()) +
                                   " does not match model embed dim " +
                                   std::to_string(ckpt.params.config.embed_dim));
            }
            cfg.mode = DecodeConfig::Mode::fused;
            cfg.fusion = ckpt.fusion;
            table = std::move(emb_table);
            table_ptr = &table;
        } else if (!st->embeddings.empty()) {
            emit({{"event", "warning"},
                  {"message",
                   train_mode_name(ckpt.mode) + " checkpoint ignores --embeddings"}});
        }

        LMParams lm_params;
        const LMParams* lm_ptr = nullptr;
        if (!st->lm.empty()) {
            LMCheckpoint lm_ckpt = load_lm_checkpoint(st->lm);
            if (lm_ckpt.vocab_hash != ckpt.vocab_hash) {
                throw config_error(
                    "language model vocabulary does not match the checkpoint");
            }
            const double beta =
                st->lm_weight_opt->count() > 0 ? st->lm_weight : 0.3;
            if (beta > 0.0) {
                lm_params = std::move(lm_ckpt.params);
                lm_ptr = &lm_params;
                cfg.lm_weight = beta;
            }
        } else if (st->lm_weight_opt->count() > 0 && st->lm_weight != 0.0) {
            throw config_error("--lm-weight requires --lm");
        }
        cfg.validate();

        std::ofstream out(st->out);
        if (!out) {
            throw io_error("cannot write " + st->out);
        }
        for (const Utterance& utt : data.items) {
            const auto hyps = beam_search(ckpt.params, utt.features, table_ptr, lm_ptr, cfg);
            const Hypothesis& top = hyps.front();
            std::vector<int> tokens = top.tokens;
            if (!tokens.empty() && tokens.back() == Vocab::kEos) {
                tokens.pop_back();
            }
            json line{{"utterance_id", utt.utterance_id},
                      {"tokens", tokens},
                      {"text", detokenize(vocab, tokens)},
                      {"score", top.score}};
            if (st->verbose) {
                line["steps"] =
                    replay_top5(ckpt.params, utt.features, top.tokens, table_ptr, cfg, vocab);
            }
            out << line.dump() << "\n";
            if (!st->quiet) {
                emit({{"event", "decoded"},
                      {"utterance_id", utt.utterance_id},
                      {"score", top.score}});
            }
        }
        if (!out) {
            throw io_error("write failed for " + st->out);
        }
        emit({{"event", "decode"},
              {"utterances", data.items.size()},
              {"out", st->out}});
    }};
}

// ---- eval-wer ----

struct EvalEntry {
    std::string id;
    std::string text;
};

// Plain text (one utterance per line) or decode/dataset JSONL with
// utterance_id and text fields.
std::pair<std::vector<EvalEntry>, bool> read_eval_file(const std::string& path) {
    const std::vector<std::string> lines = load_text(path);
    bool jsonl = false;
    for (const std::string& line : lines) {
        const auto pos = line.find_first_not_of(" \t");
        if (pos != std::string::npos) {
            jsonl = line[pos] == '{';
            break;
        }
    }
    std::vector<EvalEntry> entries;
    for (size_t i = 0; i < lines.size(); i++) {
        if (!jsonl) {
            entries.push_back({std::to_string(i), lines[i]});
            continue;
        }
        try {
            const json row = json::parse(lines[i]);
            entries.push_back({row.at("utterance_id").get<std::string>(),
                               row.at("text").get<std::string>()});
        } catch (const json::exception& e) {
            throw parse_error(path + ": line " + std::to_string(i + 1) + ": " + e.what());
        }
    }
    return {entries, jsonl};
}

struct EvalWerState {
    std::string ref;
    std::string hyp;
};

Command setup_eval_wer(CLI::App& app) {
    auto st = std::make_shared<EvalWerState>();
    CLI::App* cmd = app.add_subcommand("eval-wer", "Word error rate of hypotheses against references");
    cmd->add_option("--ref", st->ref, "reference file (text or JSONL)")->required();
    cmd->add_option("--hyp", st->hyp, "hypothesis file (text or JSONL)")->required();

    return {cmd, [st]() {
        const auto [refs, ref_jsonl] = read_eval_file(st->ref);
        const auto [hyps, hyp_jsonl] = read_eval_file(st->hyp);
        std::vector<std::pair<std::string, std::string>> pairs;
        if (ref_jsonl && hyp_jsonl) {
            std::unordered_map<std::string, std::string> by_id;
            for (const EvalEntry& h : hyps) {
                if (!by_id.emplace(h.id, h.text).second) {
                    throw data_error("duplicate utterance_id " + h.id + " in " + st->hyp);
                }
            }
            for (const EvalEntry& r : refs) {
                auto it = by_id.find(r.id);
                if (it == by_id.end()) {
                    throw data_error("missing hypothesis for utterance " + r.id);
                }
                pairs.emplace_back(r.text, it->second);
            }
            if (hyps.size() != refs.size()) {
                throw data_error("hypothesis file has extra utterances");
            }
        } else {
            if (refs.size() != hyps.size()) {
                throw data_error("reference and hypothesis line counts differ");
            }
            for (size_t i = 0; i < refs.size(); i++) {
                pairs.emplace_back(refs[i].text, hyps[i].text);
            }
        }
        if (pairs.empty()) {
            throw data_error("no utterances to score");
        }
        WerReport total;
        for (const auto& [ref_text, hyp_text] : pairs) {
            const WerReport r = wer(split_words(ref_text), split_words(hyp_text));
            total.substitutions += r.substitutions;
            total.insertions += r.insertions;
            total.deletions += r.deletions;
            total.ref_len += r.ref_len;
        }
        total.wer = static_cast<double>(total.substitutions + total.insertions +
                                        total.deletions) /
                    static_cast<double>(total.ref_len);
        emit({{"substitutions", total.substitutions},
              {"insertions", total.insertions},
              {"deletions", total.deletions},
              {"ref_len", total.ref_len},
              {"wer", total.wer}});
    }};
}

int run_mapped(const std::function<void()>& body) {
    try {
        body();
        return 0;
    } catch (const config_error& e) {
        emit_error(e.what());
        return 2;
    } catch (const io_error& e) {
        emit_error(e.what());
        return 2;
    } catch (const numeric_error& e) {
        emit_error(e.what());
        return 4;
    } catch (const error& e) {
        emit_error(e.what());
        return 3;
    } catch (const std::exception& e) {
        emit_error(e.what());
        return 1;
    }
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"Pseudo-ASR toolkit: synthetic data, embeddings, seq2seq training, "
                 "decoding, and scoring"};
    app.require_subcommand(1);

    std::vector<Command> commands;
    commands.push_back(setup_gen_data(app));
    commands.push_back(setup_embed_train(app));
    commands.push_back(setup_lm_train(app));
    commands.push_back(setup_asr_train(app));
    commands.push_back(setup_decode(app));
    commands.push_back(setup_eval_wer(app));

    std::vector<std::string> argv_storage;
    argv_storage.push_back("cosfuse");
    argv_storage.insert(argv_storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (std::string& s : argv_storage) {
        argv.push_back(s.data());
    }
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    for (const Command& c : commands) {
        if (c.sub->parsed()) {
            return run_mapped(c.body);
        }
    }
    return 2;  // unreachable with require_subcommand(1)
}

}  // namespace cosfuse
