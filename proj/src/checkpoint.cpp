#include "cosfuse/checkpoint.hpp"

#include <fstream>

#include "cosfuse/errors.hpp"
#include "cosfuse/vocab.hpp"
#include "json.hpp"

namespace cosfuse {

namespace {

using nlohmann::json;

json tensor_to_json(const Tensor& t) {
    json out;
    out["shape"] = t.shape();
    out["values"] = t.data();
    return out;
}

void fill_tensor_from_json(const json& entry, const std::string& name, Tensor& t) {
    if (!entry.contains("shape") || !entry.contains("values")) {
        throw parse_error("checkpoint parameter " + name + " lacks shape or values");
    }
    std::vector<int> shape;
    std::vector<double> values;
    try {
        shape = entry["shape"].get<std::vector<int>>();
        values = entry["values"].get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw parse_error("checkpoint parameter " + name + ": " + e.what());
    }
    if (shape != t.shape()) {
        throw parse_error("checkpoint parameter " + name + " has unexpected shape");
    }
    if (values.size() != t.data().size()) {
        throw parse_error("checkpoint parameter " + name + " has " +
                          std::to_string(values.size()) + " values, expected " +
                          std::to_string(t.data().size()));
    }
    t.data() = values;
    if (!t.all_finite()) {
        throw data_error("checkpoint parameter " + name + " contains non-finite values");
    }
}

json read_checkpoint_file(const std::string& path, const std::string& kind) {
    std::ifstream in(path);
    if (!in) {
        throw io_error("cannot read " + path);
    }
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw parse_error(path + ": " + e.what());
    }
    if (!doc.contains("format_version") || doc["format_version"].get<int>() != 1) {
        throw parse_error(path + ": unsupported checkpoint format version");
    }
    if (!doc.contains("kind") || doc["kind"].get<std::string>() != kind) {
        throw parse_error(path + ": expected a " + kind + " checkpoint");
    }
    return doc;
}

void write_json_file(const json& doc, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw io_error("cannot write " + path);
    }
    out << doc.dump() << '\n';
    if (!out) {
        throw io_error("write failed for " + path);
    }
}

template <typename Params>
json params_to_json(const Params& params) {
    json out = json::object();
    params.for_each_param([&out](const std::string& name, const Tensor& t) {
        out[name] = tensor_to_json(t);
    });
    return out;
}

template <typename Params>
void params_from_json(const json& doc, const std::string& path, Params& params) {
    if (!doc.contains("params") || !doc["params"].is_object()) {
        throw parse_error(path + ": missing params object");
    }
    const json& entries = doc["params"];
    size_t expected = 0;
    params.for_each_param([&](const std::string& name, Tensor& t) {
        expected++;
        auto it = entries.find(name);
        if (it == entries.end()) {
            throw parse_error(path + ": missing parameter " + name);
        }
        fill_tensor_from_json(*it, name, t);
    });
    if (entries.size() != expected) {
        throw parse_error(path + ": unexpected extra parameters");
    }
}

void check_vocab(const std::vector<std::string>& tokens, uint64_t vocab_hash,
                 int vocab_size, const std::string& path) {
    Vocab v;
    try {
        v = Vocab::from_tokens(tokens);
    } catch (const error& e) {
        throw parse_error(path + ": bad token list: " + e.what());
    }
    if (v.size() != vocab_size) {
        throw parse_error(path + ": token list does not match the model vocabulary size");
    }
    if (v.hash() != vocab_hash) {
        throw parse_error(path + ": token list does not match the stored vocab hash");
    }
}

}  // namespace

void save_asr_checkpoint(const AsrCheckpoint& ckpt, const std::string& path) {
    ckpt.params.config.validate();
    json doc;
    doc["format_version"] = 1;
    doc["kind"] = "asr";
    doc["mode"] = train_mode_name(ckpt.mode);
    doc["fusion"] = {{"tau", ckpt.fusion.tau}, {"lambda_f", ckpt.fusion.lambda_f}};
    doc["vocab_hash"] = ckpt.vocab_hash;
    doc["tokens"] = ckpt.tokens;
    const ModelConfig& mc = ckpt.params.config;
    doc["model_config"] = {{"feat_dim", mc.feat_dim},
                           {"enc_hidden", mc.enc_hidden},
                           {"dec_hidden", mc.dec_hidden},
                           {"embed_dim", mc.embed_dim},
                           {"vocab_size", mc.vocab_size},
                           {"ftheta_hidden", mc.ftheta_hidden},
                           {"seed", mc.seed}};
    doc["params"] = params_to_json(ckpt.params);
    write_json_file(doc, path);
}

AsrCheckpoint load_asr_checkpoint(const std::string& path) {
    const json doc = read_checkpoint_file(path, "asr");
    AsrCheckpoint ckpt;
    try {
        const json& mc = doc.at("model_config");
        ModelConfig config;
        config.feat_dim = mc.at("feat_dim").get<int>();
        config.enc_hidden = mc.at("enc_hidden").get<int>();
        config.dec_hidden = mc.at("dec_hidden").get<int>();
        config.embed_dim = mc.at("embed_dim").get<int>();
        config.vocab_size = mc.at("vocab_size").get<int>();
        config.ftheta_hidden = mc.at("ftheta_hidden").get<int>();
        config.seed = mc.at("seed").get<uint64_t>();
        config.validate();
        ckpt.params = ModelParams::init(config);
        ckpt.mode = parse_train_mode(doc.at("mode").get<std::string>());
        ckpt.fusion.tau = doc.at("fusion").at("tau").get<double>();
        ckpt.fusion.lambda_f = doc.at("fusion").at("lambda_f").get<double>();
        ckpt.vocab_hash = doc.at("vocab_hash").get<uint64_t>();
        ckpt.tokens = doc.at("tokens").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw parse_error(path + ": " + e.what());
    }
    check_vocab(ckpt.tokens, ckpt.vocab_hash, ckpt.params.config.vocab_size, path);
    params_from_json(doc, path, ckpt.params);
    return ckpt;
}

void save_lm_checkpoint(const LMCheckpoint& ckpt, const std::string& path) {
    ckpt.params.config.validate();
    json doc;
    doc["format_version"] = 1;
    doc["kind"] = "lm";
    doc["vocab_hash"] = ckpt.vocab_hash;
    doc["tokens"] = ckpt.tokens;
    const LMConfig& lc = ckpt.params.config;
    doc["lm_config"] = {{"vocab_size", lc.vocab_size},
                        {"embed_dim", lc.embed_dim},
                        {"hidden", lc.hidden},
                        {"epochs", lc.epochs},
                        {"learning_rate", lc.learning_rate},
                        {"clip_norm", lc.clip_norm},
                        {"seed", lc.seed}};
    doc["params"] = params_to_json(ckpt.params);
    write_json_file(doc, path);
}

LMCheckpoint load_lm_checkpoint(const std::string& path) {
    const json doc = read_checkpoint_file(path, "lm");
    LMCheckpoint ckpt;
    try {
        const json& lc = doc.at("lm_config");
        LMConfig config;
        config.vocab_size = lc.at("vocab_size").get<int>();
        config.embed_dim = lc.at("embed_dim").get<int>();
        config.hidden = lc.at("hidden").get<int>();
        config.epochs = lc.at("epochs").get<int>();
        config.learning_rate = lc.at("learning_rate").get<double>();
        config.clip_norm = lc.at("clip_norm").get<double>();
        config.seed = lc.at("seed").get<uint64_t>();
        config.validate();
        ckpt.params = LMParams::init(config);
        ckpt.vocab_hash = doc.at("vocab_hash").get<uint64_t>();
        ckpt.tokens = doc.at("tokens").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw parse_error(path + ": " + e.what());
    }
    check_vocab(ckpt.tokens, ckpt.vocab_hash, ckpt.params.config.vocab_size, path);
    params_from_json(doc, path, ckpt.params);
    return ckpt;
}

}  // namespace cosfuse
