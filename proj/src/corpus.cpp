#include "cosfuse/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "cosfuse/errors.hpp"
#include "json.hpp"

namespace cosfuse {

namespace {

std::string lowercase(const std::string& s) {
    std::string out = s;
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::vector<std::string> split_words(const std::string& text) {
    std::istringstream in(text);
    std::vector<std::string> words;
    std::string w;
    while (in >> w) words.push_back(w);
    return words;
}

}  // namespace

std::vector<int> tokenize(const Vocab& vocab, const std::string& text) {
    std::vector<int> ids;
    for (const std::string& w : split_words(lowercase(text))) {
        ids.push_back(vocab.id_or_unk(w));
    }
    return ids;
}

std::string detokenize(const Vocab& vocab, const std::vector<int>& ids) {
    std::string out;
    for (int id : ids) {
        if (Vocab::is_reserved(id)) continue;
        if (!out.empty()) out += ' ';
        out += vocab.token(id);
    }
    return out;
}

void SyntheticTaskSpec::validate() const {
    if (vocab < 4) {
        throw config_error("synthetic task needs at least 4 content words");
    }
    if (feat_dim < 1) {
        throw config_error("feature dim must be >= 1");
    }
    if (min_frames < 1 || max_frames > 3 || min_frames > max_frames) {
        throw config_error("frames-per-token range must sit inside [1, 3]");
    }
    if (noise_sigma < 0.0) {
        throw config_error("noise sigma must be >= 0");
    }
    if (concentration <= 0.0) {
        throw config_error("transition concentration must be > 0");
    }
    if (train_utterances < 1 || dev_utterances < 1 || text_sentences < 0) {
        throw config_error("utterance counts must be positive");
    }
    if (min_len < 1 || min_len > max_len) {
        throw config_error("utterance length range is empty");
    }
}

namespace {

// Cumulative-sum sampling so the draw order is fully pinned down.
struct Sampler {
    std::vector<double> cumulative;

    explicit Sampler(const std::vector<double>& weights) {
        double total = 0.0;
        for (double w : weights) {
            total += w;
            cumulative.push_back(total);
        }
    }

    int draw(std::mt19937_64& gen) const {
        std::uniform_real_distribution<double> u(0.0, cumulative.back());
        auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u(gen));
        if (it == cumulative.end()) --it;
        return static_cast<int>(it - cumulative.begin());
    }
};

std::vector<double> dirichlet_weights(std::mt19937_64& gen, int n, double concentration) {
    // Gamma(a) = Gamma(a+1) * U^(1/a), kept in log space: tiny concentrations
    // make plain gamma draws underflow to zero, which would erase the
    // near-one-hot structure the parameter is supposed to control.
    std::gamma_distribution<double> gamma(concentration + 1.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> logw(static_cast<size_t>(n));
    double mx = -std::numeric_limits<double>::infinity();
    for (double& l : logw) {
        l = std::log(gamma(gen)) + std::log(u(gen)) / concentration;
        mx = std::max(mx, l);
    }
    std::vector<double> w(static_cast<size_t>(n), 1.0);
    if (!std::isfinite(mx)) {
        return w;  // degenerate; uniform row
    }
    for (size_t i = 0; i < w.size(); i++) {
        w[i] = std::exp(logw[i] - mx);
    }
    return w;
}

}  // namespace

SyntheticTask generate_synthetic_task(const SyntheticTaskSpec& spec) {
    spec.validate();
    std::mt19937_64 gen(spec.seed);
    std::normal_distribution<double> unit_normal(0.0, 1.0);

    SyntheticTask task;
    std::vector<std::string> names;
    for (int i = 0; i < spec.vocab; i++) {
        names.push_back("w" + std::to_string(i));
    }
    task.vocab = Vocab::from_tokens(names);

    task.prototypes = Tensor::zeros({spec.vocab, spec.feat_dim});
    for (double& v : task.prototypes.data()) {
        v = unit_normal(gen);
    }

    Sampler initial(dirichlet_weights(gen, spec.vocab, spec.concentration));
    std::vector<Sampler> transition;
    for (int i = 0; i < spec.vocab; i++) {
        transition.emplace_back(dirichlet_weights(gen, spec.vocab, spec.concentration));
    }

    std::uniform_int_distribution<int> len_dist(spec.min_len, spec.max_len);
    auto draw_sentence = [&]() {
        std::vector<int> words;  // content indices, not vocab ids
        const int len = len_dist(gen);
        for (int t = 0; t < len; t++) {
            words.push_back(t == 0 ? initial.draw(gen) : transition[words.back()].draw(gen));
        }
        return words;
    };
    auto to_text = [&names](const std::vector<int>& words) {
        std::string text;
        for (int w : words) {
            if (!text.empty()) text += ' ';
            text += names[static_cast<size_t>(w)];
        }
        return text;
    };

    std::uniform_int_distribution<int> frames_dist(spec.min_frames, spec.max_frames);
    auto draw_utterance = [&](const std::string& split, int index) {
        Utterance utt;
        char id[32];
        std::snprintf(id, sizeof(id), "%s-%04d", split.c_str(), index);
        utt.utterance_id = id;
        std::vector<int> words = draw_sentence();
        utt.text = to_text(words);
        std::vector<double> rows;
        int frames = 0;
        for (int w : words) {
            utt.targets.push_back(Vocab::kNumReserved + w);
            const int k = frames_dist(gen);
            for (int f = 0; f < k; f++) {
                for (int d = 0; d < spec.feat_dim; d++) {
                    rows.push_back(task.prototypes.at(w, d) +
                                   spec.noise_sigma * unit_normal(gen));
                }
                frames++;
            }
        }
        utt.targets.push_back(Vocab::kEos);
        utt.features = Tensor::mat(frames, spec.feat_dim, std::move(rows));
        return utt;
    };

    task.train.split = "train";
    for (int i = 0; i < spec.train_utterances; i++) {
        task.train.items.push_back(draw_utterance("train", i));
        task.text.push_back(task.train.items.back().text);
    }
    task.dev.split = "dev";
    for (int i = 0; i < spec.dev_utterances; i++) {
        task.dev.items.push_back(draw_utterance("dev", i));
    }
    for (int i = 0; i < spec.text_sentences; i++) {
        task.text.push_back(to_text(draw_sentence()));
    }
    return task;
}

namespace {

template <typename T>
WerReport align(const std::vector<T>& ref, const std::vector<T>& hyp) {
    if (ref.empty()) {
        throw data_error("wer: empty reference");
    }
    const size_t n = ref.size();
    const size_t m = hyp.size();
    std::vector<std::vector<int>> d(n + 1, std::vector<int>(m + 1, 0));
    for (size_t i = 1; i <= n; i++) d[i][0] = static_cast<int>(i);
    for (size_t j = 1; j <= m; j++) d[0][j] = static_cast<int>(j);
    for (size_t i = 1; i <= n; i++) {
        for (size_t j = 1; j <= m; j++) {
            const int sub = d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
            const int ins = d[i][j - 1] + 1;
            const int del = d[i - 1][j] + 1;
            d[i][j] = std::min({sub, ins, del});
        }
    }
    WerReport report;
    report.ref_len = static_cast<int>(n);
    // walk back preferring substitution over insertion over deletion
    size_t i = n, j = m;
    while (i > 0 || j > 0) {
        if (i > 0 && j > 0 &&
            d[i][j] == d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
            if (!(ref[i - 1] == hyp[j - 1])) report.substitutions++;
            i--;
            j--;
        } else if (j > 0 && d[i][j] == d[i][j - 1] + 1) {
            report.insertions++;
            j--;
        } else {
            report.deletions++;
            i--;
        }
    }
    report.wer = static_cast<double>(report.substitutions + report.insertions +
                                     report.deletions) /
                 static_cast<double>(n);
    return report;
}

}  // namespace

WerReport wer(const std::vector<int>& ref, const std::vector<int>& hyp) {
    return align(ref, hyp);
}

WerReport wer(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
    return align(ref, hyp);
}

void save_dataset(const Dataset& d, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw io_error("cannot write " + path);
    }
    for (const Utterance& utt : d.items) {
        nlohmann::json row;
        row["utterance_id"] = utt.utterance_id;
        nlohmann::json feats = nlohmann::json::array();
        for (int r = 0; r < utt.features.rows(); r++) {
            nlohmann::json frame = nlohmann::json::array();
            for (int c = 0; c < utt.features.cols(); c++) {
                frame.push_back(utt.features.at(r, c));
            }
            feats.push_back(std::move(frame));
        }
        row["features"] = std::move(feats);
        row["text"] = utt.text;
        out << row.dump() << '\n';
    }
    if (!out) {
        throw io_error("write failed for " + path);
    }
}

Dataset load_dataset(const std::string& path, const Vocab& vocab,
                     const std::string& split) {
    std::ifstream in(path);
    if (!in) {
        throw io_error("cannot read " + path);
    }
    Dataset d;
    d.split = split;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        lineno++;
        if (line.empty()) continue;
        Utterance utt;
        try {
            nlohmann::json row = nlohmann::json::parse(line);
            if (!row.contains("utterance_id") || !row.contains("features") ||
                !row.contains("text")) {
                throw parse_error(path + " line " + std::to_string(lineno) +
                                  ": expected utterance_id, features, text");
            }
            utt.utterance_id = row["utterance_id"].get<std::string>();
            utt.text = row["text"].get<std::string>();
            const auto& feats = row["features"];
            if (!feats.is_array() || feats.empty()) {
                throw data_error(path + " line " + std::to_string(lineno) +
                                 ": features must be a non-empty array of frames");
            }
            const size_t dim = feats[0].size();
            std::vector<double> rows;
            for (const auto& frame : feats) {
                if (!frame.is_array() || frame.size() != dim || dim == 0) {
                    throw data_error(path + " line " + std::to_string(lineno) +
                                     ": ragged or empty feature frame");
                }
                for (const auto& v : frame) {
                    rows.push_back(v.get<double>());
                }
            }
            utt.features = Tensor::mat(static_cast<int>(feats.size()),
                                       static_cast<int>(dim), std::move(rows));
        } catch (const nlohmann::json::exception& e) {
            throw parse_error(path + " line " + std::to_string(lineno) + ": " + e.what());
        }
        if (!utt.features.all_finite()) {
            throw data_error(path + " line " + std::to_string(lineno) +
                             ": non-finite feature value");
        }
        utt.targets = tokenize(vocab, utt.text);
        utt.targets.push_back(Vocab::kEos);
        d.items.push_back(std::move(utt));
    }
    return d;
}

void save_text(const std::vector<std::string>& lines, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw io_error("cannot write " + path);
    }
    for (const std::string& line : lines) {
        out << line << '\n';
    }
    if (!out) {
        throw io_error("write failed for " + path);
    }
}

std::vector<std::string> load_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw io_error("cannot read " + path);
    }
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        lines.push_back(line);
    }
    return lines;
}

Vocab vocab_from_text(const std::vector<std::string>& lines) {
    std::vector<std::string> words;
    for (const std::string& line : lines) {
        for (const std::string& w : split_words(lowercase(line))) {
            words.push_back(w);
        }
    }
    std::sort(words.begin(), words.end());
    words.erase(std::unique(words.begin(), words.end()), words.end());
    return Vocab::from_tokens(words);
}

std::vector<std::vector<int>> tokenize_lines(const Vocab& vocab,
                                             const std::vector<std::string>& lines) {
    std::vector<std::vector<int>> out;
    for (const std::string& line : lines) {
        out.push_back(tokenize(vocab, line));
    }
    return out;
}

}  // namespace cosfuse
