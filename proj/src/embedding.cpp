#include "cosfuse/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "cosfuse/errors.hpp"

namespace cosfuse {

namespace {

// Reserved rows default to unit vectors from a stream seeded with 0, one row
// per reserved id in order, so each default is independent of which reserved
// tokens happen to be present in a file.
std::vector<Tensor> reserved_default_rows(int dim) {
    std::mt19937_64 gen(0);
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<Tensor> rows;
    for (int r = 0; r < Vocab::kNumReserved; r++) {
        Tensor row = Tensor::zeros({dim});
        for (int j = 0; j < dim; j++) {
            row.at(j) = dist(gen);
        }
        const double n = row.norm2();
        for (int j = 0; j < dim; j++) {
            row.at(j) /= n;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

double parse_double(const std::string& tok, int line_no) {
    const char* begin = tok.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end != begin + tok.size()) {
        throw parse_error("line " + std::to_string(line_no) +
                          ": not a number: " + tok);
    }
    return v;
}

}  // namespace

Tensor EmbeddingTable::row(int id) const {
    if (id < 0 || id >= vocab_size()) {
        throw lookup_error("embedding row " + std::to_string(id) +
                           " out of range for table with " +
                           std::to_string(vocab_size()) + " rows");
    }
    std::vector<double> v(matrix.data().begin() + static_cast<size_t>(id) * dim(),
                          matrix.data().begin() + static_cast<size_t>(id + 1) * dim());
    return Tensor::vec(std::move(v));
}

uint64_t EmbeddingTable::content_hash() const {
    uint64_t h = 1469598103934665603ULL;
    for (double d : matrix.data()) {
        unsigned char bytes[sizeof(double)];
        std::memcpy(bytes, &d, sizeof(double));
        for (unsigned char b : bytes) {
            h ^= b;
            h *= 1099511628211ULL;
        }
    }
    return h;
}

std::pair<Vocab, EmbeddingTable> load_embeddings(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw io_error("cannot open embedding file: " + path);
    }

    std::string line;
    if (!std::getline(in, line)) {
        throw parse_error("line 1: empty embedding file: " + path);
    }
    std::istringstream header(line);
    long file_v = -1;
    long file_d = -1;
    std::string extra;
    if (!(header >> file_v >> file_d) || (header >> extra) || file_v < 0 ||
        file_d <= 0) {
        throw parse_error("line 1: expected header \"V D\", got: " + line);
    }
    const int dim = static_cast<int>(file_d);

    Vocab vocab;
    std::vector<std::pair<int, std::vector<double>>> parsed;  // (id, row)
    for (long r = 0; r < file_v; r++) {
        const int line_no = static_cast<int>(r) + 2;
        if (!std::getline(in, line)) {
            throw parse_error("line " + std::to_string(line_no) +
                              ": expected " + std::to_string(file_v) +
                              " token rows, file ended early");
        }
        std::istringstream row(line);
        std::string token;
        if (!(row >> token)) {
            throw parse_error("line " + std::to_string(line_no) + ": missing token");
        }
        std::vector<double> values;
        values.reserve(static_cast<size_t>(dim));
        std::string num;
        while (row >> num) {
            values.push_back(parse_double(num, line_no));
        }
        if (static_cast<int>(values.size()) != dim) {
            throw parse_error("line " + std::to_string(line_no) + ": token \"" +
                              token + "\" has " + std::to_string(values.size()) +
                              " values, header says " + std::to_string(dim));
        }
        // Reserved tokens may appear once to override their default rows;
        // anything else already in the vocab is a duplicate.
        int id = -1;
        if (vocab.contains(token)) {
            id = vocab.id_or_unk(token);
            bool dup = !Vocab::is_reserved(id);
            for (const auto& p : parsed) {
                dup = dup || p.first == id;
            }
            if (dup) {
                throw parse_error("line " + std::to_string(line_no) +
                                  ": duplicate token \"" + token + "\"");
            }
        } else {
            id = vocab.add(token);
        }
        parsed.emplace_back(id, std::move(values));
    }

    EmbeddingTable table;
    table.matrix = Tensor::zeros({vocab.size(), dim});
    const std::vector<Tensor> defaults = reserved_default_rows(dim);
    for (int r = 0; r < Vocab::kNumReserved; r++) {
        for (int j = 0; j < dim; j++) {
            table.matrix.at(r, j) = defaults[static_cast<size_t>(r)].at(j);
        }
    }
    for (const auto& [id, values] : parsed) {
        for (int j = 0; j < dim; j++) {
            table.matrix.at(id, j) = values[static_cast<size_t>(j)];
        }
    }
    table.frozen = true;
    return {std::move(vocab), std::move(table)};
}

void save_embeddings(const Vocab& vocab, const EmbeddingTable& table,
                     const std::string& path) {
    if (vocab.size() != table.vocab_size()) {
        throw contract_error("vocab size " + std::to_string(vocab.size()) +
                             " != table rows " + std::to_string(table.vocab_size()));
    }
    std::ofstream out(path);
    if (!out) {
        throw io_error("cannot write embedding file: " + path);
    }
    out << vocab.size() << " " << table.dim() << "\n";
    char buf[64];
    for (int id = 0; id < vocab.size(); id++) {
        out << vocab.token(id);
        for (int j = 0; j < table.dim(); j++) {
            std::snprintf(buf, sizeof(buf), "%.17g", table.matrix.at(id, j));
            out << " " << buf;
        }
        out << "\n";
    }
    if (!out) {
        throw io_error("write failed: " + path);
    }
}

EmbeddingTable train_embeddings(const std::vector<std::vector<int>>& corpus,
                                int vocab_size, const EmbedTrainConfig& cfg,
                                const std::function<void(int)>& on_epoch) {
    if (cfg.window < 1 || cfg.negatives < 1 || cfg.dim < 2 || cfg.epochs < 1) {
        throw config_error("embedding trainer: window >= 1, negatives >= 1, "
                           "dim >= 2, epochs >= 1 required");
    }
    size_t total_words = 0;
    for (const auto& sent : corpus) {
        for (int id : sent) {
            if (id < 0 || id >= vocab_size) {
                throw lookup_error("corpus token id " + std::to_string(id) +
                                   " out of range for V=" + std::to_string(vocab_size));
            }
        }
        total_words += sent.size();
    }
    if (total_words == 0) {
        throw data_error("embedding trainer: empty corpus");
    }

    const int dim = cfg.dim;
    std::vector<double> counts(static_cast<size_t>(vocab_size), 0.0);
    for (const auto& sent : corpus) {
        for (int id : sent) {
            counts[static_cast<size_t>(id)] += 1.0;
        }
    }

    // Cumulative unigram^0.75 sampling table.
    std::vector<double> cum(static_cast<size_t>(vocab_size), 0.0);
    double acc = 0.0;
    for (int v = 0; v < vocab_size; v++) {
        acc += std::pow(counts[static_cast<size_t>(v)], 0.75);
        cum[static_cast<size_t>(v)] = acc;
    }

    std::mt19937_64 gen(cfg.seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    auto sample_negative = [&]() {
        const double r = unif(gen) * acc;
        auto it = std::upper_bound(cum.begin(), cum.end(), r);
        int v = static_cast<int>(it - cum.begin());
        return std::min(v, vocab_size - 1);
    };

    std::vector<double> syn0(static_cast<size_t>(vocab_size) * dim);
    std::vector<double> syn1(static_cast<size_t>(vocab_size) * dim, 0.0);
    for (double& w : syn0) {
        w = (unif(gen) - 0.5) / dim;
    }

    const double total_steps = static_cast<double>(total_words) * cfg.epochs;
    double processed = 0.0;
    std::vector<double> accum(static_cast<size_t>(dim));
    std::vector<double> hidden(static_cast<size_t>(dim));

    auto sgd_pair = [&](double* input, int target, double label, double lr) {
        double* out = &syn1[static_cast<size_t>(target) * dim];
        double f = 0.0;
        for (int j = 0; j < dim; j++) {
            f += input[j] * out[j];
        }
        const double gscale = (label - 1.0 / (1.0 + std::exp(-f))) * lr;
        for (int j = 0; j < dim; j++) {
            accum[static_cast<size_t>(j)] += gscale * out[j];
            out[j] += gscale * input[j];
        }
    };

    for (int epoch = 0; epoch < cfg.epochs; epoch++) {
        for (const auto& sent : corpus) {
            const int len = static_cast<int>(sent.size());
            for (int pos = 0; pos < len; pos++) {
                const int word = sent[static_cast<size_t>(pos)];
                const double lr =
                    std::max(cfg.learning_rate * (1.0 - processed / total_steps),
                             cfg.learning_rate * 1e-4);
                const int shrink = static_cast<int>(gen() % static_cast<uint64_t>(cfg.window));
                const int reach = cfg.window - shrink;

                if (cfg.mode == EmbedTrainConfig::Mode::skipgram) {
                    for (int off = -reach; off <= reach; off++) {
                        const int cpos = pos + off;
                        if (off == 0 || cpos < 0 || cpos >= len) {
                            continue;
                        }
                        const int ctx = sent[static_cast<size_t>(cpos)];
                        double* l1 = &syn0[static_cast<size_t>(ctx) * dim];
                        std::fill(accum.begin(), accum.end(), 0.0);
                        sgd_pair(l1, word, 1.0, lr);
                        for (int k = 0; k < cfg.negatives; k++) {
                            const int neg = sample_negative();
                            if (neg == word) {
                                continue;
                            }
                            sgd_pair(l1, neg, 0.0, lr);
                        }
                        for (int j = 0; j < dim; j++) {
                            l1[j] += accum[static_cast<size_t>(j)];
                        }
                    }
                } else {
                    std::fill(hidden.begin(), hidden.end(), 0.0);
                    int cw = 0;
                    for (int off = -reach; off <= reach; off++) {
                        const int cpos = pos + off;
                        if (off == 0 || cpos < 0 || cpos >= len) {
                            continue;
                        }
                        const double* l1 =
                            &syn0[static_cast<size_t>(sent[static_cast<size_t>(cpos)]) * dim];
                        for (int j = 0; j < dim; j++) {
                            hidden[static_cast<size_t>(j)] += l1[j];
                        }
                        cw++;
                    }
                    if (cw == 0) {
                        processed += 1.0;
                        continue;
                    }
                    for (int j = 0; j < dim; j++) {
                        hidden[static_cast<size_t>(j)] /= cw;
                    }
                    std::fill(accum.begin(), accum.end(), 0.0);
                    sgd_pair(hidden.data(), word, 1.0, lr);
                    for (int k = 0; k < cfg.negatives; k++) {
                        const int neg = sample_negative();
                        if (neg == word) {
                            continue;
                        }
                        sgd_pair(hidden.data(), neg, 0.0, lr);
                    }
                    for (int off = -reach; off <= reach; off++) {
                        const int cpos = pos + off;
                        if (off == 0 || cpos < 0 || cpos >= len) {
                            continue;
                        }
                        double* l1 =
                            &syn0[static_cast<size_t>(sent[static_cast<size_t>(cpos)]) * dim];
                        for (int j = 0; j < dim; j++) {
                            l1[j] += accum[static_cast<size_t>(j)];
                        }
                    }
                }
                processed += 1.0;
            }
        }
        if (on_epoch) {
            on_epoch(epoch + 1);
        }
    }

    EmbeddingTable table;
    table.matrix = Tensor::mat(vocab_size, dim, std::move(syn0));
    const std::vector<Tensor> defaults = reserved_default_rows(dim);
    for (int r = 0; r < Vocab::kNumReserved && r < vocab_size; r++) {
        if (counts[static_cast<size_t>(r)] == 0.0) {
            for (int j = 0; j < dim; j++) {
                table.matrix.at(r, j) = defaults[static_cast<size_t>(r)].at(j);
            }
        }
    }
    table.frozen = true;
    return table;
}

std::vector<std::pair<int, double>> nearest_neighbors(const EmbeddingTable& table,
                                                      int token_id, int k) {
    if (token_id < 0 || token_id >= table.vocab_size()) {
        throw lookup_error("nearest_neighbors: unknown token id " +
                           std::to_string(token_id));
    }
    if (k >= table.vocab_size()) {
        throw contract_error("nearest_neighbors: k must be < V");
    }
    const int dim = table.dim();
    const Tensor q = table.row(token_id);
    const double qn = q.norm2();
    if (qn <= 1e-12) {
        throw degenerate_vector_error("nearest_neighbors: query row " +
                                      std::to_string(token_id) + " has zero norm");
    }

    std::vector<std::pair<int, double>> scored;
    scored.reserve(static_cast<size_t>(table.vocab_size()) - 1);
    for (int v = 0; v < table.vocab_size(); v++) {
        if (v == token_id) {
            continue;
        }
        double dot = 0.0;
        double n = 0.0;
        for (int j = 0; j < dim; j++) {
            dot += q.at(j) * table.matrix.at(v, j);
            n += table.matrix.at(v, j) * table.matrix.at(v, j);
        }
        n = std::sqrt(n);
        if (n <= 1e-12) {
            throw degenerate_vector_error("nearest_neighbors: row " +
                                          std::to_string(v) + " has zero norm");
        }
        scored.emplace_back(v, dot / (qn * n));
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) {
            return a.second > b.second;
        }
        return a.first < b.first;
    });
    scored.resize(static_cast<size_t>(k));
    return scored;
}

}  // namespace cosfuse
