#include "cosfuse/vocab.hpp"

#include "cosfuse/errors.hpp"

namespace cosfuse {

Vocab::Vocab() {
    for (const char* t : {"<pad>", "<sos>", "<eos>", "<unk>"}) {
        add(t);
    }
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
    Vocab v;
    for (const std::string& t : tokens) {
        v.add(t);
    }
    return v;
}

int Vocab::add(const std::string& token) {
    if (token_to_id_.count(token) > 0) {
        throw contract_error("duplicate token in vocabulary: " + token);
    }
    const int id = size();
    token_to_id_.emplace(token, id);
    id_to_token_.push_back(token);
    return id;
}

bool Vocab::contains(const std::string& token) const {
    return token_to_id_.count(token) > 0;
}

int Vocab::id_or_unk(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
    if (id < 0 || id >= size()) {
        throw lookup_error("token id " + std::to_string(id) +
                           " out of range for vocabulary of size " +
                           std::to_string(size()));
    }
    return id_to_token_[static_cast<size_t>(id)];
}

uint64_t Vocab::hash() const {
    uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](char c) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    };
    for (const std::string& t : id_to_token_) {
        for (char c : t) {
            mix(c);
        }
        mix('\n');
    }
    return h;
}

}  // namespace cosfuse
