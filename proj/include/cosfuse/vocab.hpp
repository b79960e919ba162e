#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace cosfuse {

// Token <-> id mapping with four reserved entries at fixed ids.
class Vocab {
  public:
    static constexpr int kPad = 0;
    static constexpr int kSos = 1;
    static constexpr int kEos = 2;
    static constexpr int kUnk = 3;
    static constexpr int kNumReserved = 4;

    Vocab();

    static Vocab from_tokens(const std::vector<std::string>& tokens);

    // Appends a new token; throws contract_error on duplicates.
    int add(const std::string& token);

    bool contains(const std::string& token) const;
    // Id of a known token, kUnk otherwise.
    int id_or_unk(const std::string& token) const;
    const std::string& token(int id) const;

    int size() const { return static_cast<int>(id_to_token_.size()); }

    static bool is_reserved(int id) { return id >= 0 && id < kNumReserved; }

    // FNV-1a over the token list; used to align checkpoints at decode time.
    uint64_t hash() const;

  private:
    std::unordered_map<std::string, int> token_to_id_;
    std::vector<std::string> id_to_token_;
};

}  // namespace cosfuse
