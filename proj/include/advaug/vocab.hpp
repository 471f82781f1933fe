#pragma once

#include "advaug/types.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace advaug {

// Token/id bijection with four reserved specials at fixed ids. Content tokens
// start at id 4. The pad id never appears in stored sentences and is excluded
// from adversarial replacement candidates.
class Vocabulary {
  public:
    static constexpr TokenId kPad = 0;
    static constexpr TokenId kSos = 1;
    static constexpr TokenId kEos = 2;
    static constexpr TokenId kUnk = 3;
    static constexpr int kNumSpecials = 4;

    Vocabulary() { init_specials(); }

    explicit Vocabulary(const std::vector<std::string>& content_tokens) {
        init_specials();
        for (const auto& t : content_tokens) add(t);
    }

    TokenId add(const std::string& token) {
        auto it = ids_.find(token);
        if (it != ids_.end()) return it->second;
        const TokenId id = static_cast<TokenId>(tokens_.size());
        tokens_.push_back(token);
        ids_.emplace(token, id);
        return id;
    }

    int size() const { return static_cast<int>(tokens_.size()); }
    int content_size() const { return size() - kNumSpecials; }

    // Unknown tokens map to <unk>.
    TokenId id_of(const std::string& token) const {
        auto it = ids_.find(token);
        return it == ids_.end() ? kUnk : it->second;
    }

    bool contains(const std::string& token) const { return ids_.count(token) > 0; }

    const std::string& token(TokenId id) const {
        if (id < 0 || id >= size()) throw std::out_of_range("Vocabulary::token: id out of range");
        return tokens_[static_cast<std::size_t>(id)];
    }

    static bool is_special(TokenId id) { return id < kNumSpecials; }
    static bool is_content(TokenId id) { return id >= kNumSpecials; }

    IdSeq encode(const std::vector<std::string>& words) const {
        IdSeq out;
        out.reserve(words.size());
        for (const auto& w : words) out.push_back(id_of(w));
        return out;
    }

    std::vector<std::string> decode(const IdSeq& ids) const {
        std::vector<std::string> out;
        out.reserve(ids.size());
        for (TokenId id : ids) out.push_back(token(id));
        return out;
    }

    // One token per line, line number = id.
    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("Vocabulary::save: cannot open " + path);
        for (const auto& t : tokens_) out << t << "\n";
    }

    static Vocabulary load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("Vocabulary::load: cannot open " + path);
        std::vector<std::string> lines;
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            lines.push_back(line);
        }
        return from_tokens(lines);
    }

    // Rebuild from a full token list (specials included, in id order).
    static Vocabulary from_tokens(const std::vector<std::string>& all_tokens) {
        if (all_tokens.size() < kNumSpecials)
            throw std::runtime_error("Vocabulary::from_tokens: missing special tokens");
        Vocabulary v;
        for (int i = 0; i < kNumSpecials; ++i) {
            if (all_tokens[static_cast<std::size_t>(i)] != v.tokens_[static_cast<std::size_t>(i)])
                throw std::runtime_error("Vocabulary::from_tokens: unexpected special token order");
        }
        for (std::size_t i = kNumSpecials; i < all_tokens.size(); ++i) v.add(all_tokens[i]);
        return v;
    }

    const std::vector<std::string>& tokens() const { return tokens_; }

  private:
    void init_specials() {
        tokens_ = {"<pad>", "<sos>", "<eos>", "<unk>"};
        for (TokenId i = 0; i < kNumSpecials; ++i) ids_.emplace(tokens_[static_cast<std::size_t>(i)], i);
    }

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> ids_;
};

// A raw (untokenized-to-ids) parallel example: whitespace tokens per side.
struct StringPair {
    std::vector<std::string> src;
    std::vector<std::string> tgt;
};

// Keeps the most frequent tokens from both sides up to max_size (specials
// count against the cap). Equal frequencies break lexicographically.
inline Vocabulary build_vocab(const std::vector<StringPair>& corpus, int max_size) {
    if (corpus.empty()) throw std::invalid_argument("build_vocab: empty corpus");
    if (max_size <= Vocabulary::kNumSpecials)
        throw std::invalid_argument("build_vocab: max_size must exceed the 4 specials");

    std::map<std::string, std::int64_t> freq;
    for (const auto& pair : corpus) {
        for (const auto& w : pair.src) ++freq[w];
        for (const auto& w : pair.tgt) ++freq[w];
    }

    std::vector<std::pair<std::string, std::int64_t>> items(freq.begin(), freq.end());
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    const std::size_t budget = static_cast<std::size_t>(max_size - Vocabulary::kNumSpecials);
    std::vector<std::string> kept;
    for (const auto& [tok, n] : items) {
        if (kept.size() >= budget) break;
        kept.push_back(tok);
    }
    return Vocabulary(kept);
}

}  // namespace advaug
