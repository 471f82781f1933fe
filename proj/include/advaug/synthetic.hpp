#pragma once

#include "advaug/rng.hpp"
#include "advaug/types.hpp"
#include "advaug/vocab.hpp"

#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace advaug {

enum class TaskKind { kCopy, kReverse, kCipher };

inline const char* task_kind_name(TaskKind k) {
    switch (k) {
        case TaskKind::kCopy: return "copy";
        case TaskKind::kReverse: return "reverse";
        case TaskKind::kCipher: return "cipher";
    }
    return "?";
}

inline TaskKind task_kind_from(const std::string& s) {
    if (s == "copy") return TaskKind::kCopy;
    if (s == "reverse") return TaskKind::kReverse;
    if (s == "cipher") return TaskKind::kCipher;
    throw std::invalid_argument("unknown task kind: " + s);
}

// Desk-scale stand-in for a parallel corpus. Content tokens are partitioned
// into synonym classes; the reference target is a function of the class
// representatives only, so swapping a source token for an in-class sibling
// never changes the correct translation. synonym_noise is the per-position
// probability that the source shows a non-representative sibling, which makes
// siblings rare in training data the way near-synonyms are in real corpora.
struct SynthTaskSpec {
    TaskKind kind = TaskKind::kCopy;
    int vocab_size = 24;  // content tokens; total |V| = vocab_size + 4 specials
    int min_len = 3;
    int max_len = 8;
    int class_size = 2;
    double synonym_noise = 0.1;
    std::uint64_t seed = 1;
};

inline void validate(const SynthTaskSpec& spec) {
    if (spec.vocab_size < 2) throw std::invalid_argument("SynthTaskSpec: vocab_size too small");
    if (spec.class_size < 2) throw std::invalid_argument("SynthTaskSpec: synonym classes need >= 2 members");
    if (spec.vocab_size % spec.class_size != 0)
        throw std::invalid_argument("SynthTaskSpec: vocab_size must be a multiple of class_size");
    if (spec.min_len < 1 || spec.max_len < spec.min_len)
        throw std::invalid_argument("SynthTaskSpec: invalid length_range");
    if (spec.synonym_noise < 0.0 || spec.synonym_noise > 1.0)
        throw std::invalid_argument("SynthTaskSpec: synonym_noise must be in [0,1]");
}

// Fully instantiated task: vocabulary, class structure and the target map.
class SyntheticTask {
  public:
    explicit SyntheticTask(const SynthTaskSpec& spec) : spec_(spec) {
        validate(spec);
        std::vector<std::string> names;
        names.reserve(static_cast<std::size_t>(spec.vocab_size));
        for (int i = 0; i < spec.vocab_size; ++i) {
            char buf[16];
            std::snprintf(buf, sizeof(buf), "w%03d", i);
            names.emplace_back(buf);
        }
        vocab_ = Vocabulary(names);

        const int num_classes = spec.vocab_size / spec.class_size;
        classes_.resize(static_cast<std::size_t>(num_classes));
        rep_of_.assign(static_cast<std::size_t>(vocab_.size()), -1);
        for (int c = 0; c < num_classes; ++c) {
            for (int m = 0; m < spec.class_size; ++m) {
                const TokenId id = Vocabulary::kNumSpecials + c * spec.class_size + m;
                classes_[static_cast<std::size_t>(c)].push_back(id);
                rep_of_[static_cast<std::size_t>(id)] = Vocabulary::kNumSpecials + c * spec.class_size;
            }
        }

        // The cipher permutes representatives among themselves; copy/reverse
        // leave them in place. Structure comes from its own seed stream so a
        // different sampling seed still means the same task.
        cipher_of_.assign(static_cast<std::size_t>(vocab_.size()), -1);
        std::vector<int> perm(static_cast<std::size_t>(num_classes));
        for (int c = 0; c < num_classes; ++c) perm[static_cast<std::size_t>(c)] = c;
        if (spec.kind == TaskKind::kCipher) {
            Rng structure = Rng::stream(spec.seed, "task-structure");
            structure.shuffle(perm);
        }
        for (int c = 0; c < num_classes; ++c) {
            const TokenId rep = classes_[static_cast<std::size_t>(c)][0];
            const TokenId image = classes_[static_cast<std::size_t>(perm[static_cast<std::size_t>(c)])][0];
            cipher_of_[static_cast<std::size_t>(rep)] = image;
        }
    }

    const Vocabulary& vocab() const { return vocab_; }
    const SynthTaskSpec& spec() const { return spec_; }
    const std::vector<std::vector<TokenId>>& classes() const { return classes_; }

    TokenId representative(TokenId id) const {
        if (!Vocabulary::is_content(id)) throw std::out_of_range("representative: not a content token");
        return rep_of_[static_cast<std::size_t>(id)];
    }

    const std::vector<TokenId>& class_of(TokenId id) const {
        const TokenId rep = representative(id);
        const int c = (rep - Vocabulary::kNumSpecials) / spec_.class_size;
        return classes_[static_cast<std::size_t>(c)];
    }

    // Reference translation of a source sequence.
    IdSeq apply_map(const IdSeq& src) const {
        IdSeq reps;
        reps.reserve(src.size());
        for (TokenId id : src) reps.push_back(representative(id));
        switch (spec_.kind) {
            case TaskKind::kCopy:
                return reps;
            case TaskKind::kReverse:
                return IdSeq(reps.rbegin(), reps.rend());
            case TaskKind::kCipher: {
                IdSeq out;
                out.reserve(reps.size());
                for (TokenId r : reps) out.push_back(cipher_of_[static_cast<std::size_t>(r)]);
                return out;
            }
        }
        throw std::logic_error("apply_map: unreachable");
    }

    std::vector<SentencePair> generate(int n, Rng& rng) const {
        if (n <= 0) throw std::invalid_argument("generate: n must be positive");
        std::vector<SentencePair> out;
        out.reserve(static_cast<std::size_t>(n));
        const int num_classes = static_cast<int>(classes_.size());
        for (int i = 0; i < n; ++i) {
            const int len = spec_.min_len + rng.uniform_int(spec_.max_len - spec_.min_len + 1);
            IdSeq src(static_cast<std::size_t>(len));
            for (int j = 0; j < len; ++j) {
                const auto& cls = classes_[static_cast<std::size_t>(rng.uniform_int(num_classes))];
                TokenId tok = cls[0];
                if (cls.size() > 1 && rng.uniform01() < spec_.synonym_noise) {
                    tok = cls[1 + static_cast<std::size_t>(rng.uniform_int(static_cast<int>(cls.size()) - 1))];
                }
                src[static_cast<std::size_t>(j)] = tok;
            }
            out.push_back(SentencePair{src, apply_map(src)});
        }
        return out;
    }

  private:
    SynthTaskSpec spec_;
    Vocabulary vocab_;
    std::vector<std::vector<TokenId>> classes_;
    std::vector<TokenId> rep_of_;
    std::vector<TokenId> cipher_of_;
};

// Pure function of (spec, n): same spec and n give byte-identical output.
inline std::vector<SentencePair> generate_synthetic(const SynthTaskSpec& spec, int n) {
    SyntheticTask task(spec);
    Rng rng = Rng::stream(spec.seed, "synthetic-examples");
    return task.generate(n, rng);
}

}  // namespace advaug
