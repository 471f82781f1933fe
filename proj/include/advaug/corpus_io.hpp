#pragma once

#include "advaug/types.hpp"
#include "advaug/vocab.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace advaug {

inline std::vector<std::string> split_ws(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    std::string w;
    while (in >> w) out.push_back(w);
    return out;
}

inline std::string join_ws(const std::vector<std::string>& words) {
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) out += ' ';
        out += words[i];
    }
    return out;
}

// Corpus file format: one example per line, source and target separated by a
// tab, tokens space-separated.
inline std::vector<StringPair> read_string_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_string_corpus: cannot open " + path);
    std::vector<StringPair> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw std::runtime_error("read_string_corpus: missing tab at " + path + ":" + std::to_string(lineno));
        StringPair pair;
        pair.src = split_ws(line.substr(0, tab));
        pair.tgt = split_ws(line.substr(tab + 1));
        if (pair.src.empty() || pair.tgt.empty())
            throw std::runtime_error("read_string_corpus: empty side at " + path + ":" + std::to_string(lineno));
        out.push_back(std::move(pair));
    }
    return out;
}

inline std::vector<SentencePair> encode_corpus(const std::vector<StringPair>& corpus, const Vocabulary& vocab) {
    std::vector<SentencePair> out;
    out.reserve(corpus.size());
    for (const auto& p : corpus) out.push_back(SentencePair{vocab.encode(p.src), vocab.encode(p.tgt)});
    return out;
}

inline void write_corpus(const std::string& path, const std::vector<SentencePair>& corpus,
                         const Vocabulary& vocab) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_corpus: cannot open " + path);
    for (const auto& p : corpus)
        out << join_ws(vocab.decode(p.src)) << '\t' << join_ws(vocab.decode(p.tgt)) << '\n';
}

inline std::vector<SentencePair> read_corpus(const std::string& path, const Vocabulary& vocab) {
    return encode_corpus(read_string_corpus(path), vocab);
}

}  // namespace advaug
