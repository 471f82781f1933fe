#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace advaug {

using TokenId = std::int32_t;
using IdSeq = std::vector<TokenId>;

// 1 = real token, 0 = padding.
using Mask = std::vector<std::uint8_t>;

template <class Real>
using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class Real>
using Vec = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

// One parallel example. The target is stored without <sos>; the decoder
// input/label sequences are built from it on demand (see make_decoder_io).
struct SentencePair {
    IdSeq src;
    IdSeq tgt;
};

// Embedding-space view of a sentence: one row per position, d columns.
template <class Real>
struct EmbeddedSeq {
    Mat<Real> rows;
    Mask real;

    Eigen::Index length() const { return rows.rows(); }
    Eigen::Index dim() const { return rows.cols(); }
};

}  // namespace advaug
