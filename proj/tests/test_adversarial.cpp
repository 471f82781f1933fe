#include "advaug/adversarial.hpp"

#include "advaug/losses.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

using namespace advaug;

namespace {

ModelConfig tiny_config(int vocab) {
    ModelConfig cfg;
    cfg.vocab_size = vocab;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.n_enc = 1;
    cfg.n_dec = 1;
    cfg.d_ff = 32;
    cfg.dropout = 0.0;
    return cfg;
}

// Embedding table with hand-chosen 2d directions (padded to d columns) so
// cosine similarities are known: ids 4 and 5 point the same way, 6 is
// orthogonal, 7 opposite.
Mat<double> handmade_table(int d = 4) {
    Mat<double> t = Mat<double>::Zero(8, d);
    t.row(0).setConstant(0.01);  // specials get arbitrary rows
    t.row(1).setConstant(0.02);
    t.row(2).setConstant(0.03);
    t.row(3).setConstant(0.04);
    t(4, 0) = 1.0;
    t(5, 0) = 2.0;   // same direction as 4
    t(6, 1) = 1.0;   // orthogonal to 4
    t(7, 0) = -1.0;  // opposite to 4
    return t;
}

int hamming(const IdSeq& a, const IdSeq& b) {
    int h = 0;
    for (std::size_t i = 0; i < a.size(); ++i) h += a[i] != b[i];
    return h;
}

}  // namespace

TEST(CandidateSet, OrderedByCosineSimilarity) {
    const Mat<double> t = handmade_table();
    const auto c = candidate_set(4, t, 3, -1.0);
    ASSERT_EQ(c.size(), 3u);
    EXPECT_EQ(c[0], 5);  // cos=1
    EXPECT_EQ(c[1], 6);  // cos=0
    EXPECT_EQ(c[2], 7);  // cos=-1
}

TEST(CandidateSet, ThresholdFilters) {
    const Mat<double> t = handmade_table();
    const auto c = candidate_set(4, t, 10, 0.5);
    ASSERT_EQ(c.size(), 1u);
    EXPECT_EQ(c[0], 5);
    EXPECT_TRUE(candidate_set(7, t, 10, 0.5).empty());  // nothing close to id 7
}

TEST(CandidateSet, ExcludesSelfAndSpecials) {
    const Mat<double> t = handmade_table();
    for (int k = 1; k <= 6; ++k) {
        for (TokenId c : candidate_set(4, t, k, -1.0)) {
            EXPECT_NE(c, 4);
            EXPECT_TRUE(Vocabulary::is_content(c));
        }
    }
    EXPECT_TRUE(candidate_set(Vocabulary::kPad, t, 5, -1.0).empty());
    EXPECT_TRUE(candidate_set(Vocabulary::kEos, t, 5, -1.0).empty());
}

TEST(CandidateSet, CapacityAndTieBreak) {
    // Three content tokens, k=1 -> exactly one candidate.
    Mat<double> t = Mat<double>::Zero(7, 4);
    t(4, 0) = 1.0;
    t(5, 0) = 1.0;  // duplicate of 4's direction
    t(6, 0) = 1.0;  // and again: all ties
    const auto c1 = candidate_set(6, t, 1, -1.0);
    ASSERT_EQ(c1.size(), 1u);
    EXPECT_EQ(c1[0], 4);  // equal similarity -> lowest id
    EXPECT_EQ(candidate_set(6, t, 5, -1.0).size(), 2u);
}

TEST(AdvReplace, ZeroGammaIsIdentity) {
    const Mat<double> t = handmade_table();
    const IdSeq s{4, 6, 7};
    const Mat<double> g = Mat<double>::Random(3, 4);
    AdvParams p;
    p.gamma = 0.0;
    Rng rng(1);
    EXPECT_EQ(adv_replace(s, g, t, p, rng), s);
}

TEST(AdvReplace, AllSpecialsUnchanged) {
    const Mat<double> t = handmade_table();
    const IdSeq s{Vocabulary::kSos, Vocabulary::kEos};
    const Mat<double> g = Mat<double>::Ones(2, 4);
    AdvParams p;
    p.gamma = 1.0;
    Rng rng(2);
    EXPECT_EQ(adv_replace(s, g, t, p, rng), s);
}

TEST(AdvReplace, NonPositiveScoresLeavePositionUnchanged) {
    const Mat<double> t = handmade_table();
    const IdSeq s{4, 6};
    const Mat<double> g = Mat<double>::Zero(2, 4);  // all scores 0 -> no strict increase
    AdvParams p;
    p.gamma = 1.0;
    Rng rng(3);
    EXPECT_EQ(adv_replace(s, g, t, p, rng), s);
}

TEST(AdvReplace, PicksGloballyBestCandidateByLinearScore) {
    const Mat<double> t = handmade_table();
    const IdSeq s{4};
    Mat<double> g(1, 4);
    g << 1.0, 0.0, 0.0, 0.0;  // score(c) = e(c)[0] - 1
    AdvParams p;
    p.gamma = 1.0;
    p.k = 10;
    Rng rng(4);
    const IdSeq out = adv_replace(s, g, t, p, rng);
    // Exhaustive: candidates 5,6,7 score 1, -1, -2; best is 5.
    double best = 0;
    TokenId best_id = 4;
    for (TokenId c = 4; c < 8; ++c) {
        if (c == 4) continue;
        const double score = (t.row(c) - t.row(4)).dot(g.row(0));
        if (score > best) {
            best = score;
            best_id = c;
        }
    }
    EXPECT_EQ(out[0], best_id);
    EXPECT_EQ(out[0], 5);
}

TEST(AdvReplace, BudgetAndLengthPreserved) {
    const Mat<double> t = handmade_table();
    AdvParams p;
    p.gamma = 0.5;
    Rng rng(5);
    Rng grad_rng(6);
    for (int trial = 0; trial < 100; ++trial) {
        IdSeq s;
        const int len = 1 + grad_rng.uniform_int(9);
        for (int i = 0; i < len; ++i) s.push_back(4 + grad_rng.uniform_int(4));
        Mat<double> g(len, 4);
        for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = grad_rng.normal();
        const IdSeq out = adv_replace(s, g, t, p, rng);
        ASSERT_EQ(out.size(), s.size());
        EXPECT_LE(hamming(out, s), static_cast<int>(std::ceil(p.gamma * len)));
        // Replacements come only from candidate sets (content tokens here).
        for (std::size_t i = 0; i < s.size(); ++i)
            if (out[i] != s[i]) EXPECT_TRUE(Vocabulary::is_content(out[i]));
    }
}

TEST(AdvReplace, DeterministicUnderSeed) {
    const Mat<double> t = handmade_table();
    const IdSeq s{4, 5, 6, 7, 4, 6};
    Mat<double> g = Mat<double>::Random(6, 4);
    AdvParams p;
    p.gamma = 0.6;
    Rng r1(9), r2(9);
    EXPECT_EQ(adv_replace(s, g, t, p, r1), adv_replace(s, g, t, p, r2));
}

TEST(GenAdvPair, ZeroGammaIsIdentity) {
    Rng init(1);
    const Transformer<double> m(tiny_config(12), init);
    const SentencePair ex{{4, 5, 6}, {7, 8}};
    AdvParams xi_src, xi_tgt;
    xi_src.gamma = 0.0;
    xi_tgt.gamma = 0.0;
    xi_tgt.side = AdvSide::kTgt;
    Rng rng(2);
    const AdvDraw<double> d = gen_adv_pair(m, ex, xi_src, xi_tgt, rng, 0.0);
    EXPECT_EQ(d.src, ex.src);
    EXPECT_EQ(d.tgt, ex.tgt);
}

TEST(GenAdvPair, LengthPreservingAndWithinBudget) {
    Rng init(3);
    const Transformer<double> m(tiny_config(16), init);
    const SentencePair ex{{4, 5, 6, 7, 8}, {9, 10, 11}};
    AdvParams xi_src, xi_tgt;
    xi_src.gamma = 0.4;
    xi_tgt.gamma = 0.5;
    xi_tgt.side = AdvSide::kTgt;
    Rng rng(4);
    for (int i = 0; i < 20; ++i) {
        const AdvDraw<double> d = gen_adv_pair(m, ex, xi_src, xi_tgt, rng, 0.0);
        ASSERT_EQ(d.src.size(), ex.src.size());
        ASSERT_EQ(d.tgt.size(), ex.tgt.size());
        EXPECT_LE(hamming(d.src, ex.src), static_cast<int>(std::ceil(0.4 * 5)));
        EXPECT_LE(hamming(d.tgt, ex.tgt), static_cast<int>(std::ceil(0.5 * 3)));
    }
}

TEST(GenAdvPair, TwoDrawsGenerallyDiffer) {
    Rng init(5);
    const Transformer<double> m(tiny_config(20), init);
    const SentencePair ex{{4, 5, 6, 7, 8, 9, 10}, {11, 12, 13, 14}};
    AdvParams xi_src, xi_tgt;
    xi_src.gamma = 0.5;
    xi_tgt.gamma = 0.5;
    Rng rng(6);
    const OriginPass<double> origin = origin_pass(m, ex, 0.0);
    int distinct = 0;
    for (int i = 0; i < 10; ++i) {
        const auto d1 = gen_adv_pair(m, ex, origin.src_grad, xi_src, xi_tgt, rng, 0.0);
        const auto d2 = gen_adv_pair(m, ex, origin.src_grad, xi_src, xi_tgt, rng, 0.0);
        if (d1.src != d2.src || d1.tgt != d2.tgt) ++distinct;
    }
    EXPECT_GT(distinct, 5);
}

TEST(GenAdvPair, DeterministicUnderSeed) {
    Rng init(7);
    const Transformer<double> m(tiny_config(16), init);
    const SentencePair ex{{4, 5, 6, 7}, {8, 9, 10}};
    AdvParams xi_src, xi_tgt;
    xi_src.gamma = 0.5;
    xi_tgt.gamma = 0.5;
    Rng r1(11), r2(11);
    const auto d1 = gen_adv_pair(m, ex, xi_src, xi_tgt, r1, 0.1);
    const auto d2 = gen_adv_pair(m, ex, xi_src, xi_tgt, r2, 0.1);
    EXPECT_EQ(d1.src, d2.src);
    EXPECT_EQ(d1.tgt, d2.tgt);
}

TEST(AdvParamsChecks, Validation) {
    AdvParams p;
    p.gamma = 1.5;
    EXPECT_THROW(p.validate(), std::invalid_argument);
    p = {};
    p.k = 0;
    EXPECT_THROW(p.validate(), std::invalid_argument);
    p = {};
    p.sim_threshold = 2.0;
    EXPECT_THROW(p.validate(), std::invalid_argument);
}
