// Copyright 2026-present the vqcomm authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <random>

#include "support/testing.hpp"
#include "vqcomm/quantizer.hpp"

namespace vqcomm {
namespace {

using testing::random_matrix;

QuantizerConfig qcfg(std::size_t n, std::size_t m, double beta = 0.25) {
    QuantizerConfig c;
    c.num_tokens = n;
    c.latent_dim = m;
    c.beta = beta;
    return c;
}

// Exhaustive scan written independently of nearest_code: keep the first strict minimum.
std::vector<std::size_t> oracle_indices(const std::vector<double>& z, const Matrix& codes,
                                        std::size_t n) {
    const std::size_t d = z.size() / n;
    std::vector<std::size_t> out;
    for (std::size_t t = 0; t < n; ++t) {
        std::size_t best = 0;
        double best_d = 0.0;
        for (std::size_t j = 0; j < codes.rows(); ++j) {
            double dist = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double diff = z[t * d + k] - codes(j, k);
                dist += diff * diff;
            }
            if (j == 0 || dist < best_d) {
                best = j;
                best_d = dist;
            }
        }
        out.push_back(best);
    }
    return out;
}

TEST(QuantizerConfig, Defaults) {
    const QuantizerConfig c;
    EXPECT_EQ(c.beta, 0.25);
    EXPECT_EQ(c.ema_decay, 0.99);
}

TEST(QuantizerConfig, RejectsNonDivisibleTokens) {
    try {
        qcfg(7, 64).validate();
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("M mod N must be 0"), std::string::npos);
    }
    EXPECT_NO_THROW(qcfg(8, 64).validate());
}

TEST(QuantizerConfig, RejectsBadBetaAndDecay) {
    auto c = qcfg(1, 4);
    c.beta = -0.1;
    EXPECT_THROW(c.validate(), ConfigError);
    c.beta = 0.25;
    c.ema_decay = 1.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c.ema_decay = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(SplitLatent, Examples) {
    const std::vector<double> z{1, 2, 3, 4};
    EXPECT_EQ(split_latent(z, 2), (std::vector<std::vector<double>>{{1, 2}, {3, 4}}));
    EXPECT_EQ(split_latent(z, 1), (std::vector<std::vector<double>>{z}));
    EXPECT_THROW(split_latent(z, 3), ConfigError);
}

TEST(SplitLatent, ConcatRoundTripIsBitExact) {
    Rng rng(3);
    std::normal_distribution<double> d(0.0, 10.0);
    for (std::size_t n : {1u, 2u, 4u, 8u}) {
        for (int trial = 0; trial < 25; ++trial) {
            std::vector<double> z(32);
            for (double& v : z) v = d(rng);
            EXPECT_EQ(concat_segments(split_latent(z, n)), z);
        }
    }
}

TEST(NearestCode, Examples) {
    const auto cb = Codebook::from_codes(Matrix{{1, 0}, {0, 2}});
    EXPECT_EQ(nearest_code(std::vector<double>{0, 0}, cb), 0u);

    const auto five = Codebook::from_codes(Matrix{{9, 9}, {1, 0}, {5, 5}, {2, 2}, {-1, 0}});
    EXPECT_EQ(nearest_code(std::vector<double>{2, 2}, five), 3u);
    EXPECT_EQ(nearest_code(std::vector<double>{0, 0}, five), 1u) << "ties go to the lowest index";
}

TEST(NearestCode, Errors) {
    Codebook empty = Codebook::from_codes(Matrix(0, 2));
    EXPECT_THROW(nearest_code(std::vector<double>{0, 0}, empty), ConfigError);
    const auto cb = Codebook::from_codes(Matrix{{1, 0}});
    EXPECT_THROW(nearest_code(std::vector<double>{0, 0, 0}, cb), ShapeError);
}

TEST(Quantize, FixedPointWhenSegmentsAreCodes) {
    const auto cb = Codebook::from_codes(Matrix{{1, 2}, {3, 4}, {5, 6}});
    const std::vector<double> z{5, 6, 1, 2};
    const auto r = quantize(z, cb, qcfg(2, 4));
    EXPECT_EQ(r.quantized, z);
    EXPECT_EQ(r.indices, (std::vector<std::size_t>{2, 0}));
    EXPECT_EQ(r.codebook_loss, 0.0);
    EXPECT_EQ(r.commitment_loss, 0.0);
    EXPECT_EQ(quantization_loss(r, 0.25), 0.0);
}

TEST(Quantize, SingleTokenIsStandardVq) {
    Rng rng(5);
    const auto cb = Codebook::from_codes(random_matrix(16, 6, rng));
    const Matrix z = random_matrix(1, 6, rng);
    const auto r = quantize(z.row(0), cb, qcfg(1, 6));
    const auto idx = nearest_code(z.row(0), cb);
    auto code = cb.codes.row(idx);
    EXPECT_EQ(r.quantized, std::vector<double>(code.begin(), code.end()));
}

TEST(Quantize, MatchesBruteForceOracle) {
    Rng rng(17);
    std::uniform_int_distribution<std::size_t> pick_l(1, 32), pick_d(1, 16), pick_n(0, 2);
    const std::size_t tokens[] = {1, 2, 4};
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t l = pick_l(rng), d = pick_d(rng), n = tokens[pick_n(rng)];
        const auto cb = Codebook::from_codes(random_matrix(l, d, rng));
        const Matrix zm = random_matrix(1, n * d, rng);
        const std::vector<double> z(zm.values().begin(), zm.values().end());
        const auto r = quantize(z, cb, qcfg(n, n * d));
        ASSERT_EQ(r.indices, oracle_indices(z, cb.codes, n)) << "trial " << trial;
    }
}

TEST(Quantize, IdempotentOnOwnOutput) {
    Rng rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        const auto cb = Codebook::from_codes(random_matrix(8, 3, rng));
        const Matrix zm = random_matrix(1, 12, rng);
        const auto cfg = qcfg(4, 12);
        const auto once = quantize(zm.row(0), cb, cfg);
        const auto twice = quantize(once.quantized, cb, cfg);
        EXPECT_EQ(twice.quantized, once.quantized);
    }
}

TEST(Quantize, LossZeroIffSegmentsEqualCodes) {
    Rng rng(29);
    for (int trial = 0; trial < 100; ++trial) {
        const auto cb = Codebook::from_codes(random_matrix(4, 2, rng));
        Matrix zm = random_matrix(1, 4, rng);
        if (trial % 2 == 0) {
            for (std::size_t k = 0; k < 4; ++k) zm(0, k) = cb.codes((trial / 2) % 4, k % 2);
        }
        const auto r = quantize(zm.row(0), cb, qcfg(2, 4));
        EXPECT_EQ(quantization_loss(r, 0.25) == 0.0, r.quantized == concat_segments(r.segments));
        EXPECT_EQ(trial % 2 == 0, r.quantized == concat_segments(r.segments));
    }
}

TEST(QuantizationLoss, HandCase) {
    const auto cb = Codebook::from_codes(Matrix{{0, 0}});
    const auto r = quantize(std::vector<double>{1, 0}, cb, qcfg(1, 2));
    EXPECT_NEAR(quantization_loss(r, 0.25), 1.25, 1e-12);
    EXPECT_EQ(r.codebook_loss, 1.0);
    EXPECT_EQ(r.commitment_loss, 1.0);
}

TEST(QuantizationLoss, ZeroCodebookCommitmentIsScaledNorm) {
    const auto cb = Codebook::from_codes(Matrix{{0, 0}});
    const std::vector<double> z{1, 2, 3, 4};
    const auto r = quantize(z, cb, qcfg(2, 4));
    EXPECT_NEAR(0.25 * r.commitment_loss, 0.25 * 30.0 / 2.0, 1e-12);
}

TEST(StraightThrough, IsIdentity) {
    const std::vector<double> g{0.1, -0.2};
    EXPECT_EQ(straight_through(g), g);
    EXPECT_EQ(straight_through(std::vector<double>(3, 0.0)), std::vector<double>(3, 0.0));
}

TEST(QuantizeBatch, SelectionsCountIsBatchTimesTokens) {
    Rng rng(31);
    const auto cb = Codebook::uniform(16, 4, rng);
    for (std::size_t n : {1u, 2u, 4u}) {
        const Matrix z = random_matrix(7, 4 * n, rng);
        EXPECT_EQ(quantize_batch(z, cb, qcfg(n, 4 * n)).indices.size(), 7 * n);
    }
}

TEST(QuantizeBatch, FrozenAssignmentsReproduceSearch) {
    Rng rng(37);
    const auto cb = Codebook::uniform(8, 3, rng);
    const Matrix z = random_matrix(5, 6, rng, -0.2, 0.2);
    const auto cfg = qcfg(2, 6);
    const auto searched = quantize_batch(z, cb, cfg);
    const auto frozen = quantize_batch_frozen(z, cb, cfg, searched.indices);
    EXPECT_EQ(frozen.quantized, searched.quantized);
    EXPECT_NEAR(frozen.commitment_loss, searched.commitment_loss, 1e-15);
}

TEST(CommitmentGradient, MatchesFiniteDifferencesWithFrozenAssignment) {
    Rng rng(41);
    const auto cb = Codebook::uniform(8, 2, rng);
    const auto cfg = qcfg(4, 8, 0.25);
    Matrix z = random_matrix(3, 8, rng, -0.5, 0.5);
    const auto idx = quantize_batch(z, cb, cfg).indices;
    const auto q = quantize_batch_frozen(z, cb, cfg, idx);
    const Matrix g = commitment_gradient(z, q.quantized, cfg.beta, cfg.num_tokens);
    const auto f = [&] { return cfg.beta * quantize_batch_frozen(z, cb, cfg, idx).commitment_loss; };
    EXPECT_LT(testing::max_gradient_error(z.values(), g.values(), f), 1e-6);
}

TEST(Codebook, UniformInitRange) {
    Rng rng(43);
    const auto cb = Codebook::uniform(64, 8, rng);
    for (double v : cb.codes.values()) EXPECT_LE(std::abs(v), 1.0 / 64.0);
    EXPECT_EQ(cb.ema_counts, std::vector<double>(64, 1.0));
    for (std::size_t i = 0; i < 64; ++i) {
        for (std::size_t k = 0; k < 8; ++k) {
            EXPECT_NEAR(cb.ema_sums(i, k) / (cb.ema_counts[i] + kEmaEpsilon), cb.codes(i, k), 1e-17);
        }
    }
}

TEST(EmaUpdate, HandRecurrence) {
    Codebook cb;
    cb.codes = Matrix{{0, 0}};
    cb.ema_counts = {1.0};
    cb.ema_sums = Matrix{{0, 0}};
    const std::vector<double> seg{1, 1};
    const std::vector<Assignment> a{{0, seg}};
    ema_update(cb, a, 0.99);
    EXPECT_NEAR(cb.ema_counts[0], 1.0, 1e-15);
    EXPECT_NEAR(cb.ema_sums(0, 0), 0.01, 1e-15);
    EXPECT_NEAR(cb.codes(0, 1), 0.01 / (1.0 + kEmaEpsilon), 1e-15);
}

TEST(EmaUpdate, SmallDecayTendsToBatchMean) {
    auto cb = Codebook::from_codes(Matrix{{5, 5}, {0, 0}});
    const std::vector<double> s1{1, 2}, s2{3, 4};
    const std::vector<Assignment> a{{0, s1}, {0, s2}};
    ema_update(cb, a, 1e-9);
    EXPECT_NEAR(cb.codes(0, 0), 2.0, 1e-4);
    EXPECT_NEAR(cb.codes(0, 1), 3.0, 1e-4);
}

TEST(EmaUpdate, NoAssignmentsLeavesCodesUnchanged) {
    Rng rng(47);
    auto cb = Codebook::uniform(16, 4, rng);
    const Matrix before = cb.codes;
    for (int step = 0; step < 50; ++step) ema_update(cb, {}, 0.99);
    for (std::size_t i = 0; i < before.size(); ++i) {
        EXPECT_NEAR(cb.codes.values()[i], before.values()[i], 1e-6);
    }
}

TEST(EmaUpdate, Errors) {
    auto cb = Codebook::from_codes(Matrix{{0, 0}});
    const std::vector<double> seg{1, 1};
    EXPECT_THROW(ema_update(cb, std::vector<Assignment>{{3, seg}}, 0.99), ShapeError);
    EXPECT_THROW(ema_update(cb, {}, 1.5), ConfigError);
}

TEST(EmaUpdate, CountsStayNonNegativeAndCodesFinite) {
    Rng rng(53);
    auto cb = Codebook::uniform(8, 2, rng);
    const auto cfg = qcfg(2, 4);
    for (int step = 0; step < 100; ++step) {
        const Matrix z = random_matrix(6, 4, rng);
        const auto q = quantize_batch(z, cb, cfg);
        const auto a = batch_assignments(z, q.indices, cfg.num_tokens);
        ema_update(cb, a, 0.99);
    }
    for (double c : cb.ema_counts) EXPECT_GE(c, 0.0);
    EXPECT_TRUE(cb.codes.all_finite());
}

}  // namespace
}  // namespace vqcomm
