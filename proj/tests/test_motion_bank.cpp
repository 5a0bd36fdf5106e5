// Copyright (c) 2026 The hpkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "hpkit/motion_bank.hpp"
#include "oracles.hpp"

using namespace hpkit;
using namespace hpkit::motion;

namespace {

BankConfig tiny_config() {
    BankConfig cfg;
    cfg.memory_count = 3;
    cfg.width = 8;
    cfg.heads = 2;
    cfg.blocks = 2;
    cfg.mlp_ratio = 2;
    return cfg;
}

// Straight-line recompute of one bank block with raw loops.
std::vector<double> naive_block(const BankBlock& block, const Tensor& memories,
                                const Tensor& features, const Tensor& cond, std::size_t width,
                                std::size_t heads) {
    const std::size_t n = features.dim(0);
    const std::size_t mem = memories.dim(0);
    auto linear_vec = [&](const nn::Linear& l, const std::vector<double>& x) {
        std::vector<double> y(l.out_dim(), 0.0);
        for (std::size_t o = 0; o < l.out_dim(); ++o) {
            double acc = l.has_bias ? l.b.data()[o] : 0.0;
            for (std::size_t i = 0; i < l.in_dim(); ++i) acc += x[i] * l.w.data()[i * l.out_dim() + o];
            y[o] = acc;
        }
        return y;
    };
    auto linear_rows = [&](const nn::Linear& l, const std::vector<double>& x, std::size_t rows) {
        std::vector<double> y(rows * l.out_dim(), 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t o = 0; o < l.out_dim(); ++o) {
                double acc = l.has_bias ? l.b.data()[o] : 0.0;
                for (std::size_t i = 0; i < l.in_dim(); ++i) {
                    acc += x[r * l.in_dim() + i] * l.w.data()[i * l.out_dim() + o];
                }
                y[r * l.out_dim() + o] = acc;
            }
        }
        return y;
    };
    auto adaln = [&](const nn::AdaLN& a, std::vector<double> x, std::size_t rows) {
        const auto dgamma = linear_vec(a.to_gamma, cond.data());
        const auto beta = linear_vec(a.to_beta, cond.data());
        for (std::size_t r = 0; r < rows; ++r) {
            double mu = 0.0;
            for (std::size_t c = 0; c < width; ++c) mu += x[r * width + c];
            mu /= static_cast<double>(width);
            double var = 0.0;
            for (std::size_t c = 0; c < width; ++c) {
                var += (x[r * width + c] - mu) * (x[r * width + c] - mu);
            }
            var /= static_cast<double>(width);
            const double inv = 1.0 / std::sqrt(var + a.eps);
            for (std::size_t c = 0; c < width; ++c) {
                const double normed = (x[r * width + c] - mu) * inv;
                x[r * width + c] = (1.0 + dgamma[c]) * normed + beta[c];
            }
        }
        return x;
    };

    // AdaLN(F_m + E_s, E_s)
    std::vector<double> x(n * width);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < width; ++c) {
            x[r * width + c] = features.data()[r * width + c] + cond.data()[c];
        }
    }
    x = adaln(block.adaln_in, std::move(x), n);

    // MHCA(memories, x, x)
    const auto q = linear_rows(block.attn.wq, memories.data(), mem);
    const auto k = linear_rows(block.attn.wk, x, n);
    const auto v = linear_rows(block.attn.wv, x, n);
    const auto attended = oracles::naive_attention(q, k, v, mem, n, width, heads);
    auto y = linear_rows(block.attn.wo, attended, mem);

    // AdaLN + MLP
    y = adaln(block.adaln_out, std::move(y), mem);
    auto hidden = linear_rows(block.mlp.fc1, y, mem);
    for (double& h : hidden) h = h / (1.0 + std::exp(-h));
    return linear_rows(block.mlp.fc2, hidden, mem);
}

}  // namespace

TEST_CASE("adaln with zero maps collapses to plain layer norm") {
    Tape tape;
    Rng rng(301);
    auto a = nn::AdaLN::init(8, 8, tape);
    const Tensor x = oracles::random_tensor({5, 8}, rng);
    const Tensor cond = oracles::random_tensor({8}, rng);
    const Tensor out = a.forward(x, cond);
    const Tensor plain = layer_norm(x, a.eps);
    for (std::size_t i = 0; i < out.numel(); ++i) CHECK(out.data()[i] == plain.data()[i]);
}

TEST_CASE("adaln maps a constant row to its predicted shift") {
    Tape tape;
    Rng rng(302);
    auto a = nn::AdaLN::init(4, 6, tape);
    a.to_gamma.w.mutable_data() = oracles::random_tensor({4, 6}, rng).data();
    a.to_beta.w.mutable_data() = oracles::random_tensor({4, 6}, rng).data();
    a.to_beta.b.mutable_data() = oracles::random_tensor({6}, rng).data();

    const Tensor cond = oracles::random_tensor({4}, rng);
    const Tensor row = Tensor::full({1, 6}, 3.25);
    const Tensor out = a.forward(row, cond);
    const Tensor beta = a.to_beta.forward_vec(cond);
    for (std::size_t c = 0; c < 6; ++c) {
        CHECK(out.at({0, c}) == doctest::Approx(beta.data()[c]).epsilon(1e-12));
    }
}

TEST_CASE("adaln matches a from-scratch evaluation of the formula") {
    Tape tape;
    Rng rng(303);
    auto a = nn::AdaLN::init(5, 7, tape);
    a.to_gamma.w.mutable_data() = oracles::random_tensor({5, 7}, rng).data();
    a.to_gamma.b.mutable_data() = oracles::random_tensor({7}, rng).data();
    a.to_beta.w.mutable_data() = oracles::random_tensor({5, 7}, rng).data();
    a.to_beta.b.mutable_data() = oracles::random_tensor({7}, rng).data();

    const Tensor x = oracles::random_tensor({3, 7}, rng);
    const Tensor cond = oracles::random_tensor({5}, rng);
    const Tensor out = a.forward(x, cond);

    for (std::size_t r = 0; r < 3; ++r) {
        double mu = 0.0;
        for (std::size_t c = 0; c < 7; ++c) mu += x.at({r, c});
        mu /= 7.0;
        double var = 0.0;
        for (std::size_t c = 0; c < 7; ++c) var += (x.at({r, c}) - mu) * (x.at({r, c}) - mu);
        var /= 7.0;
        for (std::size_t c = 0; c < 7; ++c) {
            double dg = a.to_gamma.b.data()[c];
            double bt = a.to_beta.b.data()[c];
            for (std::size_t e = 0; e < 5; ++e) {
                dg += cond.data()[e] * a.to_gamma.w.data()[e * 7 + c];
                bt += cond.data()[e] * a.to_beta.w.data()[e * 7 + c];
            }
            const double normed = (x.at({r, c}) - mu) / std::sqrt(var + a.eps);
            CHECK(out.at({r, c}) == doctest::Approx((1.0 + dg) * normed + bt).epsilon(1e-12));
        }
    }
}

TEST_CASE("mhca with a single key/value token replicates its projected value") {
    Tape tape;
    Rng rng(304);
    auto attn = nn::Mhca::init(6, 6, 6, 6, 3, tape, rng);
    const Tensor q = oracles::random_tensor({4, 6}, rng);
    const Tensor kv = oracles::random_tensor({1, 6}, rng);
    const Tensor out = attn.forward(q, kv);
    const Tensor expected = attn.wo.forward(attn.wv.forward(kv));
    for (std::size_t r = 0; r < 4; ++r) {
        for (std::size_t c = 0; c < 6; ++c) {
            CHECK(out.at({r, c}) == doctest::Approx(expected.at({0, c})).epsilon(1e-12));
        }
    }
}

TEST_CASE("mhca with zero queries averages the values uniformly") {
    Tape tape;
    Rng rng(305);
    auto attn = nn::Mhca::init(4, 4, 4, 4, 2, tape, rng);
    // identity output projection isolates the pre-projection attention result
    std::vector<double> eye(16, 0.0);
    for (int i = 0; i < 4; ++i) eye[static_cast<std::size_t>(i * 4 + i)] = 1.0;
    attn.wo.w.mutable_data() = eye;

    const Tensor q = Tensor::zeros({2, 4});
    const Tensor kv = oracles::random_tensor({5, 4}, rng);
    const Tensor v = attn.wv.forward(kv);
    const Tensor out = attn.forward(q, kv);
    for (std::size_t c = 0; c < 4; ++c) {
        double mean_v = 0.0;
        for (std::size_t r = 0; r < 5; ++r) mean_v += v.at({r, c});
        mean_v /= 5.0;
        CHECK(out.at({0, c}) == doctest::Approx(mean_v).epsilon(1e-12));
        CHECK(out.at({1, c}) == doctest::Approx(mean_v).epsilon(1e-12));
    }
}

TEST_CASE("mhca matches the naive per-head oracle") {
    Tape tape;
    Rng rng(306);
    auto attn = nn::Mhca::init(6, 6, 6, 6, 2, tape, rng);
    const Tensor q = oracles::random_tensor({2, 6}, rng);
    const Tensor kv = oracles::random_tensor({3, 6}, rng);
    const Tensor out = attn.forward(q, kv);

    const Tensor qp = attn.wq.forward(q);
    const Tensor kp = attn.wk.forward(kv);
    const Tensor vp = attn.wv.forward(kv);
    const auto attended = oracles::naive_attention(qp.data(), kp.data(), vp.data(), 2, 3, 6, 2);
    const Tensor expected = attn.wo.forward(Tensor::from({2, 6}, attended));
    for (std::size_t i = 0; i < out.numel(); ++i) {
        CHECK(out.data()[i] == doctest::Approx(expected.data()[i]).epsilon(1e-10));
    }

    CHECK_THROWS_AS(nn::Mhca::init(6, 6, 6, 6, 4, tape, rng), ConfigError);
}

TEST_CASE("memory bank output token count tracks the memory count, not n") {
    Tape tape;
    Rng rng(307);
    auto bank = MemoryBank::init(tiny_config(), tape, rng);
    const Tensor cond = oracles::random_tensor({8}, rng);
    for (std::size_t n : {1u, 2u, 16u, 100u}) {
        const Tensor fm = oracles::random_tensor({n, 8}, rng);
        const Tensor out = bank.forward(fm, cond);
        CHECK(out.dim(0) == 3);
        CHECK(out.dim(1) == 8);
    }
}

TEST_CASE("memory bank forward is deterministic") {
    Tape tape;
    Rng rng(308);
    auto bank = MemoryBank::init(tiny_config(), tape, rng);
    const Tensor fm = oracles::random_tensor({4, 8}, rng);
    const Tensor cond = oracles::random_tensor({8}, rng);
    const Tensor a = bank.forward(fm, cond);
    const Tensor b = bank.forward(fm, cond);
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.data()[i] == b.data()[i]);
}

TEST_CASE("single bank block matches the composed naive oracle") {
    BankConfig cfg = tiny_config();
    cfg.blocks = 1;
    Tape tape;
    Rng rng(309);
    auto bank = MemoryBank::init(cfg, tape, rng);
    // make both AdaLNs non-trivial so the oracle exercises the modulation
    for (auto& block : bank.blocks) {
        block.adaln_in.to_gamma.w.mutable_data() = oracles::random_tensor({8, 8}, rng, -0.3, 0.3).data();
        block.adaln_in.to_beta.w.mutable_data() = oracles::random_tensor({8, 8}, rng, -0.3, 0.3).data();
        block.adaln_out.to_gamma.b.mutable_data() = oracles::random_tensor({8}, rng, -0.3, 0.3).data();
        block.adaln_out.to_beta.b.mutable_data() = oracles::random_tensor({8}, rng, -0.3, 0.3).data();
    }
    const Tensor fm = oracles::random_tensor({2, 8}, rng);
    const Tensor cond = oracles::random_tensor({8}, rng);
    const Tensor out = bank.forward(fm, cond);
    const auto ref = naive_block(bank.blocks[0], bank.memories, fm, cond, 8, 2);
    REQUIRE(out.numel() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) {
        CHECK(out.data()[i] == doctest::Approx(ref[i]).epsilon(1e-10));
    }
}

TEST_CASE("multi-block chain equals manual block-by-block composition") {
    Tape tape;
    Rng rng(310);
    auto bank = MemoryBank::init(tiny_config(), tape, rng);
    const Tensor fm = oracles::random_tensor({5, 8}, rng);
    const Tensor cond = oracles::random_tensor({8}, rng);
    const Tensor full = bank.forward(fm, cond);

    Tensor x = fm;
    for (const auto& block : bank.blocks) {
        x = bank_block_forward(block, bank.memories, x, cond);
    }
    for (std::size_t i = 0; i < full.numel(); ++i) CHECK(full.data()[i] == x.data()[i]);
}

TEST_CASE("init_memories statistics, determinism and defaults") {
    // enough draws for the 1% tolerance on the sample stddev
    const Tensor big = init_memories(1400, 768, 99);
    REQUIRE(big.numel() >= 1000000);
    double mean = 0.0;
    for (double v : big.data()) mean += v;
    mean /= static_cast<double>(big.numel());
    double var = 0.0;
    for (double v : big.data()) var += (v - mean) * (v - mean);
    var /= static_cast<double>(big.numel());
    const double expected_std = std::pow(768.0, -0.25);
    CHECK(std::sqrt(var) == doctest::Approx(expected_std).epsilon(0.01));
    CHECK(std::fabs(mean) < 0.01);

    const Tensor a = init_memories(8, 16, 1234);
    const Tensor b = init_memories(8, 16, 1234);
    for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.data()[i] == b.data()[i]);

    const BankConfig defaults;
    CHECK(defaults.memory_count == 64);
    CHECK(defaults.width == 768);

    // stddev convention switch
    const Tensor alt = init_memories(1400, 768, 99, nn::ScaledNormal::kStdDev);
    double var2 = 0.0;
    for (double v : alt.data()) var2 += v * v;
    var2 /= static_cast<double>(alt.numel());
    CHECK(std::sqrt(var2) == doctest::Approx(1.0 / std::sqrt(768.0)).epsilon(0.01));
}

TEST_CASE("bank gradients pass finite differences") {
    BankConfig cfg = tiny_config();
    cfg.blocks = 1;
    Tape tape;
    Rng rng(311);
    auto bank = MemoryBank::init(cfg, tape, rng);
    const Tensor fm = oracles::random_tensor({2, 8}, rng);
    const Tensor cond = oracles::random_tensor({8}, rng);
    const Tensor weight = oracles::random_tensor({3, 8}, rng);

    auto loss_value = [&] {
        tape.reset();
        return sum(mul(bank.forward(fm, cond), weight)).value();
    };
    tape.reset();
    Tensor loss = sum(mul(bank.forward(fm, cond), weight));
    backward(loss);
    NamedTensors params;
    bank.collect("bank", params);
    for (auto& [name, p] : params) {
        INFO(name);
        CHECK(oracles::max_grad_rel_error(loss_value, p, p.grad(), rng, 6) < 1e-4);
    }
}
