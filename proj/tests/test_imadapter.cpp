// Copyright (c) 2026 The hpkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "hpkit/imadapter.hpp"
#include "oracles.hpp"

using namespace hpkit;
using namespace hpkit::adapter;

namespace {

AdapterConfig tiny_config() {
    AdapterConfig cfg;
    cfg.appearance_width = 10;
    cfg.id_width = 6;
    cfg.rank = 4;
    cfg.kernels = {1, 3};
    cfg.heads = 2;
    return cfg;
}

std::vector<double> linear_rows(const nn::Linear& l, const std::vector<double>& x,
                                std::size_t rows) {
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
}

std::vector<double> naive_mhca(const nn::Mhca& attn, const std::vector<double>& q,
                               std::size_t nq, const std::vector<double>& kv, std::size_t nkv) {
    const auto qp = linear_rows(attn.wq, q, nq);
    const auto kp = linear_rows(attn.wk, kv, nkv);
    const auto vp = linear_rows(attn.wv, kv, nkv);
    const auto attended =
        oracles::naive_attention(qp, kp, vp, nq, nkv, attn.attn_width(), attn.heads);
    return linear_rows(attn.wo, attended, nq);
}

}  // namespace

TEST_CASE("mconv isolates branches and stacks them along channels") {
    AdapterConfig cfg = tiny_config();
    cfg.kernels = {1, 3, 5};
    Tape tape;
    Rng rng(401);
    auto a = IMAdapter::init(cfg, tape, rng);

    // identity 1x1 branch, dead other branches
    auto& k1 = a.branches[0].kernel.mutable_data();
    std::fill(k1.begin(), k1.end(), 0.0);
    for (std::size_t c = 0; c < cfg.rank; ++c) k1[(c * cfg.rank + c)] = 1.0;
    std::fill(a.branches[1].kernel.mutable_data().begin(),
              a.branches[1].kernel.mutable_data().end(), 0.0);
    std::fill(a.branches[2].kernel.mutable_data().begin(),
              a.branches[2].kernel.mutable_data().end(), 0.0);

    const Tensor tokens = oracles::random_tensor({6, cfg.rank}, rng);
    const Tensor out = a.mconv(tokens, 2, 3);
    REQUIRE(out.dim(1) == 3 * cfg.rank);
    for (std::size_t t = 0; t < 6; ++t) {
        for (std::size_t c = 0; c < cfg.rank; ++c) {
            CHECK(out.at({t, c}) == doctest::Approx(tokens.at({t, c})).epsilon(1e-12));
            CHECK(out.at({t, cfg.rank + c}) == 0.0);
            CHECK(out.at({t, 2 * cfg.rank + c}) == 0.0);
        }
    }
}

TEST_CASE("mconv default output width is three stacked 384 branches") {
    AdapterConfig cfg;  // paper defaults
    CHECK(cfg.concat_width() == 1152);
    Tape tape;
    Rng rng(402);
    auto a = IMAdapter::init(cfg, tape, rng);
    const Tensor tokens = oracles::random_tensor({4, cfg.rank}, rng);
    CHECK(a.mconv(tokens, 2, 2).dim(1) == 1152);
}

TEST_CASE("mconv matches the naive convolution oracle on a 4x4 grid") {
    AdapterConfig cfg = tiny_config();
    Tape tape;
    Rng rng(403);
    auto a = IMAdapter::init(cfg, tape, rng);
    const Tensor tokens = oracles::random_tensor({16, cfg.rank}, rng);
    const Tensor out = a.mconv(tokens, 4, 4);

    // grid layout: channel-major image of the token matrix
    std::vector<double> grid(cfg.rank * 16);
    for (std::size_t t = 0; t < 16; ++t) {
        for (std::size_t c = 0; c < cfg.rank; ++c) grid[c * 16 + t] = tokens.at({t, c});
    }
    for (std::size_t b = 0; b < cfg.kernels.size(); ++b) {
        const std::size_t k = cfg.kernels[b];
        const auto ref = oracles::naive_conv2d(grid, a.branches[b].kernel.data(), cfg.rank, 4, 4,
                                               cfg.rank, k);
        for (std::size_t t = 0; t < 16; ++t) {
            for (std::size_t c = 0; c < cfg.rank; ++c) {
                const double expected = ref[c * 16 + t] + a.branches[b].bias.data()[c];
                CHECK(out.at({t, b * cfg.rank + c}) == doctest::Approx(expected).epsilon(1e-10));
            }
        }
    }

    CHECK_THROWS_AS(a.mconv(tokens, 3, 4), DimensionError);
}

TEST_CASE("zero-initialized up-projection makes the adapter an exact identity") {
    AdapterConfig cfg = tiny_config();
    Tape tape;
    Rng rng(404);
    auto a = IMAdapter::init(cfg, tape, rng);
    for (int iter = 0; iter < 20; ++iter) {
        const Tensor appearance = oracles::random_tensor({6, cfg.appearance_width}, rng);
        const Tensor id_tokens =
            oracles::random_tensor({1 + rng.uniform_int(3), cfg.id_width}, rng);
        const Tensor out = a.forward(appearance, 2, 3, id_tokens);
        REQUIRE(out.shape() == appearance.shape());
        for (std::size_t i = 0; i < out.numel(); ++i) {
            CHECK(out.data()[i] == appearance.data()[i]);
        }
    }
}

TEST_CASE("adapter output shape equals input shape for any id token count") {
    AdapterConfig cfg = tiny_config();
    Tape tape;
    Rng rng(405);
    auto a = IMAdapter::init(cfg, tape, rng);
    a.w_up.w.mutable_data() = oracles::random_tensor({cfg.rank, cfg.appearance_width}, rng).data();
    for (std::size_t i : {1u, 2u, 5u}) {
        const Tensor appearance = oracles::random_tensor({4, cfg.appearance_width}, rng);
        const Tensor id_tokens = oracles::random_tensor({i, cfg.id_width}, rng);
        CHECK(a.forward(appearance, 2, 2, id_tokens).shape() == appearance.shape());
    }
}

TEST_CASE("adapter forward matches composed naive sub-operation oracles") {
    AdapterConfig cfg = tiny_config();
    Tape tape;
    Rng rng(406);
    auto a = IMAdapter::init(cfg, tape, rng);
    a.w_up.w.mutable_data() =
        oracles::random_tensor({cfg.rank, cfg.appearance_width}, rng, -0.5, 0.5).data();

    const Tensor appearance = oracles::random_tensor({4, cfg.appearance_width}, rng);
    const Tensor id_tokens = oracles::random_tensor({1, cfg.id_width}, rng);
    const Tensor out = a.forward(appearance, 2, 2, id_tokens);

    // stage 1: down projection
    const auto low_rank = linear_rows(a.w_down, appearance.data(), 4);
    // stage 2: multi-scale convolutions on the 2x2 grid
    std::vector<double> grid(cfg.rank * 4);
    for (std::size_t t = 0; t < 4; ++t) {
        for (std::size_t c = 0; c < cfg.rank; ++c) grid[c * 4 + t] = low_rank[t * cfg.rank + c];
    }
    std::vector<double> conv_tokens(4 * cfg.concat_width());
    for (std::size_t b = 0; b < cfg.kernels.size(); ++b) {
        const auto ref = oracles::naive_conv2d(grid, a.branches[b].kernel.data(), cfg.rank, 2, 2,
                                               cfg.rank, cfg.kernels[b]);
        for (std::size_t t = 0; t < 4; ++t) {
            for (std::size_t c = 0; c < cfg.rank; ++c) {
                conv_tokens[t * cfg.concat_width() + b * cfg.rank + c] =
                    ref[c * 4 + t] + a.branches[b].bias.data()[c];
            }
        }
    }
    // stage 3: kv projection, ID-queried attention, patch scatter, residual
    const auto kv = linear_rows(a.kv_proj, conv_tokens, 4);
    const auto fused = naive_mhca(a.id_attn, id_tokens.data(), 1, kv, 4);
    const auto per_patch = naive_mhca(a.patch_attn, kv, 4, fused, 1);
    const auto up = linear_rows(a.w_up, per_patch, 4);
    for (std::size_t i = 0; i < out.numel(); ++i) {
        CHECK(out.data()[i] == doctest::Approx(appearance.data()[i] + up[i]).epsilon(1e-10));
    }
}

TEST_CASE("adapter parameters pass finite differences; appearance stays frozen") {
    AdapterConfig cfg = tiny_config();
    Tape tape;
    Rng rng(407);
    auto a = IMAdapter::init(cfg, tape, rng);
    const Tensor appearance = oracles::random_tensor({4, cfg.appearance_width}, rng);
    const Tensor id_tokens = oracles::random_tensor({2, cfg.id_width}, rng);
    const Tensor weight = oracles::random_tensor({4, cfg.appearance_width}, rng);

    auto loss_value = [&] {
        tape.reset();
        return sum(mul(a.forward(appearance, 2, 2, id_tokens), weight)).value();
    };
    tape.reset();
    Tensor loss = sum(mul(a.forward(appearance, 2, 2, id_tokens), weight));
    backward(loss);

    CHECK(!appearance.has_grad());
    CHECK(!id_tokens.has_grad());

    NamedTensors params;
    a.collect("adapter", params);
    for (auto& [name, p] : params) {
        INFO(name);
        CHECK(oracles::max_grad_rel_error(loss_value, p, p.grad(), rng, 6) < 1e-4);
    }
}

TEST_CASE("id source sampling: inference flag, single-frame clip, uniformity") {
    Rng rng(408);
    for (int i = 0; i < 5; ++i) {
        const auto s = sample_id_source(SampleMode::kInfer, 10, rng);
        CHECK(s.reference);
    }
    for (int i = 0; i < 5; ++i) {
        const auto s = sample_id_source(SampleMode::kTrain, 1, rng);
        CHECK(!s.reference);
        CHECK(s.frame == 0);
    }

    const std::size_t clip = 8;
    std::vector<std::size_t> counts(clip, 0);
    const std::size_t draws = 100000;
    Rng freq_rng(409);
    for (std::size_t i = 0; i < draws; ++i) {
        ++counts[sample_id_source(SampleMode::kTrain, clip, freq_rng).frame];
    }
    const double expected = static_cast<double>(draws) / static_cast<double>(clip);
    for (std::size_t f = 0; f < clip; ++f) {
        CHECK(std::fabs(static_cast<double>(counts[f]) - expected) / expected < 0.02);
    }
}
