// Copyright (c) 2026 The hpkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "hpkit/nn.hpp"
#include "hpkit/tensor.hpp"
#include "oracles.hpp"

using namespace hpkit;

TEST_CASE("matmul identity and frozen example") {
    const Tensor eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    const Tensor b = Tensor::from({3, 2}, {1, 2, 3, 4, 5, 6});
    const Tensor c = matmul(eye, b);
    for (std::size_t i = 0; i < b.numel(); ++i) CHECK(c.data()[i] == b.data()[i]);

    const Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
    const Tensor v = Tensor::from({2, 1}, {0, 1});
    const Tensor prod = matmul(a, v);
    CHECK(prod.at({0, 0}) == doctest::Approx(2.0));
    CHECK(prod.at({1, 0}) == doctest::Approx(4.0));
}

TEST_CASE("matmul shape errors carry both shapes") {
    const Tensor a = Tensor::from({2, 3}, std::vector<double>(6, 1.0));
    const Tensor b = Tensor::from({2, 2}, std::vector<double>(4, 1.0));
    CHECK_THROWS_WITH_AS(matmul(a, b),
                         "matmul: inner dimensions disagree, [2, 3] x [2, 2]", DimensionError);
}

TEST_CASE("matmul and conv2d agree with naive oracles on random inputs") {
    Rng rng(11);
    for (int iter = 0; iter < 20; ++iter) {
        const std::size_t m = 1 + rng.uniform_int(8);
        const std::size_t k = 1 + rng.uniform_int(8);
        const std::size_t n = 1 + rng.uniform_int(8);
        const Tensor a = oracles::random_tensor({m, k}, rng);
        const Tensor b = oracles::random_tensor({k, n}, rng);
        const Tensor c = matmul(a, b);
        const auto ref = oracles::naive_matmul(a.data(), b.data(), m, k, n);
        for (std::size_t i = 0; i < ref.size(); ++i) {
            CHECK(c.data()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
        }
    }
    for (int iter = 0; iter < 10; ++iter) {
        const std::size_t ci = 1 + rng.uniform_int(3);
        const std::size_t co = 1 + rng.uniform_int(3);
        const std::size_t h = 2 + rng.uniform_int(5);
        const std::size_t w = 2 + rng.uniform_int(5);
        const std::size_t k = 1 + 2 * rng.uniform_int(3);  // 1, 3 or 5
        const Tensor x = oracles::random_tensor({ci, h, w}, rng);
        const Tensor kern = oracles::random_tensor({co, ci, k, k}, rng);
        const Tensor y = conv2d(x, kern, (k - 1) / 2);
        const auto ref = oracles::naive_conv2d(x.data(), kern.data(), ci, h, w, co, k);
        for (std::size_t i = 0; i < ref.size(); ++i) {
            CHECK(y.data()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("matmul gradient matches finite differences") {
    Rng rng(7);
    Tape tape;
    Tensor a = Tensor::param({3, 4}, oracles::random_tensor({3, 4}, rng).data(), tape);
    Tensor b = Tensor::param({4, 2}, oracles::random_tensor({4, 2}, rng).data(), tape);
    auto loss_value = [&] {
        tape.reset();
        return sum(matmul(a, b)).value();
    };
    tape.reset();
    Tensor loss = sum(matmul(a, b));
    backward(loss);
    const auto ga = a.grad();
    const auto gb = b.grad();
    CHECK(oracles::max_grad_rel_error(loss_value, a, ga, rng) < 1e-4);
    CHECK(oracles::max_grad_rel_error(loss_value, b, gb, rng) < 1e-4);
}

TEST_CASE("softmax symmetry, stabilization and simplex") {
    const Tensor flat = softmax(Tensor::from({3}, {0, 0, 0}), 0);
    for (double v : flat.data()) CHECK(v == doctest::Approx(1.0 / 3.0));

    const Tensor hot = softmax(Tensor::from({2}, {1000, 0}), 0);
    CHECK(hot.data()[0] == doctest::Approx(1.0));
    CHECK(hot.data()[1] == doctest::Approx(0.0));
    for (double v : hot.data()) CHECK(std::isfinite(v));

    Rng rng(3);
    for (int iter = 0; iter < 20; ++iter) {
        const Tensor x = oracles::random_tensor({4, 5}, rng, -30.0, 30.0);
        const Tensor y = softmax(x, 1);
        for (std::size_t r = 0; r < 4; ++r) {
            double total = 0.0;
            for (std::size_t c = 0; c < 5; ++c) {
                CHECK(y.at({r, c}) >= 0.0);
                total += y.at({r, c});
            }
            CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("softmax Jacobian rows sum to zero") {
    Rng rng(5);
    Tape tape;
    Tensor x = Tensor::param({4}, oracles::random_tensor({4}, rng).data(), tape);
    for (std::size_t pick = 0; pick < 4; ++pick) {
        tape.reset();
        zero_grads({x});
        std::vector<double> mask(4, 0.0);
        mask[pick] = 1.0;
        Tensor loss = sum(mul(softmax(x, 0), Tensor::from({4}, mask)));
        backward(loss);
        double row_sum = 0.0;
        for (double g : x.grad()) row_sum += g;
        CHECK(std::fabs(row_sum) < 1e-12);
    }
}

TEST_CASE("layer_norm zero-variance row, exact two-point case, and row stats") {
    const Tensor constant = layer_norm(Tensor::from({1, 4}, {5, 5, 5, 5}));
    for (double v : constant.data()) CHECK(v == doctest::Approx(0.0));

    const Tensor two = layer_norm(Tensor::from({1, 2}, {1, 3}), 1e-12);
    CHECK(two.at({0, 0}) == doctest::Approx(-1.0).epsilon(1e-6));
    CHECK(two.at({0, 1}) == doctest::Approx(1.0).epsilon(1e-6));

    Rng rng(9);
    const Tensor x = oracles::random_tensor({6, 8}, rng);
    const Tensor y = layer_norm(x);
    for (std::size_t r = 0; r < 6; ++r) {
        double mean = 0.0;
        for (std::size_t c = 0; c < 8; ++c) mean += y.at({r, c});
        CHECK(std::fabs(mean / 8.0) < 1e-9);
    }
}

TEST_CASE("conv2d identity and averaging kernels") {
    Rng rng(13);
    const Tensor x = oracles::random_tensor({1, 4, 4}, rng);
    const Tensor ident = Tensor::from({1, 1, 1, 1}, {1.0});
    const Tensor y = conv2d(x, ident, 0);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);

    const Tensor flat = Tensor::full({1, 5, 5}, 2.5);
    const Tensor avg = Tensor::full({1, 1, 3, 3}, 1.0 / 9.0);
    const Tensor smoothed = conv2d(flat, avg, 1);
    for (std::size_t yy = 1; yy < 4; ++yy) {
        for (std::size_t xx = 1; xx < 4; ++xx) {
            CHECK(smoothed.at({0, yy, xx}) == doctest::Approx(2.5).epsilon(1e-12));
        }
    }
}

TEST_CASE("conv2d rejects even kernels and wrong padding") {
    const Tensor x = Tensor::full({1, 4, 4}, 1.0);
    CHECK_THROWS_AS(conv2d(x, Tensor::full({1, 1, 2, 2}, 1.0), 0), ParameterError);
    CHECK_THROWS_AS(conv2d(x, Tensor::full({1, 1, 3, 3}, 1.0), 2), ParameterError);
    CHECK_THROWS_AS(conv2d(x, Tensor::full({1, 2, 3, 3}, 1.0), 1), DimensionError);
}

TEST_CASE("silu values, asymptotics and gradient") {
    CHECK(silu(Tensor::scalar(0.0)).value() == doctest::Approx(0.0));
    CHECK(silu(Tensor::scalar(40.0)).value() == doctest::Approx(40.0).epsilon(1e-12));
    CHECK(silu(Tensor::scalar(-40.0)).value() == doctest::Approx(0.0).epsilon(1e-12));

    Rng rng(17);
    Tape tape;
    Tensor x = Tensor::param({6}, oracles::random_tensor({6}, rng, -3.0, 3.0).data(), tape);
    auto loss_value = [&] {
        tape.reset();
        return sum(silu(x)).value();
    };
    tape.reset();
    Tensor loss = sum(silu(x));
    backward(loss);
    CHECK(oracles::max_grad_rel_error(loss_value, x, x.grad(), rng) < 1e-4);
}

TEST_CASE("elementwise and broadcast gradients match finite differences") {
    Rng rng(23);
    Tape tape;
    Tensor a = Tensor::param({3, 4}, oracles::random_tensor({3, 4}, rng).data(), tape);
    Tensor v = Tensor::param({4}, oracles::random_tensor({4}, rng).data(), tape);
    const Tensor weight = oracles::random_tensor({3, 4}, rng);

    auto build = [&] {
        Tensor y = add_row_broadcast(a, v);
        y = mul_row_broadcast(y, add_scalar(v, 2.0));
        y = mul(y, a);
        y = layer_norm(y);
        y = softmax(y, 1);
        return sum(mul(y, weight));
    };
    auto loss_value = [&] {
        tape.reset();
        return build().value();
    };
    tape.reset();
    Tensor loss = build();
    backward(loss);
    CHECK(oracles::max_grad_rel_error(loss_value, a, a.grad(), rng) < 1e-4);
    CHECK(oracles::max_grad_rel_error(loss_value, v, v.grad(), rng) < 1e-4);
}

TEST_CASE("backward on sum of squares gives 2x") {
    Tape tape;
    Tensor x = Tensor::param({3}, {1.0, -2.0, 0.5}, tape);
    Tensor loss = sum(mul(x, x));
    backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(2.0));
    CHECK(x.grad()[1] == doctest::Approx(-4.0));
    CHECK(x.grad()[2] == doctest::Approx(1.0));
}

TEST_CASE("leaf used twice accumulates both contributions") {
    Tape tape;
    Tensor x = Tensor::param({2}, {3.0, -1.0}, tape);
    // x*x + x -> d/dx = 2x + 1
    Tensor loss = sum(add(mul(x, x), x));
    backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(7.0));
    CHECK(x.grad()[1] == doctest::Approx(-1.0));
}

TEST_CASE("backward misuse: double call, non-scalar loss, detached graph") {
    Tape tape;
    Tensor x = Tensor::param({2}, {1.0, 2.0}, tape);
    Tensor loss = sum(mul(x, x));
    backward(loss);
    CHECK_THROWS_AS(backward(loss), TapeError);

    tape.reset();
    Tensor vec = mul(x, x);
    CHECK_THROWS_AS(backward(vec), TapeError);

    const Tensor constant = sum(Tensor::from({2}, {1.0, 2.0}));
    CHECK_THROWS_AS(backward(constant), TapeError);
}

TEST_CASE("composite attention block gradient matches finite differences") {
    Rng rng(31);
    Tape tape;
    auto attn = nn::Mhca::init(6, 6, 6, 6, 2, tape, rng);
    const Tensor q = oracles::random_tensor({2, 6}, rng);
    const Tensor kv = oracles::random_tensor({3, 6}, rng);
    const Tensor weight = oracles::random_tensor({2, 6}, rng);

    auto loss_value = [&] {
        tape.reset();
        return sum(mul(attn.forward(q, kv), weight)).value();
    };
    tape.reset();
    Tensor loss = sum(mul(attn.forward(q, kv), weight));
    backward(loss);
    NamedTensors params;
    attn.collect("attn", params);
    for (auto& [name, p] : params) {
        INFO(name);
        CHECK(oracles::max_grad_rel_error(loss_value, p, p.grad(), rng, 8) < 1e-4);
    }
}

TEST_CASE("clip_grad_norm scales only above the threshold") {
    Tape tape;
    Tensor a = Tensor::param({2}, {1.0, 1.0}, tape);
    a.ptr()->grad = {0.3, 0.4};  // norm 0.5
    CHECK(clip_grad_norm({a}, 0.99) == doctest::Approx(1.0));
    CHECK(a.grad()[0] == doctest::Approx(0.3));

    a.ptr()->grad = {9.9 * 0.6, 9.9 * 0.8};  // norm 9.9
    const double factor = clip_grad_norm({a}, 0.99);
    CHECK(factor == doctest::Approx(0.1));
    const double norm = std::hypot(a.grad()[0], a.grad()[1]);
    CHECK(norm == doctest::Approx(0.99).epsilon(1e-12));
}

TEST_CASE("clip_grad_norm never increases the global norm") {
    Rng rng(41);
    Tape tape;
    for (int iter = 0; iter < 10; ++iter) {
        Tensor a = Tensor::param({4}, oracles::random_tensor({4}, rng).data(), tape);
        Tensor b = Tensor::param({3}, oracles::random_tensor({3}, rng).data(), tape);
        a.ptr()->grad = oracles::random_tensor({4}, rng, -2.0, 2.0).data();
        b.ptr()->grad = oracles::random_tensor({3}, rng, -2.0, 2.0).data();
        double before = 0.0;
        for (double g : a.grad()) before += g * g;
        for (double g : b.grad()) before += g * g;
        before = std::sqrt(before);
        clip_grad_norm({a, b}, 0.99);
        double after = 0.0;
        for (double g : a.grad()) after += g * g;
        for (double g : b.grad()) after += g * g;
        after = std::sqrt(after);
        CHECK(after <= before + 1e-12);
        CHECK(after <= 0.99 + 1e-12);
        if (before <= 0.99) CHECK(after == doctest::Approx(before));
    }
}

TEST_CASE("ops keep finite values on finite inputs") {
    Rng rng(47);
    const Tensor x = oracles::random_tensor({4, 6}, rng, -50.0, 50.0);
    for (const Tensor* t : {&x}) {
        const Tensor sm = softmax(*t, 1);
        const Tensor ln = layer_norm(*t);
        const Tensor si = silu(*t);
        for (double v : sm.data()) CHECK(std::isfinite(v));
        for (double v : ln.data()) CHECK(std::isfinite(v));
        for (double v : si.data()) CHECK(std::isfinite(v));
    }
}
