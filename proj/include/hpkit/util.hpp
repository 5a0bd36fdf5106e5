// Copyright (c) 2026 The hpkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>

namespace hpkit {

// Deterministic RNG. std::mt19937_64 has a fully specified output stream and
// the distributions below are hand-rolled (std:: distributions are not
// portable across standard libraries), so sequences are bit-identical
// everywhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    // Uniform in [0, 1) with 53 random mantissa bits.
    double uniform();

    // Uniform in [0, n). Unbiased via rejection.
    std::uint64_t uniform_int(std::uint64_t n);

    // Standard normal via Box-Muller. Caches the spare draw.
    double normal();

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Worker cap for data-parallel loops. Reads HPK_THREADS once; falls back to
// hardware_concurrency.
int thread_cap();

// Runs fn(i) for i in [0, n) across at most thread_cap() threads. Each index
// is handled exactly once, so writes to per-index slots are safe.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

// FNV-1a over a byte string; used for config hashes in run reports.
std::uint64_t fnv1a64(const std::string& bytes);

std::string hex64(std::uint64_t v);

}  // namespace hpkit
