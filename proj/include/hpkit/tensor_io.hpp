// Copyright (c) 2026 The hpkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// HPT1 binary tensor files and the HPTM named-tensor container.
//
// HPT1: magic "HPT1" | u32 rank | rank x u64 dims | f64 payload, row-major.
// All integers and floats little-endian.
//
// HPTM: magic "HPTM" | u64 manifest length | manifest JSON | concatenated
// HPT1 blobs. The manifest lists {name, offset, bytes} per tensor with
// offsets relative to the first blob byte.

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hpkit/tensor.hpp"

namespace hpkit {

std::vector<std::uint8_t> tensor_to_bytes(const Tensor& t);
Tensor tensor_from_bytes(const std::uint8_t* data, std::size_t size);

void write_tensor(const std::string& path, const Tensor& t);
Tensor read_tensor(const std::string& path);

// Ordered named tensors; order is preserved on round trip.
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

void write_container(const std::string& path, const NamedTensors& tensors);
NamedTensors read_container(const std::string& path);

// True when the file starts with the container magic.
bool is_container_file(const std::string& path);

// Collects every format violation instead of stopping at the first.
std::vector<std::string> validate_tensor_file(const std::string& path);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes);

}  // namespace hpkit
