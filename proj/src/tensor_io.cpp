// Copyright (c) 2026 The hpkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "hpkit/tensor_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace hpkit {

namespace {

constexpr char kTensorMagic[4] = {'H', 'P', 'T', '1'};
constexpr char kContainerMagic[4] = {'H', 'P', 'T', 'M'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
    put_u64(out, std::bit_cast<std::uint64_t>(v));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

double get_f64(const std::uint8_t* p) {
    return std::bit_cast<double>(get_u64(p));
}

}  // namespace

std::vector<std::uint8_t> tensor_to_bytes(const Tensor& t) {
    std::vector<std::uint8_t> out;
    out.reserve(4 + 4 + 8 * t.rank() + 8 * t.numel());
    out.insert(out.end(), kTensorMagic, kTensorMagic + 4);
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put_u64(out, d);
    for (double v : t.data()) put_f64(out, v);
    return out;
}

Tensor tensor_from_bytes(const std::uint8_t* data, std::size_t size) {
    if (size < 8 || std::memcmp(data, kTensorMagic, 4) != 0) {
        throw IoError("tensor: missing HPT1 magic");
    }
    const std::uint32_t rank = get_u32(data + 4);
    const std::size_t header = 8 + 8 * static_cast<std::size_t>(rank);
    if (size < header) throw IoError("tensor: truncated header");
    std::vector<std::size_t> shape(rank);
    std::size_t numel = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
        shape[i] = static_cast<std::size_t>(get_u64(data + 8 + 8 * i));
        numel *= shape[i];
    }
    if (size != header + 8 * numel) {
        throw IoError("tensor: payload holds " + std::to_string((size - header) / 8) +
                      " values, shape " + shape_str(shape) + " needs " + std::to_string(numel));
    }
    std::vector<double> values(numel);
    for (std::size_t i = 0; i < numel; ++i) values[i] = get_f64(data + header + 8 * i);
    if (rank == 0) return Tensor::from({1}, std::move(values));
    return Tensor::from(std::move(shape), std::move(values));
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    f.seekg(0, std::ios::end);
    const std::streamoff len = f.tellg();
    f.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(len));
    if (len > 0) f.read(reinterpret_cast<char*>(bytes.data()), len);
    if (!f) throw IoError("failed reading " + path);
    return bytes;
}

void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("failed writing " + path);
}

void write_tensor(const std::string& path, const Tensor& t) {
    write_file_bytes(path, tensor_to_bytes(t));
}

Tensor read_tensor(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    try {
        return tensor_from_bytes(bytes.data(), bytes.size());
    } catch (const IoError& e) {
        throw IoError(path + ": " + e.what());
    }
}

void write_container(const std::string& path, const NamedTensors& tensors) {
    nlohmann::json manifest;
    manifest["tensors"] = nlohmann::json::array();
    std::vector<std::uint8_t> blobs;
    for (const auto& [name, t] : tensors) {
        const auto bytes = tensor_to_bytes(t);
        manifest["tensors"].push_back(
            {{"name", name}, {"offset", blobs.size()}, {"bytes", bytes.size()}});
        blobs.insert(blobs.end(), bytes.begin(), bytes.end());
    }
    const std::string mstr = manifest.dump();
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kContainerMagic, kContainerMagic + 4);
    put_u64(out, mstr.size());
    out.insert(out.end(), mstr.begin(), mstr.end());
    out.insert(out.end(), blobs.begin(), blobs.end());
    write_file_bytes(path, out);
}

NamedTensors read_container(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    if (bytes.size() < 12 || std::memcmp(bytes.data(), kContainerMagic, 4) != 0) {
        throw IoError(path + ": missing HPTM magic");
    }
    const std::uint64_t mlen = get_u64(bytes.data() + 4);
    if (bytes.size() < 12 + mlen) throw IoError(path + ": truncated manifest");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + static_cast<std::ptrdiff_t>(mlen));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path + ": bad manifest: " + e.what());
    }
    const std::size_t blob_base = 12 + static_cast<std::size_t>(mlen);
    NamedTensors out;
    for (const auto& entry : manifest.at("tensors")) {
        const std::string name = entry.at("name").get<std::string>();
        const std::size_t offset = entry.at("offset").get<std::size_t>();
        const std::size_t count = entry.at("bytes").get<std::size_t>();
        if (blob_base + offset + count > bytes.size()) {
            throw IoError(path + ": tensor '" + name + "' extends past end of file");
        }
        out.emplace_back(name, tensor_from_bytes(bytes.data() + blob_base + offset, count));
    }
    return out;
}

bool is_container_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    char magic[4] = {};
    f.read(magic, 4);
    return f && std::memcmp(magic, kContainerMagic, 4) == 0;
}

std::vector<std::string> validate_tensor_file(const std::string& path) {
    std::vector<std::string> diags;
    std::vector<std::uint8_t> bytes;
    try {
        bytes = read_file_bytes(path);
    } catch (const IoError& e) {
        diags.emplace_back(e.what());
        return diags;
    }
    if (bytes.size() >= 4 && std::memcmp(bytes.data(), kContainerMagic, 4) == 0) {
        try {
            for (const auto& [name, t] : read_container(path)) {
                for (double v : t.data()) {
                    if (!std::isfinite(v)) {
                        diags.push_back("tensor '" + name + "' contains non-finite values");
                        break;
                    }
                }
            }
        } catch (const Error& e) {
            diags.emplace_back(e.what());
        }
        return diags;
    }
    if (bytes.size() < 8) {
        diags.push_back("file too small for an HPT1 header (" + std::to_string(bytes.size()) +
                        " bytes)");
        return diags;
    }
    if (std::memcmp(bytes.data(), kTensorMagic, 4) != 0) {
        diags.emplace_back("missing HPT1 magic bytes");
        return diags;
    }
    const std::uint32_t rank = get_u32(bytes.data() + 4);
    if (rank > 8) diags.push_back("implausible rank " + std::to_string(rank));
    const std::size_t header = 8 + 8 * static_cast<std::size_t>(rank);
    if (bytes.size() < header) {
        diags.push_back("truncated header: need " + std::to_string(header) + " bytes, have " +
                        std::to_string(bytes.size()));
        return diags;
    }
    std::size_t numel = 1;
    std::vector<std::size_t> shape(rank);
    for (std::uint32_t i = 0; i < rank; ++i) {
        shape[i] = static_cast<std::size_t>(get_u64(bytes.data() + 8 + 8 * i));
        if (shape[i] == 0) diags.push_back("dimension " + std::to_string(i) + " is zero");
        numel *= shape[i];
    }
    const std::size_t expect = header + 8 * numel;
    if (bytes.size() != expect) {
        diags.push_back("size mismatch: shape " + shape_str(shape) + " needs " +
                        std::to_string(expect) + " bytes, file has " + std::to_string(bytes.size()));
        return diags;
    }
    for (std::size_t i = 0; i < numel; ++i) {
        if (!std::isfinite(get_f64(bytes.data() + header + 8 * i))) {
            diags.push_back("payload contains non-finite values");
            break;
        }
    }
    return diags;
}

}  // namespace hpkit
