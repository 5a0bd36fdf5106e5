// Copyright (c) 2026 The hpkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end checks of the CLI binary against the bundled fixture set.

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "hpkit/config.hpp"
#include "hpkit/motion_bank.hpp"
#include "hpkit/pipeline.hpp"
#include "hpkit/pose.hpp"
#include "hpkit/tensor_io.hpp"

using namespace hpkit;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kCli = HPKIT_CLI_PATH;
const fs::path kFixtures = HPKIT_FIXTURE_DIR;

fs::path work_dir() {
    const fs::path dir = fs::temp_directory_path() / "hpkit_unit_cli";
    fs::create_directories(dir);
    return dir;
}

int run_cli(const std::string& args, const fs::path& stdout_to = {}) {
    std::string cmd = kCli + " " + args;
    if (!stdout_to.empty()) {
        cmd += " > " + stdout_to.string() + " 2>/dev/null";
    } else {
        cmd += " > /dev/null 2>&1";
    }
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

json read_json(const fs::path& path) {
    std::ifstream f(path);
    REQUIRE(f.good());
    json j;
    f >> j;
    return j;
}

}  // namespace

TEST_CASE("validate accepts the bundled fixture files") {
    CHECK(run_cli("validate " + (kFixtures / "landmarks_drive.json").string()) == 0);
    CHECK(run_cli("validate " + (kFixtures / "skeleton_source.json").string()) == 0);
    CHECK(run_cli("validate " + (kFixtures / "fm_a.hpt").string()) == 0);
    CHECK(run_cli("validate " + (kFixtures / "run_config.json").string()) == 0);
}

TEST_CASE("validate rejects corrupted tensors with exit code 2") {
    const fs::path dir = work_dir();
    const fs::path bad = dir / "bad.hpt";
    {
        auto bytes = read_file_bytes((kFixtures / "fm_a.hpt").string());
        bytes.resize(bytes.size() - 9);
        write_file_bytes(bad.string(), bytes);
    }
    CHECK(run_cli("validate " + bad.string()) == 2);

    const fs::path bad_json = dir / "bad_landmarks.json";
    std::ofstream(bad_json) << "{\"center_index\": 0, \"frames\": [[[0,0],[1,1]], [[0,0]]]}";
    CHECK(run_cli("validate --kind landmarks " + bad_json.string()) == 2);
}

TEST_CASE("intensity subcommand reports values and levels") {
    const fs::path dir = work_dir();
    const fs::path out = dir / "intensity.json";
    const int rc = run_cli("--out " + out.string() + " intensity --landmarks " +
                           (kFixtures / "landmarks_drive.json").string() +
                           " --range 0,1 --levels 64");
    CHECK(rc == 0);
    const json j = read_json(out);
    CHECK(j.contains("I_e"));
    CHECK(j.contains("I_h"));
    CHECK(j["level_e"].get<int>() >= 0);
    CHECK(j["level_e"].get<int>() < 64);
    CHECK(j["level_h"].get<int>() >= 0);
    CHECK(j["I_e"].get<double>() > 0.0);
}

TEST_CASE("crop-region subcommand emits clamped bounds") {
    const fs::path dir = work_dir();
    const fs::path out = dir / "crop.json";
    const int rc = run_cli("--out " + out.string() + " crop-region --landmarks " +
                           (kFixtures / "landmarks_drive.json").string() +
                           " --size 512x512 --margin 0.1");
    CHECK(rc == 0);
    const json j = read_json(out);
    CHECK(j["left"].get<double>() < j["right"].get<double>());
    CHECK(j["top"].get<double>() < j["bottom"].get<double>());
    CHECK(j["bottom"].get<double>() <= 512.0);
}

TEST_CASE("missing required arguments exit with code 2") {
    CHECK(run_cli("intensity") == 2);
    CHECK(run_cli("definitely-not-a-subcommand") == 2);
}

TEST_CASE("augment with zero dropout keeps every edge") {
    const fs::path dir = work_dir();
    const fs::path out = dir / "aug.json";
    const int rc = run_cli("augment --skeleton " + (kFixtures / "skeleton_source.json").string() +
                           " --edge-dropout 0 --seed 5 --out " + out.string());
    CHECK(rc == 0);
    const auto original = pose::load_skeleton((kFixtures / "skeleton_source.json").string());
    const auto dropped = pose::load_skeleton(out.string());
    CHECK(dropped.edges == original.edges);
}

TEST_CASE("augment jitters an image tensor into range") {
    const fs::path dir = work_dir();
    const fs::path out = dir / "jittered.hpt";
    const int rc = run_cli("augment --image " + (kFixtures / "image.hpt").string() +
                           " --seed 11 --out " + out.string());
    CHECK(rc == 0);
    const Tensor t = read_tensor(out.string());
    CHECK(t.shape() == std::vector<std::size_t>{6, 6, 3});
    for (double v : t.data()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("retarget aligns the driving nose onto the source") {
    const fs::path dir = work_dir() / "retargeted";
    fs::remove_all(dir);
    const int rc = run_cli("retarget --source " + (kFixtures / "skeleton_source.json").string() +
                           " --driving " + (kFixtures / "driving_skeletons").string() +
                           " --drop-eyes --out " + dir.string());
    CHECK(rc == 0);
    const auto source = pose::load_skeleton((kFixtures / "skeleton_source.json").string());
    const auto first = pose::load_skeleton((dir / "d000.json").string());
    const std::size_t nose = source.nose_index();
    CHECK(first.points[nose].x == doctest::Approx(source.points[nose].x).epsilon(1e-9));
    CHECK(first.points[nose].y == doctest::Approx(source.points[nose].y).epsilon(1e-9));
    // eyes dropped
    CHECK(!first.valid[1]);
    CHECK(!first.valid[2]);
    const json transform = read_json(dir / "transform.json");
    CHECK(transform["scale"].get<double>() == doctest::Approx(1.0 / 1.6).epsilon(1e-9));
}

TEST_CASE("bank-forward CLI consumes a parameter container") {
    const fs::path dir = work_dir();
    const auto cfg = config::load_config((kFixtures / "run_config.json").string());

    Tape tape;
    Rng rng(3);
    auto bank = motion::MemoryBank::init(cfg.bank, tape, rng);
    NamedTensors named;
    bank.collect("bank", named);
    const fs::path params = dir / "bank_params.hpt";
    write_container(params.string(), named);

    std::vector<double> es_values(cfg.bank.width);
    for (std::size_t i = 0; i < es_values.size(); ++i) {
        es_values[i] = 0.05 * static_cast<double>(i % 7) - 0.1;
    }
    const Tensor intensity = Tensor::from({cfg.bank.width}, es_values);
    const fs::path es = dir / "es.hpt";
    write_tensor(es.string(), intensity);

    const fs::path out = dir / "refined.hpt";
    const int rc = run_cli("--config " + (kFixtures / "run_config.json").string() +
                           " bank-forward --features " + (kFixtures / "fm_a.hpt").string() +
                           " --intensity " + es.string() + " --params " + params.string() +
                           " --out " + out.string());
    CHECK(rc == 0);
    const Tensor refined = read_tensor(out.string());
    CHECK(refined.dim(0) == cfg.bank.memory_count);
    CHECK(refined.dim(1) == cfg.bank.width);

    // CLI output matches the in-process forward with the same parameters
    const Tensor expected = bank.forward(read_tensor((kFixtures / "fm_a.hpt").string()), intensity);
    for (std::size_t i = 0; i < expected.numel(); ++i) {
        CHECK(refined.data()[i] == expected.data()[i]);
    }
}
