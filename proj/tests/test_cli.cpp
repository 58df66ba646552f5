// Copyright (c) 2026 the steerlab authors
// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "steerlab/common.hpp"
#include "steerlab/langforge.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;
using namespace steerlab;
namespace lf = steerlab::langforge;

namespace {

struct CmdResult {
    int code = -1;
    std::string out;
    std::string err;
};

const std::string kCli = STEERLAB_CLI_PATH;

fs::path test_root() {
    static const fs::path root = [] {
        auto p = fs::temp_directory_path() / "steerlab_cli_tests";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return root;
}

CmdResult run_cli(const std::string& args) {
    static int counter = 0;
    const fs::path out_file = test_root() / ("cmd_out_" + std::to_string(counter));
    const fs::path err_file = test_root() / ("cmd_err_" + std::to_string(counter));
    ++counter;
    const std::string cmd = kCli + " " + args + " > " + out_file.string() + " 2> " +
                            err_file.string();
    const int status = std::system(cmd.c_str());
    CmdResult result;
    result.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    result.out = read_file_bytes(out_file.string());
    result.err = read_file_bytes(err_file.string());
    return result;
}

/// Tiny two-language family keeping the smoke pipeline fast.
std::string write_smoke_family(const fs::path& dir) {
    std::vector<lf::LanguageSpec> specs = {
        {"en", {64, 80}, 0, 0, 0.7},
        {"xx", {144, 80}, 11, 0, 0.3},
    };
    auto fam = lf::make_language_family(21, specs, {0, 64});
    const auto path = dir / "family_spec.json";
    write_file_bytes(path.string(), fam.to_json().dump(2) + "\n");
    return path.string();
}

}  // namespace

TEST_CASE("unknown subcommand exits 2 with usage on stderr", "[cli]") {
    auto r = run_cli("frobnicate");
    REQUIRE(r.code == 2);
    REQUIRE(r.err.find("Usage") != std::string::npos);
}

TEST_CASE("help exits 0 and documents flags", "[cli]") {
    auto top = run_cli("--help");
    REQUIRE(top.code == 0);
    REQUIRE(top.out.find("gen-corpus") != std::string::npos);

    for (const std::string sub :
         {"gen-corpus", "train-model", "learn-vector", "steer-eval", "logit-lens",
          "similarity", "sweep-layers", "transfer", "english-impact", "sft-compare",
          "project-2d"}) {
        auto r = run_cli(sub + " --help");
        REQUIRE(r.code == 0);
        REQUIRE(r.out.find("--") != std::string::npos);
    }
}

TEST_CASE("missing input files exit 3", "[cli]") {
    const auto dir = test_root() / "missing";
    fs::create_directories(dir);
    auto r = run_cli("train-model --corpus " + (dir / "nope").string() + " --out " +
                     (dir / "model.ckpt").string());
    REQUIRE(r.code == 3);
}

TEST_CASE("without --out or the output env var the exit code is 2", "[cli]") {
    auto r = run_cli("gen-corpus --seed 3");
    REQUIRE(r.code == 2);
}

TEST_CASE("smoke pipeline: gen-corpus, train, learn bipo, steer-eval", "[cli]") {
    const auto dir = test_root() / "smoke";
    fs::create_directories(dir);
    const auto family_spec = write_smoke_family(dir);
    const auto corpus_dir = (dir / "corpus").string();
    const auto model_path = (dir / "model.ckpt").string();
    const auto vector_path = (dir / "vector.json").string();
    const auto report_path = (dir / "eval.json").string();

    auto gen = run_cli("gen-corpus --out " + corpus_dir + " --seed 5 --family " +
                       family_spec +
                       " --pretrain-size 200 --task-train 24 --task-eval 12");
    INFO(gen.err);
    REQUIRE(gen.code == 0);
    REQUIRE(fs::exists(corpus_dir + "/manifest.json"));
    REQUIRE(fs::exists(corpus_dir + "/task_xx_eval.jsonl"));

    auto train = run_cli("train-model --corpus " + corpus_dir + " --out " + model_path +
                         " --d-model 16 --n-layers 2 --n-heads 2 --ctx 32 --seed 7"
                         " --epochs 2 --lr 3e-3 --warmup-steps 20");
    INFO(train.err);
    REQUIRE(train.code == 0);
    REQUIRE(fs::exists(model_path));

    auto learn = run_cli("learn-vector --model " + model_path + " --family " +
                         corpus_dir + "/family.json --corpus " + corpus_dir +
                         "/task_xx_train.jsonl --method bipo --layer 1 --out " +
                         vector_path + " --epochs 1 --lr 0.01 --warmup-steps 5");
    INFO(learn.err);
    REQUIRE(learn.code == 0);
    REQUIRE(fs::exists(vector_path));
    auto vec_json = Json::parse(read_file_bytes(vector_path));
    REQUIRE(vec_json.at("method") == "bipo");
    REQUIRE(vec_json.at("layer") == 1);
    REQUIRE(vec_json.at("vector").size() == 16);

    auto eval = run_cli("steer-eval --model " + model_path + " --family " + corpus_dir +
                        "/family.json --corpus " + corpus_dir +
                        "/task_xx_eval.jsonl --condition steered --vector " +
                        vector_path + " --coeff 1 --out " + report_path +
                        " --transcript " + (dir / "transcript.jsonl").string());
    INFO(eval.err);
    REQUIRE(eval.code == 0);
    auto report = Json::parse(read_file_bytes(report_path));
    REQUIRE(report.at("command") == "steer-eval");
    REQUIRE(report.at("payload").at("n") == 12);
    REQUIRE(report.at("payload").at("accuracy").is_number());
    REQUIRE(fs::exists(dir / "transcript.jsonl"));
}

TEST_CASE("steering a different model than the vector was trained on exits 5",
          "[cli]") {
    const auto dir = test_root() / "mismatch";
    fs::create_directories(dir);
    const auto family_spec = write_smoke_family(dir);
    const auto corpus_dir = (dir / "corpus").string();
    REQUIRE(run_cli("gen-corpus --out " + corpus_dir + " --seed 6 --family " +
                    family_spec +
                    " --pretrain-size 150 --task-train 12 --task-eval 8")
                .code == 0);

    const auto model_a = (dir / "a.ckpt").string();
    const auto model_b = (dir / "b.ckpt").string();
    for (const auto& [path, seed] : {std::pair{model_a, 1}, std::pair{model_b, 2}}) {
        REQUIRE(run_cli("train-model --corpus " + corpus_dir + " --out " + path +
                        " --d-model 16 --n-layers 1 --n-heads 2 --ctx 32 --seed " +
                        std::to_string(seed) + " --epochs 1 --lr 1e-3")
                    .code == 0);
    }
    const auto vector_path = (dir / "vec.json").string();
    REQUIRE(run_cli("learn-vector --model " + model_a + " --family " + corpus_dir +
                    "/family.json --corpus " + corpus_dir +
                    "/task_xx_train.jsonl --method meandiff --layer 1 --out " +
                    vector_path)
                .code == 0);

    auto r = run_cli("steer-eval --model " + model_b + " --family " + corpus_dir +
                     "/family.json --corpus " + corpus_dir +
                     "/task_xx_eval.jsonl --condition steered --vector " + vector_path +
                     " --out " + (dir / "r.json").string());
    REQUIRE(r.code == 5);
}

TEST_CASE("gen-corpus regenerates byte-identical files from the same seed", "[cli]") {
    const auto dir = test_root() / "regen";
    fs::create_directories(dir);
    const auto family_spec = write_smoke_family(dir);
    const auto c1 = (dir / "c1").string();
    const auto c2 = (dir / "c2").string();
    for (const auto& c : {c1, c2}) {
        REQUIRE(run_cli("gen-corpus --out " + c + " --seed 17 --family " + family_spec +
                        " --pretrain-size 120 --task-train 10 --task-eval 10")
                    .code == 0);
    }
    for (const auto& name : {"family.json", "pretrain.jsonl", "task_xx_train.jsonl",
                             "task_xx_eval.jsonl", "manifest.json"}) {
        REQUIRE(read_file_bytes(c1 + "/" + name) == read_file_bytes(c2 + "/" + name));
    }
}

TEST_CASE("output root env var supplies default paths", "[cli]") {
    const auto dir = test_root() / "envroot";
    fs::create_directories(dir);
    const auto family_spec = write_smoke_family(dir);
    const std::string cmd = "STEERLAB_OUT=" + (dir / "root").string() + " " + kCli +
                            " gen-corpus --seed 9 --family " + family_spec +
                            " --pretrain-size 120 --task-train 8 --task-eval 8 > " +
                            (dir / "out.txt").string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(WIFEXITED(status));
    REQUIRE(WEXITSTATUS(status) == 0);
    REQUIRE(fs::exists(dir / "root" / "corpus" / "manifest.json"));
}
