// Copyright (c) 2026 the steerlab authors
// SPDX-License-Identifier: Apache-2.0
//
// steerlab: activation-steering laboratory on a synthetic language family.
// One subcommand per pipeline stage; every artifact embeds the producing
// config and input digests, and identical config + inputs reproduce
// byte-identical outputs.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "steerlab/checkpoint.hpp"
#include "steerlab/harness.hpp"
#include "steerlab/langforge.hpp"
#include "steerlab/lens.hpp"
#include "steerlab/model.hpp"
#include "steerlab/steering.hpp"
#include "steerlab/train.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;
using namespace steerlab;
namespace lf = steerlab::langforge;
namespace lm = steerlab::tinylm;
namespace st = steerlab::steering;
namespace ln = steerlab::lens;
namespace hn = steerlab::harness;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr const char* kOutEnv = "STEERLAB_OUT";

enum ExitCode : int {
    kOk = 0,
    kUsage = 2,
    kIo = 3,
    kNumeric = 4,
    kInvariant = 5,
};

// ---------------------------------------------------------------------------
// Artifact plumbing.
// ---------------------------------------------------------------------------

std::string resolve_out(const std::string& given, const std::string& fallback_name) {
    if (!given.empty()) {
        return given;
    }
    if (const char* root = std::getenv(kOutEnv); root && *root) {
        return (fs::path(root) / fallback_name).string();
    }
    throw UsageError("no output path: pass --out or set " + std::string(kOutEnv));
}

void ensure_parent_dir(const std::string& path) {
    const fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) {
        fs::create_directories(parent);
    }
}

void require_input(const std::string& path) {
    if (!fs::exists(path)) {
        throw IoError("input path does not exist: " + path);
    }
}

Json artifact(const std::string& command, Json config, Json inputs, Json payload) {
    Json j;
    j["tool"] = "steerlab";
    j["version"] = kVersion;
    j["command"] = command;
    j["config"] = std::move(config);
    j["inputs"] = std::move(inputs);
    j["payload"] = std::move(payload);
    return j;
}

void write_artifact(const std::string& path, const Json& j) {
    ensure_parent_dir(path);
    write_file_bytes(path, j.dump(2) + "\n");
}

void write_text(const std::string& path, const std::string& text) {
    ensure_parent_dir(path);
    write_file_bytes(path, text);
}

Json input_digests(const std::vector<std::pair<std::string, std::string>>& paths) {
    Json j = Json::object();
    for (const auto& [name, path] : paths) {
        j[name] = Json{{"path", path}, {"digest", digest_of_file(path)}};
    }
    return j;
}

lf::LanguageFamily load_family(const std::string& path) {
    require_input(path);
    return lf::LanguageFamily::from_json(Json::parse(read_file_bytes(path)));
}

lm::TransformerModel load_model(const std::string& path) {
    require_input(path);
    return lm::load_checkpoint(path);
}

lf::ParallelCorpus load_corpus(const std::string& path) {
    require_input(path);
    return lf::read_corpus(path);
}

st::SteeringVector load_vector_checked(const std::string& path,
                                       const lm::TransformerModel& model) {
    require_input(path);
    auto sv = st::load_vector(path);
    if (!sv.model_digest.empty() && sv.model_digest != model.digest()) {
        throw InvariantError("vector " + path + " was trained against model digest " +
                             sv.model_digest + ", got " + model.digest());
    }
    if (sv.vector.size() != static_cast<std::size_t>(model.config().d_model)) {
        throw InvariantError("vector dimension does not match the model");
    }
    return sv;
}

std::vector<lm::TokenSeq> src_prompts(const lf::ParallelCorpus& corpus) {
    std::vector<lm::TokenSeq> out;
    out.reserve(corpus.size());
    for (const auto& rec : corpus) {
        out.push_back(rec.src);
    }
    return out;
}

// ---------------------------------------------------------------------------
// gen-corpus
// ---------------------------------------------------------------------------

struct GenCorpusArgs {
    std::string out;
    std::uint64_t seed = 42;
    std::string family_file;  // optional custom family spec
    std::size_t pretrain_size = 4000;
    std::size_t task_train = 256;
    std::size_t task_eval = 200;
};

int cmd_gen_corpus(const GenCorpusArgs& a) {
    const std::string out_dir = resolve_out(a.out, "corpus");
    fs::create_directories(out_dir);
    lf::LanguageFamily family = a.family_file.empty()
                                    ? lf::default_family(a.seed)
                                    : load_family(a.family_file);

    const auto file = [&](const std::string& name) {
        return (fs::path(out_dir) / name).string();
    };
    write_text(file("family.json"), family.to_json().dump(2) + "\n");

    Json files = Json::object();
    Json counts = Json::object();

    auto mixture = lf::build_pretrain_mixture(family, a.pretrain_size, a.seed);
    lf::write_corpus(file("pretrain.jsonl"), mixture);
    files["pretrain.jsonl"] = Json{{"digest", lf::corpus_digest(mixture)},
                                   {"records", mixture.size()}};
    for (const auto& rec : mixture) {
        auto& lang_counts = counts[rec.lang];
        if (!lang_counts.is_object()) {
            lang_counts = Json::object();
        }
        lang_counts[rec.task_tag] = lang_counts.value(rec.task_tag, 0) + 1;
    }

    for (const auto& spec : family.specs()) {
        const auto train_seed =
            hash_combine(a.seed, fnv1a64(spec.name.data(), spec.name.size(), 1));
        const auto eval_seed =
            hash_combine(a.seed, fnv1a64(spec.name.data(), spec.name.size(), 2));
        auto train = lf::build_task_corpus(family, spec.name, a.task_train, train_seed);
        auto eval = lf::build_task_corpus(family, spec.name, a.task_eval, eval_seed);
        const std::string train_name = "task_" + spec.name + "_train.jsonl";
        const std::string eval_name = "task_" + spec.name + "_eval.jsonl";
        lf::write_corpus(file(train_name), train);
        lf::write_corpus(file(eval_name), eval);
        files[train_name] =
            Json{{"digest", lf::corpus_digest(train)}, {"records", train.size()}};
        files[eval_name] =
            Json{{"digest", lf::corpus_digest(eval)}, {"records", eval.size()}};
    }

    Json config{{"seed", a.seed},
                {"pretrain_size", a.pretrain_size},
                {"task_train", a.task_train},
                {"task_eval", a.task_eval}};
    Json payload{{"family", family.to_json()},
                 {"realized_counts", counts},
                 {"files", files}};
    write_artifact(file("manifest.json"),
                   artifact("gen-corpus", config, Json::object(), payload));
    std::cout << "corpus written to " << out_dir << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// train-model
// ---------------------------------------------------------------------------

struct TrainModelArgs {
    std::string corpus_dir;
    std::string out;
    std::string log_file;
    std::string init = "aligned";  // aligned | plain
    bool train_embeddings = false;
    int d_model = 64;
    int n_layers = 8;
    int n_heads = 4;
    int ctx_len = 64;
    int vocab = 0;  // 0 = smallest vocab covering the family
    std::uint64_t seed = 42;
    int epochs = 12;
    double lr = 3e-3;
    double weight_decay = 0.01;
    std::size_t warmup_steps = 200;
};

int cmd_train_model(const TrainModelArgs& a) {
    const std::string out_path = resolve_out(a.out, "model.ckpt");
    const fs::path dir(a.corpus_dir);
    const std::string family_path = (dir / "family.json").string();
    const std::string pretrain_path = (dir / "pretrain.jsonl").string();
    auto family = load_family(family_path);
    auto mixture = load_corpus(pretrain_path);

    lm::ModelConfig cfg;
    cfg.d_model = a.d_model;
    cfg.n_layers = a.n_layers;
    cfg.n_heads = a.n_heads;
    cfg.ctx_len = a.ctx_len;
    cfg.vocab_size = a.vocab > 0 ? a.vocab : family.min_vocab();
    cfg.seed = a.seed;
    if (cfg.vocab_size < family.min_vocab()) {
        throw InvariantError("vocab_size smaller than the family alphabet");
    }
    lm::TransformerModel model(cfg);
    if (a.init == "aligned") {
        model.set_token_embedding(lf::aligned_embedding_geometry(
            family, cfg.vocab_size, cfg.d_model, cfg.seed));
    } else if (a.init != "plain") {
        throw UsageError("unknown --init mode: " + a.init);
    }

    std::vector<lm::TrainSequence> sequences;
    sequences.reserve(mixture.size());
    for (const auto& rec : mixture) {
        if (rec.task_tag == "translate") {
            sequences.push_back({lf::render_translation_sequence(family, rec), 1});
        } else {
            sequences.push_back({lf::render_task_sequence(family, rec), 1});
        }
    }

    numerics::OptimizerConfig opt;
    opt.kind = numerics::OptKind::adamw;
    opt.learning_rate = a.lr;
    opt.weight_decay = a.weight_decay;
    opt.schedule = numerics::LrSchedule::cosine_warmup;
    opt.warmup_steps = a.warmup_steps;
    auto log = lm::train_lm(model, sequences, opt, a.epochs, a.seed,
                            !a.train_embeddings);

    ensure_parent_dir(out_path);
    lm::save_checkpoint(model, out_path);

    Json config{{"d_model", cfg.d_model},       {"n_layers", cfg.n_layers},
                {"n_heads", cfg.n_heads},       {"ctx_len", cfg.ctx_len},
                {"vocab_size", cfg.vocab_size}, {"seed", cfg.seed},
                {"epochs", a.epochs},           {"lr", a.lr},
                {"weight_decay", a.weight_decay}, {"warmup_steps", a.warmup_steps},
                {"init", a.init},               {"train_embeddings", a.train_embeddings}};
    Json inputs = input_digests({{"family", family_path}, {"pretrain", pretrain_path}});
    Json payload{{"model_digest", model.digest()},
                 {"steps", log.steps},
                 {"epoch_mean_loss", log.epoch_mean_loss}};
    const std::string log_path =
        a.log_file.empty() ? out_path + ".train_log.json" : a.log_file;
    write_artifact(log_path, artifact("train-model", config, inputs, payload));
    std::cout << "model " << model.digest() << " written to " << out_path << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// learn-vector
// ---------------------------------------------------------------------------

struct LearnVectorArgs {
    std::string model_path;
    std::string family_path;
    std::string corpus_path;
    std::string out;
    std::string method = "bipo";
    int layer = 0;
    st::BipoConfig bipo;
    st::MseConfig mse;
};

int cmd_learn_vector(const LearnVectorArgs& a) {
    const std::string out_path = resolve_out(a.out, "vector.json");
    auto model = load_model(a.model_path);
    auto family = load_family(a.family_path);
    auto corpus = load_corpus(a.corpus_path);
    const auto method = st::method_from_string(a.method);

    std::vector<double> loss_log;
    auto sv = st::learn_vector(model, family, corpus, a.layer, method, a.bipo, a.mse,
                               &loss_log);
    ensure_parent_dir(out_path);
    st::save_vector(sv, out_path);
    if (!loss_log.empty()) {
        Json config{{"method", a.method}, {"layer", a.layer}};
        Json inputs = input_digests({{"model", a.model_path},
                                     {"family", a.family_path},
                                     {"corpus", a.corpus_path}});
        write_artifact(out_path + ".loss.json",
                       artifact("learn-vector", config, inputs,
                                Json{{"epoch_mean_loss", loss_log}}));
    }
    std::cout << "vector " << sv.digest() << " written to " << out_path << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// steer-eval
// ---------------------------------------------------------------------------

struct SteerEvalArgs {
    std::string model_path;
    std::string family_path;
    std::string corpus_path;
    std::string out;
    std::string transcript_path;
    std::string condition = "basic";
    std::string vector_path;
    double coeff = std::numeric_limits<double>::quiet_NaN();
    std::uint64_t seed = 0;
};

int cmd_steer_eval(const SteerEvalArgs& a) {
    const std::string out_path = resolve_out(a.out, "eval_report.json");
    auto model = load_model(a.model_path);
    auto family = load_family(a.family_path);
    auto corpus = load_corpus(a.corpus_path);
    const std::string lang = st::corpus_language(corpus);

    hn::EvalCondition cond;
    cond.kind = hn::condition_from_string(a.condition);
    std::vector<std::pair<std::string, std::string>> inputs = {
        {"model", a.model_path}, {"family", a.family_path}, {"corpus", a.corpus_path}};
    if (cond.kind == hn::ConditionKind::steered) {
        if (a.vector_path.empty()) {
            throw UsageError("steered condition requires --vector");
        }
        cond.vector = load_vector_checked(a.vector_path, model);
        if (!std::isnan(a.coeff)) {
            cond.coefficient = a.coeff;
        }
        inputs.emplace_back("vector", a.vector_path);
    }

    auto report = hn::run_eval(model, family, lang, corpus, cond, a.seed);

    Json config{{"condition", a.condition}, {"seed", a.seed}};
    if (cond.vector.has_value()) {
        config["coefficient"] =
            cond.coefficient.value_or(cond.vector->default_coefficient);
    }
    write_artifact(out_path, artifact("steer-eval", config, input_digests(inputs),
                                      report.to_json(false)));
    if (!a.transcript_path.empty()) {
        std::string lines;
        for (const auto& item : report.transcript) {
            lines += item.to_json().dump() + "\n";
        }
        write_text(a.transcript_path, lines);
    }
    std::cout << "accuracy " << fmt17(report.accuracy) << " (" << lang << ", "
              << a.condition << ")\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// logit-lens
// ---------------------------------------------------------------------------

struct LogitLensArgs {
    std::string model_path;
    std::string family_path;
    std::string corpus_path;
    std::string out;
    std::string csv;
    std::string vector_path;
    double coeff = std::numeric_limits<double>::quiet_NaN();
    bool last_token = false;
};

int cmd_logit_lens(const LogitLensArgs& a) {
    const std::string out_path = resolve_out(a.out, "lens.json");
    auto model = load_model(a.model_path);
    auto family = load_family(a.family_path);
    auto corpus = load_corpus(a.corpus_path);

    std::optional<lm::InjectionSpec> inj;
    std::vector<std::pair<std::string, std::string>> inputs = {
        {"model", a.model_path}, {"family", a.family_path}, {"corpus", a.corpus_path}};
    if (!a.vector_path.empty()) {
        auto sv = load_vector_checked(a.vector_path, model);
        inj = sv.to_injection(std::isnan(a.coeff) ? std::optional<double>{}
                                                  : std::optional<double>{a.coeff});
        inputs.emplace_back("vector", a.vector_path);
    }

    auto report =
        ln::logit_lens_masses(model, family, src_prompts(corpus), inj, a.last_token);
    Json config{{"last_token", a.last_token}};
    if (inj.has_value()) {
        config["coefficient"] = inj->coefficient;
        config["layer"] = inj->layer;
    }
    write_artifact(out_path, artifact("logit-lens", config, input_digests(inputs),
                                      report.to_json()));
    if (!a.csv.empty()) {
        write_text(a.csv, report.to_csv());
    }
    std::cout << "lens report written to " << out_path << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// similarity
// ---------------------------------------------------------------------------

struct SimilarityArgs {
    std::string model_path;
    std::string family_path;
    std::string corpus_path;
    std::string out;
    std::string csv;
};

int cmd_similarity(const SimilarityArgs& a) {
    const std::string out_path = resolve_out(a.out, "similarity.json");
    auto model = load_model(a.model_path);
    auto family = load_family(a.family_path);
    auto corpus = load_corpus(a.corpus_path);
    const std::string lang = st::corpus_language(corpus);

    auto report = ln::layer_similarity(model, family, lang, corpus);
    Json inputs = input_digests(
        {{"model", a.model_path}, {"family", a.family_path}, {"corpus", a.corpus_path}});
    write_artifact(out_path, artifact("similarity", Json{{"language", lang}}, inputs,
                                      report.to_json()));
    if (!a.csv.empty()) {
        write_text(a.csv, report.to_csv());
    }
    std::cout << "similarity report written to " << out_path << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// sweep-layers
// ---------------------------------------------------------------------------

struct SweepArgs {
    std::string model_path;
    std::string family_path;
    std::string train_path;
    std::string eval_path;
    std::string out;
    std::string csv;
    std::string save_vectors_dir;
    std::string method = "bipo";
    double coeff = 1.0;
    std::uint64_t seed = 0;
    st::BipoConfig bipo;
    st::MseConfig mse;
};

int cmd_sweep_layers(const SweepArgs& a) {
    const std::string out_path = resolve_out(a.out, "sweep.json");
    auto model = load_model(a.model_path);
    auto family = load_family(a.family_path);
    auto train = load_corpus(a.train_path);
    auto eval = load_corpus(a.eval_path);
    const std::string lang = st::corpus_language(train);

    auto sweep = hn::layer_sweep(model, family, lang, st::method_from_string(a.method),
                                 train, eval, a.bipo, a.mse, a.coeff, a.seed);
    Json config{{"method", a.method}, {"coefficient", a.coeff}, {"seed", a.seed}};
    Json inputs = input_digests({{"model", a.model_path},
                                 {"family", a.family_path},
                                 {"train", a.train_path},
                                 {"eval", a.eval_path}});
    write_artifact(out_path, artifact("sweep-layers", config, inputs, sweep.to_json()));
    if (!a.csv.empty()) {
        write_text(a.csv, sweep.to_csv());
    }
    if (!a.save_vectors_dir.empty()) {
        fs::create_directories(a.save_vectors_dir);
        for (std::size_t i = 0; i < sweep.vectors.size(); ++i) {
            st::save_vector(sweep.vectors[i],
                            (fs::path(a.save_vectors_dir) /
                             ("vec_layer" + std::to_string(i) + ".json"))
                                .string());
        }
        st::save_vector(sweep.vectors[static_cast<std::size_t>(sweep.best_layer)],
                        (fs::path(a.save_vectors_dir) / "vec_best.json").string());
    }
    std::cout << "best layer " << sweep.best_layer << " written to " << out_path << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// transfer
// ---------------------------------------------------------------------------

struct TransferArgs {
    std::string model_path;
    std::string family_path;
    std::vector<std::string> vector_paths;
    std::string eval_dir;
    std::vector<std::string> targets;
    std::string out;
    std::string csv;
    double coeff = std::numeric_limits<double>::quiet_NaN();
    std::uint64_t seed = 0;
};

int cmd_transfer(const TransferArgs& a) {
    const std::string out_path = resolve_out(a.out, "transfer.json");
    auto model = load_model(a.model_path);
    auto family = load_family(a.family_path);

    std::vector<st::SteeringVector> vectors;
    std::vector<std::pair<std::string, std::string>> inputs = {
        {"model", a.model_path}, {"family", a.family_path}};
    for (const auto& path : a.vector_paths) {
        vectors.push_back(load_vector_checked(path, model));
        inputs.emplace_back("vector:" + vectors.back().source_lang, path);
    }
    std::vector<std::string> targets = a.targets;
    if (targets.empty()) {
        for (const auto& sv : vectors) {
            targets.push_back(sv.source_lang);
        }
    }
    std::vector<std::pair<std::string, lf::ParallelCorpus>> eval_corpora;
    for (const auto& lang : targets) {
        const std::string path =
            (fs::path(a.eval_dir) / ("task_" + lang + "_eval.jsonl")).string();
        eval_corpora.emplace_back(lang, load_corpus(path));
        inputs.emplace_back("eval:" + lang, path);
    }

    auto report = hn::transfer_eval(
        model, family, vectors, eval_corpora,
        std::isnan(a.coeff) ? std::optional<double>{} : std::optional<double>{a.coeff},
        a.seed);
    Json config{{"coefficient", report.coefficient}, {"seed", a.seed}};
    write_artifact(out_path, artifact("transfer", config, input_digests(inputs),
                                      report.to_json()));
    if (!a.csv.empty()) {
        write_text(a.csv, report.to_csv());
    }
    std::cout << "transfer matrix written to " << out_path << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// english-impact
// ---------------------------------------------------------------------------

struct ImpactArgs {
    std::string model_path;
    std::string family_path;
    std::vector<std::string> vector_paths;
    std::string eval_path;
    std::string out;
    std::string csv;
    double coeff = std::numeric_limits<double>::quiet_NaN();
    std::uint64_t seed = 0;
};

int cmd_english_impact(const ImpactArgs& a) {
    const std::string out_path = resolve_out(a.out, "english_impact.json");
    auto model = load_model(a.model_path);
    auto family = load_family(a.family_path);
    auto en_corpus = load_corpus(a.eval_path);

    std::vector<st::SteeringVector> vectors;
    std::vector<std::pair<std::string, std::string>> inputs = {
        {"model", a.model_path}, {"family", a.family_path}, {"eval", a.eval_path}};
    for (const auto& path : a.vector_paths) {
        vectors.push_back(load_vector_checked(path, model));
        inputs.emplace_back("vector:" + vectors.back().source_lang, path);
    }
    auto report = hn::english_impact_eval(
        model, family, vectors, en_corpus,
        std::isnan(a.coeff) ? std::optional<double>{} : std::optional<double>{a.coeff},
        a.seed);
    write_artifact(out_path, artifact("english-impact", Json{{"seed", a.seed}},
                                      input_digests(inputs), report.to_json()));
    if (!a.csv.empty()) {
        write_text(a.csv, report.to_csv());
    }
    std::cout << "english impact table written to " << out_path << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// sft-compare
// ---------------------------------------------------------------------------

struct SftArgs {
    std::string model_path;
    std::string family_path;
    std::string train_path;
    std::string eval_path;
    std::string vector_path;
    std::string out_dir;
    hn::SftConfig cfg;
    double coeff = std::numeric_limits<double>::quiet_NaN();
};

int cmd_sft_compare(const SftArgs& a) {
    const std::string out_dir = resolve_out(a.out_dir, "sft_compare");
    fs::create_directories(out_dir);
    auto model = load_model(a.model_path);
    auto family = load_family(a.family_path);
    auto train = load_corpus(a.train_path);
    auto eval = load_corpus(a.eval_path);
    auto vector = load_vector_checked(a.vector_path, model);
    const std::string lang = st::corpus_language(train);

    auto report = hn::sft_vs_steering(
        model, family, lang, train, eval, vector, a.cfg,
        std::isnan(a.coeff) ? std::optional<double>{} : std::optional<double>{a.coeff});

    Json config{{"sft_epochs", a.cfg.epochs},
                {"sft_lr", a.cfg.learning_rate},
                {"sft_weight_decay", a.cfg.weight_decay},
                {"sft_warmup_ratio", a.cfg.warmup_ratio},
                {"seed", a.cfg.seed}};
    Json inputs = input_digests({{"model", a.model_path},
                                 {"family", a.family_path},
                                 {"train", a.train_path},
                                 {"eval", a.eval_path},
                                 {"vector", a.vector_path}});
    const auto file = [&](const std::string& name) {
        return (fs::path(out_dir) / name).string();
    };
    write_artifact(file("sft_compare.json"),
                   artifact("sft-compare", config, inputs, report.to_json()));
    write_text(file("lens_base.csv"), report.lens_base.to_csv());
    write_text(file("lens_sft.csv"), report.lens_sft.to_csv());
    write_text(file("lens_steered.csv"), report.lens_steered.to_csv());
    std::cout << "sft comparison written to " << out_dir << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// project-2d
// ---------------------------------------------------------------------------

struct ProjectArgs {
    std::string input_path;  // labeled point sets as JSON
    std::string model_path;  // or derive logits point sets from a model+corpus
    std::string family_path;
    std::string corpus_path;
    std::string vector_path;
    std::string out;
    std::string csv;
    double coeff = std::numeric_limits<double>::quiet_NaN();
};

int cmd_project_2d(const ProjectArgs& a) {
    const std::string out_path = resolve_out(a.out, "projection.json");
    std::vector<std::pair<std::string, Matrix>> sets;
    std::vector<std::pair<std::string, std::string>> inputs;

    if (!a.input_path.empty()) {
        require_input(a.input_path);
        inputs.emplace_back("points", a.input_path);
        Json j = Json::parse(read_file_bytes(a.input_path));
        for (const auto& [label, rows] : j.at("sets").items()) {
            if (rows.empty()) {
                continue;
            }
            Matrix m(rows.size(), rows[0].size());
            for (std::size_t r = 0; r < rows.size(); ++r) {
                for (std::size_t c = 0; c < rows[r].size(); ++c) {
                    m.at(r, c) = rows[r][c].get<double>();
                }
            }
            sets.emplace_back(label, std::move(m));
        }
    } else {
        // Final-position logits of English, base and steered prompts: the
        // projection behind the steered-vs-base picture.
        if (a.model_path.empty() || a.family_path.empty() || a.corpus_path.empty() ||
            a.vector_path.empty()) {
            throw UsageError(
                "project-2d needs --input, or --model/--family/--corpus/--vector");
        }
        auto model = load_model(a.model_path);
        auto family = load_family(a.family_path);
        auto corpus = load_corpus(a.corpus_path);
        auto sv = load_vector_checked(a.vector_path, model);
        inputs = {{"model", a.model_path},
                  {"family", a.family_path},
                  {"corpus", a.corpus_path},
                  {"vector", a.vector_path}};
        auto inj = sv.to_injection(std::isnan(a.coeff) ? std::optional<double>{}
                                                       : std::optional<double>{a.coeff});
        const auto V = static_cast<std::size_t>(model.config().vocab_size);
        Matrix en(corpus.size(), V), base(corpus.size(), V), steer(corpus.size(), V);
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            auto te = lm::forward_with_trace(model, corpus[i].en);
            auto tb = lm::forward_with_trace(model, corpus[i].src);
            auto ts = lm::forward_with_trace(model, corpus[i].src, inj);
            std::copy(te.logits.row(te.logits.rows - 1),
                      te.logits.row(te.logits.rows - 1) + V, en.row(i));
            std::copy(tb.logits.row(tb.logits.rows - 1),
                      tb.logits.row(tb.logits.rows - 1) + V, base.row(i));
            std::copy(ts.logits.row(ts.logits.rows - 1),
                      ts.logits.row(ts.logits.rows - 1) + V, steer.row(i));
        }
        sets.emplace_back("en", std::move(en));
        sets.emplace_back("base", std::move(base));
        sets.emplace_back("steered", std::move(steer));
    }

    auto proj = ln::project_2d(sets);
    write_artifact(out_path, artifact("project-2d", Json::object(),
                                      input_digests(inputs), proj.to_json()));
    if (!a.csv.empty()) {
        write_text(a.csv, proj.to_csv());
    }
    std::cout << "projection written to " << out_path << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// Flag wiring. Steering flags mirror the usual hyperparameter names.
// ---------------------------------------------------------------------------

void add_bipo_flags(CLI::App* cmd, st::BipoConfig& cfg) {
    cmd->add_option("--beta", cfg.beta, "BiPO beta (deviation control)");
    cmd->add_option("--lr", cfg.learning_rate, "learning rate");
    cmd->add_option("--weight-decay", cfg.weight_decay, "AdamW weight decay");
    cmd->add_option("--batch-size", cfg.batch_size, "examples per optimizer step");
    cmd->add_option("--warmup-steps", cfg.warmup_steps, "cosine schedule warmup");
    cmd->add_option("--epochs", cfg.epochs, "training epochs");
    cmd->add_option("--seed", cfg.seed, "direction-sampling seed");
}

void add_mse_flags(CLI::App* cmd, st::MseConfig& cfg) {
    cmd->add_option("--mse-lr", cfg.learning_rate, "MSE learning rate");
    cmd->add_option("--mse-epochs", cfg.epochs, "MSE epochs (reference grid 3/5/8/12)");
    cmd->add_option("--mse-coeff", cfg.coefficient_c, "coefficient c during learning");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"steerlab: steering-vector laboratory on synthetic languages"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    GenCorpusArgs gen;
    auto* cmd_gen =
        app.add_subcommand("gen-corpus", "generate a language family and corpora");
    cmd_gen->add_option("--out", gen.out, "output directory");
    cmd_gen->add_option("--seed", gen.seed, "master corpus seed");
    cmd_gen->add_option("--family", gen.family_file, "custom family spec JSON");
    cmd_gen->add_option("--pretrain-size", gen.pretrain_size, "mixture sequences");
    cmd_gen->add_option("--task-train", gen.task_train, "task items per language");
    cmd_gen->add_option("--task-eval", gen.task_eval, "eval items per language");

    TrainModelArgs train;
    auto* cmd_train = app.add_subcommand("train-model", "pretrain the toy transformer");
    cmd_train->add_option("--corpus", train.corpus_dir, "corpus directory")->required();
    cmd_train->add_option("--out", train.out, "checkpoint path");
    cmd_train->add_option("--log", train.log_file, "training log path");
    cmd_train->add_option("--d-model", train.d_model, "model width");
    cmd_train->add_option("--n-layers", train.n_layers, "transformer blocks");
    cmd_train->add_option("--n-heads", train.n_heads, "attention heads");
    cmd_train->add_option("--ctx", train.ctx_len, "context length");
    cmd_train->add_option("--vocab", train.vocab, "vocabulary size (0 = from family)");
    cmd_train->add_option("--seed", train.seed, "init/shuffle seed");
    cmd_train->add_option("--epochs", train.epochs, "training epochs");
    cmd_train->add_option("--lr", train.lr, "learning rate");
    cmd_train->add_option("--weight-decay", train.weight_decay, "AdamW weight decay");
    cmd_train->add_option("--warmup-steps", train.warmup_steps, "cosine warmup steps");
    cmd_train->add_option("--init", train.init,
                          "token-embedding init: aligned (shared prototypes + "
                          "language offsets) or plain");
    cmd_train->add_flag("--train-embeddings", train.train_embeddings,
                        "update the token table during training");

    LearnVectorArgs learn;
    auto* cmd_learn = app.add_subcommand("learn-vector", "learn a steering vector");
    cmd_learn->add_option("--model", learn.model_path, "model checkpoint")->required();
    cmd_learn->add_option("--family", learn.family_path, "family JSON")->required();
    cmd_learn->add_option("--corpus", learn.corpus_path, "parallel task corpus")
        ->required();
    cmd_learn->add_option("--out", learn.out, "vector output path");
    cmd_learn->add_option("--method", learn.method, "bipo|mse|meandiff|pca");
    cmd_learn->add_option("--layer", learn.layer, "hook layer")->required();
    add_bipo_flags(cmd_learn, learn.bipo);
    add_mse_flags(cmd_learn, learn.mse);

    SteerEvalArgs eval;
    auto* cmd_eval = app.add_subcommand("steer-eval", "evaluate under a condition");
    cmd_eval->add_option("--model", eval.model_path, "model checkpoint")->required();
    cmd_eval->add_option("--family", eval.family_path, "family JSON")->required();
    cmd_eval->add_option("--corpus", eval.corpus_path, "eval corpus")->required();
    cmd_eval->add_option("--out", eval.out, "report path");
    cmd_eval->add_option("--transcript", eval.transcript_path, "transcript JSONL path");
    cmd_eval->add_option("--condition", eval.condition,
                         "basic|steered|oracle-translate|self-translate");
    cmd_eval->add_option("--vector", eval.vector_path, "steering vector file");
    cmd_eval->add_option("--coeff", eval.coeff, "injection coefficient override");
    cmd_eval->add_option("--seed", eval.seed, "run seed recorded in the report");

    LogitLensArgs lens_args;
    auto* cmd_lens = app.add_subcommand("logit-lens", "per-layer language masses");
    cmd_lens->add_option("--model", lens_args.model_path, "model checkpoint")
        ->required();
    cmd_lens->add_option("--family", lens_args.family_path, "family JSON")->required();
    cmd_lens->add_option("--corpus", lens_args.corpus_path, "prompt corpus")
        ->required();
    cmd_lens->add_option("--out", lens_args.out, "report path");
    cmd_lens->add_option("--csv", lens_args.csv, "plot-ready CSV path");
    cmd_lens->add_option("--vector", lens_args.vector_path, "optional steering vector");
    cmd_lens->add_option("--coeff", lens_args.coeff, "injection coefficient override");
    cmd_lens->add_flag("--last-token", lens_args.last_token,
                       "use final positions only");

    SimilarityArgs sim;
    auto* cmd_sim = app.add_subcommand("similarity", "per-layer English similarity");
    cmd_sim->add_option("--model", sim.model_path, "model checkpoint")->required();
    cmd_sim->add_option("--family", sim.family_path, "family JSON")->required();
    cmd_sim->add_option("--corpus", sim.corpus_path, "parallel corpus")->required();
    cmd_sim->add_option("--out", sim.out, "report path");
    cmd_sim->add_option("--csv", sim.csv, "plot-ready CSV path");

    SweepArgs sweep;
    auto* cmd_sweep =
        app.add_subcommand("sweep-layers", "learn and evaluate a vector per hook");
    cmd_sweep->add_option("--model", sweep.model_path, "model checkpoint")->required();
    cmd_sweep->add_option("--family", sweep.family_path, "family JSON")->required();
    cmd_sweep->add_option("--train", sweep.train_path, "training corpus")->required();
    cmd_sweep->add_option("--eval", sweep.eval_path, "eval corpus")->required();
    cmd_sweep->add_option("--out", sweep.out, "report path");
    cmd_sweep->add_option("--csv", sweep.csv, "plot-ready CSV path");
    cmd_sweep->add_option("--save-vectors", sweep.save_vectors_dir,
                          "directory for per-layer vector files");
    cmd_sweep->add_option("--method", sweep.method, "bipo|mse|meandiff|pca");
    cmd_sweep->add_option("--coeff", sweep.coeff, "fixed injection coefficient");
    cmd_sweep->add_option("--sweep-seed", sweep.seed, "run seed");
    add_bipo_flags(cmd_sweep, sweep.bipo);
    add_mse_flags(cmd_sweep, sweep.mse);

    TransferArgs transfer;
    auto* cmd_trans =
        app.add_subcommand("transfer", "apply source vectors across languages");
    cmd_trans->add_option("--model", transfer.model_path, "model checkpoint")
        ->required();
    cmd_trans->add_option("--family", transfer.family_path, "family JSON")->required();
    cmd_trans->add_option("--vectors", transfer.vector_paths, "vector files")
        ->required()
        ->expected(-1);
    cmd_trans->add_option("--eval-dir", transfer.eval_dir,
                          "corpus directory with task_<lang>_eval.jsonl files")
        ->required();
    cmd_trans->add_option("--targets", transfer.targets,
                          "target languages (default: vector sources)");
    cmd_trans->add_option("--out", transfer.out, "report path");
    cmd_trans->add_option("--csv", transfer.csv, "plot-ready CSV path");
    cmd_trans->add_option("--coeff", transfer.coeff, "injection coefficient override");
    cmd_trans->add_option("--seed", transfer.seed, "run seed");

    ImpactArgs impact;
    auto* cmd_impact =
        app.add_subcommand("english-impact", "English accuracy under each vector");
    cmd_impact->add_option("--model", impact.model_path, "model checkpoint")
        ->required();
    cmd_impact->add_option("--family", impact.family_path, "family JSON")->required();
    cmd_impact->add_option("--vectors", impact.vector_paths, "vector files")
        ->required()
        ->expected(-1);
    cmd_impact->add_option("--eval", impact.eval_path, "English eval corpus")
        ->required();
    cmd_impact->add_option("--out", impact.out, "report path");
    cmd_impact->add_option("--csv", impact.csv, "plot-ready CSV path");
    cmd_impact->add_option("--coeff", impact.coeff, "injection coefficient override");
    cmd_impact->add_option("--seed", impact.seed, "run seed");

    SftArgs sft;
    auto* cmd_sft =
        app.add_subcommand("sft-compare", "fine-tuning vs steering lens comparison");
    cmd_sft->add_option("--model", sft.model_path, "model checkpoint")->required();
    cmd_sft->add_option("--family", sft.family_path, "family JSON")->required();
    cmd_sft->add_option("--train", sft.train_path, "translation pair corpus")
        ->required();
    cmd_sft->add_option("--eval", sft.eval_path, "eval corpus")->required();
    cmd_sft->add_option("--vector", sft.vector_path, "steering vector")->required();
    cmd_sft->add_option("--out", sft.out_dir, "output directory");
    cmd_sft->add_option("--sft-epochs", sft.cfg.epochs, "fine-tuning epochs");
    cmd_sft->add_option("--sft-lr", sft.cfg.learning_rate, "fine-tuning learning rate");
    cmd_sft->add_option("--sft-weight-decay", sft.cfg.weight_decay,
                        "fine-tuning weight decay");
    cmd_sft->add_option("--sft-warmup-ratio", sft.cfg.warmup_ratio,
                        "warmup fraction of total steps");
    cmd_sft->add_option("--seed", sft.cfg.seed, "fine-tuning shuffle seed");
    cmd_sft->add_option("--coeff", sft.coeff, "injection coefficient override");
    cmd_sft->add_flag(
        "--sft-train-embeddings",
        [&sft](std::int64_t) { sft.cfg.freeze_token_embeddings = false; },
        "update the token table during fine-tuning");

    ProjectArgs proj;
    auto* cmd_proj =
        app.add_subcommand("project-2d", "PCA projection of labeled point sets");
    cmd_proj->add_option("--input", proj.input_path, "labeled point sets JSON");
    cmd_proj->add_option("--model", proj.model_path, "model checkpoint");
    cmd_proj->add_option("--family", proj.family_path, "family JSON");
    cmd_proj->add_option("--corpus", proj.corpus_path, "parallel corpus");
    cmd_proj->add_option("--vector", proj.vector_path, "steering vector");
    cmd_proj->add_option("--coeff", proj.coeff, "injection coefficient override");
    cmd_proj->add_option("--out", proj.out, "report path");
    cmd_proj->add_option("--csv", proj.csv, "plot-ready CSV path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);  // prints help, exit 0
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help() << std::flush;
        return kUsage;
    }

    try {
        if (cmd_gen->parsed()) return cmd_gen_corpus(gen);
        if (cmd_train->parsed()) return cmd_train_model(train);
        if (cmd_learn->parsed()) return cmd_learn_vector(learn);
        if (cmd_eval->parsed()) return cmd_steer_eval(eval);
        if (cmd_lens->parsed()) return cmd_logit_lens(lens_args);
        if (cmd_sim->parsed()) return cmd_similarity(sim);
        if (cmd_sweep->parsed()) return cmd_sweep_layers(sweep);
        if (cmd_trans->parsed()) return cmd_transfer(transfer);
        if (cmd_impact->parsed()) return cmd_english_impact(impact);
        if (cmd_sft->parsed()) return cmd_sft_compare(sft);
        if (cmd_proj->parsed()) return cmd_project_2d(proj);
        std::cerr << app.help();
        return kUsage;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kUsage;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kIo;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kNumeric;
    } catch (const Error& e) {
        std::cerr << "invariant violation: " << e.what() << "\n";
        return kInvariant;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInvariant;
    }
}
