// Copyright (c) 2026 the steerlab authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "steerlab/common.hpp"

namespace steerlab::langforge {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;
using Json = nlohmann::ordered_json;

// Token roles. Digits and task answers live in a shared neutral block; each
// language owns a contiguous block of word tokens that is a seeded bijection
// of the English block.
//
// Neutral block offsets:   0..9 digits, 10 end-of-answer, 11 translation arrow.
// Language block offsets (pre-bijection, i.e. English word indices):
//   0..40 number words, 41 "plus", 42 "minus", 43 question word, 44 equals word.

constexpr int kDigitCount = 10;
constexpr int kNeutralEos = 10;
constexpr int kNeutralArrow = 11;
constexpr int kNeutralWords = 12;

constexpr int kMaxNumberWord = 40;  // number words cover values 0..40
constexpr int kWordPlus = 41;
constexpr int kWordMinus = 42;
constexpr int kWordQuestion = 43;
constexpr int kWordEquals = 44;
constexpr int kLanguageWords = 45;

struct TokenBlock {
    TokenId start = 0;
    TokenId size = 0;

    bool contains(TokenId t) const { return t >= start && t < start + size; }
    TokenId end() const { return start + size; }
};

struct LanguageSpec {
    std::string name;
    TokenBlock token_block;
    std::uint64_t bijection_seed = 0;
    int reorder_depth = 0;  // 0 = English word order
    double resource_weight = 0.0;
};

/// One aligned task item. `src` is the prompt in the record's language, `en`
/// its exact English parallel, `answer` the neutral digit tokens of the
/// ground truth (identical across languages). task_tag is "arith" for solved
/// problems and "translate" for x->English demonstrations (answer empty).
struct CorpusRecord {
    std::string lang;
    TokenSeq src;
    TokenSeq en;
    TokenSeq answer;
    std::string task_tag;
};

using ParallelCorpus = std::vector<CorpusRecord>;

class LanguageFamily {
public:
    LanguageFamily(std::uint64_t seed, TokenBlock neutral,
                   std::vector<LanguageSpec> specs)
        : seed_(seed), neutral_(neutral), specs_(std::move(specs)) {
        validate();
        build_bijections();
    }

    std::uint64_t seed() const { return seed_; }
    const TokenBlock& neutral_block() const { return neutral_; }
    const std::vector<LanguageSpec>& specs() const { return specs_; }
    std::size_t english_index() const { return english_; }

    std::size_t lang_index(const std::string& name) const {
        for (std::size_t i = 0; i < specs_.size(); ++i) {
            if (specs_[i].name == name) {
                return i;
            }
        }
        throw UsageError("unknown language: " + name);
    }

    const LanguageSpec& spec(const std::string& name) const {
        return specs_[lang_index(name)];
    }

    bool is_neutral(TokenId t) const { return neutral_.contains(t); }

    /// Index of the language block containing t, or -1 for neutral/unassigned.
    int lang_of_token(TokenId t) const {
        for (std::size_t i = 0; i < specs_.size(); ++i) {
            if (specs_[i].token_block.contains(t)) {
                return static_cast<int>(i);
            }
        }
        return -1;
    }

    TokenId digit_token(int digit) const {
        return neutral_.start + static_cast<TokenId>(digit);
    }
    TokenId eos_token() const { return neutral_.start + kNeutralEos; }
    TokenId arrow_token() const { return neutral_.start + kNeutralArrow; }

    /// Word token of language `li` for English word index `word`.
    TokenId word_token(std::size_t li, int word) const {
        return specs_[li].token_block.start + perm_[li][static_cast<std::size_t>(word)];
    }

    /// English word index of a token from language li's block.
    int word_index(std::size_t li, TokenId t) const {
        return inv_perm_[li][static_cast<std::size_t>(t - specs_[li].token_block.start)];
    }

    /// Smallest vocab size able to hold every block.
    int min_vocab() const {
        TokenId hi = neutral_.end();
        for (const auto& s : specs_) {
            hi = std::max(hi, s.token_block.end());
        }
        return hi;
    }

    Json to_json() const {
        Json j;
        j["seed"] = seed_;
        j["neutral_block"] = {{"start", neutral_.start}, {"size", neutral_.size}};
        j["languages"] = Json::array();
        for (const auto& s : specs_) {
            j["languages"].push_back({{"name", s.name},
                                      {"block_start", s.token_block.start},
                                      {"block_size", s.token_block.size},
                                      {"bijection_seed", s.bijection_seed},
                                      {"reorder_depth", s.reorder_depth},
                                      {"resource_weight", s.resource_weight}});
        }
        return j;
    }

    static LanguageFamily from_json(const Json& j) {
        TokenBlock neutral{j.at("neutral_block").at("start").get<TokenId>(),
                           j.at("neutral_block").at("size").get<TokenId>()};
        std::vector<LanguageSpec> specs;
        for (const auto& s : j.at("languages")) {
            LanguageSpec spec;
            spec.name = s.at("name").get<std::string>();
            spec.token_block = {s.at("block_start").get<TokenId>(),
                                s.at("block_size").get<TokenId>()};
            spec.bijection_seed = s.at("bijection_seed").get<std::uint64_t>();
            spec.reorder_depth = s.at("reorder_depth").get<int>();
            spec.resource_weight = s.at("resource_weight").get<double>();
            specs.push_back(std::move(spec));
        }
        return LanguageFamily(j.at("seed").get<std::uint64_t>(), neutral,
                              std::move(specs));
    }

private:
    void validate() const {
        if (specs_.empty()) {
            throw InvariantError("language family: no languages");
        }
        double weight_sum = 0.0;
        bool has_english = false;
        for (std::size_t i = 0; i < specs_.size(); ++i) {
            const auto& s = specs_[i];
            if (s.token_block.size < kLanguageWords) {
                throw InvariantError("language " + s.name + ": block smaller than " +
                                     std::to_string(kLanguageWords) + " word slots");
            }
            if (s.resource_weight < 0.0) {
                throw InvariantError("language " + s.name + ": negative weight");
            }
            weight_sum += s.resource_weight;
            if (s.name == "en") {
                has_english = true;
                if (s.reorder_depth != 0) {
                    throw InvariantError("English must use reorder_depth 0");
                }
            }
            if (overlaps(s.token_block, neutral_)) {
                throw InvariantError("language " + s.name +
                                     ": block overlaps the neutral block");
            }
            for (std::size_t j = i + 1; j < specs_.size(); ++j) {
                if (overlaps(s.token_block, specs_[j].token_block)) {
                    throw InvariantError("language blocks overlap: " + s.name + " and " +
                                         specs_[j].name);
                }
            }
        }
        if (!has_english) {
            throw InvariantError("language family must contain \"en\"");
        }
        if (std::abs(weight_sum - 1.0) > 1e-9) {
            throw InvariantError("resource weights must sum to 1, got " +
                                 fmt17(weight_sum));
        }
        if (neutral_.size < kNeutralWords) {
            throw InvariantError("neutral block too small");
        }
    }

    static bool overlaps(const TokenBlock& a, const TokenBlock& b) {
        return a.start < b.end() && b.start < a.end();
    }

    void build_bijections() {
        english_ = lang_index("en");
        perm_.resize(specs_.size());
        inv_perm_.resize(specs_.size());
        for (std::size_t i = 0; i < specs_.size(); ++i) {
            const auto n = static_cast<std::size_t>(specs_[i].token_block.size);
            std::vector<TokenId> p(n);
            for (std::size_t k = 0; k < n; ++k) {
                p[k] = static_cast<TokenId>(k);
            }
            if (i != english_) {
                // Permutation depends only on (family seed, bijection seed), so
                // equal bijection seeds produce block-offset twins.
                Rng rng(hash_combine(seed_, specs_[i].bijection_seed));
                for (std::size_t k = n; k > 1; --k) {
                    const std::size_t j = rng.below(k);
                    std::swap(p[k - 1], p[j]);
                }
            }
            std::vector<TokenId> inv(n);
            for (std::size_t k = 0; k < n; ++k) {
                inv[static_cast<std::size_t>(p[k])] = static_cast<TokenId>(k);
            }
            perm_[i] = std::move(p);
            inv_perm_[i] = std::move(inv);
        }
    }

    std::uint64_t seed_;
    TokenBlock neutral_;
    std::vector<LanguageSpec> specs_;
    std::vector<std::vector<TokenId>> perm_, inv_perm_;
    std::size_t english_ = 0;
};

inline LanguageFamily make_language_family(std::uint64_t seed,
                                           std::vector<LanguageSpec> specs,
                                           TokenBlock neutral = {0, 192}) {
    return LanguageFamily(seed, neutral, std::move(specs));
}

/// Default desk family: four languages over a 512-token vocabulary, blocks
/// partitioning the id space exactly. "mid" is the structurally distant one
/// (different word order); the rest share English word order.
inline LanguageFamily default_family(std::uint64_t seed) {
    std::vector<LanguageSpec> specs = {
        {"en", {192, 80}, 0, 0, 0.55},
        {"high", {272, 80}, 101, 0, 0.25},
        {"mid", {352, 80}, 202, 1, 0.15},
        {"low", {432, 80}, 303, 0, 0.05},
    };
    return LanguageFamily(seed, {0, 192}, std::move(specs));
}

namespace detail {

/// Brick-wall adjacent swaps: pass p swaps (0,1),(2,3),... when odd and
/// (1,2),(3,4),... when even. Each pass is an involution, so the inverse is
/// the same passes in reverse order.
inline void apply_reorder(TokenSeq& v, int depth, bool inverse) {
    for (int i = 0; i < depth; ++i) {
        const int pass = inverse ? depth - i : i + 1;
        for (std::size_t j = (pass % 2 == 1) ? 0 : 1; j + 1 < v.size(); j += 2) {
            std::swap(v[j], v[j + 1]);
        }
    }
}

}  // namespace detail

/// Exact translation: bijective word remap plus the deterministic local
/// reorder of each side's reorder_depth. Neutral tokens are untouched and
/// keep their positions; the reorder permutes only word-token positions.
inline TokenSeq translate_tokens(const LanguageFamily& family, const TokenSeq& tokens,
                                 const std::string& from_lang,
                                 const std::string& to_lang) {
    const std::size_t from = family.lang_index(from_lang);
    const std::size_t to = family.lang_index(to_lang);
    const auto& from_spec = family.specs()[from];
    const auto& to_spec = family.specs()[to];

    TokenSeq out = tokens;
    std::vector<std::size_t> word_positions;
    TokenSeq words;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const TokenId t = tokens[i];
        if (family.is_neutral(t)) {
            continue;
        }
        if (!from_spec.token_block.contains(t)) {
            throw IndexError("translate: token " + std::to_string(t) +
                             " outside blocks of " + from_lang);
        }
        word_positions.push_back(i);
        words.push_back(family.word_token(to, family.word_index(from, t)));
    }
    detail::apply_reorder(words, from_spec.reorder_depth, /*inverse=*/true);
    detail::apply_reorder(words, to_spec.reorder_depth, /*inverse=*/false);
    for (std::size_t k = 0; k < words.size(); ++k) {
        out[word_positions[k]] = words[k];
    }
    return out;
}

/// Digits of a non-negative value as neutral tokens.
inline TokenSeq digit_tokens(const LanguageFamily& family, int value) {
    if (value < 0) {
        throw InvariantError("digit_tokens: negative value");
    }
    std::string s = std::to_string(value);
    TokenSeq out;
    out.reserve(s.size());
    for (char c : s) {
        out.push_back(family.digit_token(c - '0'));
    }
    return out;
}

inline int digits_value(const LanguageFamily& family, const TokenSeq& answer) {
    int v = 0;
    for (TokenId t : answer) {
        const int d = t - family.neutral_block().start;
        if (d < 0 || d >= kDigitCount) {
            throw InvariantError("digits_value: non-digit token");
        }
        v = v * 10 + d;
    }
    return v;
}

struct ArithProblem {
    int a = 0;
    int b = 0;
    bool plus = true;

    int result() const { return plus ? a + b : a - b; }
};

inline ArithProblem sample_problem(Rng& rng) {
    ArithProblem p;
    p.a = static_cast<int>(rng.below(21));
    p.b = static_cast<int>(rng.below(21));
    p.plus = rng.below(2) == 0;
    if (!p.plus && p.b > p.a) {
        std::swap(p.a, p.b);  // keep answers non-negative
    }
    return p;
}

/// English-order prompt: [question, word(a), op, word(b), equals].
inline TokenSeq english_prompt(const LanguageFamily& family, const ArithProblem& p) {
    const std::size_t en = family.english_index();
    return {family.word_token(en, kWordQuestion), family.word_token(en, p.a),
            family.word_token(en, p.plus ? kWordPlus : kWordMinus),
            family.word_token(en, p.b), family.word_token(en, kWordEquals)};
}

inline CorpusRecord make_task_record(const LanguageFamily& family,
                                     const std::string& lang, const ArithProblem& p) {
    CorpusRecord rec;
    rec.lang = lang;
    rec.en = english_prompt(family, p);
    rec.src = translate_tokens(family, rec.en, "en", lang);
    rec.answer = digit_tokens(family, p.result());
    rec.task_tag = "arith";
    return rec;
}

/// Parallel arithmetic corpus for one language; deterministic in (seed, n).
inline ParallelCorpus build_task_corpus(const LanguageFamily& family,
                                        const std::string& lang, std::size_t n,
                                        std::uint64_t seed) {
    if (n < 1) {
        throw InvariantError("build_task_corpus: n must be >= 1");
    }
    family.lang_index(lang);
    Rng rng(hash_combine(hash_combine(family.seed(), seed), 0x7461736bULL));
    ParallelCorpus out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(make_task_record(family, lang, sample_problem(rng)));
    }
    return out;
}

/// Pretraining mixture sampled by resource weight. English items are task
/// demonstrations; other languages mix task demonstrations with x->English
/// translation demonstrations 50/50.
inline ParallelCorpus build_pretrain_mixture(const LanguageFamily& family,
                                             std::size_t total_sequences,
                                             std::uint64_t seed) {
    if (total_sequences < 100) {
        throw InvariantError("build_pretrain_mixture: need at least 100 sequences");
    }
    Rng rng(hash_combine(hash_combine(family.seed(), seed), 0x6d697874757265ULL));
    ParallelCorpus out;
    out.reserve(total_sequences);
    const auto& specs = family.specs();
    for (std::size_t i = 0; i < total_sequences; ++i) {
        const double u = rng.uniform();
        std::size_t li = specs.size() - 1;
        double acc = 0.0;
        for (std::size_t k = 0; k < specs.size(); ++k) {
            acc += specs[k].resource_weight;
            if (u < acc) {
                li = k;
                break;
            }
        }
        const bool translation =
            li != family.english_index() && rng.below(2) == 1;
        CorpusRecord rec = make_task_record(family, specs[li].name, sample_problem(rng));
        if (translation) {
            rec.task_tag = "translate";
            rec.answer.clear();
        }
        out.push_back(std::move(rec));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Embedding geometry.
// ---------------------------------------------------------------------------

/// Token-embedding geometry in which translation-equivalent words share a
/// per-word prototype and each language block adds its own constant offset
/// (English adds none). This is the desk-scale stand-in for the shared
/// multilingual geometry of large pretrained models: parallel prompts then
/// differ by an approximately constant residual shift, which is what a
/// steering vector can remove. Neutral and unassigned ids get plain noise.
inline Matrix aligned_embedding_geometry(const LanguageFamily& family, int vocab_size,
                                         int d_model, std::uint64_t seed,
                                         double prototype_std = 0.02,
                                         double offset_std = 0.02,
                                         double noise_std = 0.002) {
    if (vocab_size < family.min_vocab()) {
        throw InvariantError("aligned_embedding_geometry: vocab too small");
    }
    const auto d = static_cast<std::size_t>(d_model);
    Matrix emb(static_cast<std::size_t>(vocab_size), d);
    Rng base_rng(hash_combine(seed, 0x656d62ULL));
    for (double& v : emb.a) {
        v = base_rng.normal() * prototype_std;
    }

    std::size_t max_block = 0;
    for (const auto& spec : family.specs()) {
        max_block = std::max(max_block, static_cast<std::size_t>(spec.token_block.size));
    }
    Matrix prototypes(max_block, d);
    Rng proto_rng(hash_combine(seed, 0x70726f746fULL));
    for (double& v : prototypes.a) {
        v = proto_rng.normal() * prototype_std;
    }

    Rng offset_rng(hash_combine(seed, 0x6f6666736574ULL));
    Rng noise_rng(hash_combine(seed, 0x6e6f697365ULL));
    for (std::size_t li = 0; li < family.specs().size(); ++li) {
        const auto& spec = family.specs()[li];
        std::vector<double> offset(d, 0.0);
        if (li != family.english_index()) {
            for (double& v : offset) {
                v = offset_rng.normal() * offset_std;
            }
        }
        for (int w = 0; w < spec.token_block.size; ++w) {
            const auto row = static_cast<std::size_t>(family.word_token(li, w));
            for (std::size_t c = 0; c < d; ++c) {
                emb.at(row, c) = prototypes.at(static_cast<std::size_t>(w), c) +
                                 offset[c] + noise_rng.normal() * noise_std;
            }
        }
    }
    return emb;
}

// ---------------------------------------------------------------------------
// Sequence rendering: how records become training/eval token streams.
// ---------------------------------------------------------------------------

/// Language-specific word for the answer value (the response differs across
/// languages even though the scored digits are neutral).
inline TokenId answer_word_token(const LanguageFamily& family, const std::string& lang,
                                 int value) {
    if (value < 0 || value > kMaxNumberWord) {
        throw InvariantError("answer value out of word range");
    }
    return family.word_token(family.lang_index(lang), value);
}

/// Full response to a task prompt in `lang`: [answer word, digits..., eos].
inline TokenSeq task_response(const LanguageFamily& family, const std::string& lang,
                              const TokenSeq& answer) {
    TokenSeq out;
    out.push_back(answer_word_token(family, lang, digits_value(family, answer)));
    out.insert(out.end(), answer.begin(), answer.end());
    out.push_back(family.eos_token());
    return out;
}

/// Task demonstration: prompt ++ response. Scored as plain LM data.
inline TokenSeq render_task_sequence(const LanguageFamily& family,
                                     const CorpusRecord& rec) {
    TokenSeq out = rec.src;
    const TokenSeq resp = task_response(family, rec.lang, rec.answer);
    out.insert(out.end(), resp.begin(), resp.end());
    return out;
}

/// Translation demonstration: src ++ arrow ++ english ++ eos.
inline TokenSeq render_translation_sequence(const LanguageFamily& family,
                                            const CorpusRecord& rec) {
    TokenSeq out = rec.src;
    out.push_back(family.arrow_token());
    out.insert(out.end(), rec.en.begin(), rec.en.end());
    out.push_back(family.eos_token());
    return out;
}

/// En->target translation pair for fine-tuning: en ++ arrow ++ src ++ eos,
/// with the loss restricted to the target-side tokens.
struct SftSequence {
    TokenSeq tokens;
    std::size_t score_from;
};

inline SftSequence render_sft_sequence(const LanguageFamily& family,
                                       const CorpusRecord& rec) {
    SftSequence out;
    out.tokens = rec.en;
    out.tokens.push_back(family.arrow_token());
    out.score_from = out.tokens.size();
    out.tokens.insert(out.tokens.end(), rec.src.begin(), rec.src.end());
    out.tokens.push_back(family.eos_token());
    return out;
}

// ---------------------------------------------------------------------------
// JSONL corpus files and the regenerable manifest.
// ---------------------------------------------------------------------------

inline Json record_to_json(const CorpusRecord& rec) {
    return Json{{"lang", rec.lang},
                {"src", rec.src},
                {"en", rec.en},
                {"answer", rec.answer},
                {"task_tag", rec.task_tag}};
}

inline CorpusRecord record_from_json(const Json& j) {
    CorpusRecord rec;
    rec.lang = j.at("lang").get<std::string>();
    rec.src = j.at("src").get<TokenSeq>();
    rec.en = j.at("en").get<TokenSeq>();
    rec.answer = j.at("answer").get<TokenSeq>();
    rec.task_tag = j.at("task_tag").get<std::string>();
    return rec;
}

inline std::string corpus_to_jsonl(const ParallelCorpus& corpus) {
    std::string out;
    for (const auto& rec : corpus) {
        out += record_to_json(rec).dump();
        out += "\n";
    }
    return out;
}

inline ParallelCorpus corpus_from_jsonl(const std::string& text) {
    ParallelCorpus out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) {
            nl = text.size();
        }
        const std::string line = text.substr(pos, nl - pos);
        pos = nl + 1;
        if (line.empty()) {
            continue;
        }
        out.push_back(record_from_json(Json::parse(line)));
    }
    return out;
}

inline void write_corpus(const std::string& path, const ParallelCorpus& corpus) {
    write_file_bytes(path, corpus_to_jsonl(corpus));
}

inline ParallelCorpus read_corpus(const std::string& path) {
    return corpus_from_jsonl(read_file_bytes(path));
}

inline std::string corpus_digest(const ParallelCorpus& corpus) {
    return digest_of_bytes(corpus_to_jsonl(corpus));
}

}  // namespace steerlab::langforge
