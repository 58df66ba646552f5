// Copyright (c) 2026 the steerlab authors
// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "steerlab/langforge.hpp"

using namespace steerlab;
namespace lf = steerlab::langforge;

namespace {

lf::LanguageFamily two_lang_family(std::uint64_t seed = 5,
                                   std::uint64_t bijection_seed_b = 40,
                                   int reorder_b = 0) {
    std::vector<lf::LanguageSpec> specs = {
        {"en", {64, 80}, 0, 0, 0.5},
        {"xx", {144, 80}, bijection_seed_b, reorder_b, 0.5},
    };
    return lf::make_language_family(seed, std::move(specs), {0, 64});
}

}  // namespace

TEST_CASE("English bijection is the identity on its own block", "[langforge]") {
    auto fam = lf::default_family(1);
    const auto en = fam.english_index();
    const auto& block = fam.specs()[en].token_block;
    for (int w = 0; w < lf::kLanguageWords; ++w) {
        REQUIRE(fam.word_token(en, w) == block.start + w);
    }
}

TEST_CASE("family construction rejects bad specs", "[langforge]") {
    SECTION("overlapping blocks") {
        std::vector<lf::LanguageSpec> specs = {
            {"en", {64, 80}, 0, 0, 0.5},
            {"xx", {100, 80}, 1, 0, 0.5},
        };
        REQUIRE_THROWS_AS(lf::make_language_family(2, specs, {0, 64}), InvariantError);
    }
    SECTION("weights not normalized") {
        std::vector<lf::LanguageSpec> specs = {
            {"en", {64, 80}, 0, 0, 0.6},
            {"xx", {144, 80}, 1, 0, 0.5},
        };
        REQUIRE_THROWS_AS(lf::make_language_family(2, specs, {0, 64}), InvariantError);
    }
    SECTION("missing English") {
        std::vector<lf::LanguageSpec> specs = {
            {"aa", {64, 80}, 0, 0, 1.0},
        };
        REQUIRE_THROWS_AS(lf::make_language_family(2, specs, {0, 64}), InvariantError);
    }
    SECTION("block overlapping neutral") {
        std::vector<lf::LanguageSpec> specs = {
            {"en", {32, 80}, 0, 0, 1.0},
        };
        REQUIRE_THROWS_AS(lf::make_language_family(2, specs, {0, 64}), InvariantError);
    }
}

TEST_CASE("equal bijection seeds give block-offset twins", "[langforge]") {
    std::vector<lf::LanguageSpec> specs = {
        {"en", {64, 80}, 0, 0, 0.4},
        {"aa", {144, 80}, 77, 0, 0.3},
        {"bb", {224, 80}, 77, 0, 0.3},
    };
    auto fam = lf::make_language_family(9, specs, {0, 64});
    auto prompt = lf::english_prompt(fam, {12, 7, true});
    auto ta = lf::translate_tokens(fam, prompt, "en", "aa");
    auto tb = lf::translate_tokens(fam, prompt, "en", "bb");
    const lf::TokenId offset =
        fam.spec("bb").token_block.start - fam.spec("aa").token_block.start;
    REQUIRE(ta.size() == tb.size());
    for (std::size_t i = 0; i < ta.size(); ++i) {
        REQUIRE(tb[i] == ta[i] + offset);
    }
}

TEST_CASE("translation round trips exactly for every language pair", "[langforge]") {
    auto fam = lf::default_family(3);
    Rng rng(41);
    for (const auto& from : fam.specs()) {
        // Random mixed word/digit sequences in `from`.
        for (int rep = 0; rep < 5; ++rep) {
            lf::TokenSeq seq;
            const std::size_t len = 2 + rng.below(8);
            for (std::size_t i = 0; i < len; ++i) {
                if (rng.below(4) == 0) {
                    seq.push_back(fam.digit_token(static_cast<int>(rng.below(10))));
                } else {
                    seq.push_back(fam.word_token(
                        fam.lang_index(from.name),
                        static_cast<int>(rng.below(lf::kLanguageWords))));
                }
            }
            for (const auto& to : fam.specs()) {
                auto there = lf::translate_tokens(fam, seq, from.name, to.name);
                auto back = lf::translate_tokens(fam, there, to.name, from.name);
                REQUIRE(back == seq);
            }
        }
    }
}

TEST_CASE("digit-only sequences are unchanged by translation", "[langforge]") {
    auto fam = lf::default_family(4);
    lf::TokenSeq digits = {fam.digit_token(1), fam.digit_token(0), fam.digit_token(9)};
    for (const auto& to : fam.specs()) {
        REQUIRE(lf::translate_tokens(fam, digits, "low", to.name) == digits);
        REQUIRE(lf::translate_tokens(fam, digits, "mid", to.name) == digits);
    }
}

TEST_CASE("translation rejects tokens outside the expected blocks", "[langforge]") {
    auto fam = lf::default_family(5);
    lf::TokenSeq bad = {fam.word_token(fam.lang_index("high"), 3)};
    REQUIRE_THROWS_AS(lf::translate_tokens(fam, bad, "low", "en"), IndexError);
}

TEST_CASE("depth-1 reorder applies the adjacent-swap rule", "[langforge]") {
    auto fam = two_lang_family(6, 50, /*reorder_b=*/1);
    const auto en = fam.english_index();
    const auto xx = fam.lang_index("xx");
    // Four-word English phrase; depth 1 swaps (0,1) and (2,3).
    lf::TokenSeq phrase = {fam.word_token(en, 2), fam.word_token(en, 9),
                           fam.word_token(en, 17), fam.word_token(en, 30)};
    auto out = lf::translate_tokens(fam, phrase, "en", "xx");
    lf::TokenSeq expect = {fam.word_token(xx, 9), fam.word_token(xx, 2),
                           fam.word_token(xx, 30), fam.word_token(xx, 17)};
    REQUIRE(out == expect);
}

TEST_CASE("reorder permutes only word positions around fixed digits", "[langforge]") {
    auto fam = two_lang_family(7, 51, /*reorder_b=*/1);
    const auto en = fam.english_index();
    const auto xx = fam.lang_index("xx");
    lf::TokenSeq seq = {fam.word_token(en, 1), fam.digit_token(4),
                        fam.word_token(en, 2), fam.word_token(en, 3)};
    auto out = lf::translate_tokens(fam, seq, "en", "xx");
    // Word subsequence [w1, w2, w3] under one odd pass becomes [w2, w1, w3];
    // the digit keeps its slot.
    lf::TokenSeq expect = {fam.word_token(xx, 2), fam.digit_token(4),
                           fam.word_token(xx, 1), fam.word_token(xx, 3)};
    REQUIRE(out == expect);
}

TEST_CASE("task corpus answers satisfy integer arithmetic", "[langforge]") {
    auto fam = lf::default_family(8);
    auto corpus = lf::build_task_corpus(fam, "low", 100, 123);
    REQUIRE(corpus.size() == 100);
    const auto en = fam.english_index();
    for (const auto& rec : corpus) {
        // Decode the English prompt and recompute with plain integers.
        REQUIRE(rec.en.size() == 5);
        const int a = fam.word_index(en, rec.en[1]);
        const int op = fam.word_index(en, rec.en[2]);
        const int b = fam.word_index(en, rec.en[3]);
        const int expect = (op == lf::kWordPlus) ? a + b : a - b;
        REQUIRE(expect >= 0);
        REQUIRE(lf::digits_value(fam, rec.answer) == expect);
        // The stored parallel is exact.
        REQUIRE(lf::translate_tokens(fam, rec.src, rec.lang, "en") == rec.en);
    }
}

TEST_CASE("known problem renders the expected answer tokens", "[langforge]") {
    auto fam = lf::default_family(9);
    auto rec = lf::make_task_record(fam, "en", {2, 3, true});
    REQUIRE(rec.answer == lf::TokenSeq{fam.digit_token(5)});
    auto rec2 = lf::make_task_record(fam, "en", {20, 19, true});
    REQUIRE(rec2.answer == lf::TokenSeq{fam.digit_token(3), fam.digit_token(9)});
}

TEST_CASE("task corpora are deterministic and language-invariant in answers",
          "[langforge]") {
    auto fam = lf::default_family(10);
    auto a = lf::build_task_corpus(fam, "high", 50, 7);
    auto b = lf::build_task_corpus(fam, "high", 50, 7);
    REQUIRE(lf::corpus_to_jsonl(a) == lf::corpus_to_jsonl(b));
    auto c = lf::build_task_corpus(fam, "low", 50, 7);
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i].answer == c[i].answer);
        REQUIRE(a[i].en == c[i].en);
    }
}

TEST_CASE("degenerate mixture stays inside English plus neutral", "[langforge]") {
    std::vector<lf::LanguageSpec> specs = {
        {"en", {64, 80}, 0, 0, 1.0},
        {"xx", {144, 80}, 3, 0, 0.0},
    };
    auto fam = lf::make_language_family(11, specs, {0, 64});
    auto mix = lf::build_pretrain_mixture(fam, 200, 17);
    const auto& en_block = fam.spec("en").token_block;
    for (const auto& rec : mix) {
        REQUIRE(rec.lang == "en");
        for (lf::TokenId t : lf::render_task_sequence(fam, rec)) {
            REQUIRE((fam.is_neutral(t) || en_block.contains(t)));
        }
    }
}

TEST_CASE("mixture counts stay within the binomial bound", "[langforge]") {
    auto fam = lf::default_family(12);
    const std::size_t n = 4000;
    auto mix = lf::build_pretrain_mixture(fam, n, 19);
    std::map<std::string, double> counts;
    for (const auto& rec : mix) {
        counts[rec.lang] += 1.0;
    }
    for (const auto& spec : fam.specs()) {
        const double expect = static_cast<double>(n) * spec.resource_weight;
        const double bound = 2.0 * std::sqrt(expect);
        REQUIRE(std::abs(counts[spec.name] - expect) <= bound);
    }
}

TEST_CASE("mixture regenerates bit-identically from its seed", "[langforge]") {
    auto fam = lf::default_family(13);
    auto a = lf::build_pretrain_mixture(fam, 300, 23);
    auto b = lf::build_pretrain_mixture(fam, 300, 23);
    REQUIRE(lf::corpus_to_jsonl(a) == lf::corpus_to_jsonl(b));
}

TEST_CASE("corpus JSONL round trips", "[langforge]") {
    auto fam = lf::default_family(14);
    auto corpus = lf::build_task_corpus(fam, "mid", 20, 3);
    auto text = lf::corpus_to_jsonl(corpus);
    auto parsed = lf::corpus_from_jsonl(text);
    REQUIRE(lf::corpus_to_jsonl(parsed) == text);
}

TEST_CASE("family JSON round trips and preserves bijections", "[langforge]") {
    auto fam = lf::default_family(15);
    auto fam2 = lf::LanguageFamily::from_json(fam.to_json());
    auto prompt = lf::english_prompt(fam, {7, 5, false});
    REQUIRE(lf::translate_tokens(fam, prompt, "en", "mid") ==
            lf::translate_tokens(fam2, prompt, "en", "mid"));
}

TEST_CASE("rendered sequences have the documented layout", "[langforge]") {
    auto fam = lf::default_family(16);
    auto rec = lf::make_task_record(fam, "low", {12, 5, false});
    auto seq = lf::render_task_sequence(fam, rec);
    // prompt(5) ++ answer word ++ digit ++ eos
    REQUIRE(seq.size() == 5 + 1 + 1 + 1);
    REQUIRE(seq[5] == lf::answer_word_token(fam, "low", 7));
    REQUIRE(seq[6] == fam.digit_token(7));
    REQUIRE(seq.back() == fam.eos_token());

    auto tr = lf::render_translation_sequence(fam, rec);
    REQUIRE(tr.size() == 5 + 1 + 5 + 1);
    REQUIRE(tr[5] == fam.arrow_token());
    REQUIRE(tr.back() == fam.eos_token());

    auto sft = lf::render_sft_sequence(fam, rec);
    REQUIRE(sft.score_from == 6);
    REQUIRE(sft.tokens[5] == fam.arrow_token());
    REQUIRE(sft.tokens.size() == 12);
}

TEST_CASE("mixture rejects tiny totals and corpus rejects n=0", "[langforge]") {
    auto fam = lf::default_family(17);
    REQUIRE_THROWS_AS(lf::build_pretrain_mixture(fam, 50, 1), InvariantError);
    REQUIRE_THROWS_AS(lf::build_task_corpus(fam, "en", 0, 1), InvariantError);
}

TEST_CASE("default family covers the vocab exactly", "[langforge]") {
    auto fam = lf::default_family(18);
    REQUIRE(fam.min_vocab() == 512);
    // Every id belongs to exactly one block or the neutral range.
    for (lf::TokenId t = 0; t < 512; ++t) {
        int owners = fam.is_neutral(t) ? 1 : 0;
        for (const auto& s : fam.specs()) {
            owners += s.token_block.contains(t) ? 1 : 0;
        }
        REQUIRE(owners == 1);
    }
}
