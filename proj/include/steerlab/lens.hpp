// Copyright (c) 2026 the steerlab authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "steerlab/langforge.hpp"
#include "steerlab/linalg.hpp"
#include "steerlab/model.hpp"
#include "steerlab/steering.hpp"

namespace steerlab::lens {

using Json = nlohmann::ordered_json;
using langforge::LanguageFamily;
using langforge::ParallelCorpus;
using tinylm::TokenSeq;
using tinylm::TransformerModel;

/// Per-layer probability mass assigned to each language's token block. The
/// lens applies the final RMS norm before the unembedding at every hook, so
/// the top-layer row reproduces the model's output distribution exactly.
struct LogitLensReport {
    std::vector<std::string> columns;  // language names ++ "neutral" [++ "other"]
    Matrix masses;                     // (n_layers + 1) x columns, rows sum to 1
    bool last_token_only = false;
    std::string model_digest;
    std::string prompt_set_digest;
    Json injection = nullptr;

    Json to_json() const {
        Json j;
        j["columns"] = columns;
        j["last_token_only"] = last_token_only;
        j["model_digest"] = model_digest;
        j["prompt_set_digest"] = prompt_set_digest;
        j["injection"] = injection;
        j["rows"] = Json::array();
        for (std::size_t r = 0; r < masses.rows; ++r) {
            Json row = Json::array();
            for (std::size_t c = 0; c < masses.cols; ++c) {
                row.push_back(masses.at(r, c));
            }
            j["rows"].push_back(row);
        }
        return j;
    }

    std::string to_csv() const {
        std::string out = "layer";
        for (const auto& c : columns) {
            out += "," + c;
        }
        out += "\n";
        for (std::size_t r = 0; r < masses.rows; ++r) {
            out += std::to_string(r);
            for (std::size_t c = 0; c < masses.cols; ++c) {
                out += "," + fmt17(masses.at(r, c));
            }
            out += "\n";
        }
        return out;
    }

    double mass(std::size_t layer, const std::string& column) const {
        for (std::size_t c = 0; c < columns.size(); ++c) {
            if (columns[c] == column) {
                return masses.at(layer, c);
            }
        }
        throw UsageError("lens report has no column " + column);
    }
};

inline std::string prompt_set_digest(const std::vector<TokenSeq>& prompts) {
    std::string bytes;
    for (const auto& p : prompts) {
        for (auto t : p) {
            bytes += std::to_string(t);
            bytes += ",";
        }
        bytes += ";";
    }
    return digest_of_bytes(bytes);
}

/// Project residuals at every hook through final norm + unembedding, softmax,
/// and average each language block's mass over positions and prompts.
inline LogitLensReport logit_lens_masses(
    const TransformerModel& model, const LanguageFamily& family,
    const std::vector<TokenSeq>& prompts,
    const std::optional<tinylm::InjectionSpec>& injection = {},
    bool last_token_only = false) {
    if (prompts.empty()) {
        throw InvariantError("logit_lens_masses: empty prompt set");
    }
    const auto& cfg = model.config();
    const auto V = static_cast<std::size_t>(cfg.vocab_size);
    const auto d = static_cast<std::size_t>(cfg.d_model);
    const std::size_t hooks = static_cast<std::size_t>(cfg.n_layers) + 1;

    // Column map: one per language, then neutral, then (if the blocks do not
    // cover the vocab) a residual "other" column.
    std::vector<int> column_of(V, -1);
    const auto& specs = family.specs();
    std::vector<std::string> columns;
    for (std::size_t li = 0; li < specs.size(); ++li) {
        columns.push_back(specs[li].name);
        for (auto t = specs[li].token_block.start; t < specs[li].token_block.end(); ++t) {
            if (static_cast<std::size_t>(t) < V) {
                column_of[static_cast<std::size_t>(t)] = static_cast<int>(li);
            }
        }
    }
    const int neutral_col = static_cast<int>(columns.size());
    columns.push_back("neutral");
    for (auto t = family.neutral_block().start; t < family.neutral_block().end(); ++t) {
        if (static_cast<std::size_t>(t) < V) {
            column_of[static_cast<std::size_t>(t)] = neutral_col;
        }
    }
    bool has_other = false;
    for (std::size_t t = 0; t < V; ++t) {
        if (column_of[t] < 0) {
            has_other = true;
            break;
        }
    }
    int other_col = -1;
    if (has_other) {
        other_col = static_cast<int>(columns.size());
        columns.push_back("other");
        for (std::size_t t = 0; t < V; ++t) {
            if (column_of[t] < 0) {
                column_of[t] = other_col;
            }
        }
    }

    const auto& gain = model.final_norm_gain()->value;
    const auto& unembed = model.unembedding()->value;
    Matrix acc(hooks, columns.size());
    std::vector<double> logits(V);

    for (const auto& prompt : prompts) {
        auto trace = tinylm::forward_with_trace(model, prompt, injection);
        for (std::size_t h = 0; h < hooks; ++h) {
            const Matrix& res = trace.residuals[h];
            const std::size_t first_row = last_token_only ? res.rows - 1 : 0;
            std::vector<double> row_acc(columns.size(), 0.0);
            for (std::size_t r = first_row; r < res.rows; ++r) {
                std::vector<double> x(res.row(r), res.row(r) + d);
                auto normed = numerics::rms_norm(x, gain, tinylm::kRmsEps);
                for (std::size_t c = 0; c < V; ++c) {
                    double s = 0.0;
                    for (std::size_t k = 0; k < d; ++k) {
                        s += normed[k] * unembed[k * V + c];
                    }
                    logits[c] = s;
                }
                auto probs = numerics::softmax(logits);
                for (std::size_t c = 0; c < V; ++c) {
                    row_acc[static_cast<std::size_t>(column_of[c])] += probs[c];
                }
            }
            const double inv_rows = 1.0 / static_cast<double>(res.rows - first_row);
            for (std::size_t c = 0; c < columns.size(); ++c) {
                acc.at(h, c) += row_acc[c] * inv_rows;
            }
        }
    }
    const double inv_prompts = 1.0 / static_cast<double>(prompts.size());
    for (double& v : acc.a) {
        v *= inv_prompts;
    }

    LogitLensReport report;
    report.columns = std::move(columns);
    report.masses = std::move(acc);
    report.last_token_only = last_token_only;
    report.model_digest = model.digest();
    report.prompt_set_digest = prompt_set_digest(prompts);
    if (injection.has_value()) {
        report.injection = Json{{"layer", injection->layer},
                                {"coefficient", injection->coefficient},
                                {"direction", injection->direction}};
    }
    return report;
}

// ---------------------------------------------------------------------------

/// Per-layer cosine similarity between the corpus-mean pooled states of a
/// language and English. Fig-5-style curves carry a fixed 0.5 threshold.
struct SimilarityReport {
    std::string language;
    std::vector<double> cosine;  // one per hook
    double threshold = 0.5;
    std::string model_digest;
    std::string corpus_digest;

    Json to_json() const {
        return Json{{"language", language},
                    {"threshold", threshold},
                    {"model_digest", model_digest},
                    {"corpus_digest", corpus_digest},
                    {"cosine", cosine}};
    }

    std::string to_csv() const {
        std::string out = "layer,cosine,threshold\n";
        for (std::size_t i = 0; i < cosine.size(); ++i) {
            out += std::to_string(i) + "," + fmt17(cosine[i]) + "," + fmt17(threshold) +
                   "\n";
        }
        return out;
    }
};

inline SimilarityReport layer_similarity(const TransformerModel& model,
                                         const LanguageFamily& family,
                                         const std::string& lang,
                                         const ParallelCorpus& corpus) {
    if (corpus.empty()) {
        throw InvariantError("layer_similarity: empty corpus");
    }
    family.lang_index(lang);
    const std::size_t hooks = static_cast<std::size_t>(model.config().n_layers) + 1;
    const auto d = static_cast<std::size_t>(model.config().d_model);

    std::vector<std::vector<double>> mean_x(hooks, std::vector<double>(d, 0.0));
    std::vector<std::vector<double>> mean_en(hooks, std::vector<double>(d, 0.0));
    for (const auto& rec : corpus) {
        auto tx = tinylm::forward_with_trace(model, rec.src);
        auto te = tinylm::forward_with_trace(model, rec.en);
        for (std::size_t h = 0; h < hooks; ++h) {
            auto px = tx.residuals[h].mean_rows();
            auto pe = te.residuals[h].mean_rows();
            for (std::size_t i = 0; i < d; ++i) {
                mean_x[h][i] += px[i];
                mean_en[h][i] += pe[i];
            }
        }
    }
    SimilarityReport report;
    report.language = lang;
    report.cosine.resize(hooks);
    for (std::size_t h = 0; h < hooks; ++h) {
        report.cosine[h] = cosine_similarity(mean_x[h], mean_en[h]);
    }
    report.model_digest = model.digest();
    report.corpus_digest = langforge::corpus_digest(corpus);
    return report;
}

// ---------------------------------------------------------------------------

/// PCA projection of labeled point sets onto the top two principal
/// components of their union.
struct Projection2D {
    std::vector<std::string> labels;    // one per point, aligned with coords
    Matrix coords;                      // n x 2, centered
    double variance1 = 0.0;
    double variance2 = 0.0;

    Json to_json() const {
        Json j;
        j["variance1"] = variance1;
        j["variance2"] = variance2;
        j["points"] = Json::array();
        for (std::size_t i = 0; i < coords.rows; ++i) {
            j["points"].push_back(
                Json{{"label", labels[i]}, {"x", coords.at(i, 0)}, {"y", coords.at(i, 1)}});
        }
        return j;
    }

    std::string to_csv() const {
        std::string out = "label,x,y\n";
        for (std::size_t i = 0; i < coords.rows; ++i) {
            out += labels[i] + "," + fmt17(coords.at(i, 0)) + "," +
                   fmt17(coords.at(i, 1)) + "\n";
        }
        return out;
    }
};

inline Projection2D project_2d(
    const std::vector<std::pair<std::string, Matrix>>& point_sets) {
    std::size_t total = 0;
    std::size_t width = 0;
    for (const auto& [label, pts] : point_sets) {
        if (width == 0) {
            width = pts.cols;
        }
        if (pts.cols != width) {
            throw ShapeError("project_2d: inconsistent point widths");
        }
        total += pts.rows;
    }
    if (total < 2) {
        throw InvariantError("project_2d: need at least 2 points");
    }
    if (width < 2) {
        throw ShapeError("project_2d: points must have at least 2 dimensions");
    }
    Matrix all(total, width);
    std::vector<std::string> labels;
    labels.reserve(total);
    std::size_t row = 0;
    for (const auto& [label, pts] : point_sets) {
        for (std::size_t r = 0; r < pts.rows; ++r) {
            std::copy(pts.row(r), pts.row(r) + width, all.row(row));
            labels.push_back(label);
            ++row;
        }
    }
    auto fit = linalg::pca(all, 2);
    if (!(fit.variances[0] > 0.0)) {
        throw NumericError("project_2d: degenerate rank-zero input");
    }
    Projection2D out;
    out.labels = std::move(labels);
    out.coords = Matrix(total, 2);
    for (std::size_t r = 0; r < total; ++r) {
        for (std::size_t c = 0; c < 2; ++c) {
            double s = 0.0;
            for (std::size_t k = 0; k < width; ++k) {
                s += (all.at(r, k) - fit.mean[k]) * fit.components.at(c, k);
            }
            out.coords.at(r, c) = s;
        }
    }
    out.variance1 = fit.variances[0];
    out.variance2 = fit.variances[1];
    return out;
}

}  // namespace steerlab::lens
