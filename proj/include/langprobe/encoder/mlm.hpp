#ifndef LANGPROBE_ENCODER_MLM_HPP
#define LANGPROBE_ENCODER_MLM_HPP

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "../data/example.hpp"
#include "../heads/head.hpp"
#include "../training/adam.hpp"
#include "encoder.hpp"

/**
 * @file mlm.hpp
 *
 * @brief Masked-token pre-training with an output projection tied to the token embeddings.
 */

namespace langprobe {

struct MlmOptions {
    double mask_rate = 0.15;
    std::size_t steps = 2000;
    std::size_t batch_size = 16;
    double learning_rate = 1e-3;
    AdamSettings adam;

    /**
     * Of the selected positions, this share is replaced by `MASK`, half of the rest by a random
     * non-special token, and the remainder left unchanged (BERT's 80/10/10 scheme).
     */
    double replace_with_mask = 0.8;
};

struct MlmResult {
    std::vector<double> loss_curve;  ///< mean cross-entropy over masked positions, per step
};

namespace mlm_detail {

/**
 * Pick `round(rate * m)` (at least one) of the `m` maskable positions.
 */
inline std::vector<std::size_t> choose_masked(const std::vector<int>& tokens, double rate, Rng& rng) {
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (!is_special(tokens[i])) {
            candidates.push_back(i);
        }
    }
    if (candidates.empty()) {
        return candidates;
    }
    auto count = static_cast<std::size_t>(std::lround(rate * static_cast<double>(candidates.size())));
    count = std::clamp<std::size_t>(count, 1, candidates.size());
    for (std::size_t i = 0; i < count; ++i) {
        std::swap(candidates[i], candidates[i + uniform_index(rng, candidates.size() - i)]);
    }
    candidates.resize(count);
    std::sort(candidates.begin(), candidates.end());
    return candidates;
}

/**
 * Logits over the vocabulary for the given rows of an encoder output.
 */
template<typename Scalar_>
Matrix<Scalar_> mlm_logits(const EncoderParams<Scalar_>& params, const Matrix<Scalar_>& rows) {
    return (rows * params.token_embedding.transpose()).rowwise() + params.mlm_bias.row(0);
}

}

/**
 * Pre-train `model` in place. Each step samples `batch_size` sequences (with replacement), corrupts a
 * `mask_rate` share of their non-special tokens and minimises the cross-entropy of recovering the originals.
 * Throws if the loss becomes non-finite.
 */
template<typename Scalar_>
MlmResult mlm_pretrain(EncoderModel<Scalar_>& model, const std::vector<TokenSequence>& corpus, const MlmOptions& options, std::uint64_t seed) {
    if (!(options.mask_rate > 0 && options.mask_rate < 1)) {
        throw Error("mask rate must lie in (0, 1)");
    }
    if (options.steps > 0 && corpus.empty()) {
        throw Error("masked-token pre-training needs a non-empty corpus");
    }
    if (options.batch_size < 1) {
        throw Error("batch size must be at least 1");
    }
    const auto vocab = model.config().vocab_size;
    Rng sample_rng(derive_seed(seed, 0));
    Rng dropout_rng(derive_seed(seed, 1));

    MlmResult result;
    AdamState<EncoderParams<Scalar_> > adam(model.params());
    auto grads = zeros_like(model.params());

    struct Item {
        GradientTape<Scalar_> tape;
        Matrix<Scalar_> output;
        std::vector<std::size_t> positions;
        std::vector<int> originals;
    };
    std::vector<Item> batch(options.batch_size);

    for (std::size_t step = 0; step < options.steps; ++step) {
        std::size_t total = 0;
        for (auto& item : batch) {
            const auto& seq = corpus[uniform_index(sample_rng, corpus.size())];
            std::vector<int> tokens = seq.tokens;
            item.positions = mlm_detail::choose_masked(tokens, options.mask_rate, sample_rng);
            item.originals.clear();
            for (auto pos : item.positions) {
                item.originals.push_back(tokens[pos]);
                const double r = uniform01(sample_rng);
                if (r < options.replace_with_mask) {
                    tokens[pos] = MASK;
                } else if (r < options.replace_with_mask + (1 - options.replace_with_mask) / 2) {
                    tokens[pos] = num_special_tokens + static_cast<int>(uniform_index(sample_rng, vocab - num_special_tokens));
                }
            }
            total += item.positions.size();
            item.output = model.forward(tokens, item.tape, &dropout_rng);
        }
        if (total == 0) {
            result.loss_curve.push_back(0);
            continue;
        }

        set_zero(grads);
        double loss = 0;
        const auto inv_total = static_cast<Scalar_>(1.0 / static_cast<double>(total));
        for (auto& item : batch) {
            if (item.positions.empty()) {
                item.tape.consumed = true;
                continue;
            }
            const auto m = static_cast<Eigen::Index>(item.positions.size());
            Matrix<Scalar_> rows(m, item.output.cols());
            for (Eigen::Index r = 0; r < m; ++r) {
                rows.row(r) = item.output.row(static_cast<Eigen::Index>(item.positions[static_cast<std::size_t>(r)]));
            }
            Matrix<Scalar_> logits = mlm_detail::mlm_logits(model.params(), rows);
            Matrix<Scalar_> probs = softmax_rows(logits);
            for (Eigen::Index r = 0; r < m; ++r) {
                const auto gold = static_cast<std::size_t>(item.originals[static_cast<std::size_t>(r)]);
                loss += cross_entropy_logits(logits.row(r), gold);
                probs(r, static_cast<Eigen::Index>(gold)) -= Scalar_(1);
            }
            probs *= inv_total;
            grads.token_embedding.noalias() += probs.transpose() * rows;
            grads.mlm_bias.row(0) += probs.colwise().sum();
            Matrix<Scalar_> drows = probs * model.params().token_embedding;
            Matrix<Scalar_> doutput = Matrix<Scalar_>::Zero(item.output.rows(), item.output.cols());
            for (Eigen::Index r = 0; r < m; ++r) {
                doutput.row(static_cast<Eigen::Index>(item.positions[static_cast<std::size_t>(r)])) = drows.row(r);
            }
            model.backward(item.tape, doutput, grads);
        }
        loss /= static_cast<double>(total);
        if (!std::isfinite(loss)) {
            throw Error("masked-token pre-training diverged at step " + std::to_string(step) + " (loss is not finite)");
        }
        result.loss_curve.push_back(loss);
        adam_step(model.params(), grads, adam, options.learning_rate, options.adam);
    }
    return result;
}

/**
 * Share of masked positions whose original token is the argmax prediction (evaluation mode, every
 * selected position replaced by `MASK`).
 */
template<typename Scalar_>
double mlm_accuracy(const EncoderModel<Scalar_>& model, const std::vector<TokenSequence>& corpus, double mask_rate, std::uint64_t seed) {
    Rng rng(seed);
    std::size_t correct = 0, total = 0;
    for (const auto& seq : corpus) {
        std::vector<int> tokens = seq.tokens;
        auto positions = mlm_detail::choose_masked(tokens, mask_rate, rng);
        for (auto pos : positions) {
            tokens[pos] = MASK;
        }
        auto out = model.encode(tokens);
        for (auto pos : positions) {
            Matrix<Scalar_> row = out.row(static_cast<Eigen::Index>(pos));
            auto logits = mlm_detail::mlm_logits(model.params(), row);
            correct += argmax(logits.row(0)) == seq.tokens[pos];
            ++total;
        }
    }
    return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

inline std::vector<TokenSequence> sequences_of(const std::vector<LabeledExample>& examples) {
    std::vector<TokenSequence> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) {
        out.push_back(ex.sequence);
    }
    return out;
}

}

#endif
