#ifndef LANGPROBE_ENCODER_ENCODER_HPP
#define LANGPROBE_ENCODER_ENCODER_HPP

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "../core/types.hpp"
#include "../data/example.hpp"
#include "params.hpp"

/**
 * @file encoder.hpp
 *
 * @brief Pre-layer-norm transformer encoder with hand-written backpropagation.
 *
 * Forward pass for a sequence of `n` tokens (rows are positions):
 *
 *     x = drop(E[tokens] + P[0..n))
 *     for each layer:
 *         x = x + drop(attention(norm1(x)))
 *         x = x + drop(ff_out(gelu(ff_in(norm2(x)))))
 *     y = final_norm(x)
 *
 * Attention is full bidirectional multi-head scaled dot-product attention without padding;
 * sequences are processed one at a time.
 */

namespace langprobe {

namespace encoder_detail {

inline constexpr double norm_epsilon = 1e-5;

template<typename Scalar_>
struct NormCache {
    Matrix<Scalar_> normalized;         ///< (x - mean) / std, n x d
    Eigen::Matrix<Scalar_, Eigen::Dynamic, 1> inv_std;
};

template<typename Scalar_>
Matrix<Scalar_> layer_norm(const Matrix<Scalar_>& x, const Matrix<Scalar_>& gain, const Matrix<Scalar_>& bias, NormCache<Scalar_>* cache) {
    const auto d = x.cols();
    Matrix<Scalar_> normalized(x.rows(), d);
    Eigen::Matrix<Scalar_, Eigen::Dynamic, 1> inv_std(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        Scalar_ mean = x.row(i).mean();
        auto centered = (x.row(i).array() - mean).eval();
        Scalar_ var = centered.square().mean();
        inv_std(i) = Scalar_(1) / std::sqrt(var + static_cast<Scalar_>(norm_epsilon));
        normalized.row(i) = centered * inv_std(i);
    }
    Matrix<Scalar_> out = (normalized.array().rowwise() * gain.row(0).array()).rowwise() + bias.row(0).array();
    if (cache) {
        cache->normalized = std::move(normalized);
        cache->inv_std = std::move(inv_std);
    }
    return out;
}

/**
 * Accumulates gain/bias gradients and returns the gradient with respect to the layer-norm input.
 */
template<typename Scalar_>
Matrix<Scalar_> layer_norm_backward(const Matrix<Scalar_>& grad_out, const NormCache<Scalar_>& cache, const Matrix<Scalar_>& gain,
                                    Matrix<Scalar_>& grad_gain, Matrix<Scalar_>& grad_bias) {
    const auto d = static_cast<Scalar_>(grad_out.cols());
    grad_gain.row(0) += (grad_out.array() * cache.normalized.array()).colwise().sum().matrix();
    grad_bias.row(0) += grad_out.colwise().sum();
    Matrix<Scalar_> grad_norm = grad_out.array().rowwise() * gain.row(0).array();
    Matrix<Scalar_> grad_in(grad_out.rows(), grad_out.cols());
    for (Eigen::Index i = 0; i < grad_out.rows(); ++i) {
        Scalar_ sum = grad_norm.row(i).sum();
        Scalar_ dot = grad_norm.row(i).dot(cache.normalized.row(i));
        grad_in.row(i) = (cache.inv_std(i) / d) * (d * grad_norm.row(i).array() - sum - cache.normalized.row(i).array() * dot).matrix();
    }
    return grad_in;
}

inline constexpr double gelu_c = 0.7978845608028654;  // sqrt(2 / pi)
inline constexpr double gelu_a = 0.044715;

template<typename Scalar_>
Scalar_ gelu(Scalar_ x) {
    const Scalar_ inner = static_cast<Scalar_>(gelu_c) * (x + static_cast<Scalar_>(gelu_a) * x * x * x);
    return Scalar_(0.5) * x * (Scalar_(1) + std::tanh(inner));
}

template<typename Scalar_>
Scalar_ gelu_grad(Scalar_ x) {
    const Scalar_ inner = static_cast<Scalar_>(gelu_c) * (x + static_cast<Scalar_>(gelu_a) * x * x * x);
    const Scalar_ t = std::tanh(inner);
    const Scalar_ dinner = static_cast<Scalar_>(gelu_c) * (Scalar_(1) + Scalar_(3 * gelu_a) * x * x);
    return Scalar_(0.5) * (Scalar_(1) + t) + Scalar_(0.5) * x * (Scalar_(1) - t * t) * dinner;
}

/**
 * Element-wise `gelu` of a whole matrix; also returns tanh of the inner term for the backward pass.
 */
template<typename Scalar_>
Matrix<Scalar_> gelu_matrix(const Matrix<Scalar_>& x, Matrix<Scalar_>& tanh_inner) {
    const auto c = static_cast<Scalar_>(gelu_c);
    const auto a = static_cast<Scalar_>(gelu_a);
    tanh_inner = (c * (x.array() + a * x.array().cube())).tanh().matrix();
    return (Scalar_(0.5) * x.array() * (Scalar_(1) + tanh_inner.array())).matrix();
}

template<typename Scalar_>
Matrix<Scalar_> gelu_grad_matrix(const Matrix<Scalar_>& x, const Matrix<Scalar_>& tanh_inner) {
    const auto c = static_cast<Scalar_>(gelu_c);
    const auto a3 = static_cast<Scalar_>(3 * gelu_a);
    const auto& t = tanh_inner.array();
    return (Scalar_(0.5) * (Scalar_(1) + t) + Scalar_(0.5) * x.array() * (Scalar_(1) - t.square()) * c * (Scalar_(1) + a3 * x.array().square())).matrix();
}

/**
 * Inverted dropout mask: entries are 0 with probability `rate`, else 1 / (1 - rate).
 */
template<typename Scalar_>
Matrix<Scalar_> dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
    Matrix<Scalar_> mask(rows, cols);
    const auto keep = static_cast<Scalar_>(1.0 / (1.0 - rate));
    for (Eigen::Index i = 0; i < mask.size(); ++i) {
        mask.data()[i] = uniform01(rng) < rate ? Scalar_(0) : keep;
    }
    return mask;
}

}

/**
 * Intermediates of one forward pass of one layer.
 */
template<typename Scalar_>
struct LayerTape {
    encoder_detail::NormCache<Scalar_> norm1, norm2;
    Matrix<Scalar_> normed1, normed2;
    Matrix<Scalar_> query, key, value;
    std::vector<Matrix<Scalar_> > attention;  ///< per head, n x n row-stochastic
    Matrix<Scalar_> context;
    Matrix<Scalar_> attention_mask;           ///< empty when dropout is off
    Matrix<Scalar_> ff_pre, ff_act, ff_tanh;
    Matrix<Scalar_> ff_mask;
};

/**
 * Everything `backward()` needs from one forward pass. A tape can be consumed once.
 */
template<typename Scalar_>
struct GradientTape {
    std::vector<int> tokens;
    Matrix<Scalar_> embedding_mask;
    std::vector<LayerTape<Scalar_> > layers;
    encoder_detail::NormCache<Scalar_> final_norm;
    bool consumed = false;
};

/**
 * Small transformer encoder producing one embedding per input token from its final layer.
 *
 * Evaluation-mode calls (`encode()`, `text_embedding()`) are const and safe to run concurrently.
 * Training mutates `params()` and must be driven by a single writer.
 */
template<typename Scalar_>
class EncoderModel {
public:
    using Scalar = Scalar_;

    EncoderModel() = default;

    EncoderModel(EncoderConfig config, std::uint64_t seed) :
        my_config(config), my_params(init_encoder_params<Scalar_>(config, seed)) {}

    EncoderModel(EncoderConfig config, EncoderParams<Scalar_> params) :
        my_config(config), my_params(std::move(params)) {
        my_config.validate();
        check_shapes();
    }

    const EncoderConfig& config() const { return my_config; }
    EncoderParams<Scalar_>& params() { return my_params; }
    const EncoderParams<Scalar_>& params() const { return my_params; }

    /**
     * A frozen encoder is never updated by the training routines.
     */
    bool frozen() const { return my_frozen; }
    void set_frozen(bool frozen) { my_frozen = frozen; }

    std::size_t d_model() const { return my_config.d_model; }

    /**
     * Evaluation-mode forward pass (no dropout): one row per token.
     */
    Matrix<Scalar_> encode(std::span<const int> tokens) const {
        return run(tokens, nullptr, nullptr);
    }

    /**
     * Pooled representation of a whole text: the output vector at position 0.
     */
    RowVector<Scalar_> text_embedding(std::span<const int> tokens) const {
        if (tokens.empty()) {
            throw Error("cannot embed an empty sequence");
        }
        return encode(tokens).row(0);
    }

    /**
     * Forward pass recording a tape. Dropout is active when `dropout_rng` is given and the configured rate is positive.
     */
    Matrix<Scalar_> forward(std::span<const int> tokens, GradientTape<Scalar_>& tape, Rng* dropout_rng) const {
        tape = GradientTape<Scalar_>();
        return run(tokens, &tape, dropout_rng);
    }

    /**
     * Backpropagate `grad_output` (n x d, the loss gradient with respect to the encoder output) through the
     * recorded pass and add the parameter gradients into `grads`.
     */
    void backward(GradientTape<Scalar_>& tape, const Matrix<Scalar_>& grad_output, EncoderParams<Scalar_>& grads) const;

    void check_shapes() const {
        const auto d = static_cast<Eigen::Index>(my_config.d_model);
        const auto ff = static_cast<Eigen::Index>(my_config.ff_width);
        auto expect = [](const Matrix<Scalar_>& m, Eigen::Index r, Eigen::Index c, const std::string& what) {
            if (m.rows() != r || m.cols() != c) {
                throw Error("parameter '" + what + "' has shape " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                            ", expected " + std::to_string(r) + "x" + std::to_string(c));
            }
        };
        expect(my_params.token_embedding, static_cast<Eigen::Index>(my_config.vocab_size), d, "token_embedding");
        expect(my_params.position_embedding, static_cast<Eigen::Index>(my_config.max_position), d, "position_embedding");
        if (my_params.layers.size() != my_config.n_layers) {
            throw Error("parameter set has " + std::to_string(my_params.layers.size()) + " layers, config says " + std::to_string(my_config.n_layers));
        }
        for (const auto& layer : my_params.layers) {
            expect(layer.query, d, d, "attention.query");
            expect(layer.key, d, d, "attention.key");
            expect(layer.value, d, d, "attention.value");
            expect(layer.output, d, d, "attention.output");
            expect(layer.ff_in, d, ff, "ff.in");
            expect(layer.ff_in_bias, 1, ff, "ff.in_bias");
            expect(layer.ff_out, ff, d, "ff.out");
            for (const auto* v : { &layer.norm1_gain, &layer.norm1_bias, &layer.query_bias, &layer.key_bias, &layer.value_bias,
                                   &layer.output_bias, &layer.norm2_gain, &layer.norm2_bias, &layer.ff_out_bias }) {
                expect(*v, 1, d, "layer vector");
            }
        }
        expect(my_params.final_gain, 1, d, "final_norm.gain");
        expect(my_params.final_bias, 1, d, "final_norm.bias");
        expect(my_params.mlm_bias, 1, static_cast<Eigen::Index>(my_config.vocab_size), "mlm.bias");
    }

private:
    Matrix<Scalar_> run(std::span<const int> tokens, GradientTape<Scalar_>* tape, Rng* rng) const;

    void check_input(std::span<const int> tokens) const {
        if (tokens.empty()) {
            throw Error("cannot encode an empty sequence");
        }
        if (tokens.size() > my_config.max_position) {
            throw Error("sequence of " + std::to_string(tokens.size()) + " tokens exceeds the maximum position " + std::to_string(my_config.max_position));
        }
        for (int t : tokens) {
            if (t < 0 || static_cast<std::size_t>(t) >= my_config.vocab_size) {
                throw Error("token id " + std::to_string(t) + " is out of range for a vocabulary of " + std::to_string(my_config.vocab_size));
            }
        }
    }

    EncoderConfig my_config;
    EncoderParams<Scalar_> my_params;
    bool my_frozen = false;
};

template<typename Scalar_>
Matrix<Scalar_> EncoderModel<Scalar_>::run(std::span<const int> tokens, GradientTape<Scalar_>* tape, Rng* rng) const {
    using namespace encoder_detail;
    check_input(tokens);
    const auto n = static_cast<Eigen::Index>(tokens.size());
    const auto d = static_cast<Eigen::Index>(my_config.d_model);
    const auto heads = static_cast<Eigen::Index>(my_config.n_heads);
    const auto dh = d / heads;
    const auto scale = static_cast<Scalar_>(1.0 / std::sqrt(static_cast<double>(dh)));
    const bool dropout = rng != nullptr && my_config.dropout > 0;

    Matrix<Scalar_> x(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        x.row(i) = my_params.token_embedding.row(tokens[static_cast<std::size_t>(i)]) + my_params.position_embedding.row(i);
    }
    if (tape) {
        tape->tokens.assign(tokens.begin(), tokens.end());
        tape->layers.resize(my_params.layers.size());
    }
    if (dropout) {
        auto mask = dropout_mask<Scalar_>(n, d, my_config.dropout, *rng);
        x.array() *= mask.array();
        if (tape) {
            tape->embedding_mask = std::move(mask);
        }
    }

    for (std::size_t l = 0; l < my_params.layers.size(); ++l) {
        const auto& p = my_params.layers[l];
        LayerTape<Scalar_> local;
        LayerTape<Scalar_>& t = tape ? tape->layers[l] : local;

        t.normed1 = layer_norm(x, p.norm1_gain, p.norm1_bias, &t.norm1);
        t.query = (t.normed1 * p.query).rowwise() + p.query_bias.row(0);
        t.key = (t.normed1 * p.key).rowwise() + p.key_bias.row(0);
        t.value = (t.normed1 * p.value).rowwise() + p.value_bias.row(0);
        t.context.resize(n, d);
        t.attention.resize(static_cast<std::size_t>(heads));
        for (Eigen::Index h = 0; h < heads; ++h) {
            Matrix<Scalar_> scores = scale * (t.query.middleCols(h * dh, dh) * t.key.middleCols(h * dh, dh).transpose());
            for (Eigen::Index i = 0; i < n; ++i) {
                scores.row(i).array() -= scores.row(i).maxCoeff();
            }
            scores = scores.array().exp();
            for (Eigen::Index i = 0; i < n; ++i) {
                scores.row(i) /= scores.row(i).sum();
            }
            t.context.middleCols(h * dh, dh).noalias() = scores * t.value.middleCols(h * dh, dh);
            t.attention[static_cast<std::size_t>(h)] = std::move(scores);
        }
        Matrix<Scalar_> attn_out = (t.context * p.output).rowwise() + p.output_bias.row(0);
        if (dropout) {
            t.attention_mask = dropout_mask<Scalar_>(n, d, my_config.dropout, *rng);
            attn_out.array() *= t.attention_mask.array();
        }
        x += attn_out;

        t.normed2 = layer_norm(x, p.norm2_gain, p.norm2_bias, &t.norm2);
        t.ff_pre = (t.normed2 * p.ff_in).rowwise() + p.ff_in_bias.row(0);
        t.ff_act = gelu_matrix(t.ff_pre, t.ff_tanh);
        Matrix<Scalar_> ff_out = (t.ff_act * p.ff_out).rowwise() + p.ff_out_bias.row(0);
        if (dropout) {
            t.ff_mask = dropout_mask<Scalar_>(n, d, my_config.dropout, *rng);
            ff_out.array() *= t.ff_mask.array();
        }
        x += ff_out;
    }

    return layer_norm(x, my_params.final_gain, my_params.final_bias, tape ? &tape->final_norm : nullptr);
}

template<typename Scalar_>
void EncoderModel<Scalar_>::backward(GradientTape<Scalar_>& tape, const Matrix<Scalar_>& grad_output, EncoderParams<Scalar_>& grads) const {
    using namespace encoder_detail;
    if (tape.consumed) {
        throw Error("gradient tape has already been consumed by a backward pass");
    }
    if (tape.layers.size() != my_params.layers.size() || tape.tokens.empty()) {
        throw Error("gradient tape does not come from a forward pass of this model");
    }
    const auto n = static_cast<Eigen::Index>(tape.tokens.size());
    const auto d = static_cast<Eigen::Index>(my_config.d_model);
    if (grad_output.rows() != n || grad_output.cols() != d) {
        throw Error("output gradient shape does not match the recorded forward pass");
    }
    tape.consumed = true;

    const auto heads = static_cast<Eigen::Index>(my_config.n_heads);
    const auto dh = d / heads;
    const auto scale = static_cast<Scalar_>(1.0 / std::sqrt(static_cast<double>(dh)));

    Matrix<Scalar_> dx = layer_norm_backward(grad_output, tape.final_norm, my_params.final_gain, grads.final_gain, grads.final_bias);

    for (std::size_t l = my_params.layers.size(); l-- > 0;) {
        const auto& p = my_params.layers[l];
        auto& g = grads.layers[l];
        const auto& t = tape.layers[l];

        // Feed-forward sub-block.
        Matrix<Scalar_> dff = dx;
        if (t.ff_mask.size()) {
            dff.array() *= t.ff_mask.array();
        }
        g.ff_out.noalias() += t.ff_act.transpose() * dff;
        g.ff_out_bias.row(0) += dff.colwise().sum();
        Matrix<Scalar_> dpre = dff * p.ff_out.transpose();
        dpre.array() *= gelu_grad_matrix(t.ff_pre, t.ff_tanh).array();
        g.ff_in.noalias() += t.normed2.transpose() * dpre;
        g.ff_in_bias.row(0) += dpre.colwise().sum();
        Matrix<Scalar_> dnormed2 = dpre * p.ff_in.transpose();
        dx += layer_norm_backward(dnormed2, t.norm2, p.norm2_gain, g.norm2_gain, g.norm2_bias);

        // Attention sub-block.
        Matrix<Scalar_> dattn = dx;
        if (t.attention_mask.size()) {
            dattn.array() *= t.attention_mask.array();
        }
        g.output.noalias() += t.context.transpose() * dattn;
        g.output_bias.row(0) += dattn.colwise().sum();
        Matrix<Scalar_> dcontext = dattn * p.output.transpose();

        Matrix<Scalar_> dq(n, d), dk(n, d), dv(n, d);
        for (Eigen::Index h = 0; h < heads; ++h) {
            const auto& probs = t.attention[static_cast<std::size_t>(h)];
            auto dctx_h = dcontext.middleCols(h * dh, dh);
            Matrix<Scalar_> dprobs = dctx_h * t.value.middleCols(h * dh, dh).transpose();
            dv.middleCols(h * dh, dh).noalias() = probs.transpose() * dctx_h;
            Matrix<Scalar_> dscores(n, n);
            for (Eigen::Index i = 0; i < n; ++i) {
                Scalar_ inner = dprobs.row(i).dot(probs.row(i));
                dscores.row(i) = probs.row(i).array() * (dprobs.row(i).array() - inner);
            }
            dscores *= scale;
            dq.middleCols(h * dh, dh).noalias() = dscores * t.key.middleCols(h * dh, dh);
            dk.middleCols(h * dh, dh).noalias() = dscores.transpose() * t.query.middleCols(h * dh, dh);
        }
        g.query.noalias() += t.normed1.transpose() * dq;
        g.key.noalias() += t.normed1.transpose() * dk;
        g.value.noalias() += t.normed1.transpose() * dv;
        g.query_bias.row(0) += dq.colwise().sum();
        g.key_bias.row(0) += dk.colwise().sum();
        g.value_bias.row(0) += dv.colwise().sum();
        Matrix<Scalar_> dnormed1 = dq * p.query.transpose();
        dnormed1.noalias() += dk * p.key.transpose();
        dnormed1.noalias() += dv * p.value.transpose();
        dx += layer_norm_backward(dnormed1, t.norm1, p.norm1_gain, g.norm1_gain, g.norm1_bias);
    }

    if (tape.embedding_mask.size()) {
        dx.array() *= tape.embedding_mask.array();
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        grads.token_embedding.row(tape.tokens[static_cast<std::size_t>(i)]) += dx.row(i);
        grads.position_embedding.row(i) += dx.row(i);
    }
}

/**
 * Final-layer embeddings of `sequence` in evaluation mode.
 */
template<typename Scalar_>
Matrix<Scalar_> encode(const EncoderModel<Scalar_>& model, const TokenSequence& sequence) {
    return model.encode(sequence.tokens);
}

/**
 * Text-level embedding: the final-layer vector at position 0.
 */
template<typename Scalar_>
RowVector<Scalar_> text_embedding(const EncoderModel<Scalar_>& model, const TokenSequence& sequence) {
    if (sequence.tokens.empty()) {
        throw Error("cannot embed an empty sequence");
    }
    return model.encode(sequence.tokens).row(0);
}

/**
 * Parameter gradients for one recorded pass, as a fresh zero-initialised set. Consumes `tape`.
 */
template<typename Scalar_>
EncoderParams<Scalar_> backward(const EncoderModel<Scalar_>& model, GradientTape<Scalar_>& tape, const Matrix<Scalar_>& grad_output) {
    auto grads = zeros_like(model.params());
    model.backward(tape, grad_output, grads);
    return grads;
}

}

#endif
