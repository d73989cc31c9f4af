#ifndef LANGPROBE_ENCODER_PARAMS_HPP
#define LANGPROBE_ENCODER_PARAMS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <tuple>
#include <vector>

#include "../core/types.hpp"

/**
 * @file params.hpp
 *
 * @brief Encoder configuration and parameter sets.
 *
 * A parameter set is any struct with an ADL-visible `zip_parameters(f, sets...)` that calls
 * `f(name, matrix_of_each_set...)` once per named tensor, in a fixed order. Gradients and optimiser
 * moments reuse the parameter struct itself, so every generic helper below works for the encoder and
 * the heads alike.
 */

namespace langprobe {

struct EncoderConfig {
    std::size_t vocab_size = 0;
    std::size_t d_model = 64;
    std::size_t n_layers = 2;
    std::size_t n_heads = 4;
    std::size_t ff_width = 256;
    std::size_t max_position = 128;
    double dropout = 0.1;

    void validate() const {
        if (vocab_size < 5 || d_model < 1 || n_layers < 1 || n_heads < 1 || ff_width < 1 || max_position < 1) {
            throw Error("encoder dimensions must be at least 1 (and the vocabulary must extend past the special tokens)");
        }
        if (d_model % n_heads != 0) {
            throw Error("d_model (" + std::to_string(d_model) + ") is not divisible by n_heads (" + std::to_string(n_heads) + ")");
        }
        if (!(dropout >= 0 && dropout < 1)) {
            throw Error("dropout rate must lie in [0, 1)");
        }
    }

    bool operator==(const EncoderConfig&) const = default;
};

template<typename Scalar_>
struct LayerParams {
    Matrix<Scalar_> norm1_gain, norm1_bias;
    Matrix<Scalar_> query, query_bias, key, key_bias, value, value_bias, output, output_bias;
    Matrix<Scalar_> norm2_gain, norm2_bias;
    Matrix<Scalar_> ff_in, ff_in_bias, ff_out, ff_out_bias;
};

template<typename Function_, typename... Layers_>
void zip_layer_fields(Function_&& f, Layers_&... layers) {
    f("norm1.gain", layers.norm1_gain...);
    f("norm1.bias", layers.norm1_bias...);
    f("attention.query", layers.query...);
    f("attention.query_bias", layers.query_bias...);
    f("attention.key", layers.key...);
    f("attention.key_bias", layers.key_bias...);
    f("attention.value", layers.value...);
    f("attention.value_bias", layers.value_bias...);
    f("attention.output", layers.output...);
    f("attention.output_bias", layers.output_bias...);
    f("norm2.gain", layers.norm2_gain...);
    f("norm2.bias", layers.norm2_bias...);
    f("ff.in", layers.ff_in...);
    f("ff.in_bias", layers.ff_in_bias...);
    f("ff.out", layers.ff_out...);
    f("ff.out_bias", layers.ff_out_bias...);
}

/**
 * Every trainable tensor of the encoder, plus the output bias of the tied masked-token predictor.
 */
template<typename Scalar_>
struct EncoderParams {
    Matrix<Scalar_> token_embedding;     ///< vocab x d
    Matrix<Scalar_> position_embedding;  ///< max_position x d
    std::vector<LayerParams<Scalar_> > layers;
    Matrix<Scalar_> final_gain, final_bias;
    Matrix<Scalar_> mlm_bias;            ///< 1 x vocab
};

template<typename Function_, typename... Sets_>
void zip_encoder_impl(Function_& f, Sets_&... sets) {
    f("token_embedding", sets.token_embedding...);
    f("position_embedding", sets.position_embedding...);
    const std::size_t n_layers = std::get<0>(std::forward_as_tuple(sets...)).layers.size();
    for (std::size_t l = 0; l < n_layers; ++l) {
        const std::string prefix = "layer" + std::to_string(l) + ".";
        zip_layer_fields([&](const char* name, auto&... tensors) { f(prefix + name, tensors...); }, sets.layers[l]...);
    }
    f("final_norm.gain", sets.final_gain...);
    f("final_norm.bias", sets.final_bias...);
    f("mlm.bias", sets.mlm_bias...);
}

template<typename Function_, typename First_, typename... Rest_>
void zip_parameters(Function_&& f, EncoderParams<First_>& first, Rest_&... rest) {
    zip_encoder_impl(f, first, rest...);
}

template<typename Function_, typename First_, typename... Rest_>
void zip_parameters(Function_&& f, const EncoderParams<First_>& first, Rest_&... rest) {
    zip_encoder_impl(f, first, rest...);
}

/**
 * Randomly initialised encoder parameters.
 * Embeddings and weight matrices are normal with standard deviation 1/sqrt(fan-in) (0.1 for embeddings),
 * residual output projections are further scaled by 1/sqrt(2 * n_layers); biases start at zero and
 * layer-norm gains at one.
 */
template<typename Scalar_>
EncoderParams<Scalar_> init_encoder_params(const EncoderConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);
    const auto d = static_cast<Eigen::Index>(config.d_model);
    const auto ff = static_cast<Eigen::Index>(config.ff_width);

    auto normal = [&](Eigen::Index rows, Eigen::Index cols, double sd) {
        Matrix<Scalar_> m(rows, cols);
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            m.data()[i] = static_cast<Scalar_>(sd * standard_normal(rng));
        }
        return m;
    };
    auto zeros = [](Eigen::Index rows, Eigen::Index cols) { return Matrix<Scalar_>::Zero(rows, cols).eval(); };
    auto ones = [](Eigen::Index cols) { return Matrix<Scalar_>::Ones(1, cols).eval(); };

    const double sd_d = 1.0 / std::sqrt(static_cast<double>(d));
    const double sd_ff = 1.0 / std::sqrt(static_cast<double>(ff));
    const double residual = 1.0 / std::sqrt(2.0 * static_cast<double>(config.n_layers));

    EncoderParams<Scalar_> p;
    p.token_embedding = normal(static_cast<Eigen::Index>(config.vocab_size), d, 0.1);
    p.position_embedding = normal(static_cast<Eigen::Index>(config.max_position), d, 0.1);
    for (std::size_t l = 0; l < config.n_layers; ++l) {
        LayerParams<Scalar_> layer;
        layer.norm1_gain = ones(d);
        layer.norm1_bias = zeros(1, d);
        layer.query = normal(d, d, sd_d);
        layer.query_bias = zeros(1, d);
        layer.key = normal(d, d, sd_d);
        layer.key_bias = zeros(1, d);
        layer.value = normal(d, d, sd_d);
        layer.value_bias = zeros(1, d);
        layer.output = normal(d, d, sd_d * residual);
        layer.output_bias = zeros(1, d);
        layer.norm2_gain = ones(d);
        layer.norm2_bias = zeros(1, d);
        layer.ff_in = normal(d, ff, sd_d);
        layer.ff_in_bias = zeros(1, ff);
        layer.ff_out = normal(ff, d, sd_ff * residual);
        layer.ff_out_bias = zeros(1, d);
        p.layers.push_back(std::move(layer));
    }
    p.final_gain = ones(d);
    p.final_bias = zeros(1, d);
    p.mlm_bias = zeros(1, static_cast<Eigen::Index>(config.vocab_size));
    return p;
}

/**
 * A parameter set of the same shapes, filled with zeros.
 */
template<typename Params_>
Params_ zeros_like(const Params_& params) {
    Params_ out = params;
    zip_parameters([](const std::string&, auto& m) { m.setZero(); }, out);
    return out;
}

template<typename Params_>
void set_zero(Params_& params) {
    zip_parameters([](const std::string&, auto& m) { m.setZero(); }, params);
}

/**
 * `target += scale * source`, tensor by tensor.
 */
template<typename Params_, typename Scalar_>
void add_scaled(Params_& target, const Params_& source, Scalar_ scale) {
    zip_parameters([&](const std::string&, auto& t, const auto& s) { t += scale * s; }, target, source);
}

template<typename Params_, typename Scalar_>
void scale_all(Params_& params, Scalar_ factor) {
    zip_parameters([&](const std::string&, auto& m) { m *= factor; }, params);
}

template<typename Params_>
std::size_t parameter_count(const Params_& params) {
    std::size_t n = 0;
    zip_parameters([&](const std::string&, const auto& m) { n += static_cast<std::size_t>(m.size()); }, params);
    return n;
}

template<typename Params_>
bool all_finite(const Params_& params) {
    bool ok = true;
    zip_parameters([&](const std::string&, const auto& m) { ok = ok && m.allFinite(); }, params);
    return ok;
}

/**
 * Hash over names, shapes and raw values. Equal fingerprints mean bit-identical parameters
 * (up to the odds of a 64-bit collision).
 */
template<typename Params_>
std::uint64_t fingerprint(const Params_& params) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    zip_parameters([&](const std::string& name, const auto& m) {
        h = fnv1a(name.data(), name.size(), h);
        const std::int64_t shape[2] = { static_cast<std::int64_t>(m.rows()), static_cast<std::int64_t>(m.cols()) };
        h = fnv1a(shape, sizeof(shape), h);
        h = fnv1a(m.data(), static_cast<std::size_t>(m.size()) * sizeof(*m.data()), h);
    }, params);
    return h;
}

/**
 * Largest absolute entry over all tensors.
 */
template<typename Params_>
double max_abs(const Params_& params) {
    double best = 0;
    zip_parameters([&](const std::string&, const auto& m) {
        if (m.size()) {
            best = std::max(best, static_cast<double>(m.cwiseAbs().maxCoeff()));
        }
    }, params);
    return best;
}

template<typename Target_, typename Source_>
EncoderParams<Target_> cast_params(const EncoderParams<Source_>& source) {
    EncoderParams<Target_> out;
    out.layers.resize(source.layers.size());
    zip_parameters([](const std::string&, auto& t, const auto& s) { t = s.template cast<Target_>(); }, out, source);
    return out;
}

}

#endif
