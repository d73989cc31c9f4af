#ifndef LANGPROBE_TRAINING_ADAM_HPP
#define LANGPROBE_TRAINING_ADAM_HPP

#include <cmath>
#include <string>

#include "../encoder/params.hpp"

namespace langprobe {

struct AdamSettings {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/**
 * First and second moment estimates for a parameter set, plus the step count.
 */
template<typename Params_>
struct AdamState {
    Params_ first;
    Params_ second;
    std::size_t step = 0;

    AdamState() = default;
    explicit AdamState(const Params_& params) : first(zeros_like(params)), second(zeros_like(params)) {}
};

/**
 * One bias-corrected Adam update of every tensor in `params`. Throws before touching anything if a
 * gradient is not finite.
 */
template<typename Params_>
void adam_step(Params_& params, const Params_& grads, AdamState<Params_>& state, double learning_rate, const AdamSettings& settings = {}) {
    zip_parameters([](const std::string& name, const auto& g) {
        if (!g.allFinite()) {
            throw Error("non-finite gradient for '" + name + "'");
        }
    }, grads);

    ++state.step;
    const double correction1 = 1 - std::pow(settings.beta1, static_cast<double>(state.step));
    const double correction2 = 1 - std::pow(settings.beta2, static_cast<double>(state.step));
    zip_parameters([&](const std::string&, auto& p, const auto& g, auto& m, auto& v) {
        using Scalar = typename std::decay_t<decltype(p)>::Scalar;
        const auto b1 = static_cast<Scalar>(settings.beta1);
        const auto b2 = static_cast<Scalar>(settings.beta2);
        m = b1 * m + (Scalar(1) - b1) * g;
        v = b2 * v + (Scalar(1) - b2) * g.cwiseAbs2();
        const auto step = static_cast<Scalar>(learning_rate / correction1);
        const auto c2 = static_cast<Scalar>(correction2);
        const auto eps = static_cast<Scalar>(settings.epsilon);
        p.array() -= step * m.array() / ((v.array() / c2).sqrt() + eps);
    }, params, grads, state.first, state.second);
}

}

#endif
