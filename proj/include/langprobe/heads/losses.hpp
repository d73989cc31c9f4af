#ifndef LANGPROBE_HEADS_LOSSES_HPP
#define LANGPROBE_HEADS_LOSSES_HPP

#include <cmath>
#include <string>

#include "head.hpp"

namespace langprobe {

struct GradReversalConfig {
    double lambda = 0.1;

    void validate() const {
        if (!(lambda >= 0)) {
            throw Error("gradient reversal lambda must be non-negative");
        }
    }
};

/**
 * Gradient reversal layer: identity forward.
 */
template<typename Derived_>
auto grad_reversal_forward(const Eigen::MatrixBase<Derived_>& x) {
    return x.eval();
}

/**
 * Gradient reversal layer: the upstream gradient multiplied by `-lambda`.
 */
template<typename Derived_>
auto grad_reversal_backward(const Eigen::MatrixBase<Derived_>& upstream, double lambda) {
    using Scalar = typename Derived_::Scalar;
    return (upstream * static_cast<Scalar>(-lambda)).eval();
}

/**
 * How the language classifier's output is scored in the combined loss.
 */
enum class LanguageTerm {
    /**
     * `-sum_k ln y_b[k]`: the sum of negative log-probabilities over all classes. Minimised (value K ln K)
     * exactly at the uniform distribution. This is the default.
     */
    NegLogSum,

    /**
     * Negative Shannon entropy `sum_k y_b[k] ln y_b[k]`, minimised (value -ln K) at the uniform distribution.
     */
    NegEntropy
};

inline const char* to_string(LanguageTerm term) {
    return term == LanguageTerm::NegLogSum ? "neg-log-sum" : "neg-entropy";
}

inline LanguageTerm parse_language_term(const std::string& name) {
    if (name == "neg-log-sum") {
        return LanguageTerm::NegLogSum;
    } else if (name == "neg-entropy") {
        return LanguageTerm::NegEntropy;
    }
    throw Error("unknown language term '" + name + "' (expected neg-log-sum or neg-entropy)");
}

struct EntropyLossConfig {
    double w = 0.5;
    LanguageTerm term = LanguageTerm::NegLogSum;

    void validate() const {
        if (!(w >= 0 && w <= 1)) {
            throw Error("entropy loss weight w must lie in [0, 1]");
        }
    }
};

/**
 * Value of the language term for one probability vector (probabilities floored at `log_epsilon`).
 */
template<typename Derived_>
double language_term(const Eigen::MatrixBase<Derived_>& probabilities, LanguageTerm term = LanguageTerm::NegLogSum) {
    double out = 0;
    for (Eigen::Index k = 0; k < probabilities.size(); ++k) {
        const double p = std::max(static_cast<double>(probabilities(k)), log_epsilon);
        out += term == LanguageTerm::NegLogSum ? -std::log(p) : p * std::log(p);
    }
    return out;
}

/**
 * Gradient of `language_term()` with respect to the logits that produced `probabilities` through a softmax.
 * For the default term this is `K * p - 1`.
 */
template<typename Derived_>
RowVector<typename Derived_::Scalar> language_term_grad(const Eigen::MatrixBase<Derived_>& probabilities, LanguageTerm term = LanguageTerm::NegLogSum) {
    using Scalar = typename Derived_::Scalar;
    const auto k = static_cast<Scalar>(probabilities.size());
    RowVector<Scalar> grad(probabilities.size());
    if (term == LanguageTerm::NegLogSum) {
        grad = (k * probabilities.array() - Scalar(1)).matrix();
    } else {
        const auto value = static_cast<Scalar>(language_term(probabilities, term));
        for (Eigen::Index j = 0; j < probabilities.size(); ++j) {
            const auto p = std::max(probabilities(j), static_cast<Scalar>(log_epsilon));
            grad(j) = probabilities(j) * (std::log(p) - value);
        }
    }
    return grad;
}

/**
 * Combined loss `(1 - w) * XE(y_a, gold) + w * language_term(y_b)`.
 */
template<typename DerivedA_, typename DerivedB_>
double entropy_max_loss(const Eigen::MatrixBase<DerivedA_>& task_probs, std::size_t gold,
                        const Eigen::MatrixBase<DerivedB_>& language_probs, const EntropyLossConfig& config) {
    config.validate();
    return (1 - config.w) * cross_entropy(task_probs, gold) + config.w * language_term(language_probs, config.term);
}

}

#endif
