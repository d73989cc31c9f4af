#ifndef LANGPROBE_HEADS_HEAD_HPP
#define LANGPROBE_HEADS_HEAD_HPP

#include <algorithm>
#include <cmath>
#include <string>

#include "../core/types.hpp"
#include "../encoder/params.hpp"

namespace langprobe {

/**
 * Floor applied to probabilities before taking logarithms.
 */
inline constexpr double log_epsilon = 1e-12;

/**
 * Single affine layer followed by a softmax.
 */
template<typename Scalar_>
struct ClassifierHead {
    Matrix<Scalar_> weight;  ///< d x n_classes
    Matrix<Scalar_> bias;    ///< 1 x n_classes

    std::size_t input_dim() const { return static_cast<std::size_t>(weight.rows()); }
    std::size_t n_classes() const { return static_cast<std::size_t>(weight.cols()); }
};

template<typename Function_, typename First_, typename... Rest_>
void zip_parameters(Function_&& f, ClassifierHead<First_>& first, Rest_&... rest) {
    f("weight", first.weight, rest.weight...);
    f("bias", first.bias, rest.bias...);
}

template<typename Function_, typename First_, typename... Rest_>
void zip_parameters(Function_&& f, const ClassifierHead<First_>& first, Rest_&... rest) {
    f("weight", first.weight, rest.weight...);
    f("bias", first.bias, rest.bias...);
}

/**
 * Fresh head with every weight and bias drawn from a normal distribution with mean 0 and standard deviation `stddev`.
 */
template<typename Scalar_>
ClassifierHead<Scalar_> make_head(std::size_t input_dim, std::size_t n_classes, double stddev, std::uint64_t seed) {
    if (n_classes < 2) {
        throw Error("a classifier head needs at least two classes");
    }
    if (input_dim < 1 || !(stddev >= 0)) {
        throw Error("invalid head dimensions or initialisation scale");
    }
    Rng rng(seed);
    ClassifierHead<Scalar_> head;
    head.weight.resize(static_cast<Eigen::Index>(input_dim), static_cast<Eigen::Index>(n_classes));
    head.bias.resize(1, static_cast<Eigen::Index>(n_classes));
    for (Eigen::Index i = 0; i < head.weight.size(); ++i) {
        head.weight.data()[i] = static_cast<Scalar_>(stddev * standard_normal(rng));
    }
    for (Eigen::Index i = 0; i < head.bias.size(); ++i) {
        head.bias.data()[i] = static_cast<Scalar_>(stddev * standard_normal(rng));
    }
    return head;
}

/**
 * Row-wise softmax with max-subtraction.
 */
template<typename Derived_>
Matrix<typename Derived_::Scalar> softmax_rows(const Eigen::MatrixBase<Derived_>& logits) {
    using Scalar = typename Derived_::Scalar;
    Matrix<Scalar> out = logits;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        out.row(i).array() -= out.row(i).maxCoeff();
        out.row(i) = out.row(i).array().exp();
        out.row(i) /= out.row(i).sum();
    }
    return out;
}

/**
 * Logits for a batch of embeddings (one per row).
 */
template<typename Scalar_, typename Derived_>
Matrix<Scalar_> head_logits(const ClassifierHead<Scalar_>& head, const Eigen::MatrixBase<Derived_>& inputs) {
    if (static_cast<std::size_t>(inputs.cols()) != head.input_dim()) {
        throw Error("embedding dimension " + std::to_string(inputs.cols()) + " does not match head input dimension " + std::to_string(head.input_dim()));
    }
    return (inputs * head.weight).rowwise() + head.bias.row(0);
}

/**
 * Class probabilities for a single embedding.
 */
template<typename Scalar_, typename Derived_>
RowVector<Scalar_> head_forward(const ClassifierHead<Scalar_>& head, const Eigen::MatrixBase<Derived_>& embedding) {
    if (embedding.rows() != 1) {
        throw Error("head_forward takes a single embedding row");
    }
    return softmax_rows(head_logits(head, embedding)).row(0);
}

/**
 * Add the head's parameter gradients for `grad_logits` (n x C) computed on `inputs` (n x d) into `grads`,
 * and return the gradient with respect to `inputs`.
 */
template<typename Scalar_, typename Derived_>
Matrix<Scalar_> head_backward(const ClassifierHead<Scalar_>& head, const Eigen::MatrixBase<Derived_>& inputs,
                              const Matrix<Scalar_>& grad_logits, ClassifierHead<Scalar_>& grads) {
    grads.weight.noalias() += inputs.transpose() * grad_logits;
    grads.bias.row(0) += grad_logits.colwise().sum();
    return grad_logits * head.weight.transpose();
}

/**
 * `-ln p[gold]`, with p[gold] floored at `log_epsilon`.
 */
template<typename Derived_>
double cross_entropy(const Eigen::MatrixBase<Derived_>& probabilities, std::size_t gold) {
    if (gold >= static_cast<std::size_t>(probabilities.size())) {
        throw Error("gold class " + std::to_string(gold) + " is out of range");
    }
    const double p = static_cast<double>(probabilities(static_cast<Eigen::Index>(gold)));
    return -std::log(std::max(p, log_epsilon));
}

/**
 * Cross-entropy from logits via log-sum-exp (what training uses).
 */
template<typename Derived_>
double cross_entropy_logits(const Eigen::MatrixBase<Derived_>& logits, std::size_t gold) {
    const double top = static_cast<double>(logits.maxCoeff());
    double sum = 0;
    for (Eigen::Index k = 0; k < logits.size(); ++k) {
        sum += std::exp(static_cast<double>(logits(k)) - top);
    }
    return top + std::log(sum) - static_cast<double>(logits(static_cast<Eigen::Index>(gold)));
}

/**
 * Index of the largest entry (first on ties).
 */
template<typename Derived_>
int argmax(const Eigen::MatrixBase<Derived_>& row) {
    Eigen::Index best = 0;
    row.maxCoeff(&best);
    return static_cast<int>(best);
}

}

#endif
