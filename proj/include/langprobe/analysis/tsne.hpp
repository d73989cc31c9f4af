#ifndef LANGPROBE_ANALYSIS_TSNE_HPP
#define LANGPROBE_ANALYSIS_TSNE_HPP

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "../core/types.hpp"

/**
 * @file tsne.hpp
 *
 * @brief Exact t-SNE (no tree or grid approximation), O(N^2) per iteration.
 */

namespace langprobe {

struct TsneSettings {
    double perplexity = 30;
    std::size_t iterations = 1000;
    double learning_rate = 200;
    double early_exaggeration = 12;
    std::size_t exaggeration_iterations = 250;
    double initial_momentum = 0.5;
    double final_momentum = 0.8;
    std::size_t momentum_switch = 250;

    /**
     * Tolerance on each row's achieved perplexity during the bandwidth search.
     */
    double perplexity_tolerance = 1e-5;
};

struct TsneResult {
    Matrix<double> coordinates;  ///< n x 2
    TsneSettings settings;
    std::vector<double> row_perplexity;
    double kl_initial = 0;
    double kl_final = 0;
};

namespace tsne_detail {

inline void check_finite(const Matrix<double>& m, const char* what) {
    if (!m.allFinite()) {
        throw Error(std::string("t-SNE produced a non-finite ") + what);
    }
}

/**
 * Row of conditional probabilities for squared distances `dist` (self excluded) at precision `beta`.
 * Returns the entropy (nats) of the row.
 */
inline double conditional_row(const Eigen::Ref<const Eigen::RowVectorXd>& dist, std::size_t self, double beta, Eigen::Ref<Eigen::RowVectorXd> out) {
    double min_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < dist.size(); ++j) {
        if (static_cast<std::size_t>(j) != self) {
            min_d = std::min(min_d, dist(j));
        }
    }
    double sum = 0;
    for (Eigen::Index j = 0; j < dist.size(); ++j) {
        out(j) = static_cast<std::size_t>(j) == self ? 0.0 : std::exp(-beta * (dist(j) - min_d));
        sum += out(j);
    }
    out /= sum;
    double entropy = 0;
    for (Eigen::Index j = 0; j < dist.size(); ++j) {
        if (out(j) > 0) {
            entropy -= out(j) * std::log(out(j));
        }
    }
    return entropy;
}

}

/**
 * Conditional affinities p_{j|i}: each row is a Gaussian kernel over squared distances whose precision is
 * found by bisection so that the row's perplexity exp(H) matches `perplexity`.
 */
inline Matrix<double> conditional_affinities(const Matrix<double>& points, double perplexity, double tolerance,
                                             std::vector<double>* achieved = nullptr) {
    const auto n = points.rows();
    if (n < 2) {
        throw Error("t-SNE needs at least two points");
    }
    if (!(perplexity > 0) || perplexity >= static_cast<double>(n)) {
        throw Error("perplexity " + std::to_string(perplexity) + " must be positive and below the number of points (" + std::to_string(n) + ")");
    }
    Eigen::VectorXd sq = points.rowwise().squaredNorm();
    Matrix<double> dist = (-2.0 * points * points.transpose()).eval();
    dist.colwise() += sq;
    dist.rowwise() += sq.transpose();
    dist = dist.cwiseMax(0.0);

    Matrix<double> cond(n, n);
    if (achieved) {
        achieved->assign(static_cast<std::size_t>(n), 0.0);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        double beta = 1, lo = 0, hi = std::numeric_limits<double>::infinity();
        double perp = 0;
        for (int iter = 0; iter < 200; ++iter) {
            double entropy = tsne_detail::conditional_row(dist.row(i), static_cast<std::size_t>(i), beta, cond.row(i));
            perp = std::exp(entropy);
            if (std::abs(perp - perplexity) <= tolerance) {
                break;
            }
            if (perp > perplexity) {
                lo = beta;
                beta = std::isinf(hi) ? beta * 2 : (beta + hi) / 2;
            } else {
                hi = beta;
                beta = (beta + lo) / 2;
            }
        }
        if (achieved) {
            (*achieved)[static_cast<std::size_t>(i)] = perp;
        }
    }
    tsne_detail::check_finite(cond, "affinity matrix");
    return cond;
}

/**
 * Symmetrised joint affinities P = (C + C^T) / (2n).
 */
inline Matrix<double> joint_affinities(const Matrix<double>& conditional) {
    const double n = static_cast<double>(conditional.rows());
    return (conditional + conditional.transpose()) / (2 * n);
}

/**
 * KL(P || Q) for a layout `y`, with Q the normalised Student-t kernel.
 */
inline double tsne_kl(const Matrix<double>& joint, const Matrix<double>& y) {
    const auto n = y.rows();
    Matrix<double> num(n, n);
    double sum = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            num(i, j) = i == j ? 0.0 : 1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm());
            sum += num(i, j);
        }
    }
    double kl = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            const double p = joint(i, j);
            if (i != j && p > 0) {
                kl += p * std::log(p / std::max(num(i, j) / sum, 1e-300));
            }
        }
    }
    return kl;
}

/**
 * Embed `points` in two dimensions.
 *
 * Gradient descent on KL(P || Q) with momentum, per-coordinate adaptive gains (as in the reference
 * implementation) and early exaggeration of P. The layout starts from N(0, 1e-4 I) and is re-centred after
 * every step.
 */
inline TsneResult tsne(const Matrix<double>& points, std::uint64_t seed, const TsneSettings& settings = {}) {
    const auto n = points.rows();
    TsneResult out;
    out.settings = settings;
    Matrix<double> joint = joint_affinities(conditional_affinities(points, settings.perplexity, settings.perplexity_tolerance, &out.row_perplexity));

    Rng rng(seed);
    Matrix<double> y(n, 2);
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        y.data()[i] = 1e-4 * standard_normal(rng);
    }
    out.kl_initial = tsne_kl(joint, y);

    Matrix<double> update = Matrix<double>::Zero(n, 2);
    Matrix<double> gains = Matrix<double>::Ones(n, 2);
    Matrix<double> num(n, n);
    Matrix<double> grad(n, 2);
    for (std::size_t iter = 0; iter < settings.iterations; ++iter) {
        const double exaggeration = iter < settings.exaggeration_iterations ? settings.early_exaggeration : 1.0;
        const double momentum = iter < settings.momentum_switch ? settings.initial_momentum : settings.final_momentum;

        double sum = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            num(i, i) = 0;
            for (Eigen::Index j = i + 1; j < n; ++j) {
                const double dx = y(i, 0) - y(j, 0);
                const double dy = y(i, 1) - y(j, 1);
                const double v = 1.0 / (1.0 + dx * dx + dy * dy);
                num(i, j) = v;
                num(j, i) = v;
                sum += 2 * v;
            }
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            double gx = 0, gy = 0;
            for (Eigen::Index j = 0; j < n; ++j) {
                const double mult = (exaggeration * joint(i, j) - num(i, j) / sum) * num(i, j);
                gx += mult * (y(i, 0) - y(j, 0));
                gy += mult * (y(i, 1) - y(j, 1));
            }
            grad(i, 0) = 4 * gx;
            grad(i, 1) = 4 * gy;
        }

        for (Eigen::Index i = 0; i < grad.size(); ++i) {
            double& g = gains.data()[i];
            const bool same_sign = (grad.data()[i] > 0) == (update.data()[i] > 0);
            g = same_sign ? g * 0.8 : g + 0.2;
            g = std::max(g, 0.01);
            update.data()[i] = momentum * update.data()[i] - settings.learning_rate * g * grad.data()[i];
        }
        y += update;
        y.rowwise() -= y.colwise().mean();
        tsne_detail::check_finite(y, "layout");
    }
    out.kl_final = tsne_kl(joint, y);
    out.coordinates = std::move(y);
    return out;
}

}

#endif
