#ifndef LANGPROBE_ANALYSIS_KMEANS_HPP
#define LANGPROBE_ANALYSIS_KMEANS_HPP

#include <limits>
#include <string>
#include <vector>

#include "../core/types.hpp"
#include "metrics.hpp"

namespace langprobe {

struct KMeansResult {
    std::vector<int> assignment;
    Matrix<double> centroids;

    /**
     * Within-cluster sum of squares after each Lloyd iteration (assignment then centroid update).
     */
    std::vector<double> sse_trace;

    std::size_t iterations = 0;
    bool converged = false;
};

namespace kmeans_detail {

inline double squared_distance(const Matrix<double>& a, Eigen::Index i, const Matrix<double>& b, Eigen::Index j) {
    return (a.row(i) - b.row(j)).squaredNorm();
}

inline double total_sse(const Matrix<double>& points, const Matrix<double>& centroids, const std::vector<int>& assignment) {
    double sse = 0;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        sse += squared_distance(points, i, centroids, assignment[static_cast<std::size_t>(i)]);
    }
    return sse;
}

}

/**
 * Lloyd's algorithm with k-means++ seeding.
 *
 * Stops when an assignment step changes nothing or after `max_iterations`. A cluster left empty by an
 * assignment step gets its centroid moved onto the point farthest from its own centroid.
 */
inline KMeansResult kmeans(const Matrix<double>& points, std::size_t k, std::uint64_t seed, std::size_t max_iterations = 300) {
    using namespace kmeans_detail;
    const auto n = static_cast<std::size_t>(points.rows());
    if (k < 1) {
        throw Error("k-means needs k >= 1");
    }
    if (k > n) {
        throw Error("k-means with k = " + std::to_string(k) + " on only " + std::to_string(n) + " points");
    }
    Rng rng(seed);
    const auto kk = static_cast<Eigen::Index>(k);

    KMeansResult out;
    out.centroids.resize(kk, points.cols());
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    std::size_t first = uniform_index(rng, n);
    out.centroids.row(0) = points.row(static_cast<Eigen::Index>(first));
    for (Eigen::Index c = 1; c < kk; ++c) {
        double total = 0;
        for (std::size_t i = 0; i < n; ++i) {
            nearest[i] = std::min(nearest[i], squared_distance(points, static_cast<Eigen::Index>(i), out.centroids, c - 1));
            total += nearest[i];
        }
        std::size_t chosen = n - 1;
        if (total > 0) {
            double target = uniform01(rng) * total;
            for (std::size_t i = 0; i < n; ++i) {
                target -= nearest[i];
                if (target < 0) {
                    chosen = i;
                    break;
                }
            }
        } else {
            chosen = uniform_index(rng, n);
        }
        out.centroids.row(c) = points.row(static_cast<Eigen::Index>(chosen));
    }

    out.assignment.assign(n, -1);
    for (std::size_t iter = 0; iter < max_iterations; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (Eigen::Index c = 0; c < kk; ++c) {
                double dist = squared_distance(points, static_cast<Eigen::Index>(i), out.centroids, c);
                if (dist < best_d) {
                    best_d = dist;
                    best = static_cast<int>(c);
                }
            }
            if (best != out.assignment[i]) {
                out.assignment[i] = best;
                changed = true;
            }
        }
        if (!changed) {
            out.converged = true;
            break;
        }

        Matrix<double> sums = Matrix<double>::Zero(kk, points.cols());
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            sums.row(out.assignment[i]) += points.row(static_cast<Eigen::Index>(i));
            ++counts[static_cast<std::size_t>(out.assignment[i])];
        }
        for (Eigen::Index c = 0; c < kk; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) {
                out.centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
            }
        }
        for (Eigen::Index c = 0; c < kk; ++c) {
            if (counts[static_cast<std::size_t>(c)] == 0) {
                std::size_t far = 0;
                double far_d = -1;
                for (std::size_t i = 0; i < n; ++i) {
                    double dist = squared_distance(points, static_cast<Eigen::Index>(i), out.centroids, out.assignment[i]);
                    if (dist > far_d) {
                        far_d = dist;
                        far = i;
                    }
                }
                out.centroids.row(c) = points.row(static_cast<Eigen::Index>(far));
            }
        }
        out.sse_trace.push_back(total_sse(points, out.centroids, out.assignment));
        ++out.iterations;
    }
    return out;
}

struct ClusterReport {
    std::size_t k = 0;
    std::vector<double> runs;
    double mean = 0;

    /**
     * Only one distinct annotation value: V is 1 by convention and carries no information.
     */
    bool degenerate = false;
};

/**
 * Cluster `points` with k = number of distinct `annotations`, `n_runs` times from independent k-means++
 * seedings, and score each run's clusters against the annotations with the V-measure.
 */
inline ClusterReport clustering_report(const Matrix<double>& points, const std::vector<std::string>& annotations,
                                       std::uint64_t seed, std::size_t n_runs = 10) {
    if (static_cast<std::size_t>(points.rows()) != annotations.size()) {
        throw Error("annotations do not align with points");
    }
    if (n_runs < 1) {
        throw Error("need at least one k-means run");
    }
    std::vector<std::string> distinct;
    auto classes = dense_ids(annotations, &distinct);
    ClusterReport report;
    report.k = distinct.size();
    if (report.k > annotations.size() || annotations.empty()) {
        throw Error("fewer points than clusters");
    }
    report.degenerate = report.k == 1;
    for (std::size_t r = 0; r < n_runs; ++r) {
        auto result = kmeans(points, report.k, derive_seed(seed, r));
        report.runs.push_back(v_measure(classes, result.assignment));
    }
    double sum = 0;
    for (double v : report.runs) {
        sum += v;
    }
    report.mean = sum / static_cast<double>(report.runs.size());
    return report;
}

}

#endif
