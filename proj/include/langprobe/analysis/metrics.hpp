#ifndef LANGPROBE_ANALYSIS_METRICS_HPP
#define LANGPROBE_ANALYSIS_METRICS_HPP

#include <cmath>
#include <map>
#include <span>
#include <vector>

#include "../core/types.hpp"

namespace langprobe {

/**
 * Unweighted mean of per-class F1 over `classes`.
 * A class with no true positives, false positives or false negatives contributes 0.
 */
inline double macro_f1(std::span<const int> predictions, std::span<const int> golds, std::span<const int> classes) {
    if (predictions.size() != golds.size()) {
        throw Error("predictions and golds differ in length");
    }
    if (golds.empty()) {
        throw Error("macro F1 of an empty set is undefined");
    }
    if (classes.empty()) {
        throw Error("macro F1 needs a non-empty class set");
    }
    std::map<int, std::size_t> slot;
    for (std::size_t c = 0; c < classes.size(); ++c) {
        slot.emplace(classes[c], c);
    }
    std::vector<double> tp(classes.size()), fp(classes.size()), fn(classes.size());
    for (std::size_t i = 0; i < golds.size(); ++i) {
        auto g = slot.find(golds[i]);
        auto p = slot.find(predictions[i]);
        if (predictions[i] == golds[i]) {
            if (g != slot.end()) {
                tp[g->second] += 1;
            }
            continue;
        }
        if (p != slot.end()) {
            fp[p->second] += 1;
        }
        if (g != slot.end()) {
            fn[g->second] += 1;
        }
    }
    double total = 0;
    for (std::size_t c = 0; c < classes.size(); ++c) {
        double denom = 2 * tp[c] + fp[c] + fn[c];
        total += denom > 0 ? 2 * tp[c] / denom : 0.0;
    }
    return total / static_cast<double>(classes.size());
}

/**
 * Macro F1 over the classes `0 .. n_classes - 1`.
 */
inline double macro_f1(std::span<const int> predictions, std::span<const int> golds, std::size_t n_classes) {
    std::vector<int> classes(n_classes);
    for (std::size_t c = 0; c < n_classes; ++c) {
        classes[c] = static_cast<int>(c);
    }
    return macro_f1(predictions, golds, classes);
}

struct VMeasure {
    double homogeneity = 0;
    double completeness = 0;
    double v = 0;
};

/**
 * Homogeneity, completeness and their harmonic mean for a clustering against gold classes.
 *
 * With H the natural-log entropy: h = 1 - H(C|K)/H(C) (h = 1 when H(C) = 0),
 * c = 1 - H(K|C)/H(K) (c = 1 when H(K) = 0), V = 2hc/(h+c) (V = 0 when h + c = 0).
 */
inline VMeasure v_measure_scores(std::span<const int> classes, std::span<const int> clusters) {
    if (classes.size() != clusters.size()) {
        throw Error("class and cluster lists differ in length");
    }
    if (classes.empty()) {
        throw Error("V-measure of an empty set is undefined");
    }
    const double n = static_cast<double>(classes.size());
    std::map<std::pair<int, int>, double> joint;
    std::map<int, double> class_count, cluster_count;
    for (std::size_t i = 0; i < classes.size(); ++i) {
        joint[{ classes[i], clusters[i] }] += 1;
        class_count[classes[i]] += 1;
        cluster_count[clusters[i]] += 1;
    }
    auto entropy = [&](const std::map<int, double>& counts) {
        double h = 0;
        for (const auto& [key, c] : counts) {
            h -= (c / n) * std::log(c / n);
        }
        return h;
    };
    const double h_class = entropy(class_count);
    const double h_cluster = entropy(cluster_count);
    double h_class_given_cluster = 0, h_cluster_given_class = 0;
    for (const auto& [key, c] : joint) {
        h_class_given_cluster -= (c / n) * std::log(c / cluster_count[key.second]);
        h_cluster_given_class -= (c / n) * std::log(c / class_count[key.first]);
    }

    VMeasure out;
    out.homogeneity = h_class == 0 ? 1.0 : 1.0 - h_class_given_cluster / h_class;
    out.completeness = h_cluster == 0 ? 1.0 : 1.0 - h_cluster_given_class / h_cluster;
    const double sum = out.homogeneity + out.completeness;
    out.v = sum == 0 ? 0.0 : 2 * out.homogeneity * out.completeness / sum;
    return out;
}

inline double v_measure(std::span<const int> classes, std::span<const int> clusters) {
    return v_measure_scores(classes, clusters).v;
}

/**
 * Map arbitrary annotation strings to dense ids in sorted order of the distinct values.
 */
template<typename Key_>
std::vector<int> dense_ids(const std::vector<Key_>& values, std::vector<Key_>* distinct = nullptr) {
    std::map<Key_, int> ids;
    for (const auto& v : values) {
        ids.emplace(v, 0);
    }
    int next = 0;
    for (auto& [key, id] : ids) {
        id = next++;
    }
    std::vector<int> out;
    out.reserve(values.size());
    for (const auto& v : values) {
        out.push_back(ids[v]);
    }
    if (distinct) {
        distinct->clear();
        for (const auto& [key, id] : ids) {
            distinct->push_back(key);
        }
    }
    return out;
}

}

#endif
