#ifndef LANGPROBE_DATA_SPLIT_HPP
#define LANGPROBE_DATA_SPLIT_HPP

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "example.hpp"

namespace langprobe {

/**
 * Split `n` items into parts proportional to `fractions` by largest-remainder rounding.
 * Parts with equal remainders are served in index order.
 */
inline std::vector<std::size_t> largest_remainder(std::size_t n, const std::vector<double>& fractions) {
    std::vector<std::size_t> counts(fractions.size());
    std::vector<double> remainders(fractions.size());
    std::size_t assigned = 0;
    for (std::size_t s = 0; s < fractions.size(); ++s) {
        double quota = static_cast<double>(n) * fractions[s];
        // Absorb floating-point noise so that e.g. 5000 * 0.7 is treated as exactly 3500.
        double rounded = std::round(quota);
        if (std::abs(quota - rounded) < 1e-9 * std::max(1.0, quota)) {
            quota = rounded;
        }
        counts[s] = static_cast<std::size_t>(std::floor(quota));
        remainders[s] = quota - std::floor(quota);
        assigned += counts[s];
    }
    std::vector<std::size_t> order(fractions.size());
    for (std::size_t s = 0; s < order.size(); ++s) {
        order[s] = s;
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
    for (std::size_t i = 0; assigned < n; ++i, ++assigned) {
        ++counts[order[i % order.size()]];
    }
    return counts;
}

/**
 * Partition `examples` into `fractions.size()` parts while preserving each language's share.
 *
 * Within every language the examples are shuffled (seeded per language), then cut into consecutive
 * blocks sized by `largest_remainder()`. Each part keeps the original corpus order.
 * Throws if the fractions are not positive or do not sum to 1 within 1e-9, or if a language has fewer
 * examples than there are parts.
 */
inline std::vector<std::vector<LabeledExample>> stratify(
    const std::vector<LabeledExample>& examples,
    const std::vector<double>& fractions,
    std::uint64_t seed)
{
    if (fractions.empty()) {
        throw Error("no split fractions given");
    }
    double total = 0;
    for (double f : fractions) {
        if (!(f > 0)) {
            throw Error("split fractions must be positive");
        }
        total += f;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw Error("split fractions must sum to 1");
    }

    std::map<std::string, std::vector<std::size_t>> by_language;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        by_language[examples[i].language].push_back(i);
    }

    std::string too_small;
    for (const auto& [language, members] : by_language) {
        if (members.size() < fractions.size()) {
            too_small += (too_small.empty() ? "" : ", ") + language;
        }
    }
    if (!too_small.empty()) {
        throw Error("too few examples to split for language(s): " + too_small);
    }

    std::vector<std::vector<std::size_t>> chosen(fractions.size());
    std::uint64_t stream = 0;
    for (auto& [language, members] : by_language) {
        Rng rng(derive_seed(seed, stream++));
        shuffle(members, rng);
        auto counts = largest_remainder(members.size(), fractions);
        std::size_t offset = 0;
        for (std::size_t s = 0; s < counts.size(); ++s) {
            chosen[s].insert(chosen[s].end(), members.begin() + static_cast<std::ptrdiff_t>(offset),
                             members.begin() + static_cast<std::ptrdiff_t>(offset + counts[s]));
            offset += counts[s];
        }
    }

    std::vector<std::vector<LabeledExample>> out(fractions.size());
    for (std::size_t s = 0; s < chosen.size(); ++s) {
        std::sort(chosen[s].begin(), chosen[s].end());
        out[s].reserve(chosen[s].size());
        for (auto i : chosen[s]) {
            out[s].push_back(examples[i]);
        }
    }
    return out;
}

/**
 * Stratified split into train/val/dev/test (in that order). With fewer than four fractions the
 * trailing parts stay empty, e.g. `{0.9, 0.1}` fills only train and val.
 */
inline CorpusSplit stratified_split(const std::vector<LabeledExample>& examples, const std::vector<double>& fractions, std::uint64_t seed) {
    if (fractions.size() > 4) {
        throw Error("at most four split fractions (train, val, dev, test)");
    }
    auto parts = stratify(examples, fractions, seed);
    CorpusSplit split;
    std::vector<LabeledExample>* targets[] = { &split.train, &split.val, &split.dev, &split.test };
    for (std::size_t s = 0; s < parts.size(); ++s) {
        *targets[s] = std::move(parts[s]);
    }
    return split;
}

/**
 * Keep only examples whose language is in `keep`, preserving order.
 */
inline std::vector<LabeledExample> filter_language(const std::vector<LabeledExample>& examples, const std::set<std::string>& keep) {
    std::vector<LabeledExample> out;
    for (const auto& ex : examples) {
        if (keep.count(ex.language)) {
            out.push_back(ex);
        }
    }
    return out;
}

}

#endif
