#ifndef LANGPROBE_TRAINING_SEARCH_HPP
#define LANGPROBE_TRAINING_SEARCH_HPP

#include <algorithm>
#include <functional>
#include <vector>

#include "config.hpp"
#include "regimes.hpp"

namespace langprobe {

/**
 * Candidate values per hyperparameter. The defaults are the published search grids.
 */
struct SearchGrid {
    std::vector<double> init_stddev{ 1e-1, 1e-2, 1e-3 };
    std::vector<std::size_t> batch_size{ 64, 32, 16 };
    std::vector<double> head_lr{ 1e-1, 1e-2, 1e-3, 1e-4 };
    std::vector<double> encoder_lr{ 1e-3, 1e-4, 1e-5, 1e-6 };
    std::vector<double> lambda{ 0.1, 0.3, 0.5, 0.7 };
    std::vector<double> w{ 0.1, 0.3, 0.5, 0.7 };

    void validate() const {
        if (init_stddev.empty() || batch_size.empty() || head_lr.empty() || encoder_lr.empty() || lambda.empty() || w.empty()) {
            throw Error("every hyperparameter grid needs at least one value");
        }
    }
};

struct SearchResult {
    ExperimentConfig config;
    double dev_score = 0;
    std::size_t sample = 0;  ///< position in the sampling sequence
};

/**
 * `n_samples` configurations drawn uniformly with replacement from the cartesian product of `grid`
 * (hyperparameters the regime does not use are drawn but ignored, so the sequence depends only on the seed).
 * Every other field is copied from `base`.
 */
inline std::vector<ExperimentConfig> sample_configs(const ExperimentConfig& base, const SearchGrid& grid, std::size_t n_samples, std::uint64_t seed) {
    grid.validate();
    if (n_samples < 1) {
        throw Error("random search needs at least one sample");
    }
    Rng rng(seed);
    auto pick = [&](const auto& values) { return values[uniform_index(rng, values.size())]; };
    std::vector<ExperimentConfig> out;
    for (std::size_t s = 0; s < n_samples; ++s) {
        ExperimentConfig c = base;
        c.init_stddev = pick(grid.init_stddev);
        c.batch_size = pick(grid.batch_size);
        c.head_lr = pick(grid.head_lr);
        const double encoder_lr = pick(grid.encoder_lr);
        const double lambda = pick(grid.lambda);
        const double w = pick(grid.w);
        c.encoder_lr = base.regime == Regime::FrozenProbe ? 0.0 : encoder_lr;
        c.lambda = base.regime == Regime::GradReversal ? std::optional<double>(lambda) : std::nullopt;
        c.w = base.regime == Regime::EntropyMax ? std::optional<double>(w) : std::nullopt;
        out.push_back(c);
    }
    return out;
}

/**
 * Score every sampled configuration with `evaluate` (which must only look at development data) and rank
 * them by that score, best first; ties keep sampling order.
 */
inline std::vector<SearchResult> random_search(const ExperimentConfig& base, const SearchGrid& grid, std::size_t n_samples, std::uint64_t seed,
                                               const std::function<double(const ExperimentConfig&)>& evaluate) {
    auto configs = sample_configs(base, grid, n_samples, seed);
    std::vector<SearchResult> out;
    for (std::size_t s = 0; s < configs.size(); ++s) {
        out.push_back(SearchResult{ configs[s], evaluate(configs[s]), s });
    }
    std::stable_sort(out.begin(), out.end(), [](const SearchResult& a, const SearchResult& b) { return a.dev_score > b.dev_score; });
    return out;
}

/**
 * Task macro F1 of a trained run on the pivot-language development data.
 */
template<typename Scalar_>
double task_dev_score(const EncoderModel<Scalar_>& encoder, const TrainingRun<Scalar_>& run, const ExperimentData& data, const ExperimentConfig& config) {
    auto dev = training_detail::pivot_only(data.task_data.dev, config.pivot_language, "development");
    auto features = encode_units(encoder, dev, granularity_of(data.task), data.languages);
    return score(run.task_head, features, Target::Task, data.task_classes);
}

}

#endif
