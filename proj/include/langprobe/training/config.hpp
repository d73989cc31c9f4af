#ifndef LANGPROBE_TRAINING_CONFIG_HPP
#define LANGPROBE_TRAINING_CONFIG_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "../core/types.hpp"
#include "../data/example.hpp"
#include "../heads/losses.hpp"

namespace langprobe {

enum class Regime {
    FrozenProbe,
    Finetune,
    GradReversal,
    EntropyMax
};

inline const char* to_string(Regime regime) {
    switch (regime) {
        case Regime::FrozenProbe: return "frozen_probe";
        case Regime::Finetune: return "finetune";
        case Regime::GradReversal: return "grad_reversal";
        case Regime::EntropyMax: return "entropy_max";
    }
    return "";
}

inline Regime parse_regime(const std::string& name) {
    for (auto r : { Regime::FrozenProbe, Regime::Finetune, Regime::GradReversal, Regime::EntropyMax }) {
        if (name == to_string(r)) {
            return r;
        }
    }
    throw Error("unknown regime '" + name + "' (expected frozen_probe, finetune, grad_reversal or entropy_max)");
}

struct ExperimentConfig {
    Regime regime = Regime::Finetune;
    TaskKind task = TaskKind::TokenTag;

    /**
     * Standard deviation of the normal initialisation of both classifier heads.
     */
    double init_stddev = 1e-2;

    std::size_t batch_size = 32;
    double head_lr = 1e-2;
    double encoder_lr = 1e-4;

    /**
     * Gradient-reversal factor; set exactly when the regime is `grad_reversal`.
     */
    std::optional<double> lambda;

    /**
     * Weight of the language term; set exactly when the regime is `entropy_max`.
     */
    std::optional<double> w;
    LanguageTerm language_term = LanguageTerm::NegLogSum;

    /**
     * Training epochs, or (language phase, task phase) pairs for `entropy_max`.
     */
    std::size_t epochs = 5;

    std::uint64_t seed = 0;

    /**
     * Dropout applied to the encoder output before either head.
     */
    double head_dropout = 0.1;

    /**
     * The only language whose task data is used for training and epoch selection.
     */
    std::string pivot_language = "L0";

    void validate() const {
        if (task == TaskKind::LanguageId) {
            throw Error("the target task cannot be language identification");
        }
        if (lambda.has_value() != (regime == Regime::GradReversal)) {
            throw Error(regime == Regime::GradReversal ? "grad_reversal needs lambda" : "lambda is only valid for grad_reversal");
        }
        if (w.has_value() != (regime == Regime::EntropyMax)) {
            throw Error(regime == Regime::EntropyMax ? "entropy_max needs w" : "w is only valid for entropy_max");
        }
        if (lambda) {
            GradReversalConfig{ *lambda }.validate();
        }
        if (w) {
            EntropyLossConfig{ *w, language_term }.validate();
        }
        if (epochs < 1) {
            throw Error("epochs must be at least 1");
        }
        if (batch_size < 1) {
            throw Error("minibatch size must be at least 1");
        }
        if (!(init_stddev >= 0) || !(head_lr > 0) || !(encoder_lr >= 0)) {
            throw Error("init stddev and learning rates must be non-negative (head learning rate positive)");
        }
        if (!(head_dropout >= 0 && head_dropout < 1)) {
            throw Error("head dropout must lie in [0, 1)");
        }
        if (pivot_language.empty()) {
            throw Error("pivot language is empty");
        }
    }

    bool operator==(const ExperimentConfig&) const = default;
};

/**
 * Published selected hyperparameters, by experiment name (`<task>-<regime>`).
 * `udpos-*` presets use the token-tag task, `xnli-*` presets the pair-inference task.
 */
inline const std::map<std::string, ExperimentConfig>& experiment_presets() {
    static const std::map<std::string, ExperimentConfig> presets = [] {
        auto make = [](TaskKind task, Regime regime, double stddev, std::size_t batch, double encoder_lr, double head_lr) {
            ExperimentConfig c;
            c.task = task;
            c.regime = regime;
            c.init_stddev = stddev;
            c.batch_size = batch;
            c.encoder_lr = encoder_lr;
            c.head_lr = head_lr;
            return c;
        };
        const auto pos = TaskKind::TokenTag;
        const auto nli = TaskKind::PairInference;
        std::map<std::string, ExperimentConfig> out;
        out["udpos-frozen"] = make(pos, Regime::FrozenProbe, 1e-1, 16, 0, 1e-3);
        out["udpos-finetuned"] = make(pos, Regime::Finetune, 1e-2, 64, 1e-4, 1e-1);
        out["udpos-grad-reversal"] = make(pos, Regime::GradReversal, 1e-3, 32, 1e-6, 1e-3);
        out["udpos-grad-reversal"].lambda = 0.1;
        out["udpos-entropy-max"] = make(pos, Regime::EntropyMax, 1e-2, 32, 1e-6, 1e-2);
        out["udpos-entropy-max"].w = 0.7;
        out["xnli-frozen"] = make(nli, Regime::FrozenProbe, 1e-2, 64, 0, 1e-2);
        out["xnli-finetuned"] = make(nli, Regime::Finetune, 1e-3, 64, 1e-5, 1e-2);
        out["xnli-grad-reversal"] = make(nli, Regime::GradReversal, 1e-3, 32, 1e-6, 1e-3);
        out["xnli-grad-reversal"].lambda = 0.1;
        out["xnli-entropy-max"] = make(nli, Regime::EntropyMax, 1e-1, 32, 1e-6, 1e-4);
        out["xnli-entropy-max"].w = 0.1;
        return out;
    }();
    return presets;
}

inline const ExperimentConfig& experiment_preset(const std::string& name) {
    const auto& presets = experiment_presets();
    auto it = presets.find(name);
    if (it == presets.end()) {
        std::string known;
        for (const auto& [key, value] : presets) {
            known += (known.empty() ? "" : ", ") + key;
        }
        throw Error("unknown preset '" + name + "' (known: " + known + ")");
    }
    return it->second;
}

}

#endif
