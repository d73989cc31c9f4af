#ifndef LANGPROBE_TRAINING_FEATURES_HPP
#define LANGPROBE_TRAINING_FEATURES_HPP

#include <map>
#include <string>
#include <vector>

#include "../analysis/metrics.hpp"
#include "../data/example.hpp"
#include "../encoder/encoder.hpp"
#include "../heads/head.hpp"

/**
 * @file features.hpp
 *
 * @brief Classification units of an example and their encoder features.
 *
 * Token-level tasks classify every non-special token; the language classifier then also works per token.
 * Text-level tasks classify the sequence through its first output vector, and so does the language classifier.
 */

namespace langprobe {

enum class Granularity {
    Token,
    Text
};

inline Granularity granularity_of(TaskKind task) {
    return task == TaskKind::TokenTag ? Granularity::Token : Granularity::Text;
}

/**
 * Positions of the classification units of `sequence`.
 */
inline std::vector<std::size_t> unit_positions(const TokenSequence& sequence, Granularity granularity) {
    std::vector<std::size_t> out;
    if (granularity == Granularity::Text) {
        out.push_back(0);
        return out;
    }
    for (std::size_t i = 0; i < sequence.tokens.size(); ++i) {
        if (!is_special(sequence.tokens[i])) {
            out.push_back(i);
        }
    }
    return out;
}

/**
 * Task label of each unit; `ignore_label` for every unit of language-identification data.
 */
inline std::vector<int> unit_task_labels(const LabeledExample& example, Granularity granularity) {
    auto positions = unit_positions(example.sequence, granularity);
    std::vector<int> out(positions.size(), ignore_label);
    if (example.task_labels.empty()) {
        return out;
    }
    if (granularity == Granularity::Text) {
        out[0] = example.task_labels.front();
        return out;
    }
    for (std::size_t u = 0; u < positions.size(); ++u) {
        out[u] = example.task_labels.at(positions[u]);
    }
    return out;
}

/**
 * Dense language ids over a fixed inventory.
 */
class LanguageIndex {
public:
    LanguageIndex() = default;

    explicit LanguageIndex(std::vector<std::string> languages) : my_languages(std::move(languages)) {
        for (std::size_t i = 0; i < my_languages.size(); ++i) {
            if (!my_ids.emplace(my_languages[i], static_cast<int>(i)).second) {
                throw Error("language '" + my_languages[i] + "' listed twice");
            }
        }
    }

    int id(const std::string& language) const {
        auto it = my_ids.find(language);
        if (it == my_ids.end()) {
            throw Error("language '" + language + "' is not in the language inventory");
        }
        return it->second;
    }

    const std::string& name(int id) const { return my_languages.at(static_cast<std::size_t>(id)); }
    std::size_t size() const { return my_languages.size(); }
    const std::vector<std::string>& languages() const { return my_languages; }

private:
    std::vector<std::string> my_languages;
    std::map<std::string, int> my_ids;
};

/**
 * Evaluation-mode features of the units of a list of examples.
 * Rows `offsets[e] .. offsets[e + 1]` belong to example `e`.
 */
template<typename Scalar_>
struct FeatureSet {
    Matrix<Scalar_> features;
    std::vector<int> task_labels;
    std::vector<int> languages;
    std::vector<std::size_t> offsets{ 0 };

    std::size_t units() const { return task_labels.size(); }
    std::size_t examples() const { return offsets.size() - 1; }
};

template<typename Scalar_>
FeatureSet<Scalar_> encode_units(const EncoderModel<Scalar_>& encoder, const std::vector<LabeledExample>& examples,
                                 Granularity granularity, const LanguageIndex& languages) {
    FeatureSet<Scalar_> out;
    std::vector<Matrix<Scalar_> > rows;
    std::size_t total = 0;
    for (const auto& ex : examples) {
        auto positions = unit_positions(ex.sequence, granularity);
        auto labels = unit_task_labels(ex, granularity);
        const int lang = languages.id(ex.language);
        auto encoded = encoder.encode(ex.sequence.tokens);
        Matrix<Scalar_> chosen(static_cast<Eigen::Index>(positions.size()), encoded.cols());
        for (std::size_t u = 0; u < positions.size(); ++u) {
            chosen.row(static_cast<Eigen::Index>(u)) = encoded.row(static_cast<Eigen::Index>(positions[u]));
        }
        rows.push_back(std::move(chosen));
        out.task_labels.insert(out.task_labels.end(), labels.begin(), labels.end());
        out.languages.insert(out.languages.end(), positions.size(), lang);
        total += positions.size();
        out.offsets.push_back(total);
    }
    out.features.resize(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(encoder.d_model()));
    for (std::size_t e = 0; e < rows.size(); ++e) {
        out.features.middleRows(static_cast<Eigen::Index>(out.offsets[e]), rows[e].rows()) = rows[e];
    }
    return out;
}

/**
 * Which annotation of a feature set a classifier predicts.
 */
enum class Target {
    Task,
    Language
};

template<typename Scalar_>
const std::vector<int>& targets_of(const FeatureSet<Scalar_>& set, Target target) {
    return target == Target::Task ? set.task_labels : set.languages;
}

template<typename Scalar_>
std::vector<int> predict(const ClassifierHead<Scalar_>& head, const Matrix<Scalar_>& features) {
    std::vector<int> out(static_cast<std::size_t>(features.rows()));
    if (features.rows() == 0) {
        return out;
    }
    Matrix<Scalar_> logits = head_logits(head, features);
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        out[static_cast<std::size_t>(i)] = argmax(logits.row(i));
    }
    return out;
}

/**
 * Macro F1 of `head` on every unit of `set`.
 */
template<typename Scalar_>
double score(const ClassifierHead<Scalar_>& head, const FeatureSet<Scalar_>& set, Target target, const std::vector<int>& classes) {
    return macro_f1(predict(head, set.features), targets_of(set, target), classes);
}

inline std::vector<int> class_range(std::size_t n) {
    std::vector<int> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = static_cast<int>(i);
    }
    return out;
}

}

#endif
