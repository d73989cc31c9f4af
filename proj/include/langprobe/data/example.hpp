#ifndef LANGPROBE_DATA_EXAMPLE_HPP
#define LANGPROBE_DATA_EXAMPLE_HPP

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "../core/types.hpp"

namespace langprobe {

/**
 * Reserved vocabulary slots. Every vocabulary starts with these four entries in this order.
 */
enum SpecialToken : int {
    PAD = 0,
    UNK = 1,
    SEP = 2,
    MASK = 3
};

inline constexpr int num_special_tokens = 4;

inline constexpr std::size_t default_max_length = 128;

/**
 * Label value stored at positions that carry no task label (the pair separator).
 */
inline constexpr int ignore_label = -1;

inline bool is_special(int token) {
    return token >= 0 && token < num_special_tokens && token != UNK;
}

enum class TaskKind {
    TokenTag,       ///< one label per token
    PairInference,  ///< one label per premise/hypothesis pair
    LanguageId      ///< no task label; the language is the only annotation
};

inline const char* to_string(TaskKind task) {
    switch (task) {
        case TaskKind::TokenTag: return "token-tag";
        case TaskKind::PairInference: return "pair-inference";
        case TaskKind::LanguageId: return "language-id";
    }
    return "";
}

inline TaskKind parse_task_kind(const std::string& name) {
    if (name == "token-tag") {
        return TaskKind::TokenTag;
    } else if (name == "pair-inference") {
        return TaskKind::PairInference;
    } else if (name == "language-id") {
        return TaskKind::LanguageId;
    }
    throw Error("unknown task '" + name + "' (expected token-tag, pair-inference or language-id)");
}

/**
 * Universal tag inventory for token-level tasks (the 17 UPOS tags, in UD order).
 */
inline const std::vector<std::string>& upos_tags() {
    static const std::vector<std::string> tags{
        "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM",
        "PART", "PRON", "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X"
    };
    return tags;
}

inline const std::vector<std::string>& nli_labels() {
    static const std::vector<std::string> labels{ "entailment", "neutral", "contradiction" };
    return labels;
}

/**
 * Label inventory for a task: UPOS for token tagging, the three inference classes for pairs.
 */
inline const std::vector<std::string>& task_label_names(TaskKind task) {
    static const std::vector<std::string> none;
    switch (task) {
        case TaskKind::TokenTag: return upos_tags();
        case TaskKind::PairInference: return nli_labels();
        case TaskKind::LanguageId: return none;
    }
    return none;
}

inline int label_index(const std::vector<std::string>& names, const std::string& name) {
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) {
            return static_cast<int>(i);
        }
    }
    return ignore_label;
}

/**
 * A tokenized text, or a premise/hypothesis pair joined by the separator.
 */
struct TokenSequence {
    std::vector<int> tokens;

    /**
     * Index of the separator token when the sequence is a pair.
     * Always an interior position: both sides are non-empty.
     */
    std::optional<std::size_t> pair_boundary;

    bool is_pair() const { return pair_boundary.has_value(); }
    std::size_t size() const { return tokens.size(); }

    bool operator==(const TokenSequence&) const = default;
};

/**
 * A sequence with its task annotation and language.
 *
 * For token-level tasks `task_labels` has one entry per token, holding `ignore_label` at special positions.
 * For text-level tasks it has exactly one entry. For language-identification data it is empty.
 * Labels index into `task_label_names()` of the corpus task.
 */
struct LabeledExample {
    TokenSequence sequence;
    std::vector<int> task_labels;
    std::string language;

    bool operator==(const LabeledExample&) const = default;
};

/**
 * Train/validation/development/test partition of a corpus.
 */
struct CorpusSplit {
    std::vector<LabeledExample> train, val, dev, test;
};

/**
 * Check the structural invariants of an example; throws on violation.
 */
inline void validate_example(const LabeledExample& example, TaskKind task, std::size_t max_length = default_max_length) {
    const auto& seq = example.sequence;
    if (seq.tokens.empty()) {
        throw Error("example has no tokens");
    }
    if (seq.size() > max_length) {
        throw Error("example has " + std::to_string(seq.size()) + " tokens, above the limit of " + std::to_string(max_length));
    }
    if (seq.pair_boundary) {
        auto b = *seq.pair_boundary;
        if (b == 0 || b + 1 >= seq.size() || seq.tokens[b] != SEP) {
            throw Error("pair boundary does not point at an interior separator");
        }
    }
    switch (task) {
        case TaskKind::TokenTag:
            if (example.task_labels.size() != seq.size()) {
                throw Error("token-level example needs one label per token");
            }
            for (std::size_t i = 0; i < seq.size(); ++i) {
                if ((example.task_labels[i] == ignore_label) != is_special(seq.tokens[i])) {
                    throw Error("token label missing or set on a special token at position " + std::to_string(i));
                }
            }
            break;
        case TaskKind::PairInference:
            if (example.task_labels.size() != 1) {
                throw Error("text-level example needs exactly one label");
            }
            break;
        case TaskKind::LanguageId:
            if (!example.task_labels.empty()) {
                throw Error("language-identification example carries a task label");
            }
            break;
    }
}

/**
 * Sorted list of the distinct languages in a set of examples.
 */
inline std::vector<std::string> languages_of(const std::vector<LabeledExample>& examples) {
    std::vector<std::string> out;
    for (const auto& ex : examples) {
        out.push_back(ex.language);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

}

#endif
