#ifndef LANGPROBE_DATA_SYNTHETIC_HPP
#define LANGPROBE_DATA_SYNTHETIC_HPP

#include <array>
#include <set>
#include <string>
#include <vector>

#include "example.hpp"
#include "vocabulary.hpp"

/**
 * @file synthetic.hpp
 *
 * @brief Controllable multilingual toy corpora.
 *
 * Every language realises one shared set of concepts. Concepts carry a universal tag and, for verbs
 * and adjectives, an antonym, so token tags and inference labels are defined independently of the
 * language. Languages differ in their surface forms (disjoint lexicons apart from a shared fraction),
 * their clause order and the placement of determiners, adjectives and adpositions.
 */

namespace langprobe {

/**
 * Concepts shared by all languages.
 */
struct ConceptInventory {
    std::vector<int> tags;      ///< UPOS index per concept
    std::vector<int> antonyms;  ///< antonym concept, or -1

    std::size_t size() const { return tags.size(); }

    std::vector<int> with_tag(const std::string& tag) const {
        int wanted = label_index(upos_tags(), tag);
        std::vector<int> out;
        for (std::size_t c = 0; c < tags.size(); ++c) {
            if (tags[c] == wanted) {
                out.push_back(static_cast<int>(c));
            }
        }
        return out;
    }

    bool operator==(const ConceptInventory&) const = default;
};

enum ClauseRole : int { SUBJECT = 0, VERB_ROLE = 1, OBJECT = 2 };

struct SyntheticLanguageSpec {
    std::string id;
    ConceptInventory concepts;

    /**
     * Surface form of every concept, indexed by concept id (content and function words alike).
     */
    std::vector<std::string> lexicon;

    /**
     * Concept ids realised as function words (determiners and adpositions).
     */
    std::vector<int> function_words;

    std::array<int, 3> clause_order{ SUBJECT, VERB_ROLE, OBJECT };
    bool determiner_first = true;
    bool adjective_first = true;
    bool adposition_first = true;
};

struct SyntheticWorldOptions {
    std::size_t num_languages = 8;
    std::size_t nouns = 32;
    std::size_t verb_pairs = 8;
    std::size_t adjective_pairs = 6;
    std::size_t determiners = 3;
    std::size_t adpositions = 3;

    /**
     * Fraction of content concepts whose surface form is shared by every language.
     */
    double overlap_fraction = 0.2;
};

/**
 * Names used for synthetic languages: "L0", "L1", ... ("L0" is the pivot in experiments).
 */
inline std::string synthetic_language_name(std::size_t index) {
    return "L" + std::to_string(index);
}

/**
 * Build a family of synthetic languages sharing one concept inventory.
 */
inline std::vector<SyntheticLanguageSpec> make_synthetic_languages(const SyntheticWorldOptions& options, std::uint64_t seed) {
    if (options.num_languages < 1) {
        throw Error("need at least one synthetic language");
    }
    if (options.nouns < 2 || options.verb_pairs < 1 || options.determiners < 1 || options.adpositions < 1) {
        throw Error("synthetic concept inventory is too small");
    }
    if (!(options.overlap_fraction >= 0 && options.overlap_fraction <= 1)) {
        throw Error("overlap fraction must lie in [0, 1]");
    }

    ConceptInventory concepts;
    auto push = [&](const std::string& tag, int antonym) {
        concepts.tags.push_back(label_index(upos_tags(), tag));
        concepts.antonyms.push_back(antonym);
    };
    for (std::size_t i = 0; i < options.nouns; ++i) {
        push("NOUN", -1);
    }
    for (const char* tag : { "VERB", "ADJ" }) {
        std::size_t pairs = std::string(tag) == "VERB" ? options.verb_pairs : options.adjective_pairs;
        for (std::size_t i = 0; i < pairs; ++i) {
            int first = static_cast<int>(concepts.size());
            push(tag, first + 1);
            push(tag, first);
        }
    }
    const std::size_t num_content = concepts.size();
    std::vector<int> function_words;
    for (std::size_t i = 0; i < options.determiners; ++i) {
        function_words.push_back(static_cast<int>(concepts.size()));
        push("DET", -1);
    }
    for (std::size_t i = 0; i < options.adpositions; ++i) {
        function_words.push_back(static_cast<int>(concepts.size()));
        push("ADP", -1);
    }

    Rng rng(seed);
    std::vector<bool> shared(num_content, false);
    {
        std::vector<std::size_t> order(num_content);
        for (std::size_t i = 0; i < num_content; ++i) {
            order[i] = i;
        }
        shuffle(order, rng);
        auto n_shared = static_cast<std::size_t>(options.overlap_fraction * static_cast<double>(num_content) + 0.5);
        for (std::size_t i = 0; i < n_shared; ++i) {
            shared[order[i]] = true;
        }
    }

    static const std::string consonants = "bdfghklmnprstvwz";
    static const std::string vowels = "aeiou";
    static const std::array<std::array<int, 3>, 6> orders{ {
        { SUBJECT, VERB_ROLE, OBJECT }, { SUBJECT, OBJECT, VERB_ROLE }, { VERB_ROLE, SUBJECT, OBJECT },
        { VERB_ROLE, OBJECT, SUBJECT }, { OBJECT, SUBJECT, VERB_ROLE }, { OBJECT, VERB_ROLE, SUBJECT }
    } };

    std::set<std::string> used;
    std::vector<SyntheticLanguageSpec> out;
    for (std::size_t l = 0; l < options.num_languages; ++l) {
        SyntheticLanguageSpec spec;
        spec.id = synthetic_language_name(l);
        spec.concepts = concepts;
        spec.function_words = function_words;
        spec.clause_order = orders[l % orders.size()];
        spec.determiner_first = uniform01(rng) < 0.5;
        spec.adjective_first = uniform01(rng) < 0.5;
        spec.adposition_first = uniform01(rng) < 0.5;

        // Each language draws its syllables from its own small phoneme subset.
        std::string cons = consonants, vows = vowels;
        shuffle(cons, rng);
        shuffle(vows, rng);
        cons.resize(6);
        vows.resize(3);
        auto make_word = [&](std::size_t syllables) {
            for (;;) {
                std::string word;
                for (std::size_t s = 0; s < syllables; ++s) {
                    word += cons[uniform_index(rng, cons.size())];
                    word += vows[uniform_index(rng, vows.size())];
                }
                if (uniform01(rng) < 0.3) {
                    word += cons[uniform_index(rng, cons.size())];
                }
                if (used.insert(word).second) {
                    return word;
                }
                ++syllables;
            }
        };

        spec.lexicon.resize(concepts.size());
        for (std::size_t c = 0; c < concepts.size(); ++c) {
            if (c < num_content && shared[c] && l > 0) {
                spec.lexicon[c] = out.front().lexicon[c];
            } else {
                bool function = c >= num_content;
                spec.lexicon[c] = make_word(function ? 1 : 2 + uniform_index(rng, 2));
            }
        }
        out.push_back(std::move(spec));
    }
    return out;
}

/**
 * Vocabulary holding the surface forms of all given languages, in language then concept order.
 */
inline Vocabulary build_vocabulary(const std::vector<SyntheticLanguageSpec>& specs) {
    Vocabulary vocab;
    for (const auto& spec : specs) {
        for (const auto& word : spec.lexicon) {
            vocab.add(word);
        }
    }
    return vocab;
}

namespace synthetic_detail {

struct Word {
    int concept_id;
    int tag;
};

struct Clause {
    int subject, verb, object;
    int subject_det = -1, object_det = -1;
    int subject_adj = -1, object_adj = -1;
    int adposition = -1, pp_det = -1, pp_noun = -1;
};

inline std::vector<Word> realise_np(const SyntheticLanguageSpec& spec, int det, int adj, int noun) {
    std::vector<Word> core;
    if (adj >= 0 && spec.adjective_first) {
        core.push_back({ adj, spec.concepts.tags[static_cast<std::size_t>(adj)] });
    }
    core.push_back({ noun, spec.concepts.tags[static_cast<std::size_t>(noun)] });
    if (adj >= 0 && !spec.adjective_first) {
        core.push_back({ adj, spec.concepts.tags[static_cast<std::size_t>(adj)] });
    }
    if (det >= 0) {
        Word d{ det, spec.concepts.tags[static_cast<std::size_t>(det)] };
        if (spec.determiner_first) {
            core.insert(core.begin(), d);
        } else {
            core.push_back(d);
        }
    }
    return core;
}

inline std::vector<Word> realise(const SyntheticLanguageSpec& spec, const Clause& clause) {
    std::vector<Word> out;
    for (int role : spec.clause_order) {
        std::vector<Word> part;
        if (role == SUBJECT) {
            part = realise_np(spec, clause.subject_det, clause.subject_adj, clause.subject);
        } else if (role == OBJECT) {
            part = realise_np(spec, clause.object_det, clause.object_adj, clause.object);
        } else {
            part.push_back({ clause.verb, spec.concepts.tags[static_cast<std::size_t>(clause.verb)] });
        }
        out.insert(out.end(), part.begin(), part.end());
    }
    if (clause.adposition >= 0) {
        auto np = realise_np(spec, clause.pp_det, -1, clause.pp_noun);
        Word adp{ clause.adposition, spec.concepts.tags[static_cast<std::size_t>(clause.adposition)] };
        if (spec.adposition_first) {
            out.push_back(adp);
            out.insert(out.end(), np.begin(), np.end());
        } else {
            out.insert(out.end(), np.begin(), np.end());
            out.push_back(adp);
        }
    }
    return out;
}

struct Pools {
    std::vector<int> nouns, verbs, adjectives, determiners, adpositions;

    explicit Pools(const ConceptInventory& concepts) :
        nouns(concepts.with_tag("NOUN")),
        verbs(concepts.with_tag("VERB")),
        adjectives(concepts.with_tag("ADJ")),
        determiners(concepts.with_tag("DET")),
        adpositions(concepts.with_tag("ADP")) {}
};

inline int pick(const std::vector<int>& pool, Rng& rng) {
    return pool[uniform_index(rng, pool.size())];
}

inline Clause random_clause(const Pools& pools, Rng& rng) {
    Clause c;
    c.subject = pick(pools.nouns, rng);
    do {
        c.object = pick(pools.nouns, rng);
    } while (c.object == c.subject);
    c.verb = pick(pools.verbs, rng);
    if (uniform01(rng) < 0.7) {
        c.subject_det = pick(pools.determiners, rng);
    }
    if (uniform01(rng) < 0.7) {
        c.object_det = pick(pools.determiners, rng);
    }
    if (!pools.adjectives.empty() && uniform01(rng) < 0.4) {
        c.subject_adj = pick(pools.adjectives, rng);
    }
    if (!pools.adjectives.empty() && uniform01(rng) < 0.4) {
        c.object_adj = pick(pools.adjectives, rng);
    }
    if (uniform01(rng) < 0.4) {
        c.adposition = pick(pools.adpositions, rng);
        c.pp_det = uniform01(rng) < 0.7 ? pick(pools.determiners, rng) : -1;
        do {
            c.pp_noun = pick(pools.nouns, rng);
        } while (c.pp_noun == c.subject || c.pp_noun == c.object);
    }
    return c;
}

inline std::vector<int> to_ids(const SyntheticLanguageSpec& spec, const Vocabulary& vocab, const std::vector<Word>& words) {
    std::vector<int> ids;
    for (const auto& w : words) {
        ids.push_back(vocab.id(spec.lexicon[static_cast<std::size_t>(w.concept_id)]));
    }
    return ids;
}

inline void check_specs(const std::vector<SyntheticLanguageSpec>& specs, std::size_t min_languages) {
    if (specs.size() < min_languages) {
        throw Error("need at least " + std::to_string(min_languages) + " language specs, got " + std::to_string(specs.size()));
    }
    std::set<std::string> ids;
    for (const auto& spec : specs) {
        if (!ids.insert(spec.id).second) {
            throw Error("duplicate language id '" + spec.id + "'");
        }
        if (spec.lexicon.empty() || spec.concepts.size() == 0) {
            throw Error("language '" + spec.id + "' has an empty lexicon");
        }
        if (spec.lexicon.size() != spec.concepts.size()) {
            throw Error("language '" + spec.id + "' does not give one surface form per concept");
        }
        if (!(spec.concepts == specs.front().concepts)) {
            throw Error("language '" + spec.id + "' uses a different concept inventory");
        }
    }
    Pools pools(specs.front().concepts);
    if (pools.nouns.size() < 3 || pools.verbs.empty() || pools.determiners.empty() || pools.adpositions.empty()) {
        throw Error("concept inventory lacks nouns, verbs, determiners or adpositions");
    }
}

inline std::size_t text_length(const SyntheticLanguageSpec& spec, const std::vector<Word>& words) {
    std::size_t chars = 0;
    for (std::size_t i = 0; i < words.size(); ++i) {
        chars += spec.lexicon[static_cast<std::size_t>(words[i].concept_id)].size() + (i ? 1 : 0);
    }
    return chars;
}

}

/**
 * Generate `n_per_language` examples per language.
 *
 * - `TokenTag`: one clause per example, labelled with the universal tag of each word's concept.
 * - `PairInference`: premise and hypothesis joined by `SEP`. Entailed hypotheses keep a sub-multiset of
 *   the premise's concepts, contradictions swap the verb for its antonym, neutral hypotheses bring in an
 *   object the premise does not mention.
 * - `LanguageId`: paragraphs of whole clauses, at least `min_chars` characters long, no task label.
 *
 * Output is grouped by language in `specs` order and is a pure function of the arguments.
 */
inline std::vector<LabeledExample> generate_corpus(
    const std::vector<SyntheticLanguageSpec>& specs,
    const Vocabulary& vocab,
    std::size_t n_per_language,
    TaskKind task,
    std::uint64_t seed,
    std::size_t min_chars = 100)
{
    using namespace synthetic_detail;
    check_specs(specs, 2);
    if (n_per_language < 1) {
        throw Error("n_per_language must be at least 1");
    }
    Pools pools(specs.front().concepts);

    std::vector<LabeledExample> out;
    out.reserve(specs.size() * n_per_language);
    for (std::size_t l = 0; l < specs.size(); ++l) {
        const auto& spec = specs[l];
        Rng rng(derive_seed(seed, l));
        for (std::size_t i = 0; i < n_per_language; ++i) {
            LabeledExample ex;
            ex.language = spec.id;

            if (task == TaskKind::TokenTag) {
                auto words = realise(spec, random_clause(pools, rng));
                ex.sequence.tokens = to_ids(spec, vocab, words);
                for (const auto& w : words) {
                    ex.task_labels.push_back(w.tag);
                }

            } else if (task == TaskKind::PairInference) {
                Clause premise = random_clause(pools, rng);
                Clause hypo = premise;
                hypo.subject_adj = hypo.object_adj = -1;
                hypo.adposition = hypo.pp_det = hypo.pp_noun = -1;
                int label = static_cast<int>(uniform_index(rng, 3));
                const auto& names = nli_labels();
                if (names[static_cast<std::size_t>(label)] == "contradiction") {
                    hypo.verb = spec.concepts.antonyms[static_cast<std::size_t>(premise.verb)];
                } else if (names[static_cast<std::size_t>(label)] == "neutral") {
                    int noun;
                    do {
                        noun = pick(pools.nouns, rng);
                    } while (noun == premise.subject || noun == premise.object || noun == premise.pp_noun);
                    hypo.object = noun;
                }
                auto p_ids = to_ids(spec, vocab, realise(spec, premise));
                auto h_ids = to_ids(spec, vocab, realise(spec, hypo));
                ex.sequence.tokens = p_ids;
                ex.sequence.pair_boundary = p_ids.size();
                ex.sequence.tokens.push_back(SEP);
                ex.sequence.tokens.insert(ex.sequence.tokens.end(), h_ids.begin(), h_ids.end());
                ex.task_labels.push_back(label);

            } else {
                std::vector<Word> words;
                const std::size_t target = min_chars + uniform_index(rng, min_chars + 1);
                while (text_length(spec, words) < target) {
                    auto clause = realise(spec, random_clause(pools, rng));
                    if (words.size() + clause.size() > default_max_length) {
                        break;
                    }
                    words.insert(words.end(), clause.begin(), clause.end());
                }
                ex.sequence.tokens = to_ids(spec, vocab, words);
            }
            out.push_back(std::move(ex));
        }
    }
    return out;
}


}

#endif
