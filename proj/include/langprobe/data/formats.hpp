#ifndef LANGPROBE_DATA_FORMATS_HPP
#define LANGPROBE_DATA_FORMATS_HPP

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "example.hpp"
#include "vocabulary.hpp"

/**
 * @file formats.hpp
 *
 * @brief Readers and writers for the three text corpora.
 *
 * - CoNLL-U: 10 tab-separated columns, FORM (2) and UPOS (4) are used, `#` lines are comments, a blank
 *   line ends a sentence. Multi-word token ranges (`1-2`) and empty nodes (`1.1`) are skipped.
 * - Inference TSV: `premise<TAB>hypothesis<TAB>label<TAB>language`.
 * - Language-identification TSV: `text<TAB>language`.
 */

namespace langprobe {

struct LoadOptions {
    std::size_t max_length = default_max_length;

    /**
     * Omit any text containing a word missing from the vocabulary. When false such words map to `UNK`.
     */
    bool filter_unknown = true;

    /**
     * Minimum paragraph length in characters for language-identification data.
     */
    std::size_t min_chars = 100;
};

namespace formats_detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        auto tab = line.find('\t', start);
        out.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
        if (tab == std::string::npos) {
            return out;
        }
        start = tab + 1;
    }
}

inline void strip_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
}

inline std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) {
        return "";
    }
    auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

inline std::ifstream open(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open '" + path + "'");
    }
    return in;
}

inline Error line_error(const std::string& path, std::size_t line_no, const std::string& message) {
    return Error(path + ":" + std::to_string(line_no) + ": " + message);
}

inline bool has_unknown(const std::vector<int>& ids) {
    return std::find(ids.begin(), ids.end(), static_cast<int>(UNK)) != ids.end();
}

inline std::size_t utf8_length(const std::string& text) {
    std::size_t n = 0;
    for (unsigned char c : text) {
        n += (c & 0xC0) != 0x80;
    }
    return n;
}

}

/**
 * Language code implied by a corpus file name: the part of the base name before the first '_', '-' or '.'
 * (UD style, e.g. `en_ewt-ud-test.conllu` gives `en`).
 */
inline std::string language_from_filename(const std::string& path) {
    auto slash = path.find_last_of("/\\");
    std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
    auto stop = base.find_first_of("_-.");
    return base.substr(0, stop);
}

/**
 * Join premise and hypothesis with `SEP`, trimming the longer side one token at a time until the
 * combined length (separator included) fits in `max_length`. On equal lengths the hypothesis loses the token.
 * Returns an empty sequence when either side would end up empty.
 */
inline TokenSequence join_pair(std::vector<int> premise, std::vector<int> hypothesis, std::size_t max_length = default_max_length) {
    if (max_length < 3) {
        throw Error("pairs need a length limit of at least 3");
    }
    while (premise.size() + hypothesis.size() + 1 > max_length) {
        if (premise.size() > hypothesis.size()) {
            premise.pop_back();
        } else {
            hypothesis.pop_back();
        }
    }
    TokenSequence seq;
    if (premise.empty() || hypothesis.empty()) {
        return seq;
    }
    seq.tokens = std::move(premise);
    seq.pair_boundary = seq.tokens.size();
    seq.tokens.push_back(SEP);
    seq.tokens.insert(seq.tokens.end(), hypothesis.begin(), hypothesis.end());
    return seq;
}

/**
 * Read a CoNLL-U file into token-tagged examples, one per sentence, truncated to `max_length` tokens.
 *
 * The language comes from a `# language = <code>` comment in the sentence block when present,
 * otherwise from the file name (see `language_from_filename()`).
 */
inline std::vector<LabeledExample> load_conllu(const std::string& path, const Vocabulary& vocab, const LoadOptions& options = {}) {
    using namespace formats_detail;
    auto in = open(path);
    const std::string file_language = language_from_filename(path);

    std::vector<LabeledExample> out;
    std::vector<int> tokens, labels;
    std::string language;
    bool unknown = false;

    auto flush = [&]() {
        if (!tokens.empty() && !(unknown && options.filter_unknown)) {
            if (tokens.size() > options.max_length) {
                tokens.resize(options.max_length);
                labels.resize(options.max_length);
            }
            LabeledExample ex;
            ex.sequence.tokens = tokens;
            ex.task_labels = labels;
            ex.language = language.empty() ? file_language : language;
            out.push_back(std::move(ex));
        }
        tokens.clear();
        labels.clear();
        language.clear();
        unknown = false;
    };

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        strip_cr(line);
        if (trim(line).empty()) {
            flush();
            continue;
        }
        if (line[0] == '#') {
            auto eq = line.find('=');
            if (eq != std::string::npos && trim(line.substr(1, eq - 1)) == "language") {
                language = trim(line.substr(eq + 1));
            }
            continue;
        }
        auto cols = split_tabs(line);
        if (cols.size() != 10) {
            throw line_error(path, line_no, "expected 10 tab-separated columns, found " + std::to_string(cols.size()));
        }
        if (cols[0].find_first_of("-.") != std::string::npos) {
            continue;
        }
        if (cols[1].empty()) {
            throw line_error(path, line_no, "empty FORM column");
        }
        int tag = label_index(upos_tags(), cols[3]);
        if (tag == ignore_label) {
            throw line_error(path, line_no, "unknown UPOS tag '" + cols[3] + "'");
        }
        int id = vocab.id(cols[1]);
        unknown = unknown || id == UNK;
        tokens.push_back(id);
        labels.push_back(tag);
    }
    flush();
    return out;
}

/**
 * Read an inference TSV. Each row becomes one pair example capped at `max_length` tokens including the separator.
 */
inline std::vector<LabeledExample> load_nli_tsv(const std::string& path, const Vocabulary& vocab, const LoadOptions& options = {}) {
    using namespace formats_detail;
    auto in = open(path);
    std::vector<LabeledExample> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        strip_cr(line);
        if (trim(line).empty()) {
            continue;
        }
        auto cols = split_tabs(line);
        if (cols.size() < 4) {
            throw line_error(path, line_no, "expected premise, hypothesis, label and language columns, found " + std::to_string(cols.size()));
        }
        int label = label_index(nli_labels(), trim(cols[2]));
        if (label == ignore_label) {
            throw line_error(path, line_no, "unknown inference label '" + cols[2] + "'");
        }
        auto language = trim(cols[3]);
        if (language.empty()) {
            throw line_error(path, line_no, "missing language");
        }
        auto premise = vocab.encode(cols[0]);
        auto hypothesis = vocab.encode(cols[1]);
        if (options.filter_unknown && (has_unknown(premise) || has_unknown(hypothesis))) {
            continue;
        }
        auto seq = join_pair(std::move(premise), std::move(hypothesis), options.max_length);
        if (seq.tokens.empty()) {
            continue;
        }
        LabeledExample ex;
        ex.sequence = std::move(seq);
        ex.task_labels = { label };
        ex.language = language;
        out.push_back(std::move(ex));
    }
    return out;
}

/**
 * Read a language-identification TSV. Paragraphs shorter than `min_chars` characters are skipped.
 */
inline std::vector<LabeledExample> load_lid_paragraphs(const std::string& path, const Vocabulary& vocab, const LoadOptions& options = {}) {
    using namespace formats_detail;
    auto in = open(path);
    std::vector<LabeledExample> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        strip_cr(line);
        if (trim(line).empty()) {
            continue;
        }
        auto cols = split_tabs(line);
        if (cols.size() < 2 || trim(cols[1]).empty()) {
            throw line_error(path, line_no, "missing language column");
        }
        if (utf8_length(cols[0]) < options.min_chars) {
            continue;
        }
        auto ids = vocab.encode(cols[0]);
        if (ids.empty() || (options.filter_unknown && has_unknown(ids))) {
            continue;
        }
        if (ids.size() > options.max_length) {
            ids.resize(options.max_length);
        }
        LabeledExample ex;
        ex.sequence.tokens = std::move(ids);
        ex.language = trim(cols[1]);
        out.push_back(std::move(ex));
    }
    return out;
}

inline void write_conllu(const std::string& path, const std::vector<LabeledExample>& examples, const Vocabulary& vocab) {
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot write '" + path + "'");
    }
    for (const auto& ex : examples) {
        if (ex.sequence.is_pair() || ex.task_labels.size() != ex.sequence.size()) {
            throw Error("only token-tagged examples can be written as CoNLL-U");
        }
        out << "# language = " << ex.language << '\n';
        out << "# text = " << vocab.decode(ex.sequence.tokens) << '\n';
        for (std::size_t i = 0; i < ex.sequence.size(); ++i) {
            out << (i + 1) << '\t' << vocab.token(ex.sequence.tokens[i]) << "\t_\t"
                << upos_tags()[static_cast<std::size_t>(ex.task_labels[i])] << "\t_\t_\t_\t_\t_\t_\n";
        }
        out << '\n';
    }
}

inline void write_nli_tsv(const std::string& path, const std::vector<LabeledExample>& examples, const Vocabulary& vocab) {
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot write '" + path + "'");
    }
    for (const auto& ex : examples) {
        if (!ex.sequence.is_pair() || ex.task_labels.size() != 1) {
            throw Error("only labelled pairs can be written as inference TSV");
        }
        const auto& toks = ex.sequence.tokens;
        auto b = static_cast<std::ptrdiff_t>(*ex.sequence.pair_boundary);
        out << vocab.decode({ toks.begin(), toks.begin() + b }) << '\t'
            << vocab.decode({ toks.begin() + b + 1, toks.end() }) << '\t'
            << nli_labels()[static_cast<std::size_t>(ex.task_labels[0])] << '\t' << ex.language << '\n';
    }
}

inline void write_lid_tsv(const std::string& path, const std::vector<LabeledExample>& examples, const Vocabulary& vocab) {
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot write '" + path + "'");
    }
    for (const auto& ex : examples) {
        out << vocab.decode(ex.sequence.tokens) << '\t' << ex.language << '\n';
    }
}

}

#endif
