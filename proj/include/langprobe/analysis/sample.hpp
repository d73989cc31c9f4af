#ifndef LANGPROBE_ANALYSIS_SAMPLE_HPP
#define LANGPROBE_ANALYSIS_SAMPLE_HPP

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "../core/types.hpp"

namespace langprobe {

/**
 * Placeholder written for points without a task label.
 */
inline const std::string no_label = "-";

/**
 * A set of full-dimensional representations with their annotations.
 */
struct EmbeddingSample {
    Matrix<double> vectors;              ///< one point per row
    std::vector<std::string> labels;     ///< task label per point, `no_label` when absent
    std::vector<std::string> languages;

    std::size_t size() const { return static_cast<std::size_t>(vectors.rows()); }

    bool has_labels() const {
        for (const auto& l : labels) {
            if (l != no_label) {
                return true;
            }
        }
        return false;
    }

    void validate() const {
        if (labels.size() != size() || languages.size() != size()) {
            throw Error("embedding sample annotations do not align with its vectors");
        }
    }

    EmbeddingSample subset(const std::vector<std::size_t>& rows) const {
        EmbeddingSample out;
        out.vectors.resize(static_cast<Eigen::Index>(rows.size()), vectors.cols());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            out.vectors.row(static_cast<Eigen::Index>(r)) = vectors.row(static_cast<Eigen::Index>(rows[r]));
            out.labels.push_back(labels[rows[r]]);
            out.languages.push_back(languages[rows[r]]);
        }
        return out;
    }
};

/**
 * Per-cell caps for plot samples.
 */
struct QuotaRule {
    /**
     * Maximum points per (label, language) cell, or per language when the sample carries no labels.
     */
    std::size_t per_cell = 10;
};

/**
 * Uniform random sample of at most `rule.per_cell` points from each cell. Cells with fewer points keep all
 * of them. Selected points keep their original relative order.
 */
inline EmbeddingSample plot_sample(const EmbeddingSample& data, const QuotaRule& rule, std::uint64_t seed) {
    data.validate();
    const bool by_label = data.has_labels();
    std::map<std::pair<std::string, std::string>, std::vector<std::size_t> > cells;
    for (std::size_t i = 0; i < data.size(); ++i) {
        cells[{ by_label ? data.labels[i] : std::string(), data.languages[i] }].push_back(i);
    }
    std::vector<std::size_t> chosen;
    std::uint64_t stream = 0;
    for (auto& [key, members] : cells) {
        Rng rng(derive_seed(seed, stream++));
        shuffle(members, rng);
        const std::size_t take = std::min(rule.per_cell, members.size());
        chosen.insert(chosen.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take));
    }
    std::sort(chosen.begin(), chosen.end());
    return data.subset(chosen);
}

/**
 * Embedding dump: a `dim=<d>` header line, then per point `d` whitespace-separated floats, a tab, the task
 * label (or `-`), a tab and the language.
 */
inline void write_embedding_dump(const std::string& path, const EmbeddingSample& sample) {
    sample.validate();
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot write '" + path + "'");
    }
    out << "dim=" << sample.vectors.cols() << '\n';
    char buffer[64];
    for (std::size_t i = 0; i < sample.size(); ++i) {
        for (Eigen::Index j = 0; j < sample.vectors.cols(); ++j) {
            std::snprintf(buffer, sizeof(buffer), "%.17g", sample.vectors(static_cast<Eigen::Index>(i), j));
            out << (j ? " " : "") << buffer;
        }
        out << '\t' << sample.labels[i] << '\t' << sample.languages[i] << '\n';
    }
}

inline EmbeddingSample read_embedding_dump(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open '" + path + "'");
    }
    std::string line;
    if (!std::getline(in, line) || line.rfind("dim=", 0) != 0) {
        throw Error(path + ":1: expected a 'dim=<d>' header");
    }
    long dim = 0;
    try {
        dim = std::stol(line.substr(4));
    } catch (const std::exception&) {
        dim = 0;
    }
    if (dim < 1) {
        throw Error(path + ":1: invalid dimension");
    }
    std::vector<double> values;
    EmbeddingSample sample;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        auto tab1 = line.find('\t');
        auto tab2 = tab1 == std::string::npos ? tab1 : line.find('\t', tab1 + 1);
        if (tab2 == std::string::npos) {
            throw Error(path + ":" + std::to_string(line_no) + ": expected '<floats>\\t<label>\\t<language>'");
        }
        std::istringstream numbers(line.substr(0, tab1));
        long count = 0;
        double v;
        while (numbers >> v) {
            values.push_back(v);
            ++count;
        }
        if (count != dim || !numbers.eof()) {
            throw Error(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(dim) + " numbers");
        }
        sample.labels.push_back(line.substr(tab1 + 1, tab2 - tab1 - 1));
        sample.languages.push_back(line.substr(tab2 + 1));
    }
    sample.vectors.resize(static_cast<Eigen::Index>(sample.labels.size()), dim);
    std::copy(values.begin(), values.end(), sample.vectors.data());
    return sample;
}

}

#endif
