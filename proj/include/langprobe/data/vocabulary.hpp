#ifndef LANGPROBE_DATA_VOCABULARY_HPP
#define LANGPROBE_DATA_VOCABULARY_HPP

#include <cctype>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "example.hpp"

namespace langprobe {

/**
 * Whole-word vocabulary. Ids 0-3 are the reserved special tokens.
 * The on-disk form is one token per line, line number (from 0) = id.
 */
class Vocabulary {
public:
    Vocabulary() {
        for (const char* tok : { "[PAD]", "[UNK]", "[SEP]", "[MASK]" }) {
            add(tok);
        }
    }

    /**
     * Add `token` if absent; returns its id either way.
     */
    int add(const std::string& token) {
        auto it = my_ids.find(token);
        if (it != my_ids.end()) {
            return it->second;
        }
        int id = static_cast<int>(my_tokens.size());
        my_tokens.push_back(token);
        my_ids.emplace(token, id);
        return id;
    }

    /**
     * Id of `token`, or `UNK` when it is not in the vocabulary.
     */
    int id(const std::string& token) const {
        auto it = my_ids.find(token);
        return it == my_ids.end() ? UNK : it->second;
    }

    bool contains(const std::string& token) const { return my_ids.count(token) > 0; }

    const std::string& token(int id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= my_tokens.size()) {
            throw Error("token id " + std::to_string(id) + " is outside the vocabulary");
        }
        return my_tokens[static_cast<std::size_t>(id)];
    }

    std::size_t size() const { return my_tokens.size(); }

    const std::vector<std::string>& tokens() const { return my_tokens; }

    /**
     * Whitespace tokenisation followed by lookup. Unknown words map to `UNK`.
     */
    std::vector<int> encode(const std::string& text) const {
        std::vector<int> out;
        std::size_t pos = 0;
        while (pos < text.size()) {
            while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) {
                ++pos;
            }
            std::size_t end = pos;
            while (end < text.size() && !std::isspace(static_cast<unsigned char>(text[end]))) {
                ++end;
            }
            if (end > pos) {
                out.push_back(id(text.substr(pos, end - pos)));
            }
            pos = end;
        }
        return out;
    }

    std::string decode(const std::vector<int>& ids) const {
        std::string out;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (i) {
                out += ' ';
            }
            out += token(ids[i]);
        }
        return out;
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) {
            throw Error("cannot write vocabulary file '" + path + "'");
        }
        for (const auto& tok : my_tokens) {
            out << tok << '\n';
        }
    }

    static Vocabulary load(const std::string& path) {
        std::ifstream in(path);
        if (!in) {
            throw Error("cannot open vocabulary file '" + path + "'");
        }
        Vocabulary vocab;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') {
                line.pop_back();
            }
            if (line_no < static_cast<std::size_t>(num_special_tokens)) {
                if (line != vocab.my_tokens[line_no]) {
                    throw Error(path + ":" + std::to_string(line_no + 1) + ": expected reserved token " + vocab.my_tokens[line_no]);
                }
            } else {
                if (vocab.contains(line)) {
                    throw Error(path + ":" + std::to_string(line_no + 1) + ": duplicate token '" + line + "'");
                }
                vocab.add(line);
            }
            ++line_no;
        }
        return vocab;
    }

private:
    std::vector<std::string> my_tokens;
    std::unordered_map<std::string, int> my_ids;
};

}

#endif
