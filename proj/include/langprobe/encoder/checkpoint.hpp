#ifndef LANGPROBE_ENCODER_CHECKPOINT_HPP
#define LANGPROBE_ENCODER_CHECKPOINT_HPP

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "../heads/head.hpp"
#include "encoder.hpp"

/**
 * @file checkpoint.hpp
 *
 * @brief Self-describing binary container for an encoder and any number of classifier heads.
 *
 * Layout (all integers little-endian):
 *
 * | bytes | content |
 * |-------|---------|
 * | 4     | magic `LPCK` |
 * | 4     | format version (uint32, currently 1) |
 * | 8     | header length `H` in bytes (uint64) |
 * | H     | UTF-8 JSON header |
 * | ...   | payload: every array as row-major IEEE-754 float64, in header order |
 *
 * The header holds `encoder_config`, free-form `metadata`, and `arrays`, a list of
 * `{name, rows, cols, offset}` with `offset` counted in bytes from the start of the payload.
 * Array names are `<section>/<parameter>`; the encoder lives in section `encoder`, heads in sections of
 * their own (`task_head`, `language_probe`, ...).
 */

namespace langprobe {

inline constexpr char checkpoint_magic[4] = { 'L', 'P', 'C', 'K' };
inline constexpr std::uint32_t checkpoint_version = 1;

inline nlohmann::json to_json(const EncoderConfig& c) {
    return nlohmann::json{ { "vocab_size", c.vocab_size }, { "d_model", c.d_model }, { "n_layers", c.n_layers },
                           { "n_heads", c.n_heads }, { "ff_width", c.ff_width }, { "max_position", c.max_position },
                           { "dropout", c.dropout } };
}

inline EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
    EncoderConfig c;
    try {
        c.vocab_size = j.at("vocab_size").get<std::size_t>();
        c.d_model = j.at("d_model").get<std::size_t>();
        c.n_layers = j.at("n_layers").get<std::size_t>();
        c.n_heads = j.at("n_heads").get<std::size_t>();
        c.ff_width = j.at("ff_width").get<std::size_t>();
        c.max_position = j.at("max_position").get<std::size_t>();
        c.dropout = j.at("dropout").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("malformed encoder config: ") + e.what());
    }
    c.validate();
    return c;
}

/**
 * In-memory form of a checkpoint file. Values are held in double precision whatever the model's scalar type.
 */
class Checkpoint {
public:
    Checkpoint() = default;

    template<typename Scalar_>
    explicit Checkpoint(const EncoderModel<Scalar_>& encoder) : my_config(encoder.config()) {
        add_section("encoder", encoder.params());
    }

    const EncoderConfig& encoder_config() const { return my_config; }
    nlohmann::json& metadata() { return my_metadata; }
    const nlohmann::json& metadata() const { return my_metadata; }

    template<typename Scalar_>
    void add_head(const std::string& section, const ClassifierHead<Scalar_>& head) {
        if (section == "encoder" || section.empty() || section.find('/') != std::string::npos) {
            throw Error("invalid head section name '" + section + "'");
        }
        add_section(section, head);
    }

    bool has_section(const std::string& section) const {
        auto it = my_arrays.lower_bound(section + "/");
        return it != my_arrays.end() && it->first.compare(0, section.size() + 1, section + "/") == 0;
    }

    std::vector<std::string> sections() const {
        std::vector<std::string> out;
        for (const auto& [name, value] : my_arrays) {
            auto s = name.substr(0, name.find('/'));
            if (out.empty() || out.back() != s) {
                out.push_back(s);
            }
        }
        return out;
    }

    const std::map<std::string, Matrix<double> >& arrays() const { return my_arrays; }

    template<typename Scalar_>
    EncoderModel<Scalar_> encoder() const {
        if (!has_section("encoder")) {
            throw Error("checkpoint has no encoder section");
        }
        EncoderParams<Scalar_> params = init_encoder_params<Scalar_>(my_config, 0);
        fill_section("encoder", params);
        return EncoderModel<Scalar_>(my_config, std::move(params));
    }

    template<typename Scalar_>
    ClassifierHead<Scalar_> head(const std::string& section) const {
        if (!has_section(section)) {
            throw Error("checkpoint has no section '" + section + "'");
        }
        const auto& w = array(section + "/weight");
        auto head = make_head<Scalar_>(static_cast<std::size_t>(w.rows()), static_cast<std::size_t>(w.cols()), 0.0, 0);
        fill_section(section, head);
        return head;
    }

    const Matrix<double>& array(const std::string& name) const {
        auto it = my_arrays.find(name);
        if (it == my_arrays.end()) {
            throw Error("checkpoint has no array '" + name + "'");
        }
        return it->second;
    }

    void save(const std::string& path) const {
        static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");
        nlohmann::json header;
        header["format"] = "langprobe-checkpoint";
        header["encoder_config"] = to_json(my_config);
        header["metadata"] = my_metadata;
        header["arrays"] = nlohmann::json::array();
        std::uint64_t offset = 0;
        for (const auto& [name, m] : my_arrays) {
            header["arrays"].push_back({ { "name", name }, { "rows", m.rows() }, { "cols", m.cols() }, { "offset", offset } });
            offset += static_cast<std::uint64_t>(m.size()) * sizeof(double);
        }
        const std::string text = header.dump();
        std::ofstream out(path, std::ios::binary);
        if (!out) {
            throw Error("cannot write checkpoint '" + path + "'");
        }
        const std::uint64_t length = text.size();
        out.write(checkpoint_magic, 4);
        out.write(reinterpret_cast<const char*>(&checkpoint_version), sizeof(checkpoint_version));
        out.write(reinterpret_cast<const char*>(&length), sizeof(length));
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        for (const auto& [name, m] : my_arrays) {
            out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
        }
        if (!out) {
            throw Error("failed while writing checkpoint '" + path + "'");
        }
    }

    static Checkpoint load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) {
            throw Error("cannot open checkpoint '" + path + "'");
        }
        char magic[4];
        std::uint32_t version = 0;
        std::uint64_t length = 0;
        in.read(magic, 4);
        in.read(reinterpret_cast<char*>(&version), sizeof(version));
        in.read(reinterpret_cast<char*>(&length), sizeof(length));
        if (!in || std::memcmp(magic, checkpoint_magic, 4) != 0) {
            throw Error("'" + path + "' is not a checkpoint file");
        }
        if (version != checkpoint_version) {
            throw Error("'" + path + "' has unsupported checkpoint version " + std::to_string(version));
        }
        if (length > (std::uint64_t(1) << 30)) {
            throw Error("'" + path + "' has an implausible header length");
        }
        std::string text(length, '\0');
        in.read(text.data(), static_cast<std::streamsize>(length));
        if (!in) {
            throw Error("'" + path + "' is truncated inside its header");
        }
        Checkpoint out;
        std::vector<char> payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        try {
            auto header = nlohmann::json::parse(text);
            out.my_config = encoder_config_from_json(header.at("encoder_config"));
            out.my_metadata = header.value("metadata", nlohmann::json::object());
            for (const auto& entry : header.at("arrays")) {
                const auto name = entry.at("name").get<std::string>();
                const auto rows = entry.at("rows").get<std::int64_t>();
                const auto cols = entry.at("cols").get<std::int64_t>();
                const auto offset = entry.at("offset").get<std::uint64_t>();
                if (rows < 0 || cols < 0) {
                    throw Error("array '" + name + "' has a negative shape");
                }
                const std::uint64_t bytes = static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(cols) * sizeof(double);
                if (offset > payload.size() || bytes > payload.size() - offset) {
                    throw Error("array '" + name + "' extends past the end of the file");
                }
                Matrix<double> m(rows, cols);
                std::memcpy(m.data(), payload.data() + offset, bytes);
                if (!out.my_arrays.emplace(name, std::move(m)).second) {
                    throw Error("array '" + name + "' appears twice");
                }
            }
        } catch (const nlohmann::json::exception& e) {
            throw Error("'" + path + "' has a malformed header: " + e.what());
        }
        return out;
    }

private:
    template<typename Params_>
    void add_section(const std::string& section, const Params_& params) {
        zip_parameters([&](const std::string& name, const auto& m) {
            my_arrays[section + "/" + name] = m.template cast<double>();
        }, params);
    }

    template<typename Params_>
    void fill_section(const std::string& section, Params_& params) const {
        zip_parameters([&](const std::string& name, auto& m) {
            const auto& stored = array(section + "/" + name);
            if (stored.rows() != m.rows() || stored.cols() != m.cols()) {
                throw Error("array '" + section + "/" + name + "' has shape " + std::to_string(stored.rows()) + "x" + std::to_string(stored.cols()) +
                            ", expected " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
            }
            using Target = typename std::decay_t<decltype(m)>::Scalar;
            m = stored.template cast<Target>();
        }, params);
    }

    EncoderConfig my_config;
    nlohmann::json my_metadata = nlohmann::json::object();
    std::map<std::string, Matrix<double> > my_arrays;
};

}

#endif
