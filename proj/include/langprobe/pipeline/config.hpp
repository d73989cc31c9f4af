#ifndef LANGPROBE_PIPELINE_CONFIG_HPP
#define LANGPROBE_PIPELINE_CONFIG_HPP

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "../analysis/sample.hpp"
#include "../analysis/tsne.hpp"
#include "../data/synthetic.hpp"
#include "../encoder/mlm.hpp"
#include "../encoder/params.hpp"
#include "../training/config.hpp"

/**
 * @file config.hpp
 *
 * @brief Pipeline configuration and its on-disk form: one flat JSON object whose keys mirror the CLI flags.
 */

namespace langprobe {

/**
 * Corpus files. When `vocab` is empty a synthetic corpus is generated instead.
 * `task` is CoNLL-U for token tagging or inference TSV for pair inference; `lid` and `pretrain` are
 * `text<TAB>language` files.
 */
struct CorpusPaths {
    std::string vocab;
    std::string task;
    std::string lid;
    std::string pretrain;

    bool synthetic() const { return vocab.empty(); }
};

struct SyntheticCorpusSettings {
    SyntheticWorldOptions world = [] {
        SyntheticWorldOptions w;
        w.overlap_fraction = 0.5;
        return w;
    }();
    std::size_t task_per_language = 2000;
    std::size_t lid_per_language = 200;
    std::size_t pretrain_per_language = 1000;
};

struct AnalysisSettings {
    QuotaRule task_quota{ 10 };
    QuotaRule lid_quota{ 100 };
    std::size_t kmeans_runs = 10;
    TsneSettings tsne;

    /**
     * Skip the t-SNE projections (cluster reports are still computed).
     */
    bool projections = true;
};

struct PipelineConfig {
    /**
     * Seeds corpus generation, splitting, encoder initialisation, pre-training and analysis.
     * Training uses `experiment.seed`.
     */
    std::uint64_t seed = 0;

    std::string output_dir = "run";

    /**
     * Pre-trained encoder to start from; empty means pre-train here.
     */
    std::string checkpoint;

    CorpusPaths corpus;
    SyntheticCorpusSettings synthetic;
    std::vector<double> split{ 0.7, 0.1, 0.1, 0.1 };

    EncoderConfig encoder;  ///< `vocab_size` is taken from the vocabulary
    MlmOptions mlm;

    ExperimentConfig experiment = [] {
        ExperimentConfig c;
        c.encoder_lr = 1e-2;
        return c;
    }();

    AnalysisSettings analysis;

    void validate() const {
        experiment.validate();
        if (split.size() != 4) {
            throw Error("split needs four fractions (train, val, dev, test)");
        }
        if (output_dir.empty()) {
            throw Error("output_dir is empty");
        }
        if (!corpus.synthetic() && (corpus.task.empty() || corpus.lid.empty() || (corpus.pretrain.empty() && checkpoint.empty()))) {
            throw Error("with a vocabulary file, task and lid corpora (and a pretrain corpus unless a checkpoint is given) are required");
        }
        if (analysis.kmeans_runs < 1) {
            throw Error("kmeans_runs must be at least 1");
        }
        if (mlm.steps > 0 && !(mlm.learning_rate > 0)) {
            throw Error("mlm learning rate must be positive");
        }
    }
};

namespace pipeline_detail {

template<typename Value_>
void read_key(const nlohmann::json& j, const char* key, Value_& target) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) {
        return;
    }
    try {
        target = it->template get<Value_>();
    } catch (const nlohmann::json::exception&) {
        throw Error(std::string("config key '") + key + "' has the wrong type");
    }
}

inline void read_optional(const nlohmann::json& j, const char* key, std::optional<double>& target) {
    auto it = j.find(key);
    if (it == j.end()) {
        return;
    }
    if (it->is_null()) {
        target.reset();
    } else if (it->is_number()) {
        target = it->get<double>();
    } else {
        throw Error(std::string("config key '") + key + "' must be a number or null");
    }
}

inline nlohmann::json optional_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}

/**
 * Every field of an experiment config under its CLI flag name.
 */
inline nlohmann::json experiment_to_json(const ExperimentConfig& c) {
    using pipeline_detail::optional_json;
    return nlohmann::json{
        { "regime", to_string(c.regime) },
        { "task", to_string(c.task) },
        { "init_stddev", c.init_stddev },
        { "batch_size", c.batch_size },
        { "head_lr", c.head_lr },
        { "encoder_lr", c.encoder_lr },
        { "lambda", optional_json(c.lambda) },
        { "w", optional_json(c.w) },
        { "language_term", to_string(c.language_term) },
        { "epochs", c.epochs },
        { "experiment_seed", c.seed },
        { "head_dropout", c.head_dropout },
        { "pivot", c.pivot_language },
    };
}

/**
 * Overwrite the fields of `c` present in `j`. The regime and task are read first so that the other keys
 * can be checked against them by `validate()`.
 */
inline void experiment_from_json(const nlohmann::json& j, ExperimentConfig& c) {
    using namespace pipeline_detail;
    std::string name;
    if (j.contains("regime") && !j["regime"].is_null()) {
        read_key(j, "regime", name);
        c.regime = parse_regime(name);
    }
    if (j.contains("task") && !j["task"].is_null()) {
        read_key(j, "task", name);
        c.task = parse_task_kind(name);
    }
    read_key(j, "init_stddev", c.init_stddev);
    read_key(j, "batch_size", c.batch_size);
    read_key(j, "head_lr", c.head_lr);
    read_key(j, "encoder_lr", c.encoder_lr);
    read_optional(j, "lambda", c.lambda);
    read_optional(j, "w", c.w);
    if (j.contains("language_term") && !j["language_term"].is_null()) {
        read_key(j, "language_term", name);
        c.language_term = parse_language_term(name);
    }
    read_key(j, "epochs", c.epochs);
    read_key(j, "experiment_seed", c.seed);
    read_key(j, "head_dropout", c.head_dropout);
    read_key(j, "pivot", c.pivot_language);
}

inline nlohmann::json to_json(const PipelineConfig& c) {
    nlohmann::json j{
        { "seed", c.seed },
        { "output_dir", c.output_dir },
        { "checkpoint", c.checkpoint },
        { "vocab", c.corpus.vocab },
        { "task_corpus", c.corpus.task },
        { "lid_corpus", c.corpus.lid },
        { "pretrain_corpus", c.corpus.pretrain },
        { "languages", c.synthetic.world.num_languages },
        { "overlap", c.synthetic.world.overlap_fraction },
        { "task_per_language", c.synthetic.task_per_language },
        { "lid_per_language", c.synthetic.lid_per_language },
        { "pretrain_per_language", c.synthetic.pretrain_per_language },
        { "split", c.split },
        { "d_model", c.encoder.d_model },
        { "n_layers", c.encoder.n_layers },
        { "n_heads", c.encoder.n_heads },
        { "ff_width", c.encoder.ff_width },
        { "max_position", c.encoder.max_position },
        { "encoder_dropout", c.encoder.dropout },
        { "mlm_steps", c.mlm.steps },
        { "mlm_batch_size", c.mlm.batch_size },
        { "mlm_lr", c.mlm.learning_rate },
        { "mlm_mask_rate", c.mlm.mask_rate },
        { "task_quota", c.analysis.task_quota.per_cell },
        { "lid_quota", c.analysis.lid_quota.per_cell },
        { "kmeans_runs", c.analysis.kmeans_runs },
        { "projections", c.analysis.projections },
        { "tsne_perplexity", c.analysis.tsne.perplexity },
        { "tsne_iterations", c.analysis.tsne.iterations },
        { "tsne_lr", c.analysis.tsne.learning_rate },
    };
    j.update(experiment_to_json(c.experiment));
    return j;
}

/**
 * Config from a flat JSON object; absent keys keep their defaults and unknown keys are rejected.
 * Without an explicit `experiment_seed` the experiment is seeded with `seed`.
 */
inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
    using namespace pipeline_detail;
    if (!j.is_object()) {
        throw Error("config must be a JSON object");
    }
    PipelineConfig c;
    const auto known = to_json(c);
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) {
            throw Error("unknown config key '" + key + "'");
        }
    }
    read_key(j, "seed", c.seed);
    c.experiment.seed = c.seed;
    read_key(j, "output_dir", c.output_dir);
    read_key(j, "checkpoint", c.checkpoint);
    read_key(j, "vocab", c.corpus.vocab);
    read_key(j, "task_corpus", c.corpus.task);
    read_key(j, "lid_corpus", c.corpus.lid);
    read_key(j, "pretrain_corpus", c.corpus.pretrain);
    read_key(j, "languages", c.synthetic.world.num_languages);
    read_key(j, "overlap", c.synthetic.world.overlap_fraction);
    read_key(j, "task_per_language", c.synthetic.task_per_language);
    read_key(j, "lid_per_language", c.synthetic.lid_per_language);
    read_key(j, "pretrain_per_language", c.synthetic.pretrain_per_language);
    read_key(j, "split", c.split);
    read_key(j, "d_model", c.encoder.d_model);
    read_key(j, "n_layers", c.encoder.n_layers);
    read_key(j, "n_heads", c.encoder.n_heads);
    read_key(j, "ff_width", c.encoder.ff_width);
    read_key(j, "max_position", c.encoder.max_position);
    read_key(j, "encoder_dropout", c.encoder.dropout);
    read_key(j, "mlm_steps", c.mlm.steps);
    read_key(j, "mlm_batch_size", c.mlm.batch_size);
    read_key(j, "mlm_lr", c.mlm.learning_rate);
    read_key(j, "mlm_mask_rate", c.mlm.mask_rate);
    read_key(j, "task_quota", c.analysis.task_quota.per_cell);
    read_key(j, "lid_quota", c.analysis.lid_quota.per_cell);
    read_key(j, "kmeans_runs", c.analysis.kmeans_runs);
    read_key(j, "projections", c.analysis.projections);
    read_key(j, "tsne_perplexity", c.analysis.tsne.perplexity);
    read_key(j, "tsne_iterations", c.analysis.tsne.iterations);
    read_key(j, "tsne_lr", c.analysis.tsne.learning_rate);
    experiment_from_json(j, c.experiment);
    return c;
}

inline nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open '" + path + "'");
    }
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error("'" + path + "' is not valid JSON: " + e.what());
    }
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write '" + path + "'");
    }
    out << j.dump(2) << '\n';
    if (!out) {
        throw Error("failed while writing '" + path + "'");
    }
}

inline PipelineConfig load_pipeline_config(const std::string& path) {
    return pipeline_config_from_json(read_json_file(path));
}

}

#endif
