#ifndef LANGPROBE_PIPELINE_PIPELINE_HPP
#define LANGPROBE_PIPELINE_PIPELINE_HPP

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "../analysis/kmeans.hpp"
#include "../analysis/sample.hpp"
#include "../analysis/tsne.hpp"
#include "../data/formats.hpp"
#include "../data/split.hpp"
#include "../data/synthetic.hpp"
#include "../encoder/checkpoint.hpp"
#include "../encoder/mlm.hpp"
#include "../training/regimes.hpp"
#include "../training/search.hpp"
#include "config.hpp"

/**
 * @file pipeline.hpp
 *
 * @brief End-to-end orchestration: corpora, pre-training, regime training, probing, analysis and the
 * results bundle, plus the comparison and export operations on bundles.
 *
 * Every run writes a manifest (`<run>.manifest.json`) whose id is a hash of its content. Every number in a
 * bundle sits next to the id of the manifest of the run that produced it.
 */

namespace langprobe {

inline constexpr int bundle_schema_version = 1;

/**
 * Run `body`, re-raising any failure as an `Error` tagged with `stage`.
 */
template<typename Function_>
auto run_stage(const std::string& stage, Function_&& body) -> decltype(body()) {
    try {
        return body();
    } catch (const Error& e) {
        if (!e.stage().empty()) {
            throw;
        }
        throw Error(e.what(), stage);
    } catch (const std::exception& e) {
        throw Error(e.what(), stage);
    }
}

/**
 * Stable column name of a regime in results bundles.
 */
inline std::string column_name(Regime regime) {
    switch (regime) {
        case Regime::FrozenProbe: return "initial";
        case Regime::Finetune: return "finetuned";
        case Regime::GradReversal: return "grad_reversal";
        case Regime::EntropyMax: return "entropy_max";
    }
    return "";
}

/*************************************************************
 *************************************************************
 * Corpora
 *************************************************************
 *************************************************************/

struct Corpora {
    Vocabulary vocab;
    std::vector<LabeledExample> task;
    std::vector<LabeledExample> lid;
    std::vector<LabeledExample> pretrain;  ///< plain text for masked-token pre-training
};

/**
 * Synthetic task, language-identification and pre-training corpora. Pre-training text is drawn from the same
 * clause generator as the tagging data, with fresh sentences.
 */
inline Corpora generate_corpora(const PipelineConfig& config) {
    const auto& s = config.synthetic;
    auto specs = make_synthetic_languages(s.world, config.seed);
    Corpora out;
    out.vocab = build_vocabulary(specs);
    out.task = generate_corpus(specs, out.vocab, s.task_per_language, config.experiment.task, derive_seed(config.seed, 10));
    out.lid = generate_corpus(specs, out.vocab, s.lid_per_language, TaskKind::LanguageId, derive_seed(config.seed, 11));
    if (s.pretrain_per_language > 0) {
        out.pretrain = generate_corpus(specs, out.vocab, s.pretrain_per_language, TaskKind::TokenTag, derive_seed(config.seed, 12));
    }
    return out;
}

inline std::string task_file_name(TaskKind task) {
    return task == TaskKind::TokenTag ? "task.conllu" : "task.tsv";
}

/**
 * Write `corpora` into `dir` as `vocab.txt`, `task.conllu` (or `task.tsv`), `lid.tsv` and `pretrain.tsv`.
 */
inline CorpusPaths write_corpora(const std::string& dir, const Corpora& corpora, TaskKind task) {
    std::filesystem::create_directories(dir);
    CorpusPaths paths;
    paths.vocab = (std::filesystem::path(dir) / "vocab.txt").string();
    paths.task = (std::filesystem::path(dir) / task_file_name(task)).string();
    paths.lid = (std::filesystem::path(dir) / "lid.tsv").string();
    corpora.vocab.save(paths.vocab);
    if (task == TaskKind::TokenTag) {
        write_conllu(paths.task, corpora.task, corpora.vocab);
    } else {
        write_nli_tsv(paths.task, corpora.task, corpora.vocab);
    }
    write_lid_tsv(paths.lid, corpora.lid, corpora.vocab);
    if (!corpora.pretrain.empty()) {
        paths.pretrain = (std::filesystem::path(dir) / "pretrain.tsv").string();
        write_lid_tsv(paths.pretrain, corpora.pretrain, corpora.vocab);
    }
    return paths;
}

inline Corpora load_corpora(const CorpusPaths& paths, TaskKind task) {
    Corpora out;
    out.vocab = Vocabulary::load(paths.vocab);
    out.task = task == TaskKind::TokenTag ? load_conllu(paths.task, out.vocab) : load_nli_tsv(paths.task, out.vocab);
    out.lid = load_lid_paragraphs(paths.lid, out.vocab);
    if (!paths.pretrain.empty()) {
        LoadOptions any_length;
        any_length.min_chars = 0;
        out.pretrain = load_lid_paragraphs(paths.pretrain, out.vocab, any_length);
    }
    if (out.task.empty() || out.lid.empty()) {
        throw Error("task or language-identification corpus is empty after loading");
    }
    return out;
}

inline Corpora obtain_corpora(const PipelineConfig& config) {
    return config.corpus.synthetic() ? generate_corpora(config) : load_corpora(config.corpus, config.experiment.task);
}

inline ExperimentData split_corpora(const PipelineConfig& config, const Corpora& corpora) {
    return make_experiment_data(config.experiment.task, stratified_split(corpora.task, config.split, config.seed),
                                stratified_split(corpora.lid, config.split, config.seed));
}

/*************************************************************
 *************************************************************
 * Pre-training and per-run records
 *************************************************************
 *************************************************************/

struct PretrainResult {
    EncoderModel<float> encoder;
    MlmResult mlm;
};

inline PretrainResult pretrain_encoder(const PipelineConfig& config, const Corpora& corpora) {
    if (corpora.pretrain.empty() && config.mlm.steps > 0) {
        throw Error("pre-training corpus is empty");
    }
    EncoderConfig ec = config.encoder;
    ec.vocab_size = corpora.vocab.size();
    PretrainResult out{ EncoderModel<float>(ec, derive_seed(config.seed, 20)), {} };
    if (config.mlm.steps > 0) {
        out.mlm = mlm_pretrain(out.encoder, sequences_of(corpora.pretrain), config.mlm, derive_seed(config.seed, 21));
    }
    return out;
}

inline EncoderModel<float> load_encoder(const std::string& path, const Vocabulary& vocab) {
    auto model = Checkpoint::load(path).encoder<float>();
    if (model.config().vocab_size != vocab.size()) {
        throw Error("checkpoint '" + path + "' has a vocabulary of " + std::to_string(model.config().vocab_size) +
                    " tokens but the corpus vocabulary has " + std::to_string(vocab.size()));
    }
    return model;
}

/**
 * Content hash of a manifest, excluding its own `id` field.
 */
inline std::string manifest_id(nlohmann::json manifest) {
    manifest.erase("id");
    const std::string text = manifest.dump();
    return to_hex(fnv1a(text.data(), text.size()));
}

/**
 * Run manifest: the full experiment config (defaults included), seeds, per-epoch validation scores, selected
 * epoch, encoder fingerprints and the checkpoint path relative to the run directory.
 */
template<typename Scalar_>
nlohmann::json run_manifest(const std::string& run_name, const ExperimentConfig& config, const TrainingRun<Scalar_>& run,
                            const std::string& checkpoint, std::uint64_t pipeline_seed, std::uint64_t pretrained_fingerprint) {
    nlohmann::json m;
    m["run"] = run_name;
    m["config"] = experiment_to_json(config);
    m["seed"] = config.seed;
    m["pipeline_seed"] = pipeline_seed;
    m["val_f1"] = run.val_scores;
    m["selected_epoch"] = run.selected_epoch;
    m["language_probe_val_f1"] = run.language_probe.val_scores;
    m["language_probe_selected_epoch"] = run.language_probe.selected_epoch;
    m["pretrained_encoder"] = to_hex(pretrained_fingerprint);
    m["encoder_before"] = to_hex(run.encoder_before);
    m["encoder_after"] = to_hex(run.encoder_after);
    m["checkpoint"] = checkpoint.empty() ? nlohmann::json(nullptr) : nlohmann::json(checkpoint);
    m["id"] = manifest_id(m);
    return m;
}

struct TrainedRun {
    std::string name;
    EncoderModel<float> encoder;
    TrainingRun<float> run;
    nlohmann::json manifest;

    std::string id() const { return manifest.at("id").get<std::string>(); }
};

/**
 * Train `config.regime` from a copy of `pretrained`. With a non-empty `out_dir` the checkpoint (encoder and
 * heads) and the manifest are written there as `<name>.lpck` and `<name>.manifest.json`.
 */
inline TrainedRun train_and_record(const EncoderModel<float>& pretrained, const ExperimentData& data, const ExperimentConfig& config,
                                   const std::string& out_dir, std::uint64_t pipeline_seed) {
    TrainedRun out{ column_name(config.regime), pretrained, {}, {} };
    out.run = train_experiment(out.encoder, data, config);
    const std::string checkpoint = out_dir.empty() ? std::string() : out.name + ".lpck";
    out.manifest = run_manifest(out.name, config, out.run, checkpoint, pipeline_seed, fingerprint(pretrained.params()));
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        Checkpoint ck(out.encoder);
        ck.add_head("task_head", out.run.task_head);
        ck.add_head("language_probe", out.run.language_probe.head);
        if (out.run.adversary_head) {
            ck.add_head("adversary_head", *out.run.adversary_head);
        }
        ck.metadata()["manifest"] = out.id();
        ck.metadata()["regime"] = to_string(config.regime);
        ck.metadata()["task"] = to_string(config.task);
        ck.metadata()["languages"] = data.languages.languages();
        ck.save((std::filesystem::path(out_dir) / checkpoint).string());
        write_json_file((std::filesystem::path(out_dir) / (out.name + ".manifest.json")).string(), out.manifest);
    }
    return out;
}

/**
 * The frozen-probe counterpart of `config`: same heads' hyperparameters and seed, encoder untouched.
 */
inline ExperimentConfig initial_config(ExperimentConfig config) {
    config.regime = Regime::FrozenProbe;
    config.lambda.reset();
    config.w.reset();
    config.encoder_lr = 0;
    return config;
}

/*************************************************************
 *************************************************************
 * Analysis
 *************************************************************
 *************************************************************/

struct Projection {
    std::vector<double> x, y;
    std::vector<std::string> labels, languages;
    double perplexity = 0;  ///< effective perplexity (lowered for small samples)

    std::size_t size() const { return x.size(); }
};

struct SampleAnalysis {
    std::optional<ClusterReport> labels;  ///< absent when the sample carries no task labels
    ClusterReport languages;
    std::optional<Projection> projection;
};

/**
 * Cluster reports and (optionally) the t-SNE projection of one plot sample.
 */
inline SampleAnalysis analyze_sample(const EmbeddingSample& sample, const AnalysisSettings& settings, std::uint64_t seed) {
    sample.validate();
    if (sample.size() < 2) {
        throw Error("analysis sample has fewer than two points");
    }
    SampleAnalysis out;
    if (sample.has_labels()) {
        out.labels = clustering_report(sample.vectors, sample.labels, derive_seed(seed, 0), settings.kmeans_runs);
    }
    out.languages = clustering_report(sample.vectors, sample.languages, derive_seed(seed, 1), settings.kmeans_runs);
    if (settings.projections) {
        TsneSettings ts = settings.tsne;
        const double limit = static_cast<double>(sample.size() - 1) / 3.0;
        ts.perplexity = std::min(ts.perplexity, std::max(limit, 1.0));
        if (ts.perplexity >= static_cast<double>(sample.size())) {
            ts.perplexity = static_cast<double>(sample.size()) / 2.0;
        }
        auto result = tsne(sample.vectors, derive_seed(seed, 2), ts);
        Projection p;
        p.perplexity = ts.perplexity;
        for (Eigen::Index i = 0; i < result.coordinates.rows(); ++i) {
            p.x.push_back(result.coordinates(i, 0));
            p.y.push_back(result.coordinates(i, 1));
        }
        p.labels = sample.labels;
        p.languages = sample.languages;
        out.projection = std::move(p);
    }
    return out;
}

template<typename Scalar_>
EmbeddingSample to_embedding_sample(const FeatureSet<Scalar_>& set, const LanguageIndex& languages, const std::vector<std::string>& label_names) {
    EmbeddingSample out;
    out.vectors = set.features.template cast<double>();
    for (std::size_t u = 0; u < set.units(); ++u) {
        const int label = set.task_labels[u];
        out.labels.push_back(label == ignore_label ? no_label : label_names.at(static_cast<std::size_t>(label)));
        out.languages.push_back(languages.name(set.languages[u]));
    }
    return out;
}

/*************************************************************
 *************************************************************
 * Results bundle
 *************************************************************
 *************************************************************/

/**
 * All results of one trained run. Scores are fractions in [0, 1].
 *
 * Metric keys: `task_f1` (test data, every language), `task_f1_cross_lingual` (test data, non-pivot
 * languages), `task_f1/<language>`, `val_f1` (selected epoch), `lid_f1/task_data`, `lid_f1/lid_data`,
 * and the mean V-measures `v_measure/task/labels`, `v_measure/task/languages`, `v_measure/lid/languages`.
 */
struct ResultColumn {
    std::string name;
    std::string regime;
    std::string manifest;
    std::map<std::string, double> metrics;
    std::map<std::string, ClusterReport> clusters;  ///< `task/labels`, `task/languages`, `lid/languages`
    std::map<std::string, Projection> projections;  ///< `task`, `lid`
};

struct ResultsBundle {
    int schema_version = bundle_schema_version;
    std::string task;
    std::string pivot;
    std::vector<std::string> languages;
    std::vector<std::string> task_classes;
    std::vector<ResultColumn> columns;

    const ResultColumn* find(const std::string& name) const {
        for (const auto& c : columns) {
            if (c.name == name) {
                return &c;
            }
        }
        return nullptr;
    }

    const ResultColumn& column(const std::string& name) const {
        auto c = find(name);
        if (!c) {
            throw Error("bundle has no column '" + name + "'");
        }
        return *c;
    }

    /**
     * The column of the configured regime (the last one).
     */
    const ResultColumn& primary() const {
        if (columns.empty()) {
            throw Error("bundle has no columns");
        }
        return columns.back();
    }
};

/**
 * Evaluate a trained run on the test splits and analyse its representations.
 * `analysis_seed` is shared by all columns of a bundle so that they see the same plot samples.
 */
inline ResultColumn evaluate_run(const TrainedRun& trained, const ExperimentData& data, const ExperimentConfig& config,
                                 const AnalysisSettings& settings, std::uint64_t analysis_seed) {
    ResultColumn col;
    col.name = trained.name;
    col.regime = to_string(config.regime);
    col.manifest = trained.id();
    const auto granularity = granularity_of(data.task);
    const auto& run = trained.run;
    const auto& encoder = trained.encoder;

    auto task_test = encode_units(encoder, data.task_data.test, granularity, data.languages);
    auto lid_test = encode_units(encoder, data.lid_data.test, granularity, data.languages);
    if (task_test.units() == 0 || lid_test.units() == 0) {
        throw Error("empty test split");
    }
    const auto all_languages = class_range(data.languages.size());
    col.metrics["task_f1"] = score(run.task_head, task_test, Target::Task, data.task_classes);
    col.metrics["val_f1"] = run.val_scores.at(run.selected_epoch);
    col.metrics["lid_f1/task_data"] = score(run.language_probe.head, task_test, Target::Language, all_languages);
    col.metrics["lid_f1/lid_data"] = score(run.language_probe.head, lid_test, Target::Language, all_languages);

    auto predictions = predict(run.task_head, task_test.features);
    std::vector<int> cross_pred, cross_gold;
    std::map<int, std::pair<std::vector<int>, std::vector<int> > > by_language;
    const int pivot = data.languages.id(config.pivot_language);
    for (std::size_t u = 0; u < task_test.units(); ++u) {
        const int lang = task_test.languages[u];
        by_language[lang].first.push_back(predictions[u]);
        by_language[lang].second.push_back(task_test.task_labels[u]);
        if (lang != pivot) {
            cross_pred.push_back(predictions[u]);
            cross_gold.push_back(task_test.task_labels[u]);
        }
    }
    if (!cross_gold.empty()) {
        col.metrics["task_f1_cross_lingual"] = macro_f1(cross_pred, cross_gold, data.task_classes);
    }
    for (const auto& [lang, pg] : by_language) {
        col.metrics["task_f1/" + data.languages.name(lang)] = macro_f1(pg.first, pg.second, data.task_classes);
    }

    const auto& label_names = task_label_names(data.task);
    auto task_sample = plot_sample(to_embedding_sample(task_test, data.languages, label_names), settings.task_quota, derive_seed(analysis_seed, 1));
    auto lid_sample = plot_sample(to_embedding_sample(lid_test, data.languages, label_names), settings.lid_quota, derive_seed(analysis_seed, 2));
    auto task_analysis = analyze_sample(task_sample, settings, derive_seed(analysis_seed, 3));
    auto lid_analysis = analyze_sample(lid_sample, settings, derive_seed(analysis_seed, 4));
    if (task_analysis.labels) {
        col.clusters["task/labels"] = *task_analysis.labels;
        col.metrics["v_measure/task/labels"] = task_analysis.labels->mean;
    }
    col.clusters["task/languages"] = task_analysis.languages;
    col.metrics["v_measure/task/languages"] = task_analysis.languages.mean;
    col.clusters["lid/languages"] = lid_analysis.languages;
    col.metrics["v_measure/lid/languages"] = lid_analysis.languages.mean;
    if (task_analysis.projection) {
        col.projections["task"] = std::move(*task_analysis.projection);
    }
    if (lid_analysis.projection) {
        col.projections["lid"] = std::move(*lid_analysis.projection);
    }
    return col;
}

inline nlohmann::json to_json(const ResultColumn& c) {
    nlohmann::json j;
    j["name"] = c.name;
    j["regime"] = c.regime;
    j["manifest"] = c.manifest;
    j["metrics"] = nlohmann::json::object();
    for (const auto& [key, value] : c.metrics) {
        j["metrics"][key] = { { "value", value }, { "manifest", c.manifest } };
    }
    j["clusters"] = nlohmann::json::object();
    for (const auto& [key, r] : c.clusters) {
        j["clusters"][key] = { { "k", r.k }, { "runs", r.runs }, { "mean", r.mean }, { "degenerate", r.degenerate }, { "manifest", c.manifest } };
    }
    j["projections"] = nlohmann::json::object();
    for (const auto& [key, p] : c.projections) {
        j["projections"][key] = { { "perplexity", p.perplexity }, { "x", p.x }, { "y", p.y }, { "label", p.labels },
                                  { "language", p.languages }, { "manifest", c.manifest } };
    }
    return j;
}

inline nlohmann::json to_json(const ResultsBundle& b) {
    nlohmann::json j;
    j["schema_version"] = b.schema_version;
    j["units"] = "fraction";
    j["task"] = b.task;
    j["pivot"] = b.pivot;
    j["languages"] = b.languages;
    j["task_classes"] = b.task_classes;
    j["columns"] = nlohmann::json::array();
    for (const auto& c : b.columns) {
        j["columns"].push_back(to_json(c));
    }
    return j;
}

inline ResultsBundle bundle_from_json(const nlohmann::json& j) {
    ResultsBundle b;
    try {
        b.schema_version = j.at("schema_version").get<int>();
        if (b.schema_version != bundle_schema_version) {
            throw Error("unsupported bundle schema version " + std::to_string(b.schema_version));
        }
        b.task = j.at("task").get<std::string>();
        b.pivot = j.at("pivot").get<std::string>();
        b.languages = j.at("languages").get<std::vector<std::string> >();
        b.task_classes = j.at("task_classes").get<std::vector<std::string> >();
        for (const auto& jc : j.at("columns")) {
            ResultColumn c;
            c.name = jc.at("name").get<std::string>();
            c.regime = jc.at("regime").get<std::string>();
            c.manifest = jc.at("manifest").get<std::string>();
            for (const auto& [key, m] : jc.at("metrics").items()) {
                c.metrics[key] = m.at("value").get<double>();
            }
            for (const auto& [key, r] : jc.at("clusters").items()) {
                ClusterReport report;
                report.k = r.at("k").get<std::size_t>();
                report.runs = r.at("runs").get<std::vector<double> >();
                report.mean = r.at("mean").get<double>();
                report.degenerate = r.at("degenerate").get<bool>();
                c.clusters[key] = report;
            }
            for (const auto& [key, p] : jc.at("projections").items()) {
                Projection proj;
                proj.perplexity = p.at("perplexity").get<double>();
                proj.x = p.at("x").get<std::vector<double> >();
                proj.y = p.at("y").get<std::vector<double> >();
                proj.labels = p.at("label").get<std::vector<std::string> >();
                proj.languages = p.at("language").get<std::vector<std::string> >();
                if (proj.y.size() != proj.size() || proj.labels.size() != proj.size() || proj.languages.size() != proj.size()) {
                    throw Error("projection '" + key + "' has columns of different lengths");
                }
                c.projections[key] = std::move(proj);
            }
            b.columns.push_back(std::move(c));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("malformed results bundle: ") + e.what());
    }
    return b;
}

inline void write_bundle(const std::string& path, const ResultsBundle& bundle) {
    write_json_file(path, to_json(bundle));
}

inline ResultsBundle read_bundle(const std::string& path) {
    return bundle_from_json(read_json_file(path));
}

/*************************************************************
 *************************************************************
 * Orchestration
 *************************************************************
 *************************************************************/

/**
 * Data, pre-trained encoder and provenance shared by every run of one pipeline invocation.
 */
struct PreparedExperiment {
    Corpora corpora;
    ExperimentData data;
    EncoderModel<float> pretrained;
};

/**
 * Stages `data` and `pretrain`. Synthetic corpora are written to `<output_dir>/corpus` and a freshly
 * pre-trained encoder to `<output_dir>/pretrained.lpck`.
 */
inline PreparedExperiment prepare_experiment(const PipelineConfig& config) {
    run_stage("config", [&] { config.validate(); });
    const std::filesystem::path out(config.output_dir);
    run_stage("output", [&] { std::filesystem::create_directories(out); });
    PreparedExperiment prep;
    run_stage("data", [&] {
        prep.corpora = obtain_corpora(config);
        if (config.corpus.synthetic()) {
            write_corpora((out / "corpus").string(), prep.corpora, config.experiment.task);
        }
        prep.data = split_corpora(config, prep.corpora);
    });
    run_stage("pretrain", [&] {
        if (!config.checkpoint.empty()) {
            prep.pretrained = load_encoder(config.checkpoint, prep.corpora.vocab);
            return;
        }
        auto result = pretrain_encoder(config, prep.corpora);
        prep.pretrained = std::move(result.encoder);
        Checkpoint ck(prep.pretrained);
        ck.metadata()["mlm_final_loss"] = result.mlm.loss_curve.empty() ? 0.0 : result.mlm.loss_curve.back();
        ck.metadata()["mlm_steps"] = config.mlm.steps;
        ck.metadata()["seed"] = config.seed;
        ck.save((out / "pretrained.lpck").string());
    });
    return prep;
}

inline ResultsBundle empty_bundle(const ExperimentData& data, const ExperimentConfig& config) {
    ResultsBundle bundle;
    bundle.task = to_string(data.task);
    bundle.pivot = config.pivot_language;
    bundle.languages = data.languages.languages();
    for (int c : data.task_classes) {
        bundle.task_classes.push_back(task_label_names(data.task).at(static_cast<std::size_t>(c)));
    }
    return bundle;
}

/**
 * Pre-train (or load), train the frozen-probe baseline (column `initial`) and, unless the configured regime
 * is the frozen probe itself, the configured regime from the same pre-trained encoder; retrain the language
 * probe on each; evaluate and analyse both. Writes `config.json`, checkpoints, manifests and `results.json`
 * into the output directory as the stages complete.
 */
inline ResultsBundle run_experiment(const PipelineConfig& config) {
    auto prep = prepare_experiment(config);
    const std::filesystem::path out(config.output_dir);
    run_stage("output", [&] { write_json_file((out / "config.json").string(), to_json(config)); });

    std::vector<ExperimentConfig> configs{ initial_config(config.experiment) };
    if (config.experiment.regime != Regime::FrozenProbe) {
        configs.push_back(config.experiment);
    }
    ResultsBundle bundle = empty_bundle(prep.data, config.experiment);
    for (const auto& c : configs) {
        const std::string name = column_name(c.regime);
        auto trained = run_stage("train:" + name, [&] { return train_and_record(prep.pretrained, prep.data, c, out.string(), config.seed); });
        bundle.columns.push_back(run_stage("analyze:" + name, [&] {
            return evaluate_run(trained, prep.data, c, config.analysis, derive_seed(config.seed, 40));
        }));
    }
    run_stage("output", [&] { write_bundle((out / "results.json").string(), bundle); });
    return bundle;
}

/**
 * Score `n_samples` configurations drawn from `grid` around `config.experiment` on pivot-language
 * development data, writing one manifest per sample into `<output_dir>/search` and the ranking into
 * `<output_dir>/search.json`.
 */
inline std::vector<SearchResult> run_search(const PipelineConfig& config, const SearchGrid& grid, std::size_t n_samples) {
    auto prep = prepare_experiment(config);
    const std::filesystem::path dir = std::filesystem::path(config.output_dir) / "search";
    run_stage("output", [&] { std::filesystem::create_directories(dir); });
    std::map<std::size_t, std::string> ids;
    std::size_t sample = 0;
    auto ranked = random_search(config.experiment, grid, n_samples, derive_seed(config.seed, 50), [&](const ExperimentConfig& c) {
        const std::size_t index = sample++;
        return run_stage("search:" + std::to_string(index), [&] {
            auto trained = train_and_record(prep.pretrained, prep.data, c, std::string(), config.seed);
            trained.manifest["run"] = "sample-" + std::to_string(index);
            const double dev = task_dev_score(trained.encoder, trained.run, prep.data, c);
            trained.manifest["dev_f1"] = dev;
            trained.manifest["id"] = manifest_id(trained.manifest);
            ids[index] = trained.id();
            write_json_file((dir / ("sample-" + std::to_string(index) + ".manifest.json")).string(), trained.manifest);
            return dev;
        });
    });
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : ranked) {
        j.push_back({ { "sample", r.sample }, { "dev_f1", r.dev_score }, { "manifest", ids[r.sample] }, { "config", experiment_to_json(r.config) } });
    }
    run_stage("output", [&] { write_json_file((std::filesystem::path(config.output_dir) / "search.json").string(), j); });
    return ranked;
}

/*************************************************************
 *************************************************************
 * Comparison and export
 *************************************************************
 *************************************************************/

/**
 * One compared run: a display name and the column holding its results.
 */
struct ComparedRun {
    std::string name;
    ResultColumn column;
};

struct DeltaCell {
    std::optional<double> value;
    std::optional<double> delta;  ///< against the first run; absent when either side lacks the metric
};

struct DeltaTable {
    std::vector<std::string> runs;
    std::vector<std::string> manifests;
    std::vector<std::string> metrics;
    std::vector<std::vector<DeltaCell> > cells;  ///< [metric][run]
};

/**
 * Per-metric values and differences from the first run, over the union of all metrics.
 * Runs must come from bundles with the same task, pivot, languages and task classes.
 */
inline DeltaTable compare_columns(const std::vector<ComparedRun>& runs) {
    if (runs.empty()) {
        throw Error("nothing to compare");
    }
    DeltaTable table;
    std::set<std::string> keys;
    for (const auto& r : runs) {
        table.runs.push_back(r.name);
        table.manifests.push_back(r.column.manifest);
        for (const auto& [key, value] : r.column.metrics) {
            keys.insert(key);
        }
    }
    table.metrics.assign(keys.begin(), keys.end());
    const auto& reference = runs.front().column.metrics;
    for (const auto& key : table.metrics) {
        std::vector<DeltaCell> row;
        auto ref = reference.find(key);
        for (const auto& r : runs) {
            DeltaCell cell;
            auto it = r.column.metrics.find(key);
            if (it != r.column.metrics.end()) {
                cell.value = it->second;
                if (ref != reference.end()) {
                    cell.delta = it->second - ref->second;
                }
            }
            row.push_back(cell);
        }
        table.cells.push_back(std::move(row));
    }
    return table;
}

inline void check_same_schema(const ResultsBundle& a, const ResultsBundle& b) {
    if (a.schema_version != b.schema_version || a.task != b.task || a.pivot != b.pivot || a.languages != b.languages || a.task_classes != b.task_classes) {
        throw Error("bundles differ in schema, task, pivot, languages or task classes");
    }
}

/**
 * Compare the primary columns of `bundles`, the first being the reference.
 */
inline DeltaTable compare_runs(const std::vector<ResultsBundle>& bundles) {
    std::vector<ComparedRun> runs;
    for (const auto& b : bundles) {
        check_same_schema(bundles.front(), b);
        runs.push_back({ b.primary().name, b.primary() });
    }
    return compare_columns(runs);
}

/**
 * Marker printed for a metric a run does not have.
 */
inline const std::string gap_marker = "n/a";

/**
 * Plain-text table; scores shown as percentages with one decimal.
 */
inline std::string format_delta_table(const DeltaTable& table) {
    auto pct = [](const std::optional<double>& v, bool sign) {
        if (!v) {
            return gap_marker;
        }
        char buffer[32];
        std::snprintf(buffer, sizeof(buffer), sign ? "%+.1f" : "%.1f", 100 * *v);
        return std::string(buffer);
    };
    std::size_t width = 6;
    for (const auto& m : table.metrics) {
        width = std::max(width, m.size());
    }
    std::string out;
    auto pad = [](std::string s, std::size_t w) {
        s.resize(std::max(s.size(), w), ' ');
        return s;
    };
    out += pad("metric", width);
    for (std::size_t r = 0; r < table.runs.size(); ++r) {
        out += "  " + pad(table.runs[r] + " [" + table.manifests[r] + "]", 34);
    }
    out += '\n';
    for (std::size_t m = 0; m < table.metrics.size(); ++m) {
        out += pad(table.metrics[m], width);
        for (std::size_t r = 0; r < table.runs.size(); ++r) {
            const auto& cell = table.cells[m][r];
            std::string text = pct(cell.value, false);
            if (r > 0) {
                text += " (" + pct(cell.delta, true) + ")";
            }
            out += "  " + pad(text, 34);
        }
        out += '\n';
    }
    return out;
}

inline nlohmann::json to_json(const DeltaTable& table) {
    nlohmann::json j;
    j["runs"] = table.runs;
    j["manifests"] = table.manifests;
    j["metrics"] = nlohmann::json::object();
    for (std::size_t m = 0; m < table.metrics.size(); ++m) {
        nlohmann::json row = nlohmann::json::array();
        for (const auto& cell : table.cells[m]) {
            row.push_back({ { "value", cell.value ? nlohmann::json(*cell.value) : nlohmann::json(gap_marker) },
                            { "delta", cell.delta ? nlohmann::json(*cell.delta) : nlohmann::json(gap_marker) } });
        }
        j["metrics"][table.metrics[m]] = row;
    }
    return j;
}

/**
 * CSV with header `x,y,label,language`, one row per point in sample order.
 */
inline void write_projection_csv(const std::string& path, const Projection& p) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot write '" + path + "'");
    }
    out << "x,y,label,language\n";
    char buffer[64];
    for (std::size_t i = 0; i < p.size(); ++i) {
        std::snprintf(buffer, sizeof(buffer), "%.17g,%.17g", p.x[i], p.y[i]);
        out << buffer << ',' << p.labels[i] << ',' << p.languages[i] << '\n';
    }
    if (!out) {
        throw Error("failed while writing '" + path + "'");
    }
}

enum class PlotColoring {
    Labels,
    Languages
};

enum class PlotDataset {
    Task,
    Lid
};

/**
 * Write the projection of `dataset` from `column` as CSV (`x,y,label,language`), one row per sampled point
 * in sample order. Both colourings share the projection; colouring by labels needs labelled points.
 */
inline std::size_t export_plot_data(const ResultsBundle& bundle, const std::string& column, PlotColoring coloring, PlotDataset dataset,
                                    const std::string& path) {
    const auto& col = bundle.column(column);
    const std::string key = dataset == PlotDataset::Task ? "task" : "lid";
    auto it = col.projections.find(key);
    if (it == col.projections.end()) {
        throw Error("column '" + column + "' has no " + key + " projection");
    }
    const auto& p = it->second;
    if (coloring == PlotColoring::Labels && std::all_of(p.labels.begin(), p.labels.end(), [](const std::string& l) { return l == no_label; })) {
        throw Error("the " + key + " projection has no task labels to colour by");
    }
    write_projection_csv(path, p);
    return p.size();
}

}

#endif
