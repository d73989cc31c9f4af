// Command-line front end. Every subcommand takes `--config <file.json>` plus one flag per config key
// (`--head-lr 0.01` overrides `head_lr`); see `langprobe <subcommand> --help`.

#include <filesystem>
#include <iostream>

#include "CLI11.hpp"

#include "langprobe/langprobe.hpp"

using namespace langprobe;

namespace {

/**
 * Config file plus per-key overrides, collected as strings and typed by the default value of the key.
 */
struct ConfigOptions {
    std::string file;
    std::map<std::string, std::string> overrides;

    void attach(CLI::App* app) {
        app->add_option("--config", file, "JSON config file (flat object, keys as below with '_')")->check(CLI::ExistingFile);
        const auto defaults = to_json(PipelineConfig{});
        for (const auto& [key, value] : defaults.items()) {
            std::string flag = "--" + key;
            std::replace(flag.begin(), flag.end(), '_', '-');
            auto* target = &overrides[key];
            app->add_option(flag, *target, "overrides '" + key + "' (default " + value.dump() + ")");
        }
    }

    PipelineConfig resolve() const {
        nlohmann::json j = file.empty() ? nlohmann::json::object() : read_json_file(file);
        const auto defaults = to_json(PipelineConfig{});
        for (const auto& [key, text] : overrides) {
            if (text.empty()) {
                continue;
            }
            const auto& d = defaults.at(key);
            if (d.is_string()) {
                j[key] = text;
            } else if (d.is_array()) {
                nlohmann::json arr = nlohmann::json::array();
                std::stringstream ss(text);
                std::string part;
                while (std::getline(ss, part, ',')) {
                    arr.push_back(parse_value(key, part));
                }
                j[key] = arr;
            } else {
                j[key] = parse_value(key, text);
            }
        }
        return pipeline_config_from_json(j);
    }

    static nlohmann::json parse_value(const std::string& key, const std::string& text) {
        try {
            return nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error&) {
            throw Error("value '" + text + "' of --" + key + " is not a number, boolean or null");
        }
    }
};

std::string out_path(const PipelineConfig& config, const std::string& name) {
    return (std::filesystem::path(config.output_dir) / name).string();
}

void print_metrics(const ResultColumn& column) {
    std::cout << column.name << " [" << column.manifest << "]\n";
    for (const auto& [key, value] : column.metrics) {
        std::printf("  %-28s %6.1f\n", key.c_str(), 100 * value);
    }
}

PlotColoring parse_coloring(const std::string& s) {
    if (s == "labels") {
        return PlotColoring::Labels;
    } else if (s == "languages") {
        return PlotColoring::Languages;
    }
    throw Error("colouring must be 'labels' or 'languages'");
}

PlotDataset parse_dataset(const std::string& s) {
    if (s == "task") {
        return PlotDataset::Task;
    } else if (s == "lid") {
        return PlotDataset::Lid;
    }
    throw Error("dataset must be 'task' or 'lid'");
}

}

int main(int argc, char** argv) {
    CLI::App app{ "Language-confusion experiments on a small multilingual encoder" };
    app.require_subcommand(1);

    // gen-corpus
    ConfigOptions gen_opts;
    std::string gen_out;
    auto* gen = app.add_subcommand("gen-corpus", "Write the synthetic corpora (vocab.txt, task, lid.tsv, pretrain.tsv)");
    gen_opts.attach(gen);
    gen->add_option("--out", gen_out, "Directory for the corpus files (default <output_dir>/corpus)");

    // pretrain
    ConfigOptions pre_opts;
    std::string pre_out;
    auto* pre = app.add_subcommand("pretrain", "Masked-token pre-training of a fresh encoder");
    pre_opts.attach(pre);
    pre->add_option("--out", pre_out, "Checkpoint to write (default <output_dir>/pretrained.lpck)");

    // train
    ConfigOptions train_opts;
    auto* train = app.add_subcommand("train", "Train one regime from a pre-trained checkpoint (or pre-train first)");
    train_opts.attach(train);

    // probe-lid
    ConfigOptions probe_opts;
    std::string probe_checkpoint, probe_out;
    auto* probe = app.add_subcommand("probe-lid", "Retrain a language classifier on a checkpoint's frozen encoder");
    probe_opts.attach(probe);
    probe->add_option("--model", probe_checkpoint, "Checkpoint whose encoder is probed")->required()->check(CLI::ExistingFile);
    probe->add_option("--out", probe_out, "Optional JSON report");

    // analyze
    ConfigOptions an_opts;
    std::string an_embeddings, an_model, an_dataset = "task", an_report, an_projection;
    auto* analyze = app.add_subcommand("analyze", "Cluster reports and t-SNE projection of a plot sample");
    an_opts.attach(analyze);
    analyze->add_option("--embeddings", an_embeddings, "Embedding dump to analyse (from any encoder)")->check(CLI::ExistingFile);
    analyze->add_option("--model", an_model, "Checkpoint whose encoder produces the representations")->check(CLI::ExistingFile);
    analyze->add_option("--dataset", an_dataset, "task or lid test split (with --model)");
    analyze->add_option("--report", an_report, "JSON report to write")->required();
    analyze->add_option("--projection", an_projection, "CSV projection to write (x,y,label,language)");

    // hpsearch
    ConfigOptions hp_opts;
    std::size_t hp_samples = 20;
    auto* hp = app.add_subcommand("hpsearch", "Random search over the hyperparameter grid, scored on pivot development data");
    hp_opts.attach(hp);
    hp->add_option("--samples", hp_samples, "Number of sampled configurations")->check(CLI::PositiveNumber);

    // export
    std::string ex_bundle, ex_column, ex_which = "labels:task", ex_out;
    auto* ex = app.add_subcommand("export", "Write a projection from a results bundle as CSV");
    ex->add_option("--bundle", ex_bundle, "results.json")->required()->check(CLI::ExistingFile);
    ex->add_option("--column", ex_column, "Bundle column (default: the trained regime)");
    ex->add_option("--which", ex_which, "<labels|languages>:<task|lid>");
    ex->add_option("--out", ex_out, "CSV file to write")->required();

    // compare
    std::vector<std::string> cmp_inputs;
    std::string cmp_json;
    auto* cmp = app.add_subcommand("compare", "Metric deltas between runs; the first run is the reference");
    cmp->add_option("runs", cmp_inputs, "bundle.json or bundle.json:column, two or more")->required()->expected(1, -1);
    cmp->add_option("--json", cmp_json, "Also write the table as JSON");

    // run
    ConfigOptions run_opts;
    auto* run = app.add_subcommand("run", "Full pipeline: corpora, pre-training, baseline and regime training, analysis, results bundle");
    run_opts.attach(run);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            auto config = run_stage("config", [&] { return gen_opts.resolve(); });
            run_stage("gen-corpus", [&] {
                auto corpora = generate_corpora(config);
                const auto dir = gen_out.empty() ? out_path(config, "corpus") : gen_out;
                write_corpora(dir, corpora, config.experiment.task);
                std::cout << "wrote " << corpora.task.size() << " task, " << corpora.lid.size() << " language-id and "
                          << corpora.pretrain.size() << " pre-training texts to " << dir << "\n";
            });
        } else if (*pre) {
            auto config = run_stage("config", [&] { return pre_opts.resolve(); });
            auto corpora = run_stage("data", [&] { return obtain_corpora(config); });
            auto result = run_stage("pretrain", [&] { return pretrain_encoder(config, corpora); });
            run_stage("output", [&] {
                const auto path = pre_out.empty() ? out_path(config, "pretrained.lpck") : pre_out;
                if (auto parent = std::filesystem::path(path).parent_path(); !parent.empty()) {
                    std::filesystem::create_directories(parent);
                }
                Checkpoint ck(result.encoder);
                ck.metadata()["mlm_final_loss"] = result.mlm.loss_curve.empty() ? 0.0 : result.mlm.loss_curve.back();
                ck.metadata()["mlm_steps"] = config.mlm.steps;
                ck.metadata()["seed"] = config.seed;
                ck.save(path);
                std::cout << "wrote " << path;
                if (!result.mlm.loss_curve.empty()) {
                    std::cout << " (masked-token loss " << result.mlm.loss_curve.front() << " -> " << result.mlm.loss_curve.back() << ")";
                }
                std::cout << "\n";
            });
        } else if (*train) {
            auto config = run_stage("config", [&] { return train_opts.resolve(); });
            auto prep = prepare_experiment(config);
            auto trained = run_stage("train", [&] { return train_and_record(prep.pretrained, prep.data, config.experiment, config.output_dir, config.seed); });
            std::cout << trained.name << " [" << trained.id() << "] selected epoch " << trained.run.selected_epoch << ", validation F1";
            for (double s : trained.run.val_scores) {
                std::printf(" %.1f", 100 * s);
            }
            std::cout << "\nwrote " << out_path(config, trained.name + ".lpck") << "\n";
        } else if (*probe) {
            auto config = run_stage("config", [&] { return probe_opts.resolve(); });
            auto corpora = run_stage("data", [&] { return obtain_corpora(config); });
            auto data = run_stage("data", [&] { return split_corpora(config, corpora); });
            auto encoder = run_stage("load", [&] { return load_encoder(probe_checkpoint, corpora.vocab); });
            run_stage("probe-lid", [&] {
                encoder.set_frozen(true);
                auto probe_run = retrain_language_probe(encoder, data, config.experiment);
                const auto granularity = granularity_of(data.task);
                const auto classes = class_range(data.languages.size());
                const double on_task = score(probe_run.head, encode_units(encoder, data.task_data.test, granularity, data.languages), Target::Language, classes);
                const double on_lid = score(probe_run.head, encode_units(encoder, data.lid_data.test, granularity, data.languages), Target::Language, classes);
                std::printf("language-id macro F1: task data %.1f, language-id data %.1f (selected epoch %zu)\n", 100 * on_task, 100 * on_lid, probe_run.selected_epoch);
                if (!probe_out.empty()) {
                    write_json_file(probe_out, { { "checkpoint", probe_checkpoint }, { "lid_f1/task_data", on_task }, { "lid_f1/lid_data", on_lid },
                                                 { "val_f1", probe_run.val_scores }, { "selected_epoch", probe_run.selected_epoch },
                                                 { "config", experiment_to_json(config.experiment) } });
                }
            });
        } else if (*analyze) {
            auto config = run_stage("config", [&] { return an_opts.resolve(); });
            if (an_embeddings.empty() == an_model.empty()) {
                throw Error("give exactly one of --embeddings and --model", "analyze");
            }
            auto sample = run_stage("data", [&] {
                if (!an_embeddings.empty()) {
                    auto dump = read_embedding_dump(an_embeddings);
                    return plot_sample(dump, dump.has_labels() ? config.analysis.task_quota : config.analysis.lid_quota, derive_seed(config.seed, 41));
                }
                auto corpora = obtain_corpora(config);
                auto data = split_corpora(config, corpora);
                auto encoder = load_encoder(an_model, corpora.vocab);
                const bool task = parse_dataset(an_dataset) == PlotDataset::Task;
                auto features = encode_units(encoder, task ? data.task_data.test : data.lid_data.test, granularity_of(data.task), data.languages);
                return plot_sample(to_embedding_sample(features, data.languages, task_label_names(data.task)),
                                   task ? config.analysis.task_quota : config.analysis.lid_quota, derive_seed(config.seed, 41));
            });
            if (an_projection.empty()) {
                config.analysis.projections = false;
            }
            auto result = run_stage("analyze", [&] { return analyze_sample(sample, config.analysis, derive_seed(config.seed, 42)); });
            run_stage("output", [&] {
                nlohmann::json report;
                report["points"] = sample.size();
                auto add = [&](const char* key, const ClusterReport& r) {
                    report[key] = { { "k", r.k }, { "runs", r.runs }, { "mean", r.mean }, { "degenerate", r.degenerate } };
                    std::printf("V-measure (%s): %.1f over %zu runs, k = %zu\n", key, 100 * r.mean, r.runs.size(), r.k);
                };
                if (result.labels) {
                    add("labels", *result.labels);
                }
                add("languages", result.languages);
                write_json_file(an_report, report);
                if (result.projection) {
                    write_projection_csv(an_projection, *result.projection);
                }
            });
        } else if (*hp) {
            auto config = run_stage("config", [&] { return hp_opts.resolve(); });
            auto ranked = run_search(config, SearchGrid{}, hp_samples);
            std::cout << "rank  sample  dev F1  head_lr   encoder_lr  batch  init_stddev\n";
            for (std::size_t r = 0; r < ranked.size(); ++r) {
                const auto& c = ranked[r].config;
                std::printf("%4zu  %6zu  %6.1f  %-8g  %-10g  %5zu  %g\n", r + 1, ranked[r].sample, 100 * ranked[r].dev_score, c.head_lr, c.encoder_lr,
                            c.batch_size, c.init_stddev);
            }
            std::cout << "wrote " << out_path(config, "search.json") << "\n";
        } else if (*ex) {
            run_stage("export", [&] {
                auto bundle = read_bundle(ex_bundle);
                auto colon = ex_which.find(':');
                if (colon == std::string::npos) {
                    throw Error("--which must look like labels:task");
                }
                const auto column = ex_column.empty() ? bundle.primary().name : ex_column;
                auto rows = export_plot_data(bundle, column, parse_coloring(ex_which.substr(0, colon)), parse_dataset(ex_which.substr(colon + 1)), ex_out);
                std::cout << "wrote " << rows << " points to " << ex_out << "\n";
            });
        } else if (*cmp) {
            run_stage("compare", [&] {
                std::vector<ComparedRun> runs;
                std::optional<ResultsBundle> first;
                for (const auto& input : cmp_inputs) {
                    std::string path = input, column;
                    if (!std::filesystem::exists(path)) {
                        auto colon = input.rfind(':');
                        if (colon != std::string::npos) {
                            path = input.substr(0, colon);
                            column = input.substr(colon + 1);
                        }
                    }
                    auto bundle = read_bundle(path);
                    if (first) {
                        check_same_schema(*first, bundle);
                    } else {
                        first = bundle;
                    }
                    const auto& col = column.empty() ? bundle.primary() : bundle.column(column);
                    runs.push_back({ input, col });
                }
                auto table = compare_columns(runs);
                std::cout << format_delta_table(table);
                if (!cmp_json.empty()) {
                    write_json_file(cmp_json, to_json(table));
                }
            });
        } else if (*run) {
            auto config = run_stage("config", [&] { return run_opts.resolve(); });
            auto bundle = run_experiment(config);
            for (const auto& column : bundle.columns) {
                print_metrics(column);
            }
            std::cout << "wrote " << out_path(config, "results.json") << "\n";
        }
    } catch (const Error& e) {
        std::cerr << "error " << (e.stage().empty() ? "" : "in stage '" + e.stage() + "'") << ": "
                  << (e.stage().empty() ? e.what() : std::string(e.what()).substr(e.stage().size() + 3)) << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
