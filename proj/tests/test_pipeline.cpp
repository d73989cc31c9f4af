#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "langprobe/encoder/checkpoint.hpp"
#include "langprobe/pipeline/pipeline.hpp"

using namespace langprobe;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;

    TempDir() {
        static std::atomic<int> counter{ 0 };
        path = fs::temp_directory_path() / ("langprobe_pipeline_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

PipelineConfig tiny_config(const std::string& output_dir, Regime regime = Regime::Finetune) {
    nlohmann::json j{
        { "seed", 3 },
        { "output_dir", output_dir },
        { "languages", 3 },
        { "task_per_language", 40 },
        { "lid_per_language", 30 },
        { "pretrain_per_language", 20 },
        { "d_model", 8 },
        { "n_layers", 1 },
        { "n_heads", 2 },
        { "ff_width", 16 },
        { "mlm_steps", 10 },
        { "mlm_lr", 1e-2 },
        { "epochs", 1 },
        { "batch_size", 16 },
        { "task_quota", 4 },
        { "lid_quota", 10 },
        { "kmeans_runs", 3 },
        { "tsne_iterations", 60 },
        { "regime", to_string(regime) },
    };
    if (regime == Regime::FrozenProbe) {
        j["encoder_lr"] = 0.0;
    }
    if (regime == Regime::GradReversal) {
        j["lambda"] = 0.1;
    }
    if (regime == Regime::EntropyMax) {
        j["w"] = 0.5;
    }
    return pipeline_config_from_json(j);
}

}

TEST(Checkpoint, RoundTripIsExact) {
    TempDir dir;
    EncoderConfig ec;
    ec.vocab_size = 30;
    ec.d_model = 8;
    ec.n_layers = 2;
    ec.n_heads = 2;
    ec.ff_width = 12;
    EncoderModel<double> encoder(ec, 9);
    auto head = make_head<double>(8, 5, 0.1, 4);
    Checkpoint ck(encoder);
    ck.add_head("task_head", head);
    ck.metadata()["note"] = "x";
    ck.save(dir / "a.lpck");

    auto back = Checkpoint::load(dir / "a.lpck");
    EXPECT_EQ(fingerprint(back.encoder<double>().params()), fingerprint(encoder.params()));
    EXPECT_EQ(fingerprint(back.head<double>("task_head")), fingerprint(head));
    EXPECT_EQ(back.metadata()["note"], "x");
    EXPECT_EQ(back.encoder_config().n_layers, 2u);
    EXPECT_EQ(back.sections(), (std::vector<std::string>{ "encoder", "task_head" }));
    EXPECT_THROW(back.head<double>("language_head"), Error);
    EXPECT_THROW(ck.add_head("encoder", head), Error);
    EXPECT_THROW(ck.add_head("a/b", head), Error);

    // Saving what was loaded reproduces the file byte for byte.
    back.save(dir / "b.lpck");
    EXPECT_EQ(slurp(dir / "a.lpck"), slurp(dir / "b.lpck"));

    // Single-precision models go through double storage without loss.
    EncoderModel<float> small(ec, 9);
    Checkpoint(small).save(dir / "f.lpck");
    EXPECT_EQ(fingerprint(Checkpoint::load(dir / "f.lpck").encoder<float>().params()), fingerprint(small.params()));
}

TEST(Checkpoint, RejectsDamagedFiles) {
    TempDir dir;
    EncoderConfig ec;
    ec.vocab_size = 20;
    ec.d_model = 4;
    ec.n_layers = 1;
    ec.n_heads = 1;
    ec.ff_width = 8;
    Checkpoint(EncoderModel<double>(ec, 1)).save(dir / "good.lpck");
    const auto bytes = slurp(dir / "good.lpck");
    auto write = [&](const std::string& name, const std::string& content) {
        std::ofstream(dir / name, std::ios::binary) << content;
        return dir / name;
    };
    auto message = [](const std::string& path) {
        try {
            Checkpoint::load(path);
        } catch (const Error& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    EXPECT_NE(message(write("magic.lpck", "XXXX" + bytes.substr(4))).find("not a checkpoint"), std::string::npos);
    auto versioned = bytes;
    versioned[4] = 7;
    EXPECT_NE(message(write("version.lpck", versioned)).find("version"), std::string::npos);
    EXPECT_NE(message(write("short.lpck", bytes.substr(0, 30))).find("truncated"), std::string::npos);
    EXPECT_NE(message(write("payload.lpck", bytes.substr(0, bytes.size() - 8))).find("past the end"), std::string::npos);
    EXPECT_NE(message(dir / "missing.lpck").find("cannot open"), std::string::npos);

    // A header that names a shape the model does not have.
    EncoderConfig other = ec;
    other.d_model = 8;
    other.ff_width = 16;
    Checkpoint mismatched(EncoderModel<double>(other, 1));
    mismatched.save(dir / "other.lpck");
    auto raw = slurp(dir / "other.lpck");
    const std::string from = "\"d_model\":8", to = "\"d_model\":4";
    auto at = raw.find(from);
    ASSERT_NE(at, std::string::npos);
    raw.replace(at, from.size(), to);
    write("shape.lpck", raw);
    EXPECT_THROW(Checkpoint::load(dir / "shape.lpck").encoder<double>(), Error);
}

TEST(PipelineConfig, DefaultsAndUnknownKeys) {
    auto c = pipeline_config_from_json(nlohmann::json::object());
    EXPECT_EQ(c.synthetic.world.num_languages, 8u);
    EXPECT_EQ(c.synthetic.world.overlap_fraction, 0.5);
    EXPECT_EQ(c.experiment.regime, Regime::Finetune);
    EXPECT_EQ(c.analysis.kmeans_runs, 10u);
    EXPECT_EQ(c.split, (std::vector<double>{ 0.7, 0.1, 0.1, 0.1 }));
    EXPECT_NO_THROW(c.validate());

    EXPECT_THROW(pipeline_config_from_json(nlohmann::json{ { "epoch", 3 } }), Error);
    EXPECT_THROW(pipeline_config_from_json(nlohmann::json{ { "epochs", "three" } }), Error);
    EXPECT_THROW(pipeline_config_from_json(nlohmann::json::array()), Error);
    EXPECT_THROW(pipeline_config_from_json(nlohmann::json{ { "regime", "adversarial" } }), Error);

    // The seed also seeds the experiment unless it is given separately.
    auto seeded = pipeline_config_from_json(nlohmann::json{ { "seed", 12 } });
    EXPECT_EQ(seeded.experiment.seed, 12u);
    seeded = pipeline_config_from_json(nlohmann::json{ { "seed", 12 }, { "experiment_seed", 5 } });
    EXPECT_EQ(seeded.experiment.seed, 5u);

    auto bad = c;
    bad.split = { 0.5, 0.5 };
    EXPECT_THROW(bad.validate(), Error);
    bad = c;
    bad.corpus.vocab = "vocab.txt";
    EXPECT_THROW(bad.validate(), Error);
}

TEST(PipelineConfig, JsonRoundTrip) {
    auto c = tiny_config("somewhere", Regime::GradReversal);
    auto again = pipeline_config_from_json(to_json(c));
    EXPECT_EQ(to_json(again), to_json(c));
    EXPECT_EQ(again.experiment.lambda, 0.1);
    EXPECT_EQ(again.encoder.d_model, 8u);
}

TEST(Pipeline, BundleIsByteIdenticalAcrossReruns) {
    TempDir dir;
    auto a = run_experiment(tiny_config(dir / "a", Regime::EntropyMax));
    auto b = run_experiment(tiny_config(dir / "b", Regime::EntropyMax));
    EXPECT_EQ(slurp(dir / "a/results.json"), slurp(dir / "b/results.json"));
    EXPECT_EQ(slurp(dir / "a/pretrained.lpck"), slurp(dir / "b/pretrained.lpck"));

    ASSERT_EQ(a.columns.size(), 2u);
    EXPECT_EQ(a.columns[0].name, "initial");
    EXPECT_EQ(a.primary().regime, "entropy_max");
    EXPECT_EQ(a.languages, (std::vector<std::string>{ "L0", "L1", "L2" }));
    for (const auto& col : a.columns) {
        for (const char* key : { "task_f1", "task_f1_cross_lingual", "val_f1", "lid_f1/task_data", "lid_f1/lid_data",
                                 "v_measure/task/labels", "v_measure/task/languages", "v_measure/lid/languages" }) {
            ASSERT_TRUE(col.metrics.count(key)) << col.name << " " << key;
            EXPECT_GE(col.metrics.at(key), 0.0);
            EXPECT_LE(col.metrics.at(key), 1.0);
        }
        EXPECT_EQ(col.clusters.at("lid/languages").runs.size(), 3u);
        EXPECT_TRUE(col.projections.count("task"));
        EXPECT_TRUE(fs::exists(dir / ("a/" + col.name + ".lpck")));
        EXPECT_FALSE(col.manifest.empty());
    }
    EXPECT_NE(a.columns[0].manifest, a.columns[1].manifest);
    EXPECT_TRUE(fs::exists(dir / "a/config.json"));

    // Reading the bundle back gives the same document.
    EXPECT_EQ(to_json(read_bundle(dir / "a/results.json")).dump(), to_json(a).dump());
}

TEST(Pipeline, FrozenRegimeHasOnlyTheInitialColumn) {
    TempDir dir;
    auto config = tiny_config(dir / "f", Regime::FrozenProbe);
    config.analysis.projections = false;
    auto bundle = run_experiment(config);
    ASSERT_EQ(bundle.columns.size(), 1u);
    EXPECT_EQ(bundle.primary().name, "initial");
    EXPECT_TRUE(bundle.primary().projections.empty());
    EXPECT_THROW(export_plot_data(bundle, "initial", PlotColoring::Languages, PlotDataset::Task, dir / "x.csv"), Error);

    // Starting from the saved checkpoint gives the same numbers as pre-training again.
    auto from_checkpoint = config;
    from_checkpoint.output_dir = dir / "g";
    from_checkpoint.checkpoint = dir / "f/pretrained.lpck";
    auto again = run_experiment(from_checkpoint);
    EXPECT_EQ(again.primary().metrics, bundle.primary().metrics);
    EXPECT_FALSE(fs::exists(dir / "g/pretrained.lpck"));
}

TEST(Pipeline, ExportWritesOneRowPerPoint) {
    TempDir dir;
    auto bundle = run_experiment(tiny_config(dir / "e"));
    const auto& p = bundle.primary().projections.at("lid");
    auto rows = export_plot_data(bundle, bundle.primary().name, PlotColoring::Languages, PlotDataset::Lid, dir / "lid.csv");
    EXPECT_EQ(rows, p.size());
    std::ifstream in(dir / "lid.csv");
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "x,y,label,language");
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
    }
    EXPECT_EQ(n, rows);
    // Paragraph-level LID points carry no task labels.
    EXPECT_THROW(export_plot_data(bundle, bundle.primary().name, PlotColoring::Labels, PlotDataset::Lid, dir / "no.csv"), Error);
    EXPECT_GT(export_plot_data(bundle, "initial", PlotColoring::Labels, PlotDataset::Task, dir / "task.csv"), 0u);
    EXPECT_THROW(export_plot_data(bundle, "nonexistent", PlotColoring::Labels, PlotDataset::Task, dir / "no.csv"), Error);
}

TEST(Compare, SelfComparisonAndGaps) {
    ResultsBundle a;
    a.task = "token-tag";
    a.pivot = "L0";
    a.languages = { "L0", "L1" };
    ResultColumn col;
    col.name = "finetune";
    col.manifest = "m1";
    col.metrics = { { "task_f1", 0.8 }, { "lid_f1/lid_data", 0.9 } };
    a.columns.push_back(col);

    auto self = compare_runs({ a, a });
    ASSERT_EQ(self.metrics.size(), 2u);
    for (const auto& row : self.cells) {
        EXPECT_EQ(*row[1].delta, 0.0);
    }

    auto b = a;
    b.columns[0].metrics.erase("lid_f1/lid_data");
    b.columns[0].metrics["task_f1"] = 0.7;
    auto table = compare_runs({ a, b });
    const auto lid_row = std::find(table.metrics.begin(), table.metrics.end(), "lid_f1/lid_data") - table.metrics.begin();
    const auto f1_row = std::find(table.metrics.begin(), table.metrics.end(), "task_f1") - table.metrics.begin();
    EXPECT_FALSE(table.cells[static_cast<std::size_t>(lid_row)][1].value.has_value());
    EXPECT_NEAR(*table.cells[static_cast<std::size_t>(f1_row)][1].delta, -0.1, 1e-12);
    EXPECT_NE(format_delta_table(table).find(gap_marker), std::string::npos);

    auto c = a;
    c.pivot = "L1";
    EXPECT_THROW(compare_runs({ a, c }), Error);
    c = a;
    c.schema_version = 2;
    EXPECT_THROW(compare_runs({ a, c }), Error);
    EXPECT_THROW(compare_runs({}), Error);
}

TEST(Pipeline, FailuresNameTheirStage) {
    TempDir dir;
    auto config = tiny_config(dir / "s");
    config.checkpoint = dir / "missing.lpck";
    try {
        run_experiment(config);
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.stage(), "pretrain");
    }

    config = tiny_config(dir / "s");
    config.experiment.lambda = 0.5;
    try {
        run_experiment(config);
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.stage(), "config");
    }

    config = tiny_config(dir / "s");
    config.corpus.vocab = dir / "nothing.txt";
    config.corpus.task = dir / "nothing.conllu";
    config.corpus.lid = dir / "nothing.tsv";
    config.corpus.pretrain = dir / "nothing.tsv";
    try {
        run_experiment(config);
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.stage(), "data");
    }
}

TEST(Pipeline, SavedCorporaReloadToTheSameExperiment) {
    TempDir dir;
    auto config = tiny_config(dir / "c");
    config.analysis.projections = false;
    auto first = run_experiment(config);
    auto reload = config;
    reload.output_dir = dir / "d";
    reload.corpus.vocab = dir / "c/corpus/vocab.txt";
    reload.corpus.task = dir / "c/corpus/task.conllu";
    reload.corpus.lid = dir / "c/corpus/lid.tsv";
    reload.corpus.pretrain = dir / "c/corpus/pretrain.tsv";
    auto second = run_experiment(reload);
    EXPECT_EQ(second.primary().metrics, first.primary().metrics);
}
