#include <gtest/gtest.h>

#include <set>

#include "fixtures.hpp"
#include "langprobe/training/search.hpp"

using namespace langprobe;
using fixtures::ToyWorld;

namespace {

ClassifierHead<double> scalar_pair(double a, double b) {
    ClassifierHead<double> h;
    h.weight.resize(1, 1);
    h.bias.resize(1, 1);
    h.weight(0, 0) = a;
    h.bias(0, 0) = b;
    return h;
}

bool same_head(const ClassifierHead<double>& a, const ClassifierHead<double>& b) {
    return fingerprint(a) == fingerprint(b);
}

// One-hot token-identity features for the units of `examples`, aligned with `encode_units`.
FeatureSet<double> one_hot_units(const std::vector<LabeledExample>& examples, std::size_t vocab_size, const LanguageIndex& languages) {
    FeatureSet<double> out;
    std::vector<int> ids;
    for (const auto& ex : examples) {
        auto positions = unit_positions(ex.sequence, Granularity::Token);
        for (auto p : positions) {
            ids.push_back(ex.sequence.tokens[p]);
            out.languages.push_back(languages.id(ex.language));
            out.task_labels.push_back(ignore_label);
        }
        out.offsets.push_back(ids.size());
    }
    out.features = Matrix<double>::Zero(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(vocab_size));
    for (std::size_t i = 0; i < ids.size(); ++i) {
        out.features(static_cast<Eigen::Index>(i), ids[i]) = 1;
    }
    return out;
}

}

TEST(Adam, HandEvaluatedFirstStep) {
    auto p = scalar_pair(1.0, -2.0);
    auto g = scalar_pair(1.0, -3.0);
    AdamState<ClassifierHead<double> > state(p);
    adam_step(p, g, state, 0.1);
    // m = 0.1 g, v = 0.001 g^2, bias-corrected to g and g^2: the step is lr * g / (|g| + eps).
    EXPECT_NEAR(p.weight(0, 0), 1.0 - 0.1 / (1 + 1e-8), 1e-15);
    EXPECT_NEAR(p.bias(0, 0), -2.0 + 0.1 * 3 / (3 + 1e-8), 1e-15);
    EXPECT_NEAR(state.first.weight(0, 0), 0.1, 1e-15);
    EXPECT_NEAR(state.second.weight(0, 0), 0.001, 1e-15);
    EXPECT_EQ(state.step, 1u);

    adam_step(p, g, state, 0.1);
    EXPECT_NEAR(p.weight(0, 0), 1.0 - 0.2, 1e-7);
}

TEST(Adam, ZeroGradientLeavesParameters) {
    auto p = scalar_pair(0.5, 0.25);
    AdamState<ClassifierHead<double> > state(p);
    adam_step(p, scalar_pair(0, 0), state, 0.1);
    EXPECT_EQ(p.weight(0, 0), 0.5);
    EXPECT_EQ(p.bias(0, 0), 0.25);
}

TEST(Adam, DeterministicAndRejectsNonFinite) {
    auto a = scalar_pair(0.5, 0.25), b = a;
    AdamState<ClassifierHead<double> > sa(a), sb(b);
    for (int i = 0; i < 2; ++i) {
        adam_step(a, scalar_pair(0.3, -0.7), sa, 0.01);
        adam_step(b, scalar_pair(0.3, -0.7), sb, 0.01);
    }
    EXPECT_TRUE(same_head(a, b));
    auto before = a;
    EXPECT_THROW(adam_step(a, scalar_pair(std::nan(""), 0), sa, 0.01), Error);
    EXPECT_TRUE(same_head(a, before));
    EXPECT_EQ(sa.step, 2u);
}

TEST(ExperimentConfig, Validation) {
    auto c = ToyWorld::config(Regime::Finetune);
    EXPECT_NO_THROW(c.validate());
    c.lambda = 0.1;
    EXPECT_THROW(c.validate(), Error);
    c = ToyWorld::config(Regime::GradReversal);
    c.lambda.reset();
    EXPECT_THROW(c.validate(), Error);
    c = ToyWorld::config(Regime::EntropyMax);
    c.w.reset();
    EXPECT_THROW(c.validate(), Error);
    c = ToyWorld::config(Regime::EntropyMax);
    c.w = 1.5;
    EXPECT_THROW(c.validate(), Error);
    c = ToyWorld::config(Regime::Finetune);
    c.epochs = 0;
    EXPECT_THROW(c.validate(), Error);
    c = ToyWorld::config(Regime::Finetune);
    c.task = TaskKind::LanguageId;
    EXPECT_THROW(c.validate(), Error);
    EXPECT_EQ(ExperimentConfig{}.epochs, 5u);
    for (auto r : { Regime::FrozenProbe, Regime::Finetune, Regime::GradReversal, Regime::EntropyMax }) {
        EXPECT_EQ(parse_regime(to_string(r)), r);
    }
    EXPECT_THROW(parse_regime("adversarial"), Error);
}

TEST(ExperimentConfig, PresetsCarryTheSelectedHyperparameters) {
    const auto& xnli = experiment_preset("xnli-finetuned");
    EXPECT_EQ(xnli.task, TaskKind::PairInference);
    EXPECT_EQ(xnli.init_stddev, 1e-3);
    EXPECT_EQ(xnli.batch_size, 64u);
    EXPECT_EQ(xnli.encoder_lr, 1e-5);
    EXPECT_EQ(xnli.head_lr, 1e-2);
    const auto& pos = experiment_preset("udpos-entropy-max");
    EXPECT_EQ(pos.w, 0.7);
    EXPECT_EQ(pos.batch_size, 32u);
    EXPECT_EQ(experiment_preset("udpos-grad-reversal").lambda, 0.1);
    EXPECT_EQ(experiment_preset("udpos-frozen").head_lr, 1e-3);
    EXPECT_EQ(experiment_presets().size(), 8u);
    for (const auto& [name, preset] : experiment_presets()) {
        EXPECT_NO_THROW(preset.validate()) << name;
    }
    EXPECT_THROW(experiment_preset("udpos"), Error);
}

TEST(RandomSearch, SamplesLieOnTheGrid) {
    SearchGrid grid;
    for (auto regime : { Regime::FrozenProbe, Regime::Finetune, Regime::GradReversal, Regime::EntropyMax }) {
        auto base = ToyWorld::config(regime);
        auto configs = sample_configs(base, grid, 20, 3);
        ASSERT_EQ(configs.size(), 20u);
        auto on = [](const auto& values, auto v) { return std::find(values.begin(), values.end(), v) != values.end(); };
        for (const auto& c : configs) {
            EXPECT_NO_THROW(c.validate());
            EXPECT_TRUE(on(grid.init_stddev, c.init_stddev));
            EXPECT_TRUE(on(grid.batch_size, c.batch_size));
            EXPECT_TRUE(on(grid.head_lr, c.head_lr));
            if (regime == Regime::FrozenProbe) {
                EXPECT_EQ(c.encoder_lr, 0.0);
            } else {
                EXPECT_TRUE(on(grid.encoder_lr, c.encoder_lr));
            }
            EXPECT_EQ(c.lambda.has_value(), regime == Regime::GradReversal);
            EXPECT_EQ(c.w.has_value(), regime == Regime::EntropyMax);
            if (c.lambda) {
                EXPECT_TRUE(on(grid.lambda, *c.lambda));
            }
            if (c.w) {
                EXPECT_TRUE(on(grid.w, *c.w));
            }
            EXPECT_EQ(c.seed, base.seed);
            EXPECT_EQ(c.epochs, base.epochs);
        }
    }
}

TEST(RandomSearch, SeedingAndSizes) {
    SearchGrid grid;
    auto base = ToyWorld::config(Regime::Finetune);
    EXPECT_EQ(sample_configs(base, grid, 1, 5).size(), 1u);
    EXPECT_EQ(sample_configs(base, grid, 20, 5), sample_configs(base, grid, 20, 5));
    EXPECT_NE(sample_configs(base, grid, 20, 5), sample_configs(base, grid, 20, 6));
    EXPECT_THROW(sample_configs(base, grid, 0, 5), Error);
    grid.w.clear();
    EXPECT_THROW(sample_configs(base, grid, 1, 5), Error);
}

TEST(RandomSearch, RanksByScoreKeepingSampleOrderOnTies) {
    SearchGrid grid;
    auto base = ToyWorld::config(Regime::Finetune);
    auto results = random_search(base, grid, 6, 2, [](const ExperimentConfig& c) { return c.batch_size == 32 ? 1.0 : 0.5; });
    ASSERT_EQ(results.size(), 6u);
    for (std::size_t i = 1; i < results.size(); ++i) {
        EXPECT_GE(results[i - 1].dev_score, results[i].dev_score);
        if (results[i - 1].dev_score == results[i].dev_score) {
            EXPECT_LT(results[i - 1].sample, results[i].sample);
        }
    }
}

TEST(ProbeTraining, EarliestEpochWinsTies) {
    // Two perfectly separable points: every epoch scores 1, so epoch 0 must be selected.
    FeatureSet<double> set;
    set.features.resize(2, 2);
    set.features << 5, 0, 0, 5;
    set.task_labels = { 0, 1 };
    set.languages = { 0, 1 };
    set.offsets = { 0, 1, 2 };
    ProbeSettings settings;
    settings.learning_rate = 0.5;
    settings.dropout = 0;
    settings.epochs = 4;
    auto run = train_probe(set, set, Target::Task, 2, class_range(2), settings);
    ASSERT_EQ(run.val_scores.size(), 4u);
    for (double s : run.val_scores) {
        EXPECT_EQ(s, 1.0);
    }
    EXPECT_EQ(run.selected_epoch, 0u);
}

TEST(FrozenProbe, EncoderUntouchedAndRunSelectsBestEpoch) {
    const auto& world = ToyWorld::get();
    auto encoder = world.pretrained;
    const auto before = fingerprint(encoder.params());
    auto run = train_frozen_probe(encoder, world.data, ToyWorld::config(Regime::FrozenProbe));
    EXPECT_EQ(fingerprint(encoder.params()), before);
    EXPECT_EQ(run.encoder_before, before);
    EXPECT_EQ(run.encoder_after, before);
    ASSERT_EQ(run.val_scores.size(), 2u);
    auto best = std::max_element(run.val_scores.begin(), run.val_scores.end());
    EXPECT_EQ(run.selected_epoch, static_cast<std::size_t>(best - run.val_scores.begin()));
    EXPECT_FALSE(run.adversary_head.has_value());
    EXPECT_THROW(train_frozen_probe(encoder, world.data, ToyWorld::config(Regime::Finetune)), Error);
}

TEST(FrozenProbe, LanguageProbeBeatsShuffledLabelControl) {
    const auto& world = ToyWorld::get();
    const auto& data = world.data;
    auto train = encode_units(world.pretrained, data.lid_data.train, Granularity::Token, data.languages);
    auto val = encode_units(world.pretrained, data.lid_data.val, Granularity::Token, data.languages);
    ProbeSettings settings;
    settings.epochs = 5;
    const auto k = data.languages.size();
    auto real = train_probe(train, val, Target::Language, k, class_range(k), settings);

    auto shuffled = train;
    Rng rng(11);
    shuffle(shuffled.languages, rng);
    auto control = train_probe(shuffled, val, Target::Language, k, class_range(k), settings);
    const double best_real = *std::max_element(real.val_scores.begin(), real.val_scores.end());
    const double control_final = control.val_scores.back();
    EXPECT_GT(best_real, 1.0 / static_cast<double>(k) + 0.3);
    EXPECT_LT(control_final, 1.0 / static_cast<double>(k) + 0.1);
}

TEST(Finetune, MovesTheEncoderAndRetrainsAFreshProbe) {
    const auto& world = ToyWorld::get();
    auto encoder = world.pretrained;
    auto config = ToyWorld::config(Regime::Finetune);
    auto run = train_finetune(encoder, world.data, config);
    EXPECT_NE(run.encoder_before, run.encoder_after);
    EXPECT_EQ(run.encoder_after, fingerprint(encoder.params()));
    EXPECT_FALSE(encoder.frozen());
    EXPECT_EQ(run.traces.task.size(), run.phases.size() * run.phases[0].steps);
    EXPECT_TRUE(run.traces.language.empty());

    // The language probe starts from its own initialisation, whatever happened before.
    auto frozen = encoder;
    frozen.set_frozen(true);
    auto probe = retrain_language_probe(frozen, world.data, config);
    EXPECT_TRUE(same_head(probe.head, run.language_probe.head));
    EXPECT_EQ(probe.val_scores, run.language_probe.val_scores);
    EXPECT_THROW(train_finetune(frozen, world.data, config), Error);
}

TEST(Regimes, RerunIsBitIdentical) {
    const auto& world = ToyWorld::get();
    for (auto regime : { Regime::FrozenProbe, Regime::Finetune, Regime::GradReversal, Regime::EntropyMax }) {
        auto a = world.pretrained, b = world.pretrained;
        auto ra = train_experiment(a, world.data, ToyWorld::config(regime));
        auto rb = train_experiment(b, world.data, ToyWorld::config(regime));
        EXPECT_EQ(fingerprint(a.params()), fingerprint(b.params())) << to_string(regime);
        EXPECT_TRUE(same_head(ra.task_head, rb.task_head)) << to_string(regime);
        EXPECT_TRUE(same_head(ra.language_probe.head, rb.language_probe.head)) << to_string(regime);
        EXPECT_EQ(ra.traces.task, rb.traces.task);
        EXPECT_EQ(ra.traces.language, rb.traces.language);
    }
}

TEST(Regimes, ZeroAdversaryWeightReducesToFinetune) {
    const auto& world = ToyWorld::get();
    auto plain_encoder = world.pretrained;
    auto plain = train_finetune(plain_encoder, world.data, ToyWorld::config(Regime::Finetune));

    auto grl_config = ToyWorld::config(Regime::GradReversal);
    grl_config.lambda = 0.0;
    auto grl_encoder = world.pretrained;
    auto grl = train_grad_reversal(grl_encoder, world.data, grl_config);

    auto ent_config = ToyWorld::config(Regime::EntropyMax);
    ent_config.w = 0.0;
    auto ent_encoder = world.pretrained;
    auto ent = train_entropy_max(ent_encoder, world.data, ent_config);

    for (const auto* run : { &grl, &ent }) {
        EXPECT_EQ(run->encoder_after, plain.encoder_after);
        EXPECT_EQ(run->traces.task, plain.traces.task);
        EXPECT_EQ(run->val_scores, plain.val_scores);
        EXPECT_TRUE(same_head(run->task_head, plain.task_head));
    }
    EXPECT_EQ(fingerprint(grl_encoder.params()), fingerprint(plain_encoder.params()));
    EXPECT_EQ(fingerprint(ent_encoder.params()), fingerprint(plain_encoder.params()));
}

TEST(GradReversal, TracesBothLossesEveryUpdate) {
    const auto& world = ToyWorld::get();
    auto encoder = world.pretrained;
    auto run = train_grad_reversal(encoder, world.data, ToyWorld::config(Regime::GradReversal));
    EXPECT_EQ(run.traces.language.size(), run.traces.task.size());
    EXPECT_FALSE(run.traces.task.empty());
    EXPECT_TRUE(run.adversary_head.has_value());
    for (double v : run.traces.language) {
        EXPECT_TRUE(std::isfinite(v));
        EXPECT_GT(v, 0.0);
    }
}

TEST(EntropyMax, PhasesAlternateOnEpochBoundaries) {
    const auto& world = ToyWorld::get();
    auto encoder = world.pretrained;
    auto config = ToyWorld::config(Regime::EntropyMax);
    config.epochs = 3;
    auto run = train_entropy_max(encoder, world.data, config);
    const auto pivot_train = filter_language(world.data.task_data.train, { config.pivot_language }).size();
    const auto lid_train = world.data.lid_data.train.size();
    auto batches = [&](std::size_t n) { return (n + config.batch_size - 1) / config.batch_size; };

    ASSERT_EQ(run.phases.size(), 6u);
    std::size_t joint_step = 0, head_step = 0;
    for (std::size_t i = 0; i < run.phases.size(); ++i) {
        const auto& phase = run.phases[i];
        EXPECT_EQ(phase.epoch, i / 2);
        if (i % 2 == 0) {
            EXPECT_EQ(phase.kind, PhaseRecord::Kind::LanguageHead);
            EXPECT_EQ(phase.steps, batches(lid_train));
            EXPECT_EQ(phase.first_step, head_step);
            head_step += phase.steps;
        } else {
            EXPECT_EQ(phase.kind, PhaseRecord::Kind::Joint);
            EXPECT_EQ(phase.steps, batches(pivot_train));
            EXPECT_EQ(phase.first_step, joint_step);
            joint_step += phase.steps;
        }
    }
    EXPECT_EQ(run.traces.task.size(), joint_step);
    EXPECT_EQ(run.traces.language.size(), joint_step);
    EXPECT_EQ(run.traces.language_head.size(), head_step);
    EXPECT_EQ(run.val_scores.size(), 3u);
}

TEST(EntropyMax, LanguageTermStaysAboveItsMinimum) {
    const auto& world = ToyWorld::get();
    auto encoder = world.pretrained;
    auto config = ToyWorld::config(Regime::EntropyMax);
    config.w = 0.9;
    auto run = train_entropy_max(encoder, world.data, config);
    const double k = static_cast<double>(world.data.languages.size());
    for (double v : run.traces.language) {
        EXPECT_GE(v, k * std::log(k) - 1e-9);
    }
    // Over each joint phase the 5-step moving average of the term trends down.
    for (const auto& phase : run.phases) {
        if (phase.kind != PhaseRecord::Kind::Joint || phase.steps < 10) {
            continue;
        }
        auto average = [&](std::size_t from) {
            double s = 0;
            for (std::size_t i = 0; i < 5; ++i) {
                s += run.traces.language[from + i];
            }
            return s / 5;
        };
        EXPECT_LT(average(phase.first_step + phase.steps - 5), average(phase.first_step)) << "epoch " << phase.epoch;
    }
}

TEST(Regimes, TaskSideNeverSeesNonPivotExamples) {
    // Scrambling every non-pivot task label in train and validation must not change any regime's run.
    const auto& world = ToyWorld::get();
    auto scrambled = world.data;
    Rng rng(3);
    for (auto* split : { &scrambled.task_data.train, &scrambled.task_data.val }) {
        for (auto& ex : *split) {
            if (ex.language == "L0") {
                continue;
            }
            for (auto& label : ex.task_labels) {
                if (label != ignore_label) {
                    label = static_cast<int>(uniform_index(rng, upos_tags().size()));
                }
            }
        }
    }
    for (auto regime : { Regime::FrozenProbe, Regime::Finetune, Regime::GradReversal }) {
        auto a = world.pretrained, b = world.pretrained;
        auto ra = train_experiment(a, world.data, ToyWorld::config(regime));
        auto rb = train_experiment(b, scrambled, ToyWorld::config(regime));
        EXPECT_EQ(ra.val_scores, rb.val_scores) << to_string(regime);
        EXPECT_TRUE(same_head(ra.task_head, rb.task_head)) << to_string(regime);
        EXPECT_EQ(fingerprint(a.params()), fingerprint(b.params())) << to_string(regime);
    }
    auto no_pivot = world.data;
    no_pivot.task_data.train = filter_language(no_pivot.task_data.train, { "L1", "L2" });
    auto encoder = world.pretrained;
    EXPECT_THROW(train_finetune(encoder, no_pivot, ToyWorld::config(Regime::Finetune)), Error);
}

TEST(LanguageProbe, DeterministicAndPretrainingBeatsTokenIdentity) {
    const auto& world = ToyWorld::get();
    const auto& data = world.data;
    auto config = ToyWorld::config(Regime::FrozenProbe);
    config.epochs = 5;
    auto a = retrain_language_probe(world.pretrained, data, config);
    auto b = retrain_language_probe(world.pretrained, data, config);
    EXPECT_EQ(a.val_scores, b.val_scores);

    // Baseline: the same probe on one-hot token ids, which cannot tell shared word forms apart.
    auto train = one_hot_units(data.lid_data.train, world.vocab.size(), data.languages);
    auto val = one_hot_units(data.lid_data.val, world.vocab.size(), data.languages);
    ProbeSettings settings;
    settings.init_stddev = config.init_stddev;
    settings.batch_size = config.batch_size;
    settings.learning_rate = config.head_lr;
    settings.dropout = config.head_dropout;
    settings.epochs = config.epochs;
    auto baseline = train_probe(train, val, Target::Language, data.languages.size(), class_range(data.languages.size()), settings);
    const double encoder_best = a.val_scores[a.selected_epoch];
    const double baseline_best = baseline.val_scores[baseline.selected_epoch];
    EXPECT_GT(encoder_best, baseline_best) << "encoder " << encoder_best << " vs token ids " << baseline_best;
}

TEST(Regimes, Errors) {
    const auto& world = ToyWorld::get();
    auto encoder = world.pretrained;
    auto empty = world.data;
    empty.lid_data.train.clear();
    EXPECT_THROW(train_finetune(encoder, empty, ToyWorld::config(Regime::Finetune)), Error);
    EXPECT_THROW(train_frozen_probe(encoder, empty, ToyWorld::config(Regime::FrozenProbe)), Error);
    EXPECT_THROW(train_grad_reversal(encoder, world.data, ToyWorld::config(Regime::Finetune)), Error);
    CorpusSplit one_language;
    one_language.train = filter_language(world.data.task_data.train, { "L0" });
    EXPECT_THROW(make_experiment_data(TaskKind::TokenTag, one_language, CorpusSplit{}), Error);
}
