#ifndef LANGPROBE_TESTS_FIXTURES_HPP
#define LANGPROBE_TESTS_FIXTURES_HPP

#include "langprobe/data/split.hpp"
#include "langprobe/data/synthetic.hpp"
#include "langprobe/encoder/encoder.hpp"
#include "langprobe/encoder/mlm.hpp"
#include "langprobe/training/regimes.hpp"

namespace fixtures {

using namespace langprobe;

/**
 * Three small synthetic languages with a token-tag task, paragraph LID data and a tiny pre-trained encoder.
 * Built once per test binary.
 */
struct ToyWorld {
    std::vector<SyntheticLanguageSpec> specs;
    Vocabulary vocab;
    ExperimentData data;
    EncoderModel<double> pretrained;
    EncoderModel<double> untrained;

    static const ToyWorld& get() {
        static const ToyWorld world;
        return world;
    }

    static EncoderConfig encoder_config(std::size_t vocab_size) {
        EncoderConfig c;
        c.vocab_size = vocab_size;
        c.d_model = 16;
        c.n_layers = 1;
        c.n_heads = 2;
        c.ff_width = 32;
        c.dropout = 0.1;
        return c;
    }

    static ExperimentConfig config(Regime regime) {
        ExperimentConfig c;
        c.regime = regime;
        c.epochs = 2;
        c.batch_size = 16;
        c.encoder_lr = regime == Regime::FrozenProbe ? 0.0 : 1e-2;
        c.head_lr = 1e-2;
        c.seed = 4;
        if (regime == Regime::GradReversal) {
            c.lambda = 0.1;
        }
        if (regime == Regime::EntropyMax) {
            c.w = 0.5;
        }
        return c;
    }

private:
    ToyWorld() {
        SyntheticWorldOptions options;
        options.num_languages = 3;
        options.overlap_fraction = 0.5;
        specs = make_synthetic_languages(options, 21);
        vocab = build_vocabulary(specs);
        auto task = generate_corpus(specs, vocab, 100, TaskKind::TokenTag, 1);
        auto lid = generate_corpus(specs, vocab, 40, TaskKind::LanguageId, 2);
        data = make_experiment_data(TaskKind::TokenTag, stratified_split(task, { 0.7, 0.1, 0.1, 0.1 }, 3),
                                    stratified_split(lid, { 0.7, 0.1, 0.1, 0.1 }, 4));

        untrained = EncoderModel<double>(encoder_config(vocab.size()), 5);
        pretrained = untrained;
        MlmOptions mlm;
        mlm.steps = 300;
        mlm.learning_rate = 1e-2;
        auto corpus = generate_corpus(specs, vocab, 200, TaskKind::TokenTag, 6);
        mlm_pretrain(pretrained, sequences_of(corpus), mlm, 7);
    }
};

}

#endif
