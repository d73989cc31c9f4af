#ifndef LANGPROBE_TRAINING_REGIMES_HPP
#define LANGPROBE_TRAINING_REGIMES_HPP

#include <algorithm>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "../data/example.hpp"
#include "../encoder/encoder.hpp"
#include "../heads/losses.hpp"
#include "adam.hpp"
#include "config.hpp"
#include "features.hpp"
#include "probe.hpp"

/**
 * @file regimes.hpp
 *
 * @brief The four training regimes and the language-probe retraining that follows each of them.
 *
 * Every random decision draws from its own stream derived from the experiment seed (task head
 * initialisation, language head initialisation, task batch order, language batch order, dropout on the
 * task path, dropout on the language path, and the three streams of the final language probe). Runs
 * with the same seed therefore share their task-side randomness across regimes, which is what makes
 * grad_reversal with lambda = 0 and entropy_max with w = 0 reproduce plain fine-tuning exactly.
 */

namespace langprobe {

/**
 * Task and language-identification corpora with the inventories shared by every run on them.
 */
struct ExperimentData {
    TaskKind task = TaskKind::TokenTag;
    CorpusSplit task_data;
    CorpusSplit lid_data;
    LanguageIndex languages;

    /**
     * Task classes that macro F1 averages over: every label occurring anywhere in the task corpus.
     */
    std::vector<int> task_classes;
};

inline ExperimentData make_experiment_data(TaskKind task, CorpusSplit task_data, CorpusSplit lid_data) {
    ExperimentData out;
    out.task = task;
    std::set<std::string> languages;
    std::set<int> classes;
    for (const auto* split : { &task_data.train, &task_data.val, &task_data.dev, &task_data.test }) {
        for (const auto& ex : *split) {
            validate_example(ex, task);
            languages.insert(ex.language);
            for (int label : ex.task_labels) {
                if (label != ignore_label) {
                    classes.insert(label);
                }
            }
        }
    }
    for (const auto* split : { &lid_data.train, &lid_data.val, &lid_data.dev, &lid_data.test }) {
        for (const auto& ex : *split) {
            validate_example(ex, TaskKind::LanguageId);
            languages.insert(ex.language);
        }
    }
    if (languages.size() < 2) {
        throw Error("language identification needs at least two languages");
    }
    out.task_data = std::move(task_data);
    out.lid_data = std::move(lid_data);
    out.languages = LanguageIndex(std::vector<std::string>(languages.begin(), languages.end()));
    out.task_classes.assign(classes.begin(), classes.end());
    return out;
}

struct LossTraces {
    std::vector<double> task;            ///< mean task cross-entropy per update
    std::vector<double> language;        ///< per joint update: language cross-entropy (grad_reversal) or mean language term (entropy_max)
    std::vector<double> language_head;   ///< mean language cross-entropy per update of the language head alone
};

/**
 * One contiguous stretch of updates. `first_step` indexes `LossTraces::task` for joint phases and
 * `LossTraces::language_head` for language-head phases.
 */
struct PhaseRecord {
    enum class Kind { LanguageHead, Joint };
    Kind kind = Kind::Joint;
    std::size_t epoch = 0;
    std::size_t first_step = 0;
    std::size_t steps = 0;
};

template<typename Scalar_>
struct TrainingRun {
    Regime regime = Regime::Finetune;

    /**
     * Task validation macro F1 (pivot language only) after each epoch, or after each epoch pair for entropy_max.
     */
    std::vector<double> val_scores;
    std::size_t selected_epoch = 0;

    ClassifierHead<Scalar_> task_head;

    /**
     * The language head trained alongside the encoder (grad_reversal, entropy_max) at the selected epoch.
     */
    std::optional<ClassifierHead<Scalar_> > adversary_head;

    /**
     * Language classifier retrained from scratch on the final (frozen) encoder.
     */
    ProbeRun<Scalar_> language_probe;

    LossTraces traces;
    std::vector<PhaseRecord> phases;
    std::uint64_t encoder_before = 0;
    std::uint64_t encoder_after = 0;
};

namespace training_detail {

enum Stream : std::uint64_t {
    task_head_stream = 1,
    language_head_stream,
    task_order_stream,
    language_order_stream,
    task_dropout_stream,
    language_dropout_stream,
    probe_head_stream,
    probe_order_stream,
    probe_dropout_stream
};

inline std::vector<LabeledExample> pivot_only(const std::vector<LabeledExample>& examples, const std::string& pivot, const char* split) {
    std::vector<LabeledExample> out;
    for (const auto& ex : examples) {
        if (ex.language == pivot) {
            out.push_back(ex);
        }
    }
    if (out.empty()) {
        throw Error(std::string("no ") + split + " examples in the pivot language '" + pivot + "'");
    }
    return out;
}

inline void check_nonempty(const ExperimentData& data) {
    if (data.task_data.train.empty() || data.task_data.val.empty()) {
        throw Error("task corpus has an empty training or validation split");
    }
    if (data.lid_data.train.empty() || data.lid_data.val.empty()) {
        throw Error("language-identification corpus has an empty training or validation split");
    }
}

inline std::vector<std::size_t> iota(std::size_t n) {
    std::vector<std::size_t> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = i;
    }
    return out;
}

/**
 * Joint training of encoder and task head, optionally with a language head attached through gradient
 * reversal or through the entropy term. One instance drives one run.
 */
template<typename Scalar_>
class JointTrainer {
public:
    enum class Mode { Plain, Reversal, Entropy };

    JointTrainer(EncoderModel<Scalar_>& encoder, const ExperimentData& data, const ExperimentConfig& config, Mode mode) :
        my_encoder(encoder), my_data(data), my_config(config), my_mode(mode), my_granularity(granularity_of(data.task)),
        my_train(pivot_only(data.task_data.train, config.pivot_language, "training")),
        my_val(pivot_only(data.task_data.val, config.pivot_language, "validation")),
        my_task_order_rng(derive_seed(config.seed, task_order_stream)),
        my_language_order_rng(derive_seed(config.seed, language_order_stream)),
        my_task_dropout_rng(derive_seed(config.seed, task_dropout_stream)),
        my_language_dropout_rng(derive_seed(config.seed, language_dropout_stream)) {
        const auto d = encoder.d_model();
        my_task_head = make_head<Scalar_>(d, task_label_names(data.task).size(), config.init_stddev, derive_seed(config.seed, task_head_stream));
        my_language_head = make_head<Scalar_>(d, data.languages.size(), config.init_stddev, derive_seed(config.seed, language_head_stream));
        my_encoder_adam = AdamState<EncoderParams<Scalar_> >(encoder.params());
        my_task_adam = AdamState<ClassifierHead<Scalar_> >(my_task_head);
        my_language_adam = AdamState<ClassifierHead<Scalar_> >(my_language_head);
        my_encoder_grads = zeros_like(encoder.params());
        my_task_grads = zeros_like(my_task_head);
        my_language_grads = zeros_like(my_language_head);
        my_task_order = iota(my_train.size());
        my_language_order = iota(data.lid_data.train.size());
        my_language_cursor = my_language_order.size();
    }

    /**
     * One pass over the pivot-language training data.
     */
    void joint_epoch(std::size_t epoch, TrainingRun<Scalar_>& run) {
        PhaseRecord phase{ PhaseRecord::Kind::Joint, epoch, run.traces.task.size(), 0 };
        shuffle(my_task_order, my_task_order_rng);
        for (std::size_t start = 0; start < my_task_order.size(); start += my_config.batch_size) {
            const std::size_t end = std::min(my_task_order.size(), start + my_config.batch_size);
            std::vector<const LabeledExample*> batch;
            for (std::size_t i = start; i < end; ++i) {
                batch.push_back(&my_train[my_task_order[i]]);
            }
            step(batch, run);
            ++phase.steps;
        }
        run.phases.push_back(phase);
    }

    /**
     * One pass of the language head alone over the language-identification training data, on features
     * of the current encoder.
     */
    void language_epoch(std::size_t epoch, TrainingRun<Scalar_>& run) {
        PhaseRecord phase{ PhaseRecord::Kind::LanguageHead, epoch, run.traces.language_head.size(), 0 };
        auto features = encode_units(my_encoder, my_data.lid_data.train, my_granularity, my_data.languages);
        auto order = iota(features.examples());
        shuffle(order, my_language_order_rng);
        Matrix<Scalar_> rows;
        std::vector<int> labels;
        for (std::size_t start = 0; start < order.size(); start += my_config.batch_size) {
            std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + my_config.batch_size)));
            gather_units(features, Target::Language, batch, rows, labels);
            if (rows.rows() == 0) {
                continue;
            }
            apply_head_dropout(rows, my_language_dropout_rng);
            set_zero(my_language_grads);
            const auto scale = static_cast<Scalar_>(1.0 / static_cast<double>(rows.rows()));
            const double loss = head_cross_entropy(my_language_head, rows, labels, scale, &my_language_grads, static_cast<Matrix<Scalar_>*>(nullptr));
            run.traces.language_head.push_back(loss / static_cast<double>(rows.rows()));
            adam_step(my_language_head, my_language_grads, my_language_adam, my_config.head_lr);
            ++phase.steps;
        }
        run.phases.push_back(phase);
    }

    double validate() const {
        auto features = encode_units(my_encoder, my_val, my_granularity, my_data.languages);
        return score(my_task_head, features, Target::Task, my_data.task_classes);
    }

    const ClassifierHead<Scalar_>& task_head() const { return my_task_head; }
    const ClassifierHead<Scalar_>& language_head() const { return my_language_head; }

private:
    void apply_head_dropout(Matrix<Scalar_>& rows, Rng& rng) const {
        if (my_config.head_dropout > 0) {
            rows.array() *= encoder_detail::dropout_mask<Scalar_>(rows.rows(), rows.cols(), my_config.head_dropout, rng).array();
        }
    }

    std::size_t units_in(const std::vector<const LabeledExample*>& batch) const {
        std::size_t n = 0;
        for (const auto* ex : batch) {
            n += unit_positions(ex->sequence, my_granularity).size();
        }
        return n;
    }

    std::vector<const LabeledExample*> next_language_batch(std::size_t size) {
        std::vector<const LabeledExample*> out;
        while (out.size() < size) {
            if (my_language_cursor == my_language_order.size()) {
                shuffle(my_language_order, my_language_order_rng);
                my_language_cursor = 0;
            }
            out.push_back(&my_data.lid_data.train[my_language_order[my_language_cursor++]]);
        }
        return out;
    }

    /**
     * Forward one example in training mode and return its unit rows (after head dropout), recording the
     * tape and the mask needed to route a gradient back.
     */
    Matrix<Scalar_> forward_units(const LabeledExample& ex, Rng& rng, GradientTape<Scalar_>& tape, std::vector<std::size_t>& positions, Matrix<Scalar_>& mask, Matrix<Scalar_>& output) const {
        output = my_encoder.forward(ex.sequence.tokens, tape, &rng);
        positions = unit_positions(ex.sequence, my_granularity);
        Matrix<Scalar_> rows(static_cast<Eigen::Index>(positions.size()), output.cols());
        for (std::size_t u = 0; u < positions.size(); ++u) {
            rows.row(static_cast<Eigen::Index>(u)) = output.row(static_cast<Eigen::Index>(positions[u]));
        }
        if (my_config.head_dropout > 0) {
            mask = encoder_detail::dropout_mask<Scalar_>(rows.rows(), rows.cols(), my_config.head_dropout, rng);
            rows.array() *= mask.array();
        } else {
            mask.resize(0, 0);
        }
        return rows;
    }

    void backward_units(GradientTape<Scalar_>& tape, const std::vector<std::size_t>& positions, const Matrix<Scalar_>& mask,
                        Matrix<Scalar_> grad_rows, const Matrix<Scalar_>& output) {
        if (mask.size()) {
            grad_rows.array() *= mask.array();
        }
        Matrix<Scalar_> grad_output = Matrix<Scalar_>::Zero(output.rows(), output.cols());
        for (std::size_t u = 0; u < positions.size(); ++u) {
            grad_output.row(static_cast<Eigen::Index>(positions[u])) += grad_rows.row(static_cast<Eigen::Index>(u));
        }
        my_encoder.backward(tape, grad_output, my_encoder_grads);
    }

    void step(const std::vector<const LabeledExample*>& batch, TrainingRun<Scalar_>& run) {
        std::vector<const LabeledExample*> language_batch;
        if (my_mode != Mode::Plain) {
            language_batch = next_language_batch(batch.size());
        }
        auto losses = accumulate_gradients(batch, language_batch, my_task_dropout_rng, my_language_dropout_rng);
        run.traces.task.push_back(losses.first);
        if (my_mode != Mode::Plain) {
            run.traces.language.push_back(losses.second);
        }
        if (!std::isfinite(losses.first) || !std::isfinite(losses.second)) {
            throw Error("training diverged (non-finite loss) at update " + std::to_string(run.traces.task.size() - 1));
        }
        adam_step(my_encoder.params(), my_encoder_grads, my_encoder_adam, my_config.encoder_lr);
        adam_step(my_task_head, my_task_grads, my_task_adam, my_config.head_lr);
        if (my_mode == Mode::Reversal) {
            adam_step(my_language_head, my_language_grads, my_language_adam, my_config.head_lr);
        }
    }

public:
    /**
     * Gradients of one update into `encoder_gradients()`, `task_gradients()` and `language_gradients()`,
     * without applying them. Returns the mean task cross-entropy and the mean language loss (cross-entropy
     * under reversal, the language term under entropy maximisation, 0 in plain mode).
     *
     * Under reversal the encoder receives the language gradient multiplied by -lambda, so a lambda of -1
     * attaches the language head without reversal.
     */
    std::pair<double, double> accumulate_gradients(const std::vector<const LabeledExample*>& batch, const std::vector<const LabeledExample*>& language_batch,
                                                   Rng& task_dropout, Rng& language_dropout) {
        set_zero(my_encoder_grads);
        set_zero(my_task_grads);
        set_zero(my_language_grads);

        const double task_weight = my_mode == Mode::Entropy ? 1.0 - *my_config.w : 1.0;
        const std::size_t task_units = units_in(batch);
        double task_loss = 0;
        if (task_units > 0) {
            const auto scale = static_cast<Scalar_>(task_weight / static_cast<double>(task_units));
            GradientTape<Scalar_> tape;
            std::vector<std::size_t> positions;
            Matrix<Scalar_> mask, output, grad_rows;
            for (const auto* ex : batch) {
                Matrix<Scalar_> rows = forward_units(*ex, task_dropout, tape, positions, mask, output);
                auto labels = unit_task_labels(*ex, my_granularity);
                task_loss += head_cross_entropy(my_task_head, rows, labels, scale, &my_task_grads, &grad_rows);
                backward_units(tape, positions, mask, grad_rows, output);
            }
            task_loss /= static_cast<double>(task_units);
        }
        double language_loss = 0;
        if (my_mode != Mode::Plain) {
            const std::size_t language_units = units_in(language_batch);
            if (language_units > 0) {
                const double inv_units = 1.0 / static_cast<double>(language_units);
                GradientTape<Scalar_> tape;
                std::vector<std::size_t> positions;
                Matrix<Scalar_> mask, output, grad_rows;
                for (const auto* ex : language_batch) {
                    Matrix<Scalar_> rows = forward_units(*ex, language_dropout, tape, positions, mask, output);
                    if (my_mode == Mode::Reversal) {
                        std::vector<int> labels(positions.size(), my_data.languages.id(ex->language));
                        language_loss += head_cross_entropy(my_language_head, rows, labels, static_cast<Scalar_>(inv_units), &my_language_grads, &grad_rows);
                        backward_units(tape, positions, mask, grad_reversal_backward(grad_rows, *my_config.lambda), output);
                    } else {
                        Matrix<Scalar_> probs = softmax_rows(head_logits(my_language_head, rows));
                        Matrix<Scalar_> dlogits(probs.rows(), probs.cols());
                        for (Eigen::Index i = 0; i < probs.rows(); ++i) {
                            language_loss += language_term(probs.row(i), my_config.language_term);
                            dlogits.row(i) = language_term_grad(probs.row(i), my_config.language_term);
                        }
                        dlogits *= static_cast<Scalar_>(*my_config.w * inv_units);
                        backward_units(tape, positions, mask, dlogits * my_language_head.weight.transpose(), output);
                    }
                }
                language_loss *= inv_units;
            }
        }
        return { task_loss, language_loss };
    }

    const EncoderParams<Scalar_>& encoder_gradients() const { return my_encoder_grads; }
    const ClassifierHead<Scalar_>& task_gradients() const { return my_task_grads; }
    const ClassifierHead<Scalar_>& language_gradients() const { return my_language_grads; }
    ClassifierHead<Scalar_>& task_head() { return my_task_head; }
    ClassifierHead<Scalar_>& language_head() { return my_language_head; }

private:

    EncoderModel<Scalar_>& my_encoder;
    const ExperimentData& my_data;
    const ExperimentConfig& my_config;
    Mode my_mode;
    Granularity my_granularity;
    std::vector<LabeledExample> my_train, my_val;

    ClassifierHead<Scalar_> my_task_head, my_language_head;
    AdamState<EncoderParams<Scalar_> > my_encoder_adam;
    AdamState<ClassifierHead<Scalar_> > my_task_adam, my_language_adam;
    EncoderParams<Scalar_> my_encoder_grads;
    ClassifierHead<Scalar_> my_task_grads, my_language_grads;

    Rng my_task_order_rng, my_language_order_rng, my_task_dropout_rng, my_language_dropout_rng;
    std::vector<std::size_t> my_task_order, my_language_order;
    std::size_t my_language_cursor = 0;
};

template<typename Scalar_>
void check_trainable(const EncoderModel<Scalar_>& encoder, const ExperimentConfig& config, Regime expected) {
    config.validate();
    if (config.regime != expected) {
        throw Error(std::string("config regime is ") + to_string(config.regime) + ", expected " + to_string(expected));
    }
    if (encoder.frozen()) {
        throw Error("encoder is frozen");
    }
}

}

/**
 * Train a fresh language classifier on the (unchanged) encoder's features of the language-identification
 * training data, selecting the epoch by macro F1 on the language-identification validation data.
 */
template<typename Scalar_>
ProbeRun<Scalar_> retrain_language_probe(const EncoderModel<Scalar_>& encoder, const ExperimentData& data, const ExperimentConfig& config) {
    using namespace training_detail;
    if (data.lid_data.train.empty() || data.lid_data.val.empty()) {
        throw Error("language-identification corpus has an empty training or validation split");
    }
    const auto granularity = granularity_of(data.task);
    auto train = encode_units(encoder, data.lid_data.train, granularity, data.languages);
    auto val = encode_units(encoder, data.lid_data.val, granularity, data.languages);
    ProbeSettings settings;
    settings.init_stddev = config.init_stddev;
    settings.batch_size = config.batch_size;
    settings.learning_rate = config.head_lr;
    settings.dropout = config.head_dropout;
    settings.epochs = config.epochs;
    settings.head_seed = derive_seed(config.seed, probe_head_stream);
    settings.order_seed = derive_seed(config.seed, probe_order_stream);
    settings.dropout_seed = derive_seed(config.seed, probe_dropout_stream);
    return train_probe(train, val, Target::Language, data.languages.size(), class_range(data.languages.size()), settings);
}

/**
 * Task and language classifiers trained on the unmodified encoder. The encoder is never touched.
 */
template<typename Scalar_>
TrainingRun<Scalar_> train_frozen_probe(const EncoderModel<Scalar_>& encoder, const ExperimentData& data, const ExperimentConfig& config) {
    using namespace training_detail;
    config.validate();
    if (config.regime != Regime::FrozenProbe) {
        throw Error(std::string("config regime is ") + to_string(config.regime) + ", expected frozen_probe");
    }
    check_nonempty(data);
    TrainingRun<Scalar_> run;
    run.regime = Regime::FrozenProbe;
    run.encoder_before = fingerprint(encoder.params());

    const auto granularity = granularity_of(data.task);
    auto train = encode_units(encoder, pivot_only(data.task_data.train, config.pivot_language, "training"), granularity, data.languages);
    auto val = encode_units(encoder, pivot_only(data.task_data.val, config.pivot_language, "validation"), granularity, data.languages);
    ProbeSettings settings;
    settings.init_stddev = config.init_stddev;
    settings.batch_size = config.batch_size;
    settings.learning_rate = config.head_lr;
    settings.dropout = config.head_dropout;
    settings.epochs = config.epochs;
    settings.head_seed = derive_seed(config.seed, task_head_stream);
    settings.order_seed = derive_seed(config.seed, task_order_stream);
    settings.dropout_seed = derive_seed(config.seed, task_dropout_stream);
    auto task_probe = train_probe(train, val, Target::Task, task_label_names(data.task).size(), data.task_classes, settings);
    run.task_head = std::move(task_probe.head);
    run.val_scores = std::move(task_probe.val_scores);
    run.selected_epoch = task_probe.selected_epoch;
    run.traces.task = std::move(task_probe.loss_trace);

    run.language_probe = retrain_language_probe(encoder, data, config);
    run.encoder_after = fingerprint(encoder.params());
    return run;
}

namespace training_detail {

/**
 * Shared epoch loop of the three regimes that update the encoder. `entropy_phases` inserts a language-head
 * epoch before every joint epoch.
 */
template<typename Scalar_>
TrainingRun<Scalar_> train_jointly(EncoderModel<Scalar_>& encoder, const ExperimentData& data, const ExperimentConfig& config,
                                   typename JointTrainer<Scalar_>::Mode mode) {
    check_nonempty(data);
    TrainingRun<Scalar_> run;
    run.regime = config.regime;
    run.encoder_before = fingerprint(encoder.params());

    JointTrainer<Scalar_> trainer(encoder, data, config, mode);
    const bool alternating = mode == JointTrainer<Scalar_>::Mode::Entropy;
    double best = -std::numeric_limits<double>::infinity();
    EncoderParams<Scalar_> best_encoder = encoder.params();
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        if (alternating) {
            trainer.language_epoch(epoch, run);
        }
        trainer.joint_epoch(epoch, run);
        const double s = trainer.validate();
        run.val_scores.push_back(s);
        if (s > best) {
            best = s;
            run.selected_epoch = epoch;
            best_encoder = encoder.params();
            run.task_head = trainer.task_head();
            if (mode != JointTrainer<Scalar_>::Mode::Plain) {
                run.adversary_head = trainer.language_head();
            }
        }
    }
    encoder.params() = std::move(best_encoder);

    const bool was_frozen = encoder.frozen();
    encoder.set_frozen(true);
    run.language_probe = retrain_language_probe(encoder, data, config);
    encoder.set_frozen(was_frozen);
    run.encoder_after = fingerprint(encoder.params());
    return run;
}

}

/**
 * Phase 1: encoder and task head trained together on pivot-language task data; the encoder is left at the
 * best epoch. Phase 2: with the encoder frozen, a fresh language classifier is trained on it.
 */
template<typename Scalar_>
TrainingRun<Scalar_> train_finetune(EncoderModel<Scalar_>& encoder, const ExperimentData& data, const ExperimentConfig& config) {
    using namespace training_detail;
    check_trainable(encoder, config, Regime::Finetune);
    return train_jointly(encoder, data, config, JointTrainer<Scalar_>::Mode::Plain);
}

/**
 * Every update draws one task minibatch and one language minibatch with the same number of examples. The
 * task loss and the language loss are summed into one update; the language gradient reaches the encoder
 * multiplied by -lambda. Epochs are selected on the task validation data only.
 */
template<typename Scalar_>
TrainingRun<Scalar_> train_grad_reversal(EncoderModel<Scalar_>& encoder, const ExperimentData& data, const ExperimentConfig& config) {
    using namespace training_detail;
    check_trainable(encoder, config, Regime::GradReversal);
    return train_jointly(encoder, data, config, JointTrainer<Scalar_>::Mode::Reversal);
}

/**
 * `epochs` pairs of phases: the language head alone for one epoch on language data, then encoder and task
 * head for one epoch on `(1 - w) XE + w * language_term`, the term taken over a language minibatch paired
 * with each task minibatch and the language head held fixed.
 */
template<typename Scalar_>
TrainingRun<Scalar_> train_entropy_max(EncoderModel<Scalar_>& encoder, const ExperimentData& data, const ExperimentConfig& config) {
    using namespace training_detail;
    check_trainable(encoder, config, Regime::EntropyMax);
    return train_jointly(encoder, data, config, JointTrainer<Scalar_>::Mode::Entropy);
}

/**
 * Run the regime named in `config`.
 */
template<typename Scalar_>
TrainingRun<Scalar_> train_experiment(EncoderModel<Scalar_>& encoder, const ExperimentData& data, const ExperimentConfig& config) {
    switch (config.regime) {
        case Regime::FrozenProbe: return train_frozen_probe(encoder, data, config);
        case Regime::Finetune: return train_finetune(encoder, data, config);
        case Regime::GradReversal: return train_grad_reversal(encoder, data, config);
        case Regime::EntropyMax: return train_entropy_max(encoder, data, config);
    }
    throw Error("unknown regime");
}

}

#endif
