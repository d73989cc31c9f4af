#ifndef LANGPROBE_TRAINING_PROBE_HPP
#define LANGPROBE_TRAINING_PROBE_HPP

#include <limits>
#include <vector>

#include "../encoder/encoder.hpp"
#include "../heads/head.hpp"
#include "adam.hpp"
#include "features.hpp"

namespace langprobe {

/**
 * Adds the gradient of `scale * sum_u CE(head(inputs_u), labels_u)` to `grads` (when given) and writes the
 * gradient with respect to `inputs` into `grad_inputs` (when given). Returns the unscaled CE sum.
 */
template<typename Scalar_>
double head_cross_entropy(const ClassifierHead<Scalar_>& head, const Matrix<Scalar_>& inputs, const std::vector<int>& labels,
                          Scalar_ scale, ClassifierHead<Scalar_>* grads, Matrix<Scalar_>* grad_inputs) {
    Matrix<Scalar_> logits = head_logits(head, inputs);
    Matrix<Scalar_> dlogits = softmax_rows(logits);
    double loss = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const auto gold = static_cast<std::size_t>(labels[static_cast<std::size_t>(i)]);
        loss += cross_entropy_logits(logits.row(i), gold);
        dlogits(i, static_cast<Eigen::Index>(gold)) -= Scalar_(1);
    }
    dlogits *= scale;
    if (grads) {
        Matrix<Scalar_> dx = head_backward(head, inputs, dlogits, *grads);
        if (grad_inputs) {
            *grad_inputs = std::move(dx);
        }
    } else if (grad_inputs) {
        *grad_inputs = dlogits * head.weight.transpose();
    }
    return loss;
}

struct ProbeSettings {
    double init_stddev = 1e-2;
    std::size_t batch_size = 32;
    double learning_rate = 1e-2;
    double dropout = 0.1;
    std::size_t epochs = 5;
    std::uint64_t head_seed = 0;
    std::uint64_t order_seed = 1;
    std::uint64_t dropout_seed = 2;
};

template<typename Scalar_>
struct ProbeRun {
    ClassifierHead<Scalar_> head;   ///< the head at the selected epoch
    std::vector<double> val_scores;
    std::size_t selected_epoch = 0;
    std::vector<double> loss_trace;
};

/**
 * Gather the unit rows of the examples `batch` of `set`, with their labels for `target`.
 */
template<typename Scalar_>
void gather_units(const FeatureSet<Scalar_>& set, Target target, const std::vector<std::size_t>& batch, Matrix<Scalar_>& rows, std::vector<int>& labels) {
    const auto& all = targets_of(set, target);
    std::size_t total = 0;
    for (auto e : batch) {
        total += set.offsets[e + 1] - set.offsets[e];
    }
    rows.resize(static_cast<Eigen::Index>(total), set.features.cols());
    labels.clear();
    Eigen::Index r = 0;
    for (auto e : batch) {
        for (std::size_t u = set.offsets[e]; u < set.offsets[e + 1]; ++u, ++r) {
            rows.row(r) = set.features.row(static_cast<Eigen::Index>(u));
            labels.push_back(all[u]);
        }
    }
}

/**
 * Train a fresh softmax head on fixed features: Adam, minibatches of whole examples in a new random
 * order each epoch, dropout on the features, and selection of the epoch with the best validation
 * macro F1 (the earliest on ties).
 */
template<typename Scalar_>
ProbeRun<Scalar_> train_probe(const FeatureSet<Scalar_>& train, const FeatureSet<Scalar_>& val, Target target,
                              std::size_t n_outputs, const std::vector<int>& eval_classes, const ProbeSettings& settings) {
    if (train.examples() == 0 || train.units() == 0) {
        throw Error("probe training set is empty");
    }
    if (val.units() == 0) {
        throw Error("probe validation set is empty");
    }
    const auto d = static_cast<std::size_t>(train.features.cols());
    ProbeRun<Scalar_> run;
    auto head = make_head<Scalar_>(d, n_outputs, settings.init_stddev, settings.head_seed);
    AdamState<ClassifierHead<Scalar_> > adam(head);
    auto grads = zeros_like(head);
    Rng order_rng(settings.order_seed);
    Rng dropout_rng(settings.dropout_seed);

    std::vector<std::size_t> order(train.examples());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    double best = -std::numeric_limits<double>::infinity();
    Matrix<Scalar_> rows;
    std::vector<int> labels;
    std::vector<std::size_t> batch;
    for (std::size_t epoch = 0; epoch < settings.epochs; ++epoch) {
        shuffle(order, order_rng);
        for (std::size_t start = 0; start < order.size(); start += settings.batch_size) {
            batch.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + settings.batch_size)));
            gather_units(train, target, batch, rows, labels);
            if (rows.rows() == 0) {
                continue;
            }
            if (settings.dropout > 0) {
                rows.array() *= encoder_detail::dropout_mask<Scalar_>(rows.rows(), rows.cols(), settings.dropout, dropout_rng).array();
            }
            set_zero(grads);
            const auto scale = static_cast<Scalar_>(1.0 / static_cast<double>(rows.rows()));
            const double loss = head_cross_entropy(head, rows, labels, scale, &grads, static_cast<Matrix<Scalar_>*>(nullptr));
            run.loss_trace.push_back(loss / static_cast<double>(rows.rows()));
            adam_step(head, grads, adam, settings.learning_rate);
        }
        const double s = score(head, val, target, eval_classes);
        run.val_scores.push_back(s);
        if (s > best) {
            best = s;
            run.head = head;
            run.selected_epoch = epoch;
        }
    }
    return run;
}

}

#endif
