#include <gtest/gtest.h>

#include <cmath>

#include "langprobe/heads/head.hpp"
#include "langprobe/heads/losses.hpp"
#include "langprobe/training/probe.hpp"

using namespace langprobe;

namespace {

Matrix<double> random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    Matrix<double> m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = scale * standard_normal(rng);
    }
    return m;
}

RowVector<double> row(std::initializer_list<double> values) {
    RowVector<double> r(static_cast<Eigen::Index>(values.size()));
    Eigen::Index i = 0;
    for (double v : values) {
        r(i++) = v;
    }
    return r;
}

double relative_error(const Matrix<double>& a, const Matrix<double>& b) {
    return (a - b).norm() / std::max({ a.norm(), b.norm(), 1e-12 });
}

// Central differences of `f` over every entry of `m`.
template<typename Function_>
Matrix<double> numeric_gradient(Matrix<double>& m, Function_ f, double step = 1e-6) {
    Matrix<double> out(m.rows(), m.cols());
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        const double saved = m.data()[i];
        m.data()[i] = saved + step;
        const double up = f();
        m.data()[i] = saved - step;
        const double down = f();
        m.data()[i] = saved;
        out.data()[i] = (up - down) / (2 * step);
    }
    return out;
}

}

TEST(HeadForward, ZeroParametersGiveUniformOutput) {
    auto head = make_head<double>(6, 4, 0.0, 1);
    auto p = head_forward(head, random_matrix(1, 6, 2));
    for (Eigen::Index k = 0; k < 4; ++k) {
        EXPECT_DOUBLE_EQ(p(k), 0.25);
    }
}

TEST(HeadForward, ProbabilitiesArePositiveAndSumToOne) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto head = make_head<double>(5, 7, 2.0, seed);
        auto p = head_forward(head, random_matrix(1, 5, seed + 100, 3.0));
        EXPECT_NEAR(p.sum(), 1.0, 1e-12);
        EXPECT_GT(p.minCoeff(), 0.0);
    }
}

TEST(HeadForward, ShiftInvariant) {
    auto logits = random_matrix(3, 5, 4);
    Matrix<double> shifted = logits.array() + 123.5;
    EXPECT_LT((softmax_rows(logits) - softmax_rows(shifted)).cwiseAbs().maxCoeff(), 1e-12);
    Matrix<double> huge = logits.array() + 1e6;
    EXPECT_TRUE(softmax_rows(huge).allFinite());
}

TEST(HeadForward, DimensionMismatch) {
    auto head = make_head<double>(4, 3, 0.1, 1);
    EXPECT_THROW(head_forward(head, random_matrix(1, 5, 1)), Error);
    EXPECT_THROW(head_forward(head, random_matrix(2, 4, 1)), Error);
    EXPECT_THROW(make_head<double>(4, 1, 0.1, 1), Error);
    EXPECT_THROW(make_head<double>(0, 3, 0.1, 1), Error);
}

TEST(CrossEntropy, Oracles) {
    EXPECT_DOUBLE_EQ(cross_entropy(row({ 0.0, 1.0, 0.0 }), 1), 0.0);
    EXPECT_NEAR(cross_entropy(row({ 1.0 / 3, 1.0 / 3, 1.0 / 3 }), 2), 1.0986, 1e-4);
    EXPECT_NEAR(cross_entropy(row({ 0.7, 0.2, 0.1 }), 0), 0.3567, 1e-4);
    EXPECT_NEAR(cross_entropy(row({ 0.0, 1.0 }), 0), -std::log(1e-12), 1e-9);
    EXPECT_THROW(cross_entropy(row({ 0.5, 0.5 }), 2), Error);
}

TEST(CrossEntropy, LogitsFormAgreesWithProbabilityForm) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto logits = random_matrix(1, 6, seed, 4.0);
        auto p = softmax_rows(logits);
        for (std::size_t gold = 0; gold < 6; ++gold) {
            EXPECT_NEAR(cross_entropy_logits(logits.row(0), gold), cross_entropy(p.row(0), gold), 1e-10);
        }
    }
}

TEST(CrossEntropy, HeadGradientsMatchFiniteDifferences) {
    auto head = make_head<double>(5, 4, 0.5, 3);
    Matrix<double> inputs = random_matrix(6, 5, 4);
    std::vector<int> labels{ 0, 3, 1, 1, 2, 0 };
    auto grads = zeros_like(head);
    Matrix<double> grad_inputs;
    head_cross_entropy(head, inputs, labels, 1.0, &grads, &grad_inputs);
    auto loss = [&] { return head_cross_entropy(head, inputs, labels, 1.0, static_cast<ClassifierHead<double>*>(nullptr), static_cast<Matrix<double>*>(nullptr)); };
    EXPECT_LE(relative_error(grads.weight, numeric_gradient(head.weight, loss)), 1e-6);
    EXPECT_LE(relative_error(grads.bias, numeric_gradient(head.bias, loss)), 1e-6);
    EXPECT_LE(relative_error(grad_inputs, numeric_gradient(inputs, loss)), 1e-6);
}

TEST(GradReversal, Oracles) {
    auto x = row({ 1.0, -2.0 });
    EXPECT_EQ(grad_reversal_forward(x), x);
    EXPECT_EQ(grad_reversal_backward(x, 0.5), row({ -0.5, 1.0 }));
    EXPECT_EQ(grad_reversal_backward(x, 0.0).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_THROW(GradReversalConfig{ -0.1 }.validate(), Error);
}

TEST(GradReversal, CompositeGradientIsScaledAndNegated) {
    // Network x -> tanh(x A + b) -> [GRL] -> softmax head -> cross-entropy, differentiated by hand.
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        Matrix<double> x = random_matrix(3, 4, seed);
        Matrix<double> a = random_matrix(4, 6, seed + 1000);
        Matrix<double> b = random_matrix(1, 6, seed + 2000);
        auto head = make_head<double>(6, 3, 0.7, seed);
        std::vector<int> labels{ 0, 2, 1 };

        auto gradient = [&](std::optional<double> lambda) {
            Matrix<double> pre = (x * a).rowwise() + b.row(0);
            Matrix<double> hidden = pre.array().tanh();
            auto grads = zeros_like(head);
            Matrix<double> g_hidden;
            head_cross_entropy(head, grad_reversal_forward(hidden), labels, 1.0, &grads, &g_hidden);
            if (lambda) {
                g_hidden = grad_reversal_backward(g_hidden, *lambda);
            }
            Matrix<double> g_pre = g_hidden.array() * (1 - hidden.array().square());
            return std::pair<Matrix<double>, Matrix<double> >(g_pre * a.transpose(), x.transpose() * g_pre);
        };
        auto [gx, ga] = gradient(std::nullopt);
        for (double lambda : { 0.0, 0.1, 0.5, 0.7 }) {
            auto [rx, ra] = gradient(lambda);
            EXPECT_LE((rx + lambda * gx).cwiseAbs().maxCoeff(), 1e-14 * std::max(1.0, gx.cwiseAbs().maxCoeff()));
            EXPECT_LE((ra + lambda * ga).cwiseAbs().maxCoeff(), 1e-14 * std::max(1.0, ga.cwiseAbs().maxCoeff()));
        }
        auto [zx, za] = gradient(0.0);
        EXPECT_EQ(zx.cwiseAbs().maxCoeff(), 0.0);
        EXPECT_EQ(za.cwiseAbs().maxCoeff(), 0.0);
    }
}

TEST(EntropyLoss, Oracles) {
    auto task = row({ 0.5, 0.3, 0.2 });
    auto language = row({ 0.6, 0.3, 0.1 });
    EXPECT_DOUBLE_EQ(entropy_max_loss(task, 0, language, { 0.0 }), cross_entropy(task, 0));

    auto uniform = row({ 1.0 / 3, 1.0 / 3, 1.0 / 3 });
    EXPECT_NEAR(language_term(uniform), 3.2958, 1e-4);
    EXPECT_NEAR(entropy_max_loss(task, 0, uniform, { 1.0 }), 3.2958, 1e-4);

    // XE = 1 exactly when p[gold] = e^-1.
    auto task_e = row({ std::exp(-1.0), 1 - std::exp(-1.0) });
    auto skewed = row({ 0.98, 0.01, 0.01 });
    EXPECT_NEAR(language_term(skewed), 9.2305, 1e-4);
    EXPECT_NEAR(entropy_max_loss(task_e, 0, skewed, { 0.5 }), 5.1152, 1e-4);

    EXPECT_NEAR(language_term(row({ 1.0, 0.0, 0.0 })), -2 * std::log(1e-12), 1e-6);
    EXPECT_NEAR(language_term(uniform, LanguageTerm::NegEntropy), -std::log(3.0), 1e-12);
    EXPECT_THROW(entropy_max_loss(task, 0, uniform, { 1.5 }), Error);
    EXPECT_THROW(entropy_max_loss(task, 0, uniform, { -0.1 }), Error);
}

TEST(EntropyLoss, LanguageTermGradientMatchesFiniteDifferences) {
    for (auto term : { LanguageTerm::NegLogSum, LanguageTerm::NegEntropy }) {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            Matrix<double> logits = random_matrix(1, 5, seed, 2.0);
            auto value = [&] { return language_term(softmax_rows(logits).row(0), term); };
            Matrix<double> analytic = language_term_grad(softmax_rows(logits).row(0), term);
            EXPECT_LE(relative_error(analytic, numeric_gradient(logits, value)), 1e-6) << to_string(term);
        }
    }
}

TEST(EntropyLoss, LanguageTermMinimisedAtUniform) {
    const double at_uniform = 4 * std::log(4.0);
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        auto p = softmax_rows(random_matrix(1, 4, seed, 1.5));
        EXPECT_GE(language_term(p.row(0)), at_uniform - 1e-12);
    }
}

TEST(EntropyLoss, DescentOnLogitsReachesUniform) {
    const int k = 33;
    Matrix<double> logits = random_matrix(1, k, 17, 3.0);
    int reached = -1;
    for (int step = 0; step < 5000; ++step) {
        auto p = softmax_rows(logits);
        if (reached < 0 && (p.array() - 1.0 / k).abs().maxCoeff() <= 1e-3) {
            reached = step;
        }
        logits -= 0.1 * language_term_grad(p.row(0));
    }
    auto p = softmax_rows(logits);
    EXPECT_GE(reached, 0);
    EXPECT_LE((p.array() - 1.0 / k).abs().maxCoeff(), 1e-3);
    EXPECT_NEAR(language_term(p.row(0)), k * std::log(static_cast<double>(k)), 1e-3);
}

TEST(HeadInit, NormalWithConfiguredScale) {
    const double stddev = 0.3;
    auto head = make_head<double>(500, 200, stddev, 42);
    double sum = 0, sq = 0;
    Eigen::Index n = 0;
    zip_parameters([&](const std::string&, const Matrix<double>& m) {
        sum += m.sum();
        sq += m.squaredNorm();
        n += m.size();
    }, head);
    ASSERT_GE(n, 100000);
    const double mean = sum / static_cast<double>(n);
    const double sd = std::sqrt(sq / static_cast<double>(n) - mean * mean);
    EXPECT_LE(std::abs(mean), 3 * stddev / std::sqrt(static_cast<double>(n)));
    EXPECT_NEAR(sd, stddev, 0.01 * stddev);
    EXPECT_EQ(fingerprint(head), fingerprint(make_head<double>(500, 200, stddev, 42)));
    EXPECT_NE(fingerprint(head), fingerprint(make_head<double>(500, 200, stddev, 43)));
}

TEST(LanguageTermNames, RoundTrip) {
    for (auto term : { LanguageTerm::NegLogSum, LanguageTerm::NegEntropy }) {
        EXPECT_EQ(parse_language_term(to_string(term)), term);
    }
    EXPECT_THROW(parse_language_term("shannon"), Error);
}
