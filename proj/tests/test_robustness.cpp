#include "ccar/dataset.hpp"
#include "ccar/robustness.hpp"
#include "ccar/theory.hpp"
#include "ccar/training.hpp"
#include "support.hpp"

#include <numbers>

using namespace ccar;
using namespace ccar::testing;

namespace {

struct Fixture {
    Dataset data;
    Dataset test;
    Model model;
    ClampBox box;
};

const Fixture& trained() {
    static const Fixture f = [] {
        Fixture x;
        BlobSpec b;
        b.n_per_class = 150;
        x.data = generate_blobs(b);
        x.test = x.data.subset(Split::Test);
        TrainConfig t;
        t.epochs = 30;
        t.lambda = 0.0;
        x.model = train(t, x.data).model;
        x.box = data_range(x.data.inputs);
        return x;
    }();
    return f;
}

ClampBox wide_box(int d) { return {Vector::Constant(d, -1e9), Vector::Constant(d, 1e9)}; }

} // namespace

TEST(Fgsm, ZeroEpsilonIsIdentity) {
    const auto& f = trained();
    EXPECT_EQ(fgsm(f.model, f.test.inputs, f.test.clean_labels, 0.0, f.box), f.test.inputs);
}

TEST(Fgsm, StaysInBallAndBox) {
    const auto& f = trained();
    Gen g(61);
    for (int t = 0; t < 10; ++t) {
        const double eps = g.real(0.0, 0.5);
        const Matrix adv = fgsm(f.model, f.test.inputs, f.test.clean_labels, eps, f.box);
        EXPECT_LE((adv - f.test.inputs).cwiseAbs().maxCoeff(), eps + 1e-12);
        for (Eigen::Index j = 0; j < adv.cols(); ++j) {
            EXPECT_GE(adv.col(j).minCoeff(), f.box.lo[j]);
            EXPECT_LE(adv.col(j).maxCoeff(), f.box.hi[j]);
        }
    }
    const Matrix adv = fgsm(f.model, f.test.inputs, f.test.clean_labels, 0.01, wide_box(32));
    const Matrix grad = input_gradient(f.model, f.test.inputs, f.test.clean_labels);
    for (Eigen::Index i = 0; i < adv.size(); ++i)
        if (grad.data()[i] != 0.0) {
            EXPECT_NEAR(std::abs(adv.data()[i] - f.test.inputs.data()[i]), 0.01, 1e-12);
        }
}

TEST(Fgsm, LinearModelLossIncreases) {
    Gen g(62);
    for (int t = 0; t < 50; ++t) {
        const Model m = make_linear(5, 3, g.rng());
        const Matrix x = g.matrix(8, 5);
        const Labels y = g.labels(8, 3);
        const double before = cross_entropy(predict_logits(m, x), y).loss;
        const Matrix adv = fgsm(m, x, y, g.real(1e-3, 0.5), wide_box(5));
        EXPECT_GE(cross_entropy(predict_logits(m, adv), y).loss, before);
    }
}

TEST(Pgd, OneStepFromCentreIsProjectedFgsm) {
    const auto& f = trained();
    const double eps = 0.1, alpha = 0.03;
    Matrix expect = fgsm(f.model, f.test.inputs, f.test.clean_labels, alpha, f.box);
    project_linf(expect, f.test.inputs, eps);
    EXPECT_EQ(pgd(f.model, f.test.inputs, f.test.clean_labels, eps, alpha, 1, f.box, 0, false), expect);
}

TEST(Pgd, StaysInBall) {
    const auto& f = trained();
    for (double eps : {0.0, 2.0 / 255, 8.0 / 255, 0.3}) {
        const Matrix adv = pgd(f.model, f.test.inputs, f.test.clean_labels, eps, eps / 4, 5, f.box, 3);
        EXPECT_LE((adv - f.test.inputs).cwiseAbs().maxCoeff(), eps + 1e-12);
    }
}

TEST(Pgd, ProjectionIdempotent) {
    Gen g(63);
    for (int t = 0; t < 50; ++t) {
        const Matrix x0 = g.matrix(4, 6);
        Matrix x = x0 + g.matrix(4, 6);
        const double eps = g.real(0.0, 1.0);
        project_linf(x, x0, eps);
        const Matrix once = x;
        project_linf(x, x0, eps);
        EXPECT_EQ(x, once);
    }
}

TEST(Pgd, NoWeakerThanFgsm) {
    const auto& f = trained();
    ASSERT_GE(f.test.size(), 300u);
    for (double eps : {2.0 / 255, 8.0 / 255, 0.1, 0.3}) {
        const double a_fgsm = accuracy(f.model, fgsm(f.model, f.test.inputs, f.test.clean_labels, eps, f.box), f.test.clean_labels);
        const double a_pgd = accuracy(
            f.model, pgd(f.model, f.test.inputs, f.test.clean_labels, eps, eps / 4, 20, f.box, 1), f.test.clean_labels);
        EXPECT_LE(a_pgd, a_fgsm + 0.01) << "eps " << eps;
    }
}

TEST(Attack, SpecValidation) {
    EXPECT_ERRC(AttackSpec({AttackKind::Pgd, 0.1, 0, 0.01, 1}).validate(), Errc::Config);
    EXPECT_ERRC(AttackSpec({AttackKind::Pgd, 0.1, 5, 0.2, 1}).validate(), Errc::Config);
    EXPECT_ERRC(AttackSpec({AttackKind::Fgsm, -0.1, 1, 0.0, 1}).validate(), Errc::Config);
    EXPECT_NO_THROW(pgd_spec(0.0).validate());
    EXPECT_DOUBLE_EQ(pgd_spec(8.0 / 255).alpha, 2.0 / 255);
}

TEST(Gaussian, Examples) {
    const auto& f = trained();
    const double clean = accuracy(f.model, f.test.inputs, f.test.clean_labels);
    EXPECT_EQ(gaussian_eval(f.model, f.test.inputs, f.test.clean_labels, 0.0, 3, 1), clean);
    EXPECT_NEAR(gaussian_eval(f.model, f.test.inputs, f.test.clean_labels, 1e4, 5, 2), 0.1, 0.04);
    double prev = clean;
    for (double s : {0.05, 0.1, 0.2}) {
        const double a = gaussian_eval(f.model, f.test.inputs, f.test.clean_labels, s, 10, 3);
        EXPECT_LE(a, prev + 0.01) << "sigma " << s;
        prev = a;
    }
}

TEST(Margin, Examples) {
    Matrix w(2, 2);
    w << 1, 0, 0, 1;
    EXPECT_NEAR(geometric_margin(w, Vector::Unit(2, 0), 0), 1.0 / std::numbers::sqrt2, 1e-15);
    EXPECT_EQ(geometric_margin(w, Vector::Unit(2, 1), 0), 0.0);
    Gen g(64);
    for (int t = 0; t < 50; ++t) {
        const Matrix wr = g.matrix(4, 6);
        const Vector h = g.matrix(6, 1);
        const double s = g.real(0.01, 10.0);
        EXPECT_NEAR(geometric_margin(wr, s * h, 2), s * geometric_margin(wr, h, 2), 1e-12 * (1 + s));
    }
    Matrix dup(2, 2);
    dup << 1, 1, 1, 1;
    EXPECT_ERRC(geometric_margin(dup, Vector::Unit(2, 0), 0), Errc::DegenerateWeights);
}

TEST(MarginProperty, MonotoneInSignal) {
    Gen g(65);
    for (int t = 0; t < 100; ++t) {
        const Matrix w = g.matrix(3, 5);
        Vector h = g.matrix(5, 1);
        const double before = geometric_margin(w, h, 0);
        // moving along w_y raises w_y.h and leaves nothing else in tau
        h += g.real(0.0, 2.0) * w.row(0).transpose();
        EXPECT_GE(geometric_margin(w, h, 0), before - 1e-12);
    }
}

TEST(Certified, Examples) {
    const auto fx = make_certified_fixture(20, 4, 1, 3);
    EXPECT_EQ(certified_check(fx.w, fx.h, 1, 1000, 0.0, 1), 0);
    const auto r = certified_margin_check(20, 4, 1, 100000, 4);
    EXPECT_EQ(r.violations_inside, 0);
    EXPECT_TRUE(r.directed_flips);
    EXPECT_TRUE(r.holds);
}

TEST(Tail, RateConstant) {
    // oracle: (e - 2)/4 evaluated directly
    EXPECT_NEAR((std::numbers::e - 2.0) / 4.0, 0.1795704571147613, 1e-16);
    EXPECT_NEAR(rate_constant(2, std::numbers::e / 2.0, 1.0), 0.1795704571147613, 1e-12);
    EXPECT_NEAR(rate_constant(10, 0.1, 1.0), 0.0, 1e-15);
}

TEST(Tail, BoundaryAndGuards) {
    EXPECT_ERRC(lemma_tail_check({100, 10, 1.0, 0.1}, 100000, 1), Errc::ConditionViolated);
    EXPECT_ERRC(lemma_tail_check({100, 10, 1.0, 0.5}, 10, 1), Errc::MinTrials);
    const auto r = lemma_tail_check({100, 10, 1.0, 0.1 + 1e-12}, 10000, 1);
    EXPECT_NEAR(r.bound, 1.0, 1e-9);
    EXPECT_TRUE(r.holds);
}

TEST(Tail, DefaultCell) {
    const auto r = lemma_tail_check({100, 10, 1.0, 0.5}, 100000, 7);
    EXPECT_TRUE(r.holds) << r.empirical << " vs " << r.bound;
    EXPECT_NEAR(r.bound, std::exp(-100.0 * rate_constant(10, 0.5, 1.0)), 1e-15);
}

TEST(Tail, GridSkipsCellsBelowCondition) {
    const auto cells = tail_grid({50}, {5}, {0.8, 1.5}, 1.0, 10000, 1);
    ASSERT_EQ(cells.size(), 2u);
    EXPECT_TRUE(cells[0].skipped);
    EXPECT_FALSE(cells[1].skipped);
    EXPECT_TRUE(cells[1].check.holds);
}
