#include "ccar/dataset.hpp"
#include "ccar/probe.hpp"
#include "support.hpp"

using namespace ccar;
using namespace ccar::testing;

namespace {

FeatureBatch one_hot(const Labels& y, int c) {
    FeatureBatch fb{Matrix::Zero(static_cast<Eigen::Index>(y.size()), c), y};
    for (std::size_t i = 0; i < y.size(); ++i) fb.h(static_cast<Eigen::Index>(i), y[i]) = 1.0;
    return fb;
}

/// Four Gaussian clusters at (+-1, +-1) labelled by the sign product.
FeatureBatch xor_batch(Gen& g, int n) {
    FeatureBatch fb{Matrix(n, 2), Labels(static_cast<std::size_t>(n))};
    for (int i = 0; i < n; ++i) {
        const int a = g.integer(0, 1), b = g.integer(0, 1);
        fb.h(i, 0) = (a ? 1.0 : -1.0) + 0.15 * g.normal();
        fb.h(i, 1) = (b ? 1.0 : -1.0) + 0.15 * g.normal();
        fb.labels[static_cast<std::size_t>(i)] = a ^ b;
    }
    return fb;
}

/// Brute-force mAP@k straight from the definition.
double brute_map(const FeatureBatch& fb, int k) {
    const auto n = static_cast<int>(fb.size());
    double total = 0.0;
    int queries = 0;
    for (int q = 0; q < n; ++q) {
        std::vector<std::pair<double, int>> ranked;
        int relevant = 0;
        for (int j = 0; j < n; ++j) {
            if (j == q) continue;
            const double cos = fb.h.row(q).dot(fb.h.row(j)) / (fb.h.row(q).norm() * fb.h.row(j).norm());
            ranked.push_back({-cos, j});
            relevant += fb.labels[static_cast<std::size_t>(j)] == fb.labels[static_cast<std::size_t>(q)];
        }
        ++queries;
        if (relevant == 0) continue;
        std::sort(ranked.begin(), ranked.end());
        double ap = 0.0;
        int hits = 0;
        for (int r = 0; r < std::min(k, n - 1); ++r)
            if (fb.labels[static_cast<std::size_t>(ranked[static_cast<std::size_t>(r)].second)] ==
                fb.labels[static_cast<std::size_t>(q)]) {
                ++hits;
                ap += static_cast<double>(hits) / (r + 1);
            }
        total += ap / std::min(k, relevant);
    }
    return total / queries;
}

} // namespace

TEST(Probe, OneHotFeaturesAreLinearlyPerfect) {
    Gen g(71);
    const Labels ytr = g.labels(300, 10), yte = g.labels(100, 10);
    ProbeConfig pc;
    pc.batch_size = 16;
    EXPECT_EQ(probe(one_hot(ytr, 10), one_hot(yte, 10), pc), 1.0);
}

TEST(Probe, RandomFeaturesAtChance) {
    Gen g(72);
    double mean = 0.0;
    for (int s = 0; s < 5; ++s) {
        const FeatureBatch tr{g.matrix(1000, 16), g.labels(1000, 10)};
        const FeatureBatch te{g.matrix(1000, 16), g.labels(1000, 10)};
        ProbeConfig pc;
        pc.seed = static_cast<std::uint64_t>(s);
        pc.num_classes = 10;
        mean += probe(tr, te, pc) / 5.0;
    }
    EXPECT_NEAR(mean, 0.1, 0.03);
}

TEST(Probe, XorNeedsTheMlp) {
    Gen g(73);
    const FeatureBatch tr = xor_batch(g, 800), te = xor_batch(g, 400);
    ProbeConfig lin;
    lin.epochs = 100;
    ProbeConfig mlp = lin;
    mlp.kind = ProbeKind::Mlp;
    mlp.hidden = 32;
    // best linear rule gets three of four clusters
    EXPECT_LE(probe(tr, te, lin), 0.8);
    EXPECT_GE(probe(tr, te, mlp), 0.95);
}

TEST(Probe, DoesNotMutateInputsAndChecksShapes) {
    Gen g(74);
    const FeatureBatch tr{g.matrix(50, 4), g.labels(50, 3)};
    const FeatureBatch te{g.matrix(20, 4), g.labels(20, 3)};
    const FeatureBatch tr_copy = tr, te_copy = te;
    probe(tr, te, ProbeConfig{});
    EXPECT_EQ(tr.h, tr_copy.h);
    EXPECT_EQ(te.labels, te_copy.labels);
    EXPECT_ERRC(probe(tr, {g.matrix(5, 3), g.labels(5, 3)}, ProbeConfig{}), Errc::ShapeMismatch);
}

TEST(ProbeProperty, MlpDominatesLinear) {
    BlobSpec b;
    b.n_per_class = 100;
    b.separation = 2.0;
    double lin = 0.0, mlp = 0.0;
    for (std::uint64_t s = 0; s < 5; ++s) {
        b.seed = s;
        const Dataset d = generate_blobs(b);
        const Dataset tr = d.subset(Split::Train), te = d.subset(Split::Test);
        ProbeConfig pc;
        pc.seed = s;
        lin += probe({tr.inputs, tr.labels}, {te.inputs, te.labels}, pc) / 5.0;
        pc.kind = ProbeKind::Mlp;
        mlp += probe({tr.inputs, tr.labels}, {te.inputs, te.labels}, pc) / 5.0;
    }
    EXPECT_GE(mlp, lin - 0.02);
}

TEST(Retrieval, BlockIndicatorsScoreOne) {
    Labels y;
    for (int c = 0; c < 4; ++c)
        for (int i = 0; i < 12; ++i) y.push_back(c);
    EXPECT_EQ(retrieval_map(one_hot(y, 4), 10).map, 1.0);
}

TEST(Retrieval, NoSameClassNeighboursScoresZero) {
    // each class is anti-aligned internally, so the nearest neighbour is always foreign
    FeatureBatch fb{Matrix(4, 2), {0, 0, 1, 1}};
    fb.h << 1, 0, -1, 0, 0.9, 0.1, -0.9, -0.1;
    EXPECT_DOUBLE_EQ(retrieval_map(fb, 1).map, 0.0);
    EXPECT_NEAR(retrieval_map(fb, 1).map, brute_map(fb, 1), 1e-15);
}

TEST(Retrieval, FourPointOracle) {
    // unit vectors with within-class cosine 0.9 and cross-class cosine 0.1
    Matrix gram(4, 4);
    gram << 1, 0.9, 0.1, 0.1, 0.9, 1, 0.1, 0.1, 0.1, 0.1, 1, 0.9, 0.1, 0.1, 0.9, 1;
    const Matrix h = Eigen::LLT<Matrix>(gram).matrixL();
    const FeatureBatch fb{h, {0, 0, 1, 1}};
    EXPECT_NEAR(brute_map(fb, 10), 1.0, 1e-15);
    EXPECT_DOUBLE_EQ(retrieval_map(fb, 10).map, 1.0);
}

TEST(Retrieval, MatchesBruteForce) {
    Gen g(75);
    for (int t = 0; t < 30; ++t) {
        const int n = g.integer(2, 40);
        const FeatureBatch fb{g.matrix(n, g.integer(1, 6)), g.labels(static_cast<std::size_t>(n), g.integer(1, 5))};
        const int k = g.integer(1, 12);
        EXPECT_NEAR(retrieval_map(fb, k).map, brute_map(fb, k), 1e-12);
    }
}

TEST(Retrieval, ZeroRows) {
    FeatureBatch fb{Matrix::Identity(4, 2), {0, 0, 1, 1}};
    fb.h.row(0) << 1, 0;
    fb.h.row(1) << 1, 0.1;
    EXPECT_ERRC(retrieval_map(fb), Errc::DegenerateNorm);
    const auto r = retrieval_map(fb, 10, true);
    EXPECT_EQ(r.excluded_zero_rows, 2u);
    EXPECT_EQ(r.queries_without_relevant, 0u);
}

TEST(RetrievalProperty, ScaleAndPermutationInvariant) {
    Gen g(76);
    for (int t = 0; t < 30; ++t) {
        const int n = 30;
        const FeatureBatch fb{g.matrix(n, 5), g.labels(n, 3)};
        const double base = retrieval_map(fb).map;
        EXPECT_NEAR(retrieval_map({g.real(0.01, 100.0) * fb.h, fb.labels}).map, base, 1e-12);
        std::vector<int> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), g.rng);
        FeatureBatch shuffled{Matrix(n, 5), Labels(n)};
        for (int i = 0; i < n; ++i) {
            shuffled.h.row(i) = fb.h.row(perm[static_cast<std::size_t>(i)]);
            shuffled.labels[static_cast<std::size_t>(i)] = fb.labels[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
        }
        EXPECT_NEAR(retrieval_map(shuffled).map, base, 1e-12);
    }
}
