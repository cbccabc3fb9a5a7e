#include "ccar/partition.hpp"
#include "support.hpp"

#include <set>

using namespace ccar;
using ccar::testing::Gen;

TEST(Partition, SixByThreeHasNoRemainder) {
    const auto p = build_partition(6, 3);
    EXPECT_EQ(p.block_size(), 2);
    EXPECT_EQ(p.active_set(0), (std::vector<int>{0, 1}));
    EXPECT_EQ(p.active_set(1), (std::vector<int>{2, 3}));
    EXPECT_EQ(p.active_set(2), (std::vector<int>{4, 5}));
    EXPECT_TRUE(p.remainder_set().empty());
}

TEST(Partition, RemainderIsForbiddenForEveryClass) {
    const auto p = build_partition(7, 3);
    EXPECT_EQ(p.block_size(), 2);
    EXPECT_EQ(p.remainder_set(), (std::vector<int>{6}));
    for (int c = 0; c < 3; ++c) EXPECT_TRUE(p.is_forbidden(c, 6));
    EXPECT_EQ(p.owner(6), -1);
}

TEST(Partition, LargeShape) {
    const auto p = build_partition(512, 100);
    EXPECT_EQ(p.block_size(), 5);
    EXPECT_EQ(p.remainder_size(), 12);
    EXPECT_EQ(p.forbidden_size(), 507);
}

TEST(Partition, RejectsBadDimensions) {
    EXPECT_ERRC(build_partition(3, 4), Errc::InvalidDimensions);
    EXPECT_ERRC(build_partition(10, 1), Errc::InvalidDimensions);
    EXPECT_ERRC(build_partition(0, 0), Errc::InvalidDimensions);
}

TEST(Mask, Examples) {
    const auto p4 = build_partition(4, 2);
    EXPECT_EQ(forbidden_mask(p4, 0).bits, (std::vector<std::uint8_t>{0, 0, 1, 1}));
    EXPECT_EQ(forbidden_mask(p4, 1).bits, (std::vector<std::uint8_t>{1, 1, 0, 0}));
    const auto p5 = build_partition(5, 2);
    EXPECT_EQ(forbidden_mask(p5, 1).bits, (std::vector<std::uint8_t>{1, 1, 0, 0, 1}));
    EXPECT_ERRC(forbidden_mask(p5, 2), Errc::ClassOutOfRange);
    EXPECT_ERRC(forbidden_mask(p5, -1), Errc::ClassOutOfRange);
}

TEST(Project, Examples) {
    const auto p = build_partition(4, 2);
    Vector h(4);
    h << 1, 2, 3, 4;
    const Vector out = project(h, forbidden_mask(p, 0));
    EXPECT_EQ(out, (Vector(4) << 0, 0, 3, 4).finished());
    EXPECT_EQ(project(Vector::Zero(4), forbidden_mask(p, 1)), Vector::Zero(4));
    ClassMask ones{0, std::vector<std::uint8_t>(4, 1)};
    EXPECT_EQ(project(h, ones), h);
    EXPECT_ERRC(project(Vector::Zero(3), forbidden_mask(p, 0)), Errc::LengthMismatch);
}

TEST(Project, Idempotent) {
    Gen g(3);
    const auto p = build_partition(13, 4);
    for (int t = 0; t < 50; ++t) {
        const auto m = forbidden_mask(p, g.integer(0, 3));
        const Vector h = g.matrix(13, 1);
        const Vector once = project(h, m);
        EXPECT_EQ(project(once, m), once);
    }
}

// Exhaustive over every D <= 64 and 2 <= C <= D.
TEST(PartitionProperty, BlocksCoverAndAreDisjoint) {
    for (int d = 2; d <= 64; ++d)
        for (int c = 2; c <= d; ++c) {
            const auto p = build_partition(d, c);
            std::set<int> seen;
            std::size_t total = 0;
            for (int y = 0; y < c; ++y) {
                const auto a = p.active_set(y);
                total += a.size();
                for (int j : a) {
                    ASSERT_TRUE(seen.insert(j).second) << "overlap at D=" << d << " C=" << c;
                    ASSERT_EQ(p.owner(j), y);
                }
                ASSERT_EQ(forbidden_mask(p, y).popcount(), p.forbidden_size());
            }
            for (int j : p.remainder_set()) ASSERT_TRUE(seen.insert(j).second);
            ASSERT_EQ(total + p.remainder_set().size(), static_cast<std::size_t>(d));
            ASSERT_EQ(seen.size(), static_cast<std::size_t>(d));
        }
}

TEST(PartitionProperty, EnergySplitIsExact) {
    Gen g(11);
    for (int t = 0; t < 500; ++t) {
        const int c = g.integer(2, 10);
        const int d = g.integer(c, 64);
        const auto p = build_partition(d, c);
        const int y = g.integer(0, c - 1);
        const Vector h = g.matrix(d, 1, g.real(0.1, 10.0));
        double active = 0.0;
        for (int j : p.active_set(y)) active += h[j] * h[j];
        const double off = project(h, forbidden_mask(p, y)).squaredNorm();
        EXPECT_NEAR(off + active, h.squaredNorm(), 1e-12 * h.squaredNorm());
        EXPECT_NEAR(off, forbidden_energy(h, p, y), 1e-12 * h.squaredNorm());
    }
}
