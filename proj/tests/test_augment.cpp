#include <gtest/gtest.h>

#include <cmath>

#include "dara/augment.hpp"

using namespace dara;

namespace {

// Scorer returning a fixed column, so rewrites can be checked by hand.
struct FixedScorer {
    std::vector<double> d;
    std::vector<double> delta_r(const OfflineDataset&) const { return d; }
};

OfflineDataset source(long long n = 200) {
    auto env = make_env("map2d-source");
    return collect(env, Policy::uniform(8), n, 4);
}

}  // namespace

TEST(Augment, EtaZeroIsIdentityOnRewards) {
    auto s = source();
    FixedScorer sc{std::vector<double>(s.size(), 3.7)};
    AugmentConfig c;
    c.eta = 0.0;
    auto out = augment_dataset(s, sc, c);
    ASSERT_EQ(out.size(), s.size());
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(out.rows[i].r, s.rows[i].r);
    EXPECT_TRUE(out.meta.augmented);
    EXPECT_EQ(out.meta.eta, 0.0);
}

TEST(Augment, RewriteMatchesHandValues) {
    auto s = source(3);
    s.rows[0].r = 1.0;
    s.rows[1].r = 100.0;
    s.rows[2].r = -1.0;
    FixedScorer sc{{-10.0, 10.0, 0.5}};
    AugmentConfig c;
    c.eta = 0.1;
    auto out = augment_dataset(s, sc, c);
    EXPECT_DOUBLE_EQ(out.rows[0].r, 2.0);
    EXPECT_DOUBLE_EQ(out.rows[1].r, 99.0);
    EXPECT_DOUBLE_EQ(out.rows[2].r, -1.05);
    EXPECT_LE(std::abs(out.rows[1].r), augmented_reward_bound(c, 100.0));
    EXPECT_DOUBLE_EQ(augmented_reward_bound(c, 100.0), 101.0);
}

TEST(Augment, ChangeBoundedByEtaTimesClip) {
    auto s = source(500);
    for (double bound : {0.5, 10.0}) {
        ClassifierPair p = zero_pair(2, 8);
        // Perturb the final bias so the pair emits a constant large score.
        p.sas.layers.back().b[0] = 1e3;
        p.clip_bound = bound;
        AugmentConfig c;
        c.eta = 0.3;
        auto out = augment_dataset(s, p, c);
        for (std::size_t i = 0; i < s.size(); ++i) {
            EXPECT_LE(std::abs(out.rows[i].r - s.rows[i].r), c.eta * bound + 1e-12);
            EXPECT_LE(std::abs(out.rows[i].r), augmented_reward_bound(c, 100.0, bound) + 1e-12);
        }
    }
}

TEST(Augment, MonotoneInEta) {
    auto s = source(50);
    std::vector<double> d(s.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = double(i % 7) - 3.0;
    FixedScorer sc{d};
    AugmentConfig lo, hi;
    lo.eta = 0.1;
    hi.eta = 0.4;
    auto a = augment_dataset(s, sc, lo), b = augment_dataset(s, sc, hi);
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (d[i] > 0) EXPECT_LT(b.rows[i].r, a.rows[i].r);
        if (d[i] < 0) EXPECT_GT(b.rows[i].r, a.rows[i].r);
        if (d[i] == 0) EXPECT_EQ(b.rows[i].r, a.rows[i].r);
    }
}

TEST(Augment, FloorZeroDropsNegativeScores) {
    auto s = source(4);
    for (auto& t : s.rows) t.r = 0.0;
    FixedScorer sc{{-2.0, 0.0, 1.0, -0.1}};
    AugmentConfig c;
    c.eta = 1.0;
    c.floor_zero = true;
    c.record_delta = true;
    auto out = augment_dataset(s, sc, c);
    EXPECT_EQ(out.rows[0].r, 0.0);
    EXPECT_EQ(out.rows[2].r, -1.0);
    EXPECT_EQ(out.rows[3].r, 0.0);
    EXPECT_EQ(out.delta_r, (std::vector<double>{0.0, 0.0, 1.0, 0.0}));
}

TEST(Augment, RecordDeltaColumnOptional) {
    auto s = source(10);
    FixedScorer sc{std::vector<double>(10, 0.25)};
    AugmentConfig c;
    EXPECT_TRUE(augment_dataset(s, sc, c).delta_r.empty());
    c.record_delta = true;
    EXPECT_EQ(augment_dataset(s, sc, c).delta_r, sc.d);
}

TEST(Augment, ZeroPairLeavesRewardsUnchanged) {
    auto s = source();
    AugmentConfig c;
    c.eta = 5.0;
    auto out = augment_dataset(s, zero_pair(2, 8), c);
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(out.rows[i].r, s.rows[i].r);
}

TEST(Augment, RejectsMaskedRewardsAndBadEta) {
    auto s = source(10);
    FixedScorer sc{std::vector<double>(10, 0.0)};
    EXPECT_THROW(augment_dataset(mask_rewards(s), sc, AugmentConfig{}), InputError);
    AugmentConfig c;
    c.eta = -0.1;
    EXPECT_THROW(augment_dataset(s, sc, c), InputError);
    c.eta = NAN;
    EXPECT_THROW(augment_dataset(s, sc, c), InputError);
}
