#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "dara/mdp.hpp"

using namespace dara;

namespace {

// Brute-force optimum: enumerate every deterministic stationary policy and
// solve its value by long iteration (independent of value_iteration).
double brute_force_best(const TabularMdp& m) {
    int n = m.n_states, A = m.n_actions;
    std::vector<int> choice(n, 0);
    double best = -1e300;
    std::function<void(int)> rec = [&](int s) {
        if (s == n) {
            std::vector<double> v(n, 0.0);
            for (int it = 0; it < 3000; ++it) {
                std::vector<double> nv(n);
                for (int x = 0; x < n; ++x) {
                    int k = m.key(x, choice[x]);
                    nv[x] = m.reward[k] + (m.terminal[k] ? 0.0 : m.gamma * v[m.next[k]]);
                }
                v = nv;
            }
            double ret = 0.0;
            for (int x = 0; x < n; ++x) ret += m.rho0[x] * v[x];
            best = std::max(best, ret);
            return;
        }
        for (int a = 0; a < A; ++a) {
            choice[s] = a;
            rec(s + 1);
        }
    };
    rec(0);
    return best;
}

TabularMdp single_state(double c, double gamma) {
    TabularMdp m;
    m.n_states = 1;
    m.n_actions = 1;
    m.gamma = gamma;
    m.next = {0};
    m.reward = {c};
    m.terminal = {0};
    m.rho0 = {1.0};
    return m;
}

}  // namespace

TEST(ValueIteration, MatchesBruteForceOnSmallRandomMdps) {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        auto m = make_tabular_random(seed, 4, 3, false, 0.8);
        auto q = value_iteration(m);
        double vi = 0.0;
        for (int s = 0; s < m.n_states; ++s) vi += m.rho0[s] * q.max(s);
        EXPECT_NEAR(vi, brute_force_best(m), 1e-8) << "seed " << seed;
    }
}

TEST(ValueIteration, SingleStateLoopIsGeometricSum) {
    for (double c : {1.0, -0.5, 3.0}) {
        auto m = single_state(c, 0.9);
        EXPECT_NEAR(value_iteration(m)(0, 0), c / (1 - 0.9), 1e-8);
        EXPECT_NEAR(exact_return(m, Policy::uniform(1)), c / (1 - 0.9), 1e-10);
    }
}

TEST(ValueIteration, BellmanOperatorContracts) {
    auto m = make_tabular_random(3, 10, 4, false, 0.9);
    Rng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        QTable a(m.n_states, m.n_actions), b(m.n_states, m.n_actions);
        for (auto& v : a.v) v = 10 * uniform01(rng) - 5;
        for (auto& v : b.v) v = 10 * uniform01(rng) - 5;
        double before = sup_diff(a, b);
        double after = sup_diff(bellman_optimality(m, a), bellman_optimality(m, b));
        EXPECT_LE(after, m.gamma * before + 1e-12);
    }
}

TEST(ValueIteration, ResidualBelowTolerance) {
    auto m = make_tabular_random(5, 12, 3, false);
    auto q = value_iteration(m, 1e-9);
    EXPECT_LE(sup_diff(bellman_optimality(m, q), q), 1e-9);
}

TEST(ExactReturn, AgreesWithRolloutOnDeterministicPolicy) {
    auto env = make_env("map2d-target");
    auto q = value_iteration(env);
    auto pi = Policy::greedy(q);
    // Greedy VI policy reaches the goal; a long rollout equals the exact value.
    EXPECT_NEAR(rollout_return(env, pi, 5000), exact_return(env, pi), 1e-6);
}

TEST(ExactReturn, MonteCarloMatchesUniformPolicy) {
    auto env = make_env("tabular-random:2:6:2");
    auto pi = Policy::uniform(2);
    double exact = exact_return(env, pi);
    Rng rng(7);
    double sum = 0.0;
    const int episodes = 20000;
    for (int ep = 0; ep < episodes; ++ep) {
        State s = env.sample_initial(rng);
        double disc = 1.0, ret = 0.0;
        for (int t = 0; t < 300; ++t) {
            auto r = env.step(s, pi.act(env.index_of(s), t, rng));
            ret += disc * r.reward;
            disc *= env.gamma;
            if (r.done) break;
            s = r.next;
        }
        sum += ret;
    }
    EXPECT_NEAR(sum / episodes, exact, 0.05);
}

TEST(Occupancy, MassIsOneOverOneMinusGamma) {
    auto m = make_tabular_random(4, 9, 3, false, 0.9);
    auto occ = occupancy(m, Policy::uniform(3));
    EXPECT_NEAR(occ.state.sum(), 1.0 / (1 - 0.9), 1e-9);
    double sa = 0.0;
    for (double v : occ.state_action.v) sa += v;
    EXPECT_NEAR(sa, occ.state.sum(), 1e-9);
}

TEST(Occupancy, SatisfiesFlowConstraint) {
    auto m = make_tabular_random(6, 7, 2, false, 0.85);
    auto pi = Policy::epsilon_greedy(value_iteration(m), 0.3);
    auto occ = occupancy(m, pi);
    // d(s') = rho0(s') + gamma * sum_{s,a} d(s,a) 1[next(s,a)=s']
    std::vector<double> inflow(m.n_states, 0.0);
    for (int s = 0; s < m.n_states; ++s)
        for (int a = 0; a < m.n_actions; ++a) inflow[m.next[m.key(s, a)]] += occ.state_action(s, a);
    for (int s = 0; s < m.n_states; ++s) EXPECT_NEAR(occ.state[s], m.rho0[s] + m.gamma * inflow[s], 1e-9);
}

TEST(ReturnGapIdentity, HoldsForRandomPairsAndPolicies) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto target = make_tabular_random(seed, 8, 3, false);
        auto model = make_tabular_random(seed, 8, 3, true);
        for (auto pi : {Policy::uniform(3), Policy::epsilon_greedy(value_iteration(target), 0.2)}) {
            auto l = lemma3_check(target, model, pi);
            EXPECT_NEAR(l.lhs, l.rhs, 1e-9 * std::max(1.0, std::abs(l.lhs)));
        }
    }
}

TEST(ReturnGapIdentity, RejectsMismatchedRewards) {
    auto a = make_tabular_random(1, 4, 2, false);
    auto b = a;
    b.reward[0] += 1.0;
    EXPECT_THROW(lemma3_check(a, b, Policy::uniform(2)), InputError);
}

TEST(Map2d, WallBlocksCrossingMoveInTargetOnly) {
    auto src = make_env("map2d-source"), tgt = make_env("map2d-target");
    State s{map2d::center(9), map2d::center(5)};
    auto rs = src.step(s, 0);  // east across x = 0.5
    auto rt = tgt.step(s, 0);
    EXPECT_NEAR(rs.next[0], map2d::center(10), 1e-12);
    EXPECT_EQ(rt.next, s);
    EXPECT_EQ(rt.reward, map2d::step_cost);
}

TEST(Map2d, GapAboveWallIsPassable) {
    auto tgt = make_env("map2d-target");
    State s{map2d::center(9), map2d::center(19)};
    auto r = tgt.step(s, 0);
    EXPECT_NEAR(r.next[0], map2d::center(10), 1e-12);
}

TEST(Map2d, BoundaryMoveStaysPut) {
    auto env = make_env("map2d-source");
    State s{map2d::center(0), map2d::center(0)};
    EXPECT_EQ(env.step(s, 5).next, s);  // SW
}

TEST(Map2d, DiagonalMovesOneCellPerCoordinate) {
    auto env = make_env("map2d-source");
    State s{map2d::center(3), map2d::center(3)};
    auto r = env.step(s, 1);  // NE
    EXPECT_NEAR(r.next[0] - s[0], 0.05, 1e-12);
    EXPECT_NEAR(r.next[1] - s[1], 0.05, 1e-12);
}

TEST(Map2d, GoalIsAbsorbingAndTerminal) {
    auto env = make_env("map2d-target");
    State g{map2d::center(map2d::goal_i), map2d::center(map2d::goal_j)};
    auto r = env.step(g, 3);
    EXPECT_TRUE(r.done);
    EXPECT_EQ(r.reward, map2d::goal_reward);
}

TEST(Clip1d, ClipBoundsDifferBetweenDomains) {
    auto src = make_env("clip1d-source"), tgt = make_env("clip1d-target");
    State s{0.0, 2 * clip1d::dtheta};
    auto rs = src.step(s, 2);
    auto rt = tgt.step(s, 2);
    EXPECT_NEAR(rs.next[1], 3 * clip1d::dtheta, 1e-12);
    EXPECT_NEAR(rt.next[1], 2 * clip1d::dtheta, 1e-12);
}

TEST(Clip1d, ProgressOnlyWhenThetaDecreases) {
    auto env = make_env("clip1d-target");
    State s{4.0, 0.0};
    EXPECT_EQ(env.step(s, 0).next[0], 5.0);
    EXPECT_EQ(env.step(s, 1).next[0], 4.0);
    EXPECT_EQ(env.step(s, 2).next[0], 4.0);
}

TEST(Env, RejectsBadInputs) {
    auto env = make_env("map2d-source");
    EXPECT_THROW(env.step({0.5}, 0), InputError);
    EXPECT_THROW(env.step({0.5, 0.5}, 8), InputError);
    EXPECT_THROW(env.step({1.5, 0.5}, 0), InputError);
    EXPECT_THROW(env.step({NAN, 0.5}, 0), InputError);
    EXPECT_THROW(make_env("nope"), InputError);
    EXPECT_THROW(make_env("tabular-random:1:1:2"), InputError);
    EXPECT_THROW(make_pair("nope"), InputError);
}

TEST(Env, TabularTwinReproducesStepRule) {
    for (const char* id : {"map2d-target", "clip1d-source"}) {
        auto env = make_env(id);
        auto m = env.tabular();
        for (int s = 0; s < m.n_states; ++s)
            for (int a = 0; a < m.n_actions; ++a) {
                auto r = env.step(env.state_of(s), a);
                EXPECT_EQ(m.next[m.key(s, a)], env.index_of(r.next));
                EXPECT_EQ(m.reward[m.key(s, a)], r.reward);
            }
    }
}

TEST(Env, IndexStateRoundTrip) {
    for (const char* id : {"map2d-source", "clip1d-target", "tabular-random:0:5:2"}) {
        auto env = make_env(id);
        for (int i = 0; i < env.n_states(); ++i) EXPECT_EQ(env.index_of(env.state_of(i)), i);
    }
}

TEST(TabularRandom, SourceChangesRoughlyShiftFraction) {
    auto t = make_tabular_random(9, 200, 4, false);
    auto s = make_tabular_random(9, 200, 4, true);
    int changed = 0;
    for (std::size_t k = 0; k < t.next.size(); ++k) changed += t.next[k] != s.next[k];
    EXPECT_EQ(t.reward, s.reward);
    EXPECT_NEAR(double(changed) / t.next.size(), 0.3, 0.05);
}

TEST(Policy, ProbabilitiesSumToOne) {
    QTable q(3, 4);
    q(1, 2) = 1.0;
    for (auto pi : {Policy::uniform(4), Policy::greedy(q), Policy::epsilon_greedy(q, 0.25)}) {
        double sum = 0.0;
        for (double p : pi.probs(1)) sum += p;
        EXPECT_NEAR(sum, 1.0, 1e-12);
    }
    EXPECT_NEAR(Policy::epsilon_greedy(q, 0.25).probs(1)[2], 0.75 + 0.0625, 1e-12);
    EXPECT_THROW(Policy::epsilon_greedy(q, 1.5), InputError);
    EXPECT_THROW(Policy::scripted({}, 4), InputError);
}
