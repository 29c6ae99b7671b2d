#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "dara/eval.hpp"

using namespace dara;

namespace {

GridSpec tiny() {
    GridSpec g;
    g.envs = {"map2d"};
    g.arms = {"1T", "1T+10S-dara"};
    g.etas = {0.5};
    g.target_sizes = {50};
    g.seeds = {0};
    g.source_size = 2000;
    g.classifier.epochs = 2;
    g.trainer.iterations = 500;
    g.episodes = 2;
    return g;
}

int count_of(const std::string& s, const std::string& sub) {
    int n = 0;
    for (std::size_t p = s.find(sub); p != std::string::npos; p = s.find(sub, p + 1)) ++n;
    return n;
}

}  // namespace

TEST(Anchors, ExpertScoresHundred) {
    for (const char* id : {"map2d-target", "clip1d-target", "tabular-random:3:8:2"}) {
        auto env = make_env(id);
        auto pi = Policy::greedy(value_iteration(env));
        auto rep = evaluate(env, pi, id[0] == 't' ? 4000 : 1, 0);
        EXPECT_NEAR(rep.norm_score, 100.0, id[0] == 't' ? 3.0 : 1e-9) << id;
    }
}

TEST(Anchors, RandomPolicyScoresNearZero) {
    auto env = make_env("map2d-target");
    auto a = anchors_for(env);
    // Monte Carlo estimate of the random anchor, independent of the twin.
    Rng rng(3);
    double sum = 0;
    const int episodes = 4000;
    for (int ep = 0; ep < episodes; ++ep) {
        State s = env.initial_state();
        for (int t = 0; t < env.horizon; ++t) {
            auto r = env.step(s, uniform_int(rng, 8));
            sum += r.reward;
            if (r.done) break;
            s = r.next;
        }
    }
    EXPECT_NEAR(sum / episodes, a.random, 0.02 * std::abs(a.expert - a.random));
    EXPECT_NEAR(normalized_score(a.random, a), 0.0, 1e-12);
    EXPECT_NEAR(normalized_score(a.expert, a), 100.0, 1e-12);
}

TEST(Evaluate, DeterministicGivenSeedAndRejectsZeroEpisodes) {
    auto env = make_env("clip1d-target");
    auto pi = Policy::uniform(3);
    auto a = evaluate(env, pi, 5, 9), b = evaluate(env, pi, 5, 9);
    EXPECT_EQ(a.mean_return, b.mean_return);
    EXPECT_EQ(a.first_path, b.first_path);
    EXPECT_THROW(evaluate(env, pi, 0, 0), InputError);
}

TEST(Evaluate, GoalRateCountsTerminalEpisodes) {
    auto env = make_env("map2d-target");
    auto rep = evaluate(env, Policy::greedy(value_iteration(env)), 3, 0);
    EXPECT_EQ(rep.goal_rate, 1.0);
    auto stuck = evaluate(env, Policy::scripted({4}, 8), 3, 0);  // always west
    EXPECT_EQ(stuck.goal_rate, 0.0);
    EXPECT_EQ(stuck.mean_return, -double(env.horizon));
}

TEST(Probes, ObstructivePairsAreBlockedInTarget) {
    auto p = make_pair("map2d");
    auto pairs = obstructive_pairs(p.source, p.target);
    ASSERT_FALSE(pairs.empty());
    int east_from_col9 = 0;
    for (const auto& [s, a] : pairs) {
        EXPECT_EQ(p.target.step(s, a).next, s);
        EXPECT_NE(p.source.step(s, a).next, s);
        if (a == 0) {
            EXPECT_NEAR(s[0], map2d::center(9), 1e-12);
            ++east_from_col9;
        }
    }
    // Rows 0..17 lie below the wall top at y = 0.9.
    EXPECT_EQ(east_from_col9, 18);
    EXPECT_TRUE(obstructive_pairs(p.source, p.source).empty());
}

TEST(Probes, SupportedFiltersByDataset) {
    auto p = make_pair("map2d");
    auto pairs = obstructive_pairs(p.source, p.target);
    OfflineDataset d;
    d.meta = make_meta(p.source, "random", 0);
    auto r = p.source.step(pairs[3].first, pairs[3].second);
    d.rows.push_back({pairs[3].first, pairs[3].second, r.reward, false, r.next, r.done, 'S'});
    auto sup = supported(pairs, d, p.target);
    ASSERT_EQ(sup.size(), 1u);
    EXPECT_EQ(sup[0], pairs[3]);
    QFunction q;
    q.table = QTable(p.target.n_states(), 8, 2.5);
    EXPECT_EQ(q_probe(q, p.target, sup).mean, 2.5);
    EXPECT_THROW(q_probe(q, p.target, {}), InputError);
}

TEST(Audit, AgreementFromKnownScores) {
    auto p = make_pair("map2d");
    auto traj = expert_trajectory(p.source, 'S');
    ASSERT_TRUE(traj.rows.back().done);
    auto feas = target_feasibility(p.target);
    // Oracle scorer: +1 on infeasible records, -1 elsewhere gives agreement 1.
    struct Oracle {
        FeasibilityOracle f;
        std::vector<double> delta_r(const OfflineDataset& ds) const {
            std::vector<double> out;
            for (const auto& t : ds.rows) out.push_back(f(t) ? -1.0 : 1.0);
            return out;
        }
    };
    auto a = delta_r_audit(Oracle{feas}, traj, feas);
    EXPECT_EQ(a.agreement, 1.0);
    EXPECT_GT(a.n_infeasible, 0u);  // the source expert walks through the wall
    auto z = delta_r_audit(zero_pair(2, 8), traj, feas);
    EXPECT_NEAR(z.agreement, double(z.n_feasible) / traj.size(), 1e-12);
}

TEST(Grid, ExpandOrderAndEtaOnlyOnDaraArm) {
    GridSpec g = tiny();
    g.etas = {0.1, 0.2};
    g.seeds = {0, 1};
    auto cells = expand(g);
    ASSERT_EQ(cells.size(), 2u + 4u);
    EXPECT_EQ(cells[0].arm, "1T");
    EXPECT_EQ(cells[1].seed, 1);
    EXPECT_EQ(cells[2].eta, 0.1);
    EXPECT_EQ(cells[4].eta, 0.2);
    g.arms = {"bogus"};
    EXPECT_THROW(validate_grid(g), InputError);
}

TEST(Grid, CsvForOneCell) {
    GridSpec g = tiny();
    g.arms = {"1T"};
    MatrixRunner r(g);
    auto rows = r.run();
    ASSERT_EQ(rows.size(), 1u);
    auto csv = to_csv(rows);
    std::istringstream in(csv);
    std::string header, line, extra;
    std::getline(in, header);
    std::getline(in, line);
    EXPECT_FALSE(std::getline(in, extra));
    EXPECT_EQ(header, csv_header());
    EXPECT_EQ(line.rfind("map2d,1T,conservative,NA,50,0,", 0), 0u) << line;
    EXPECT_EQ(count_of(line, ","), 11);
    MatrixRunner again(g);
    EXPECT_EQ(to_csv(again.run()), csv);
}

TEST(Grid, EmptyTargetFailsByDesignForDara) {
    GridSpec g = tiny();
    g.arms = {"1T", "1T+10S-noaug", "1T+10S-dara"};
    g.target_sizes = {0};
    MatrixRunner r(g);
    auto rows = r.run();
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0].status, "NO-DATA");
    EXPECT_EQ(rows[1].status, "ok");
    EXPECT_EQ(rows[2].status, "FAILED-BY-DESIGN");
    EXPECT_EQ(count_of(csv_row(rows[2]), "FAILED-BY-DESIGN"), 6);
    auto s = summarize(rows, "map2d", "1T+10S-dara", "conservative", 0.5, 0);
    EXPECT_FALSE(s.all_ran);
    EXPECT_TRUE(std::isinf(s.median_score));
}

TEST(Grid, ParallelWorkersMatchSerial) {
    GridSpec g = tiny();
    g.seeds = {0, 1};
    MatrixRunner serial(g);
    g.workers = 3;
    MatrixRunner par(g);
    EXPECT_EQ(to_csv(serial.run()), to_csv(par.run()));
}

TEST(Summary, MedianOverSeeds) {
    std::vector<CellResult> rows;
    for (double s : {10.0, 50.0, 30.0}) {
        CellResult r;
        r.cell = {"map2d", "1T", "conservative", 0.0, 5, 0};
        r.norm_score = s;
        r.goal_rate = s / 100;
        rows.push_back(r);
    }
    auto g = summarize(rows, "map2d", "1T", "conservative", 0.0, 5);
    EXPECT_EQ(g.n, 3u);
    EXPECT_EQ(g.median_score, 30.0);
    EXPECT_EQ(g.median_goal_rate, 0.3);
    EXPECT_EQ(median({1.0, 2.0, 3.0, 4.0}), 2.5);
}
