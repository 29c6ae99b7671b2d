#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dara/dataset.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path& work() {
    static fs::path dir = [] {
        fs::path d = fs::path(::testing::TempDir()) / "dara_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string in_work(const std::string& name) { return (work() / name).string(); }

struct Run {
    int code;
    std::string out;
};

// Runs the CLI; stdout and stderr land in the work directory.
Run run_cli(const std::string& args) {
    std::string out = in_work("stdout.txt");
    std::string cmd = std::string(DARA_CLI_PATH) + " " + args + " > " + out + " 2> " + in_work("stderr.txt");
    int status = std::system(cmd.c_str());
    Run r{WIFEXITED(status) ? WEXITSTATUS(status) : -1, ""};
    std::ifstream is(out);
    std::stringstream ss;
    ss << is.rdbuf();
    r.out = ss.str();
    return r;
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

}  // namespace

TEST(Cli, CollectWritesRequestedCount) {
    auto r = run_cli("collect --env map2d-source --policy random --n 500 --seed 0 --out " + in_work("src.ds"));
    ASSERT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("count=500"), std::string::npos) << r.out;
    EXPECT_EQ(dara::load(in_work("src.ds")).size(), 500u);
}

TEST(Cli, MissingOutIsConfigError) {
    EXPECT_EQ(run_cli("collect --env map2d-source --n 10").code, 2);
    EXPECT_NE(slurp(in_work("stderr.txt")).find("--out"), std::string::npos);
}

TEST(Cli, UnknownEnvIsConfigError) { EXPECT_EQ(run_cli("collect --env nope --n 10 --out " + in_work("x.ds")).code, 2); }

TEST(Cli, UnwritablePathIsIoError) {
    EXPECT_EQ(run_cli("collect --env map2d-source --n 10 --out /nonexistent/dir/x.ds").code, 3);
}

TEST(Cli, MissingInputIsIoError) {
    EXPECT_EQ(run_cli("train --data " + in_work("absent.ds") + " --out " + in_work("q.txt")).code, 3);
}

TEST(Cli, UnknownConfigKeyIsConfigError) {
    ASSERT_EQ(run_cli("collect --env map2d-source --n 50 --out " + in_work("a.ds")).code, 0);
    EXPECT_EQ(run_cli("train --data " + in_work("a.ds") + " --set trainer.alhpa=1 --out " + in_work("q.txt")).code, 2);
}

TEST(Cli, HelpListsFlagsWithDefaults) {
    for (const char* sub : {"collect", "train-classifier", "augment", "train", "eval", "experiment"}) {
        auto r = run_cli(std::string(sub) + " --help");
        EXPECT_EQ(r.code, 0) << sub;
        EXPECT_NE(r.out.find("--"), std::string::npos) << sub;
    }
    auto c = run_cli("collect --help");
    EXPECT_NE(c.out.find("100000"), std::string::npos) << c.out;
    EXPECT_NE(c.out.find("random"), std::string::npos);
}

TEST(Cli, AugmentAtZeroEtaKeepsRecords) {
    ASSERT_EQ(run_cli("collect --env map2d-source --n 2000 --seed 1 --out " + in_work("s.ds")).code, 0);
    ASSERT_EQ(run_cli("collect --env map2d-target --n 300 --seed 2 --out " + in_work("t.ds")).code, 0);
    ASSERT_EQ(run_cli("train-classifier --source " + in_work("s.ds") + " --target " + in_work("t.ds") +
                   " --set classifier.epochs=2 --out " + in_work("clf.txt"))
                  .code,
              0);
    ASSERT_EQ(run_cli("augment --source " + in_work("s.ds") + " --classifier " + in_work("clf.txt") + " --eta 0 --out " +
                   in_work("aug0.ds"))
                  .code,
              0);
    auto a = dara::load(in_work("s.ds")), b = dara::load(in_work("aug0.ds"));
    EXPECT_EQ(a.rows, b.rows);
    EXPECT_TRUE(b.meta.augmented);
    EXPECT_TRUE(fs::exists(work() / "resolved.cfg"));
}

TEST(Cli, CommandsAreByteIdempotent) {
    ASSERT_EQ(run_cli("collect --env clip1d-source --n 300 --seed 4 --out " + in_work("i1.ds")).code, 0);
    ASSERT_EQ(run_cli("collect --env clip1d-source --n 300 --seed 4 --out " + in_work("i2.ds")).code, 0);
    EXPECT_EQ(slurp(in_work("i1.ds")), slurp(in_work("i2.ds")));
    ASSERT_EQ(run_cli("train --data " + in_work("i1.ds") + " --out " + in_work("qa.txt")).code, 0);
    ASSERT_EQ(run_cli("train --data " + in_work("i2.ds") + " --out " + in_work("qb.txt")).code, 0);
    EXPECT_EQ(slurp(in_work("qa.txt")), slurp(in_work("qb.txt")));
}

TEST(Cli, EndToEndDaraPipelineOnMap) {
    auto s = in_work("e_src.ds"), t = in_work("e_tgt.ds"), c = in_work("e_clf.txt"), a = in_work("e_aug.ds"),
         q = in_work("e_q.txt");
    ASSERT_EQ(run_cli("collect --env map2d-source --n 100000 --seed 0 --out " + s).code, 0);
    ASSERT_EQ(run_cli("collect --env map2d-target --n 10000 --seed 1 --out " + t).code, 0);
    ASSERT_EQ(run_cli("train-classifier --source " + s + " --target " + t +
                   " --set classifier.lr=0.003 --set classifier.epochs=100 --out " + c)
                  .code,
              0);
    ASSERT_EQ(run_cli("augment --source " + s + " --classifier " + c + " --eta 10 --floor-zero --out " + a).code, 0);
    ASSERT_EQ(run_cli("train --data " + t + " --data " + a + " --algorithm conservative --alpha 0.1 --out " + q).code, 0);
    auto r = run_cli("eval --env map2d-target --q " + q + " --episodes 10 --out " + in_work("e_report.txt"));
    ASSERT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("goal_rate=1"), std::string::npos) << r.out;
}

TEST(Cli, ExperimentMarksZeroTargetDaraRows) {
    std::ofstream(in_work("ladder.cfg")) << "[data]\nsource_size=2000\n[classifier]\nepochs=2\n[eval]\nepisodes=2\n"
                                            "[grid]\nenvs=map2d-exchanged\narms=1T+10S-dara\netas=1\n"
                                            "target_sizes=0,100\nseeds=0\n";
    auto out = in_work("exp");
    auto r = run_cli("experiment --grid " + in_work("ladder.cfg") + " --workers 2 --out " + out);
    ASSERT_EQ(r.code, 0) << slurp(in_work("stderr.txt"));
    auto csv = slurp(out + "/results.csv");
    EXPECT_NE(csv.find("map2d-exchanged,1T+10S-dara,conservative,1,0,0,FAILED-BY-DESIGN"), std::string::npos) << csv;
    EXPECT_TRUE(fs::exists(out + "/resolved.cfg"));
    EXPECT_NE(r.out.find("cells=2"), std::string::npos);
}
