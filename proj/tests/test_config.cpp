#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>

#include "dara/config.hpp"

using namespace dara;

namespace {

std::string write_tmp(const std::string& name, const std::string& body) {
    std::string path = ::testing::TempDir() + name;
    std::ofstream(path) << body;
    return path;
}

}  // namespace

TEST(Config, DefaultsBuildValidConfigs) {
    RunConfig c;
    EXPECT_NO_THROW(c.grid());
    EXPECT_EQ(c.classifier().hidden, (std::vector<int>{64, 64}));
    EXPECT_EQ(c.trainer().algorithm, "conservative");
    EXPECT_EQ(c.augment().floor_zero, false);
}

TEST(Config, UnknownKeyRejected) {
    RunConfig c;
    EXPECT_THROW(c.set("trainer.alhpa", "1"), InputError);
    auto path = write_tmp("bad.cfg", "[trainer]\nalhpa=1\n");
    EXPECT_THROW(RunConfig::from_file(path), InputError);
    auto loose = write_tmp("loose.cfg", "eta=1\n");
    EXPECT_THROW(RunConfig::from_file(loose), InputError);
    EXPECT_THROW(RunConfig::from_file("/nonexistent/x.cfg"), IoError);
}

TEST(Config, BadValuesRejectedWhenBuilt) {
    RunConfig c;
    c.set("trainer.algorithm", "sarsa");
    EXPECT_THROW(c.trainer(), InputError);
    c = RunConfig{};
    c.set("augment.floor_zero", "maybe");
    EXPECT_THROW(c.augment(), InputError);
    c = RunConfig{};
    c.set("classifier.batch", "7");
    EXPECT_THROW(c.classifier(), InputError);
    c = RunConfig{};
    c.set("grid.arms", "1T,2T");
    EXPECT_THROW(c.grid(), InputError);
}

TEST(Config, FileOverridesDefaults) {
    auto path = write_tmp("ok.cfg", "[augment]\neta = 0.25\nfloor_zero=1\n\n[grid]\nseeds=3, 4\n");
    auto c = RunConfig::from_file(path);
    EXPECT_EQ(c.augment().eta, 0.25);
    EXPECT_TRUE(c.augment().floor_zero);
    EXPECT_EQ(c.grid().seeds, (std::vector<long long>{3, 4}));
    EXPECT_EQ(c.get("trainer.alpha"), "0.1");
}

TEST(Config, ResolvedRoundTrips) {
    RunConfig c;
    c.set("classifier.epochs", "7");
    c.set("grid.etas", "0,0.5");
    std::string dir = ::testing::TempDir();
    c.write_resolved(dir);
    auto back = RunConfig::from_file(dir + "/resolved.cfg");
    EXPECT_EQ(back.resolved(), c.resolved());
    EXPECT_EQ(back.integer("classifier.epochs"), 7);
    std::remove((dir + "/resolved.cfg").c_str());
}

TEST(Config, ShippedConfigsParse) {
    for (const char* name : {"reference.cfg", "target_ladder.cfg", "eta_sweep.cfg", "identity.cfg"}) {
        auto c = RunConfig::from_file(std::string(DARA_CONFIG_DIR) + "/" + name);
        EXPECT_NO_THROW(c.grid()) << name;
    }
}
