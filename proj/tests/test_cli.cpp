#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "flowdiag/cli.hpp"

using namespace flowdiag;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("flowdiag_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    void write(const std::string& name, const std::string& text) const {
        std::ofstream(path(name), std::ios::binary) << text;
    }

    static std::string slurp(const std::string& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    // Runs the real executable; stdout and stderr land in files under the test directory.
    int exec(const std::string& args) {
        const std::string cmd = std::string(FLOWDIAG_BINARY) + " " + args + " > " + path("stdout.txt") + " 2> " +
                                path("stderr.txt");
        const int status = std::system(cmd.c_str());
        stdout_ = slurp(path("stdout.txt"));
        stderr_ = slurp(path("stderr.txt"));
        return WEXITSTATUS(status);
    }

    // In-process run through the same entry point.
    int run(std::vector<std::string> args) {
        args.insert(args.begin(), "flowdiag");
        std::ostringstream out, err;
        const int code = cli::run(args, out, err);
        stdout_ = out.str();
        stderr_ = err.str();
        return code;
    }

    std::string sim_config(double lambda = 40, double horizon = 20000, double interval = 1) const {
        std::ostringstream c;
        c << "lambda = " << lambda << "\nsize = exponential mean=5e4\nduration = constant value=10\n"
          << "horizon = " << horizon << "\ninterval = " << interval << "\nseed = 7\nlabel = testnet\n";
        return c.str();
    }

    fs::path dir_;
    std::string stdout_, stderr_;
};

}  // namespace

TEST_F(CliTest, SimulateWritesSamplesMomentsAndManifest) {
    write("sim.conf", sim_config());
    ASSERT_EQ(exec("simulate --config " + path("sim.conf") + " --out " + path("out/samples.csv")), 0) << stderr_;
    EXPECT_TRUE(fs::exists(path("out/samples.csv")));
    const auto moments = json::parse(slurp(path("out/samples.moments.json")));
    EXPECT_DOUBLE_EQ(moments["mean_rate"].get<double>(), 40 * 5e4);
    EXPECT_DOUBLE_EQ(moments["mean_flows"].get<double>(), 400);
    const auto manifest = json::parse(slurp(path("out/samples.manifest.json")));
    EXPECT_EQ(manifest["seed"], 7);
    EXPECT_EQ(manifest["tool_version"], cli::tool_version);
    EXPECT_EQ(manifest["config_digest"].get<std::string>().rfind("sha256:", 0), 0u);
    EXPECT_EQ(manifest["config_digest"].get<std::string>().size(), 7u + 64u);
    EXPECT_FALSE(manifest["timestamp"].get<std::string>().empty());

    const auto file = ingest::read_sample_file(path("out/samples.csv"));
    EXPECT_EQ(file.samples.size(), 20001u);
    EXPECT_EQ(file.header.source_label, "testnet");
}

TEST_F(CliTest, SimulateIsByteReproducible) {
    write("sim.conf", sim_config(20, 2000));
    ASSERT_EQ(exec("simulate --config " + path("sim.conf") + " --out " + path("a.csv")), 0);
    ASSERT_EQ(exec("simulate --config " + path("sim.conf") + " --out " + path("b.csv")), 0);
    EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
    ASSERT_EQ(exec("simulate --config " + path("sim.conf") + " --seed 8 --out " + path("c.csv")), 0);
    EXPECT_NE(slurp(path("a.csv")), slurp(path("c.csv")));
}

TEST_F(CliTest, SimulateHonoursOutputDirectory) {
    write("sim.conf", sim_config(5, 100));
    const std::string env = "FLOWDIAG_OUT_DIR=" + path("envout") + " ";
    const std::string cmd = env + FLOWDIAG_BINARY + " simulate --config " + path("sim.conf") + " > /dev/null";
    ASSERT_EQ(std::system(cmd.c_str()), 0);
    EXPECT_TRUE(fs::exists(path("envout/samples.csv")));
}

TEST_F(CliTest, InvalidConfigExitsTwoNamingField) {
    write("bad.conf", "lambda = -3\nsize = constant value=1\nduration = constant value=1\nhorizon = 10\n");
    EXPECT_EQ(exec("simulate --config " + path("bad.conf") + " --out " + path("x.csv")), 2);
    EXPECT_NE(stderr_.find("lambda"), std::string::npos) << stderr_;
    EXPECT_FALSE(fs::exists(path("x.csv")));

    EXPECT_EQ(exec("simulate --config " + path("missing.conf")), 2);
    EXPECT_EQ(exec("nonsense"), 2);
    EXPECT_EQ(exec(""), 2);
}

TEST_F(CliTest, AnalyzeFixture) {
    ASSERT_EQ(run({"analyze", "--fixture", "dataset1", "--out", path("r1.json")}), 0) << stderr_;
    const auto r = json::parse(slurp(path("r1.json")));
    EXPECT_EQ(r["fit"]["region_bins"], json({1, 2, 3}));
    EXPECT_NEAR(r["fit"]["slope_perf"].get<double>(), 5718.45, 0.01);
    EXPECT_EQ(r["fit"]["threshold_n"].get<double>(), 30000);
    EXPECT_NEAR(r["quantile"].get<double>(), 1.96, 1e-3);
    EXPECT_NEAR(r["correlation"].get<double>(), 0.7051, 1e-4);
    EXPECT_EQ(r["label"], "dataset1");
    EXPECT_TRUE(fs::exists(path("r1.plot.csv")));
    EXPECT_TRUE(fs::exists(path("r1.manifest.json")));

    const auto plot = slurp(path("r1.plot.csv"));
    EXPECT_EQ(plot.rfind("bin_index,n_lo,n_hi,mean_n,mean_rate,sigma_rate,fit_rate,lower,upper,in_region,enough_data\n",
                         0),
              0u);
    EXPECT_EQ(std::count(plot.begin(), plot.end(), '\n'), 8);
}

TEST_F(CliTest, AnalyzeEpsilonSetsQuantile) {
    ASSERT_EQ(run({"analyze", "--fixture", "dataset2", "--epsilon", "0.01", "--out", path("r.json")}), 0);
    const auto r = json::parse(slurp(path("r.json")));
    EXPECT_NEAR(r["fit"]["quantile"].get<double>(), 2.5758, 1e-4);
    EXPECT_EQ(run({"analyze", "--fixture", "dataset2", "--epsilon", "2", "--out", path("r.json")}), 2);
}

TEST_F(CliTest, AnalyzeInputErrors) {
    EXPECT_EQ(run({"analyze", "--out", path("r.json")}), 2);
    EXPECT_EQ(run({"analyze", "--fixture", "dataset1", "--samples", "x.csv"}), 2);
    EXPECT_EQ(run({"analyze", "--fixture", "dataset9", "--out", path("r.json")}), 2);
    write("broken.csv", "# version=1\n# unit=bps\ntimestamp,active_flows,rate\n0,abc,1\n");
    EXPECT_EQ(run({"analyze", "--samples", path("broken.csv"), "--out", path("r.json")}), 2);
    EXPECT_NE(stderr_.find("line 4"), std::string::npos) << stderr_;
}

TEST_F(CliTest, AnalyzeDegenerateInputExitsThree) {
    // Every sample has the same N: a single bin cannot define a region.
    std::string csv = "# version=1\n# unit=bps\ntimestamp,active_flows,rate\n";
    for (int i = 0; i < 100; ++i) csv += std::to_string(i) + ",10," + std::to_string(100 + i % 7) + "\n";
    write("flat.csv", csv);
    EXPECT_EQ(exec("analyze --samples " + path("flat.csv") + " --out " + path("r.json")), 3) << stderr_;
}

TEST_F(CliTest, EndToEndSimulateAnalyzeDetect) {
    // Samples 20 s apart with 10 s flows share no flow, so they are independent.
    write("sim.conf", sim_config(40, 100000, 20));
    ASSERT_EQ(run({"simulate", "--config", path("sim.conf"), "--out", path("s.csv")}), 0);
    ASSERT_EQ(run({"analyze", "--samples", path("s.csv"), "--out", path("model.json")}), 0) << stderr_;
    const auto model = json::parse(slurp(path("model.json")));
    EXPECT_NEAR(model["fit"]["slope_perf"].get<double>(), 5000, 100);
    EXPECT_EQ(model["label"], "testnet");

    // Clean traffic at a loose envelope: no events.
    EXPECT_EQ(run({"detect", "--samples", path("s.csv"), "--model", path("model.json"), "--consecutive", "3",
                   "--epsilon", "1e-6", "--out", path("clean.json")}),
              0)
        << stdout_;
    EXPECT_EQ(json::parse(slurp(path("clean.json")))["event_count"], 0);

    // Three samples carried at a fraction of their expected rate.
    auto samples = ingest::read_samples_csv(path("s.csv"));
    for (std::size_t i = 1000; i < 1003; ++i) samples[i].total_rate *= 0.3;
    ingest::write_samples_csv(samples, path("dip.csv"));
    EXPECT_EQ(run({"detect", "--samples", path("dip.csv"), "--model", path("model.json"), "--consecutive", "3",
                   "--epsilon", "1e-6", "--out", path("dip.json")}),
              1);
    const auto ev = json::parse(slurp(path("dip.json")));
    ASSERT_EQ(ev["event_count"], 1);
    EXPECT_EQ(ev["events"][0]["first_index"], 1000);
    EXPECT_EQ(ev["events"][0]["direction"], "below");
    EXPECT_EQ(ev["events"][0]["samples"].size(), 3u);
    const auto log = slurp(path("dip.log"));
    EXPECT_EQ(log.rfind("ALERT start=20000 end=20040 direction=below samples=3 ", 0), 0u) << log;
    EXPECT_NE(stdout_.find("ALERT"), std::string::npos);
}

TEST_F(CliTest, DetectModelErrors) {
    write("s.csv", "# version=1\n# unit=bps\ntimestamp,active_flows,rate\n0,10,100\n");
    EXPECT_EQ(exec("detect --samples " + path("s.csv") + " --model " + path("none.json")), 2);
    write("bad.json", "{not json");
    EXPECT_EQ(exec("detect --samples " + path("s.csv") + " --model " + path("bad.json")), 2);
    write("noslope.json", R"({"fit": {"alpha": 1, "threshold_n": 5}})");
    EXPECT_EQ(exec("detect --samples " + path("s.csv") + " --model " + path("noslope.json")), 2);
    EXPECT_NE(stderr_.find("slope_perf"), std::string::npos);
    write("ok.json", R"({"slope_perf": 10, "alpha": 1, "threshold_n": null})");
    EXPECT_EQ(exec("detect --samples " + path("s.csv") + " --model " + path("ok.json") + " --out " + path("e.json")),
              0);
}

TEST_F(CliTest, CompareRanksModels) {
    ASSERT_EQ(run({"analyze", "--fixture", "dataset1", "--out", path("d1.json")}), 0);
    ASSERT_EQ(run({"analyze", "--fixture", "dataset2", "--out", path("d2.json")}), 0);
    ASSERT_EQ(run({"compare", path("d2.json"), path("d1.json"), "--out", path("cmp.json")}), 0);
    const auto cmp = json::parse(slurp(path("cmp.json")));
    EXPECT_EQ(cmp["ranking"], json({"dataset1", "dataset2"}));
    EXPECT_EQ(stdout_.rfind("1. dataset1", 0), 0u) << stdout_;
    EXPECT_EQ(run({"compare", path("nothere.json")}), 2);
}

TEST_F(CliTest, HelpAndVersion) {
    EXPECT_EQ(exec("--help"), 0);
    EXPECT_NE(stdout_.find("simulate"), std::string::npos);
    EXPECT_EQ(exec("--version"), 0);
    EXPECT_NE(stdout_.find(cli::tool_version), std::string::npos);
}
