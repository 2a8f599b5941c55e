#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "optex/errors.hpp"
#include "optex/io.hpp"
#include "optex/run_config.hpp"

namespace fs = std::filesystem;
using namespace optex;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("optex_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(std::vector<std::string> args) {
    args.insert(args.begin(), "optex");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    out_.str("");
    err_.str("");
    return cli::run(static_cast<int>(argv.size()), argv.data(), out_, err_);
  }

  fs::path write(const std::string& name, const std::string& text) {
    std::ofstream(dir_ / name) << text;
    return dir_ / name;
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
  }

  std::string out_dir(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
  std::ostringstream out_, err_;
};

}  // namespace

TEST_F(CliTest, SimulateDefaultCcWritesFullLength) {
  ASSERT_EQ(run({"simulate", "--out", out_dir("a"), "--deterministic"}), 0) << err_.str();
  const auto t = read_csv(dir_ / "a" / "simulation.csv");
  EXPECT_EQ(t.rows.size(), 3800u);
  EXPECT_EQ(slurp(dir_ / "a" / "simulation.csv").rfind("# config_fingerprint=", 0), 0u);
}

TEST_F(CliTest, DeterministicRerunsAreByteIdentical) {
  for (const char* d : {"a", "b"}) {
    ASSERT_EQ(run({"simulate", "--out", out_dir(d), "--deterministic"}), 0);
    ASSERT_EQ(run({"nmpc", "--out", out_dir(d), "--deterministic", "--steps", "15"}), 0) << err_.str();
  }
  for (const char* f : {"simulation.csv", "simulation_summary.json", "nmpc_steps_kp.csv", "nmpc_summary_kp.json"})
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  const auto s = nlohmann::json::parse(slurp(dir_ / "a" / "nmpc_summary_kp.json"));
  EXPECT_FALSE(s.contains("mean_step_time_s"));
}

TEST_F(CliTest, MissingParameterFileIsConfigFailure) {
  const auto cfg = write("c.json", R"({"cell_parameters": "does_not_exist.json"})");
  EXPECT_EQ(run({"simulate", "-c", cfg.string(), "--out", out_dir("x")}), 2);
  EXPECT_NE(err_.str().find("does_not_exist.json"), std::string::npos);
}

TEST_F(CliTest, UnknownKeysAndBadValuesAreConfigFailures) {
  EXPECT_EQ(run({"simulate", "-c", write("u.json", R"({"env": {"i_maxx": 3}})").string()}), 2);
  EXPECT_NE(err_.str().find("i_maxx"), std::string::npos);
  EXPECT_EQ(run({"simulate", "-c", write("v.json", R"({"env": {"v_min": 5.0}})").string()}), 2);
  EXPECT_EQ(run({"simulate", "-c", write("w.json", "{not json").string()}), 2);
  EXPECT_EQ(run({"simulate", "--target", "kx"}), 2);
  EXPECT_EQ(run({}), 2);
  EXPECT_EQ(run({"--help"}), 0);
}

TEST_F(CliTest, TrainWithZeroEpisodesGivesValidArtifact) {
  ASSERT_EQ(run({"train", "--max-episodes", "0", "--steps", "30", "--out", out_dir("t"), "--target", "kn"}), 0)
      << err_.str();
  const auto w = load_weights(dir_ / "t" / "policy_kn.json");
  EXPECT_FALSE(w.config_fingerprint.empty());
  EXPECT_TRUE(read_csv(dir_ / "t" / "training_log_kn.csv").rows.empty());
  const auto s = nlohmann::json::parse(slurp(dir_ / "t" / "train_summary_kn.json"));
  EXPECT_EQ(s["episodes"], 0);
  EXPECT_TRUE(s.contains("mean_step_time_s"));
}

TEST_F(CliTest, SensitivityMapSingleCellAndZeroRate) {
  const auto cfg = write("m.json", R"({"sensitivity_map": {"c_rates": [0.0], "soc": [0.5]}})");
  ASSERT_EQ(run({"sensitivity-map", "-c", cfg.string(), "--out", out_dir("m")}), 0) << err_.str();
  const auto t = read_csv(dir_ / "m" / "sensitivity_map.csv");
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.rows[0][2], 0.0);
  EXPECT_EQ(t.rows[0][3], 0.0);
  EXPECT_EQ(run({"sensitivity-map", "-c", write("n.json", R"({"sensitivity_map": {"soc": [1.0]}})").string()}), 2);
}

TEST_F(CliTest, ProfileEstimateAndCompareChain) {
  const auto cfg = write("p.json", R"({"profile": {"kind": "constant", "current": 60.0, "steps": 300},
                                        "estimation": {"n_starts": 3}})");
  ASSERT_EQ(run({"profile", "-c", cfg.string(), "--out", out_dir("p")}), 0) << err_.str();
  const auto prof = (dir_ / "p" / "profile.csv").string();
  ASSERT_EQ(run({"estimate", "-c", cfg.string(), "--profile", prof, "--target", "kp", "--out", out_dir("e")}), 0)
      << err_.str();
  EXPECT_EQ(read_csv(dir_ / "e" / "estimation_kp.csv").rows.size(), 3u);
  EXPECT_FALSE(fs::exists(dir_ / "e" / "estimation_kn.csv"));

  const auto cfg2 = write("q.json", R"({"profile": {"kind": "constant", "current": 20.0, "steps": 300},
                                         "estimation": {"n_starts": 3}})");
  ASSERT_EQ(run({"profile", "-c", cfg2.string(), "--out", out_dir("q")}), 0);
  ASSERT_EQ(run({"compare", "-c", cfg.string(), "--out", out_dir("c"), "--entry", "strong=" + prof, "--entry",
                 "weak=" + (dir_ / "q" / "profile.csv").string()}),
            0)
      << err_.str();
  const auto j = nlohmann::json::parse(slurp(dir_ / "c" / "comparison.json"));
  ASSERT_EQ(j["rows"].size(), 2u);
  EXPECT_GT(j["rows"][0]["fi_raw_kp"].get<double>(), j["rows"][1]["fi_raw_kp"].get<double>());
  EXPECT_TRUE(fs::exists(dir_ / "c" / "comparison.md"));
  EXPECT_EQ(run({"compare", "--out", out_dir("c2")}), 2);
  EXPECT_EQ(run({"compare", "--entry", "broken"}), 2);
}

TEST(RunConfig, JsonRoundTripKeepsFingerprint) {
  RunConfig c;
  c.seed = 17;
  c.env.target = Param::kn;
  c.td3.hidden_sizes = {32, 16};
  c.compare.push_back({"x", "/tmp/x.csv", 0.9, 1e-3, {}});
  const auto back = run_config_from_json(to_json(c));
  EXPECT_EQ(back.fingerprint(), c.fingerprint());
  EXPECT_EQ(back.td3.seed, 17u);
  auto other = c;
  other.nmpc.horizon = 10;
  EXPECT_NE(other.fingerprint(), c.fingerprint());
  other = c;
  other.output_dir = "elsewhere";
  EXPECT_EQ(other.fingerprint(), c.fingerprint());
}

TEST(RunConfig, RelativePathsResolveAgainstConfigDirectory) {
  const auto c = run_config_from_json(nlohmann::json::parse(R"({"profile": {"kind": "csv", "path": "a.csv"}})"),
                                      "/some/dir");
  EXPECT_EQ(c.profile.path, fs::path("/some/dir/a.csv"));
  EXPECT_THROW(c.validate(), ConfigError);
}
