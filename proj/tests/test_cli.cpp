#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "fpflow/cli.hpp"

using namespace fpflow;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code;
    std::string out, err;
};

Outcome run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "fpflow");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("fpflow_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string config_file(const fs::path& dir, const std::string& body) {
    const fs::path p = dir / "config.json";
    io::write_text(p, body);
    return p.string();
}

const char* kSmall = R"({
  "schema_version": 1,
  "family": {"id": "linear-ou"},
  "grid": {"dim": 1, "half_width": 4.0, "cells": 32},
  "initial": {"kind": "gaussian", "center": [0.5], "sigma": 1.0},
  "evolve": {"T": 8.0, "h": 0.05, "snapshots": 40},
  "ergodic": {
    "T_list": [1.0, 2.0, 4.0, 8.0],
    "observables": [
      {"label": "one", "kind": "constant"},
      {"label": "x2", "kind": "moment", "power": 2}
    ]
  },
  "particles": {"N": 2000, "dt": 0.01, "T": 0.5, "seed": 1, "records": 5},
  "compare": {"l1_max": 0.5, "box_lo": [0.0], "box_hi": [4.0], "occupation_tol": 0.05},
  "check": {"require": ["h1", "h3"]}
})";

std::string source(const std::string& rel) { return std::string(FPFLOW_SOURCE_DIR) + "/" + rel; }

}  // namespace

TEST(Cli, CheckPassesForShippedConfig) {
    const auto dir = scratch("check_ok");
    const auto r = run_cli({"check", "--config", source("configs/linear-ou.json"), "--out", dir.string()});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("h1: PASS"), std::string::npos);
    for (const char* f : {"h1.json", "h2.json", "h3.json", "uniqueness.json", "fixed_point.json", "summary.json"})
        EXPECT_TRUE(fs::exists(dir / f)) << f;
}

TEST(Cli, CheckReportsViolatedInequality) {
    const auto dir = scratch("check_fail");
    const auto r = run_cli({"check", "--config", source("configs/b0-violated.json"), "--out", dir.string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.out.find("violated h3.b_lower_bound"), std::string::npos) << r.out;
}

TEST(Cli, MalformedConfigIsUsageError) {
    const auto dir = scratch("bad_config");
    std::string body = kSmall;
    body.replace(body.find("\"cells\""), 7, "\"cellz\"");
    const auto r = run_cli({"check", "--config", config_file(dir, body), "--out", (dir / "o").string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("grid"), std::string::npos) << r.err;

    io::write_text(dir / "broken.json", "{ not json");
    EXPECT_EQ(run_cli({"check", "--config", (dir / "broken.json").string(), "--out", dir.string()}).code, 2);
}

TEST(Cli, UsageErrors) {
    EXPECT_EQ(run_cli({}).code, 2);
    EXPECT_EQ(run_cli({"evolve", "--out", "/tmp/x"}).code, 2);
    EXPECT_EQ(run_cli({"frobnicate"}).code, 2);
    EXPECT_EQ(run_cli({"check", "--config", "/nonexistent/cfg.json", "--out", "/tmp/x"}).code, 2);
    EXPECT_EQ(run_cli({"--version"}).code, 0);
}

TEST(Cli, EvolveWritesAndReusesTrajectory) {
    const auto dir = scratch("evolve");
    const auto cfg = config_file(dir, kSmall);
    const auto out = dir / "nested" / "traj";
    const auto first = run_cli({"evolve", "--config", cfg, "--out", out.string()});
    ASSERT_EQ(first.code, 0) << first.err;
    EXPECT_TRUE(fs::exists(out / "manifest.json"));
    EXPECT_TRUE(fs::exists(out / "diagnostics.jsonl"));
    EXPECT_FALSE(fs::exists(out / "INCOMPLETE.json"));
    const auto second = run_cli({"evolve", "--config", cfg, "--out", out.string()});
    EXPECT_EQ(second.code, 0);
    EXPECT_NE(second.out.find("cached"), std::string::npos);

    std::string hash;
    const auto traj = cli::load_trajectory(out, &hash);
    EXPECT_EQ(traj.times.size(), 41u);
    EXPECT_NEAR(mass(traj.final_snapshot()), 1.0, 1e-12);
}

TEST(Cli, EvolveFailureMarksIncomplete) {
    const auto dir = scratch("evolve_fail");
    std::string body = kSmall;
    body.replace(body.find("\"initial\""), 0, "\"solver\": {\"newton_tol\": 1e-300, \"max_newton_iters\": 2},\n  ");
    body.replace(body.find("\"linear-ou\""), 11, "\"porous-medium\"");
    const auto r = run_cli({"evolve", "--config", config_file(dir, body), "--out", (dir / "o").string()});
    EXPECT_EQ(r.code, 1) << r.err;
    EXPECT_TRUE(fs::exists(dir / "o" / "INCOMPLETE.json"));
}

TEST(Cli, ErgodicCsvFromTrajectory) {
    const auto dir = scratch("ergodic");
    const auto cfg = config_file(dir, kSmall);
    ASSERT_EQ(run_cli({"evolve", "--config", cfg, "--out", (dir / "traj").string()}).code, 0);
    const auto r = run_cli({"ergodic", "--traj", (dir / "traj").string(), "--observables", cfg, "--out",
                        (dir / "avg.csv").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rows = io::parse_csv(io::read_text(dir / "avg.csv"));
    ASSERT_EQ(rows.size(), 9u);
    EXPECT_EQ(rows[0], (std::vector<std::string>{"T", "observable_label", "cesaro_value", "config_hash", "version"}));
    EXPECT_EQ(rows[1][1], "one");
    EXPECT_NEAR(std::stod(rows[1][2]), 1.0, 1e-12);
    EXPECT_EQ(rows[1][4], kToolVersion);
    EXPECT_TRUE(fs::exists(dir / "avg_omega" / "omega.json"));

    // over a short horizon the increments still grow and the Cauchy test fails
    io::write_text(dir / "short.json", R"({"T_list": [0.5, 1.0, 2.0], "observables": [{"label": "one", "kind": "constant"}]})");
    const auto s = run_cli({"ergodic", "--traj", (dir / "traj").string(), "--observables",
                            (dir / "short.json").string(), "--out", (dir / "short.csv").string()});
    EXPECT_EQ(s.code, 1);
    EXPECT_NE(s.out.find("FAIL"), std::string::npos);
}

TEST(Cli, ParticleOutputsAreDeterministic) {
    const auto dir = scratch("particles");
    const auto cfg = config_file(dir, kSmall);
    ASSERT_EQ(run_cli({"particles", "--config", cfg, "--out", (dir / "a").string()}).code, 0);
    ASSERT_EQ(run_cli({"particles", "--config", cfg, "--out", (dir / "b").string(), "--threads", "3"}).code, 0);
    for (const char* f : {"summary.csv", "ergodic.csv", "manifest.json"})
        EXPECT_EQ(io::read_text(dir / "a" / f), io::read_text(dir / "b" / f)) << f;
    ASSERT_EQ(run_cli({"particles", "--config", cfg, "--out", (dir / "c").string(), "--seed", "2"}).code, 0);
    EXPECT_NE(io::read_text(dir / "a" / "summary.csv"), io::read_text(dir / "c" / "summary.csv"));
}

TEST(Cli, CompareRunsBothSides) {
    const auto dir = scratch("compare");
    const auto r = run_cli({"compare", "--config", config_file(dir, kSmall), "--out", dir.string()});
    EXPECT_EQ(r.code, 0) << r.out << r.err;
    EXPECT_TRUE(fs::exists(dir / "compare.csv"));
    const auto verdict = nlohmann::json::parse(io::read_text(dir / "compare.json"));
    EXPECT_TRUE(verdict.at("passed").get<bool>());
}
