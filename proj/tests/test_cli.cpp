#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "experiment.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path& scratch() {
    static const fs::path p = [] {
        auto d = fs::temp_directory_path() / "mfbm_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

struct Run {
    int code;
    std::string out, err;
};

Run cli(const std::string& args, const std::string& env = "") {
    static int counter = 0;
    auto o = scratch() / ("stdout" + std::to_string(counter) + ".txt");
    auto e = scratch() / ("stderr" + std::to_string(counter++) + ".txt");
    std::string cmd = env + " " + MFBM_CLI_PATH + " " + args + " >" + o.string() + " 2>" + e.string();
    int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(o), slurp(e)};
}

fs::path write_config(const std::string& name, const json& j) {
    auto p = scratch() / (name + ".json");
    std::ofstream(p) << j.dump(2);
    return p;
}

json base(const std::string& kind, const std::string& preset, const std::string& out) {
    return {{"experiment", kind},      {"hurst", 0.75}, {"horizon", 0.25},
            {"n_steps", 16},           {"n_particles", 128}, {"seed", 3},
            {"x0", 0.4},               {"coefficients", {{"preset", preset}}},
            {"output_dir", (scratch() / out).string()}};
}

}  // namespace

TEST(Cli, ListPresets) {
    auto r = cli("list-presets");
    EXPECT_EQ(r.code, 0);
    for (const char* n : {"lq_basic", "lq_meanfield", "tanh_drift", "nonlipschitz_demo", "concave_demo"})
        EXPECT_NE(r.out.find(n), std::string::npos) << n;
}

TEST(Cli, EveryPresetRoundTripsThroughValidation) {
    for (const auto& p : mfbm::preset_table()) {
        auto cfg = mfbm::cli::parse_config(base("validate", p.name, "rt"));
        EXPECT_EQ(cfg.coefficients.spec.params, p.spec.params);
        auto again = mfbm::cli::parse_config(mfbm::cli::resolved(cfg));
        EXPECT_EQ(mfbm::cli::resolved(again), mfbm::cli::resolved(cfg)) << p.name;
    }
}

TEST(Cli, PresetParametersEchoIntoManifest) {
    auto j = base("validate", "softplus_terminal", "echo");
    j["validate"] = {{"probes", 5}};
    auto r = cli("run " + write_config("echo", j).string());
    ASSERT_EQ(r.code, 0) << r.err;
    auto m = json::parse(slurp(scratch() / "echo" / "manifest.json"));
    const auto& spec = mfbm::preset_info("softplus_terminal").spec;
    ASSERT_EQ(m["config"]["coefficients"]["params"].size(), spec.params.size());
    for (const auto& [k, v] : spec.params) EXPECT_EQ(m["config"]["coefficients"]["params"][k].get<double>(), v) << k;
    EXPECT_EQ(m["library_version"], MFBM_VERSION);
}

TEST(Cli, ForwardOnZeroPresetKeepsInitialState) {
    auto j = base("forward", "zero", "fwd");
    j["x0"] = 0.7;
    auto r = cli("run " + write_config("fwd", j).string());
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("X_T mean: 0.7\n"), std::string::npos) << r.out;
    EXPECT_EQ(slurp(scratch() / "fwd" / "paths.csv").substr(0, 17), "t,path_id,X,u,BH,");
}

TEST(Cli, FbsdeOnLqConverges) {
    auto j = base("fbsde", "lq_meanfield", "fb");
    j["n_particles"] = 512;
    auto r = cli("run " + write_config("fb", j).string());
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("converged: true"), std::string::npos);
    EXPECT_NE(r.out.find("check converged with contraction ratios < 1: PASS"), std::string::npos);
}

TEST(Cli, ValidateFlagsNonLipschitzWithExitZero) {
    auto j = base("validate", "nonlipschitz_demo", "val");
    auto r = cli("run " + write_config("val", j).string());
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("FAIL H2(ii)"), std::string::npos);
    EXPECT_NE(slurp(scratch() / "val" / "assumptions.csv").find(",FAIL,"), std::string::npos);
}

TEST(Cli, ConfigErrorsExitTwoWithFieldMessages) {
    auto j = base("fbsde", "lq_basic", "bad");
    j["tolerence"] = 1e-3;
    j["hurst"] = 0.4;
    j["n_particles"] = 1;
    j["coefficients"]["params"] = {{"b_q", 1.0}};
    j["picard"] = {{"gamma", 0.1}};
    auto r = cli("run " + write_config("bad", j).string());
    EXPECT_EQ(r.code, 2);
    for (const char* f : {"tolerence: unknown key", "hurst:", "n_particles:", "coefficients.params.b_q", "picard:"})
        EXPECT_NE(r.err.find(f), std::string::npos) << f << "\n" << r.err;
    EXPECT_EQ(cli("run " + (scratch() / "missing.json").string()).code, 2);
    std::ofstream(scratch() / "broken.json") << "{ \"experiment\": ";
    EXPECT_EQ(cli("run " + (scratch() / "broken.json").string()).code, 2);
    EXPECT_EQ(cli("").code, 2);
}

TEST(Cli, SolverErrorsExitOne) {
    auto j = base("forward", "lq_basic", "boundary");
    j["forward"] = {{"control", 2.0}};  // on the boundary of the open box
    auto r = cli("run " + write_config("boundary", j).string());
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("solver error"), std::string::npos);
}

TEST(Cli, OverridesReachTheManifest) {
    auto p = write_config("ovr", base("forward", "lq_basic", "ovr_default"));
    auto out = scratch() / "ovr_override";
    auto r = cli("run " + p.string() + " --seed 99 --particles 64 --out-dir " + out.string());
    ASSERT_EQ(r.code, 0) << r.err;
    auto m = json::parse(slurp(out / "manifest.json"));
    EXPECT_EQ(m["config"]["seed"], 99);
    EXPECT_EQ(m["config"]["n_particles"], 64);
    EXPECT_FALSE(fs::exists(scratch() / "ovr_default"));
}

TEST(Cli, OutputsIdenticalAcrossWorkerCounts) {
    for (const char* kind : {"forward", "picard", "fbsde", "gateaux", "residual-sweep", "validate"}) {
        auto j = base(kind, std::string(kind) == "picard" ? "tanh_drift" : "lq_basic", "");
        std::string name = std::string("det_") + kind;
        std::vector<std::string> files;
        for (int workers : {1, 4}) {
            auto out = scratch() / (name + "_" + std::to_string(workers));
            j["output_dir"] = out.string();
            auto r = cli("run " + write_config(name, j).string(), "MFBM_WORKERS=" + std::to_string(workers));
            ASSERT_EQ(r.code, 0) << kind << r.err;
            std::string all;
            for (const auto& e : fs::directory_iterator(out))
                if (e.path().extension() == ".csv" || e.path().filename() == "summary.txt") all += slurp(e.path());
            files.push_back(all);
        }
        EXPECT_FALSE(files[0].empty());
        EXPECT_EQ(files[0], files[1]) << kind;
    }
}
