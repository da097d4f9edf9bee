#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

#include "wlab/commands.hpp"

using namespace wlab;
namespace fs = std::filesystem;

namespace {
fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("wlab_test_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

int run_cli(const std::string& args, const std::string& env = "") {
    const char* cli = std::getenv("WLAB_CLI");
    if (!cli) return -1;
    std::string cmd = env + " '" + std::string(cli) + "' " + args + " >/dev/null 2>&1";
    int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

#define REQUIRE_CLI() \
    if (!std::getenv("WLAB_CLI")) GTEST_SKIP() << "WLAB_CLI not set"
}  // namespace

TEST(Snapshot, RoundTripIsBitExact) {
    auto g = build_grid(16);
    auto im = sample(make_test_surface("branched_cover:2"), g);
    auto s = surface_snapshot(im);
    auto dir = scratch("roundtrip");
    std::string h = save_snapshot(dir / "a.wlab", s);
    auto t = load_snapshot(dir / "a.wlab", {16});
    EXPECT_EQ(snapshot_hash(t), h);
    EXPECT_EQ(t.data, s.data);
    EXPECT_EQ(t.kind, "surface");
    EXPECT_EQ(t.branches.size(), 2u);
    EXPECT_EQ(t.params["spec"], "branched_cover:2");
    save_snapshot(dir / "b.wlab", t);
    EXPECT_EQ(slurp(dir / "a.wlab"), slurp(dir / "b.wlab"));
    // header: magic then little-endian fields
    std::string b = slurp(dir / "a.wlab");
    EXPECT_EQ(b.substr(0, 5), "WLAB1");
    EXPECT_EQ(std::uint8_t(b[9]), 16);
}

TEST(Snapshot, RefusesTruncationResolutionAndTampering) {
    auto g = build_grid(16);
    auto im = sample(make_test_surface("round:1"), g);
    auto dir = scratch("refuse");
    save_snapshot(dir / "a.wlab", surface_snapshot(im));
    EXPECT_THROW(load_snapshot(dir / "a.wlab", {24}), ResolutionError);

    std::string b = slurp(dir / "a.wlab");
    fs::copy_file(dir / "a.wlab.json", dir / "t.wlab.json");
    write_text(dir / "t.wlab", b.substr(0, b.size() - 3));
    EXPECT_THROW(load_snapshot(dir / "t.wlab"), FormatError);

    std::string c = b;
    c[c.size() - 1] ^= 1;
    fs::copy_file(dir / "a.wlab.json", dir / "c.wlab.json");
    write_text(dir / "c.wlab", c);
    EXPECT_THROW(load_snapshot(dir / "c.wlab"), FormatError);

    std::string v = b;
    v[5] = 9;
    fs::copy_file(dir / "a.wlab.json", dir / "v.wlab.json");
    write_text(dir / "v.wlab", v);
    EXPECT_THROW(load_snapshot(dir / "v.wlab"), FormatError);

    write_text(dir / "m.wlab", "WLAX1" + b.substr(5));
    EXPECT_THROW(load_snapshot(dir / "m.wlab"), FormatError);
}

TEST(Snapshot, ExplicitResamplingKeepsBandLimitedData) {
    auto g16 = build_grid(16), g24 = build_grid(24);
    auto s = surface_snapshot(sample(make_test_surface("ellipsoid:1,1,1.5"), g16));
    auto r = resample(s, g16, g24, 4);
    auto direct = surface_snapshot(sample(make_test_surface("ellipsoid:1,1,1.5"), g24));
    EXPECT_EQ(r.resolution, 24);
    EXPECT_LT((r.data - direct.data).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Csv, NumbersAndEmptyTrace) {
    EXPECT_EQ(num(0.1), "0.10000000000000001");
    EXPECT_EQ(num(4 * kPi), "12.566370614359172");
    auto t = trace_table({});
    EXPECT_EQ(t.text(), "sigma,W,F,O,W_sigma,grad_norm,entropy_residual,index,nullity\n");
    CsvTable c;
    c.header = kVariationColumns;
    EXPECT_EQ(c.text(), "surface,probe,formula_value,fd_value,rel_error,observed_order\n");
    c.add({"ellipsoid:1,1,1.5", "DW/Y1,0*n", "1", "1", "0", "2"});
    EXPECT_NE(c.text().find("\"ellipsoid:1,1,1.5\""), std::string::npos);
    EXPECT_THROW(c.add({"x"}), ShapeError);
}

TEST(Config, MergeAndValidation) {
    RunConfig c;
    c.merge_json(Json::parse(R"({"surface": "ellipsoid:1,1,2", "N": 20, "schedule": [0.1, 0.05]})"));
    EXPECT_EQ(c.surface, "ellipsoid:1,1,2");
    EXPECT_EQ(c.N, 20);
    EXPECT_EQ(c.Lidx, 4);
    EXPECT_NO_THROW(c.validate());
    EXPECT_THROW(c.merge_json(Json::parse(R"({"bogus": 1})")), ConfigError);
    EXPECT_THROW(c.merge_json(Json::parse(R"({"N": "many"})")), ConfigError);
    EXPECT_THROW(c.merge_json(Json::parse("[1]")), ConfigError);
    RunConfig d;
    d.schedule = {0.01, 0.02};
    EXPECT_THROW(d.validate(), ConfigError);
    d = RunConfig{};
    d.Lidx = 40;
    EXPECT_THROW(d.validate(), ConfigError);
}

TEST(Probes, SeededDrawsAreReproducible) {
    auto a = draw_probes(42, 12, 3, 1), b = draw_probes(42, 12, 3, 1), c = draw_probes(43, 12, 3, 1);
    ASSERT_EQ(a.size(), 12u);
    bool same = true, differ = false;
    for (std::size_t k = 0; k < a.size(); ++k) {
        same &= a[k].l == b[k].l && a[k].m == b[k].m;
        differ |= a[k].l != c[k].l || a[k].m != c[k].m;
    }
    EXPECT_TRUE(same);
    EXPECT_TRUE(differ);
}

TEST(Commands, ExitStatusMapping) {
    EXPECT_EQ(exit_status_for(ConfigError("x")), kExitUsage);
    EXPECT_EQ(exit_status_for(FormatError("x")), kExitUsage);
    EXPECT_EQ(exit_status_for(NumericalError("x")), kExitNumerical);
    EXPECT_EQ(exit_status_for(std::runtime_error("x")), kExitNumerical);
}

TEST(Commands, EnergyOutputsAreDeterministic) {
    RunConfig c;
    c.N = 16;
    c.L = 8;
    c.surface = "ellipsoid:1,1,1.5";
    auto a = scratch("det1"), b = scratch("det2");
    c.out = a.string();
    ASSERT_EQ(run_command("energy", c), 0);
    c.out = b.string();
    ASSERT_EQ(run_command("energy", c), 0);
    EXPECT_EQ(slurp(a / "surface.wlab"), slurp(b / "surface.wlab"));
    EXPECT_EQ(slurp(a / "surface.wlab.json"), slurp(b / "surface.wlab.json"));
}

TEST(Cli, ExitCodes) {
    REQUIRE_CLI();
    auto dir = scratch("cli");
    write_text(dir / "small.json", R"({"N": 16, "L": 8})");
    std::string base = "--config " + (dir / "small.json").string() + " --out " + (dir / "o").string();
    EXPECT_EQ(run_cli("energy --surface round:1 " + base), 0);
    EXPECT_TRUE(fs::exists(dir / "o" / "energy.json"));
    EXPECT_EQ(run_cli(""), 2);
    EXPECT_EQ(run_cli("energy --bogus 1"), 2);
    EXPECT_EQ(run_cli("index --energy XX " + base), 2);
    EXPECT_EQ(run_cli("energy --surface torus:1 " + base), 2);
    EXPECT_EQ(run_cli("continue --schedule 0.01,0.02 " + base), 2);
    EXPECT_EQ(run_cli("energy --config " + (dir / "missing.json").string()), 2);
    write_text(dir / "bad.json", R"({"surface": "round:1", "colour": "red"})");
    EXPECT_EQ(run_cli("energy --config " + (dir / "bad.json").string()), 2);
    write_text(dir / "stall.json", R"({"N": 16, "L": 8, "max_iter": 0, "tol": 1e-300})");
    EXPECT_EQ(run_cli("continue --surface perturbed_sphere:2,0,0.1 --schedule 0.05 --config " +
                      (dir / "stall.json").string() + " --out " + (dir / "s").string()),
              3);
    EXPECT_TRUE(fs::exists(dir / "s" / "trace.csv"));
}

TEST(Cli, OutputDirectoryPrecedence) {
    REQUIRE_CLI();
    auto dir = scratch("env");
    write_text(dir / "c.json", (R"({"N": 16, "L": 8, "out": ")" + (dir / "from_config").string() + "\"}"));
    std::string cfg = "--config " + (dir / "c.json").string();
    EXPECT_EQ(run_cli("energy " + cfg), 0);
    EXPECT_TRUE(fs::exists(dir / "from_config" / "energy.json"));
    EXPECT_EQ(run_cli("energy " + cfg, "WLAB_OUT_DIR='" + (dir / "from_env").string() + "'"), 0);
    EXPECT_TRUE(fs::exists(dir / "from_env" / "energy.json"));
    EXPECT_EQ(run_cli("energy " + cfg + " --out " + (dir / "from_flag").string(),
                      "WLAB_OUT_DIR='" + (dir / "from_env2").string() + "'"),
              0);
    EXPECT_TRUE(fs::exists(dir / "from_flag" / "energy.json"));
    EXPECT_FALSE(fs::exists(dir / "from_env2"));
}

TEST(Cli, VariationReportRecordsSeed) {
    REQUIRE_CLI();
    auto dir = scratch("var");
    write_text(dir / "c.json", R"({"N": 16, "L": 8, "probes": 2, "probe_lmax": 2})");
    ASSERT_EQ(run_cli("variation-check --surface lift4:0.5:round:1 --seed 9 --config " + (dir / "c.json").string() +
                      " --out " + (dir / "o").string()),
              0);
    auto j = read_json_file(dir / "o" / "variation_check.json");
    EXPECT_EQ(j["seed"], 9);
    EXPECT_EQ(j["generator"], "mt19937_64");
    std::string csv = slurp(dir / "o" / "variation_check.csv");
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "surface,probe,formula_value,fd_value,rel_error,observed_order");
}
