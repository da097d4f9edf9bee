#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "wlab/commands.hpp"

namespace {

struct Flags {
    std::optional<std::string> surface, energy, schedule, out, config;
    std::optional<double> sigma, tol;
    std::optional<int> L, Lidx;
    std::optional<std::uint64_t> seed;
};

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) throw wlab::ConfigError("empty entry in list '" + s + "'");
        std::size_t used = 0;
        double x = 0;
        try {
            x = std::stod(tok, &used);
        } catch (const std::exception&) {
            throw wlab::ConfigError("not a number: '" + tok + "'");
        }
        if (used != tok.size()) throw wlab::ConfigError("not a number: '" + tok + "'");
        v.push_back(x);
    }
    if (v.empty()) throw wlab::ConfigError("empty list");
    return v;
}

void add_flags(CLI::App* sub, Flags& f) {
    sub->add_option("--surface", f.surface, "test surface, e.g. round:1, ellipsoid:1,1,1.5, branched_cover:2");
    sub->add_option("--energy", f.energy, "energy for index")->check(CLI::IsMember({"W", "CW", "Wsigma"}));
    sub->add_option("--sigma", f.sigma, "viscosity parameter");
    sub->add_option("--schedule", f.schedule, "comma separated decreasing sigma values");
    sub->add_option("--L", f.L, "band limit of conformal factors");
    sub->add_option("--Lidx", f.Lidx, "band of the index basis");
    sub->add_option("--tol", f.tol, "gradient tolerance");
    sub->add_option("--out", f.out, "output directory");
    sub->add_option("--seed", f.seed, "seed of the probe generator");
    sub->add_option("--config", f.config, "JSON config file");
}

wlab::RunConfig resolve(const Flags& f) {
    wlab::RunConfig cfg;
    if (f.config) cfg.merge_json(wlab::read_json_file(*f.config));
    if (const char* env = std::getenv(wlab::kOutDirEnv)) {
        if (*env) cfg.out = env;
    }
    if (f.surface) cfg.surface = *f.surface;
    if (f.energy) cfg.energy = *f.energy;
    if (f.sigma) cfg.sigma = *f.sigma;
    if (f.schedule) cfg.schedule = parse_list(*f.schedule);
    if (f.L) cfg.L = *f.L;
    if (f.Lidx) cfg.Lidx = *f.Lidx;
    if (f.tol) cfg.tol = *f.tol;
    if (f.out) cfg.out = *f.out;
    if (f.seed) cfg.seed = *f.seed;
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"wlab: Willmore energy laboratory on spheres"};
    app.require_subcommand(1);
    Flags flags;
    for (auto& name : wlab::kCommands) add_flags(app.add_subcommand(name), flags);
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return wlab::kExitUsage;
    }
    std::string cmd = app.get_subcommands().front()->get_name();
    try {
        return wlab::run_command(cmd, resolve(flags));
    } catch (const std::exception& e) {
        int code = wlab::exit_status_for(e);
        std::cerr << "wlab " << cmd << ": " << (code == wlab::kExitUsage ? "usage error: " : "numerical failure: ")
                  << e.what() << "\n";
        return code;
    }
}
