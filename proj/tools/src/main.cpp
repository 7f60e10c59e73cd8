#include "flagifs_cli/commands.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>

int main(int argc, char** argv)
{
    using namespace flagifs::cli;

    CLI::App app{"flagifs: flag-bundle experiments for iterated function systems"};
    app.require_subcommand(1);

    struct Flags {
        std::string config;
        std::uint64_t seed = 0;
        std::string out;
        unsigned threads = 0;
        std::string format;
    };
    Flags flags;

    const std::map<std::string, std::string> blurbs{
        {"check", "verify maneuverability, positive minimality and an attracting periodic point"},
        {"exponents", "estimate Lyapunov and fibred flag exponents along a random or periodic word"},
        {"prescribe", "build a word whose running log-diagonals track a prescribed vector"},
        {"zero-orbit", "build an orbit with all exponents zero and report its block coverage"},
        {"tour", "tour a density mesh and return to a target ball"},
        {"bootstrap", "iterate the improvement step from a periodic record"},
    };
    for (const auto& name : command_names()) {
        const auto blurb = blurbs.find(name);
        CLI::App* sub = app.add_subcommand(name, blurb == blurbs.end() ? std::string{} : blurb->second);
        sub->add_option("--config", flags.config, "configuration file (TOML or JSON)")->required();
        sub->add_option("--seed", flags.seed, "64-bit seed, overrides [run].seed");
        sub->add_option("--out", flags.out, "output directory, overrides [run].out");
        sub->add_option("--threads", flags.threads, "worker threads (0 = all cores)");
        sub->add_option("--format", flags.format, "json, csv or both")->check(CLI::IsMember({"json", "csv", "both"}));
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kSuccess : kUsageError;
    }

    for (const auto& name : command_names()) {
        const CLI::App* sub = app.get_subcommand(name);
        if (!sub->parsed()) continue;
        RunOptions opt;
        opt.config = flags.config;
        if (sub->count("--seed")) opt.seed = flags.seed;
        if (sub->count("--out")) opt.out = flags.out;
        if (sub->count("--threads")) opt.threads = flags.threads;
        if (sub->count("--format")) opt.format = flags.format;
        return run_command(name, opt, std::cerr);
    }
    return kUsageError;
}
