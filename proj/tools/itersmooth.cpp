// itersmooth: generate a synthetic benchmark, run the iterative smoother on a
// recorded dataset, and evaluate a finished run against ground truth.

#include <CLI11.hpp>

#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "itersmooth/cli.hpp"

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> lag;
    std::optional<double> chi2_p;
    std::optional<int> max_iters;
    std::optional<std::string> data_dir;
    std::optional<std::string> output_dir;
};

void add_common(CLI::App* cmd, Options& o) {
    cmd->add_option("--config", o.config, "JSON run configuration")->required();
    cmd->add_option("--seed", o.seed, "override rng_seed");
    cmd->add_option("--lag", o.lag, "override lag_steps");
    cmd->add_option("--chi2-p", o.chi2_p, "override chi2_p");
    cmd->add_option("--max-iters", o.max_iters, "override max_iterations");
    cmd->add_option("--data-dir", o.data_dir, "override data_dir");
    cmd->add_option("--output-dir", o.output_dir, "override output_dir");
}

itersmooth::cli::RunConfig resolve(const Options& o) {
    auto cfg = itersmooth::cli::load_config(o.config);
    itersmooth::cli::Overrides ov;
    ov.seed = o.seed;
    ov.lag = o.lag;
    ov.chi2_p = o.chi2_p;
    ov.max_iterations = o.max_iters;
    if (o.data_dir) ov.data_dir = *o.data_dir;
    if (o.output_dir) ov.output_dir = *o.output_dir;
    itersmooth::cli::apply_overrides(cfg, ov);
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    using namespace itersmooth::cli;

    CLI::App app{"Iterative fixed-lag smoothing with outlier re-classification"};
    app.require_subcommand(1);
    Options o;
    auto* gen = app.add_subcommand("generate", "write a synthetic benchmark dataset to data_dir");
    auto* run = app.add_subcommand("run", "smooth data_dir and write per-pass results to output_dir");
    auto* eval = app.add_subcommand("eval", "score the run in output_dir against data_dir/truth.csv");
    for (auto* cmd : {gen, run, eval}) add_common(cmd, o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitError;
    }

    try {
        const RunConfig cfg = resolve(o);
        if (gen->parsed()) return cmd_generate(cfg);
        if (run->parsed()) {
            const int rc = cmd_run(cfg);
            if (rc == kExitDiverged) std::cerr << "itersmooth: divergence detected, see report.json\n";
            if (rc == kExitNotConverged) std::cerr << "itersmooth: inlier set did not converge\n";
            return rc;
        }
        return cmd_eval(cfg);
    } catch (const std::exception& e) {
        std::cerr << "itersmooth: " << e.what() << "\n";
        return kExitError;
    }
}
