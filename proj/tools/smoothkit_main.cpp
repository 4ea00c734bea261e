// smoothkit: run teacher-student experiments, (p, m) sweeps, and smoothing reports.

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "smoothkit/errors.hpp"
#include "smoothkit/harness.hpp"

namespace hk = smoothkit::harness;

namespace {

int do_run(const std::string& config_path, const hk::Overrides& overrides) {
    auto cfg = hk::load_config(config_path);
    hk::apply_overrides(cfg, overrides, std::getenv("SMOOTHKIT_SEED"));
    int status = 0;
    for (const auto& rec : hk::run_experiment(cfg)) {
        if (rec.ok) {
            std::cout << "seed " << rec.seed << ": teacher accuracy "
                      << (rec.final_teacher_accuracy ? std::to_string(*rec.final_teacher_accuracy) : "n/a") << " -> "
                      << rec.dir.string() << "\n";
        } else {
            std::cerr << "seed " << rec.seed << ": " << rec.error << "\n";
            status = 2;
        }
    }
    return status;
}

int do_sweep(const std::string& config_path, unsigned jobs) {
    auto cfg = hk::load_config(config_path);
    hk::apply_overrides(cfg, {}, std::getenv("SMOOTHKIT_SEED"));
    const auto cells = hk::run_sweep(cfg, jobs);
    std::cout << hk::sweep_to_csv(cells);
    for (const auto& c : cells) {
        for (const auto& r : c.runs) {
            if (!r.ok) {
                std::cerr << hk::cell_name(c.p, c.m) << " seed " << r.seed << ": " << r.error << "\n";
                return 2;
            }
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Teacher-model smoothing experiments (TMA / SE / STS)"};
    app.require_subcommand(1);

    std::string run_config;
    hk::Overrides overrides;
    std::string out_dir;
    auto* run = app.add_subcommand("run", "Run one experiment per configured seed");
    run->add_option("--config", run_config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("--seed", overrides.seed, "Override the seed list with a single seed");
    run->add_option("--epochs", overrides.epochs, "Override the epoch count");
    run->add_option("--p", overrides.p, "Preserving probability");
    run->add_option("--m", overrides.m, "TMA momentum");
    run->add_option("--method", overrides.method, "Smoothing method")
        ->check(CLI::IsMember({"none", "tma", "se", "sts"}));
    run->add_option("--granularity", overrides.granularity, "Slot granularity")->check(CLI::IsMember({"lw", "cw", "nw"}));
    run->add_option("--out", out_dir, "Output directory");

    std::string sweep_config;
    unsigned jobs = 1;
    auto* sweep = app.add_subcommand("sweep", "Run the (p, m) grid from the config's sweep section");
    sweep->add_option("--config", sweep_config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sweep->add_option("--jobs", jobs, "Parallel workers")->check(CLI::PositiveNumber);

    std::string report_dir;
    std::string baseline_dir;
    smoothkit::diag::ReportWindow window;
    auto* report = app.add_subcommand("report", "Summarize adjacent-epoch MSE diagnostics of a finished run");
    report->add_option("--run", report_dir, "Run directory containing metrics.csv")->required();
    report->add_option("--baseline", baseline_dir, "Paired run directory for MSE ratios");
    report->add_option("--from", window.mean_from, "First epoch of the averaging window");
    report->add_option("--to", window.mean_to, "Last epoch of the averaging window");
    report->add_option("--slope-from", window.slope_from, "First epoch of the log-slope fit");
    report->add_option("--slope-to", window.slope_to, "Last epoch of the log-slope fit");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            if (!out_dir.empty()) overrides.out = out_dir;
            return do_run(run_config, overrides);
        }
        if (*sweep) return do_sweep(sweep_config, jobs);
        if (*report) {
            std::optional<std::filesystem::path> baseline;
            if (!baseline_dir.empty()) baseline = baseline_dir;
            std::cout << hk::report_run(report_dir, baseline, window);
            return 0;
        }
    } catch (const smoothkit::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
