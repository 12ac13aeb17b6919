// Command-line front end: scenario runs and sweeps, theory tables, topology dumps.
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "dsme/analytics.hpp"
#include "dsme/exp/experiment.hpp"

namespace {

int write_output(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return 0;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        std::cerr << "cannot write " << path << "\n";
        return 1;
    }
    out << text;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DSME group acknowledgement simulator"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "Run a scenario or sweep and emit CSV");
    std::string config_path;
    std::string scheme_name;
    std::optional<double> tau;
    std::optional<double> jam_interval;
    std::optional<std::uint64_t> seed;
    std::optional<int> packets;
    std::optional<int> replications;
    bool jam_sweep = false;
    std::string out_path;
    run->add_option("--config", config_path, "Scenario file (key = value)")->required()->check(CLI::ExistingFile);
    run->add_option("--scheme", scheme_name, "ack | gack-beacon | gack-cap | gack-gts (default: all four)");
    run->add_option("--tau", tau, "Mean packet interval in seconds (overrides the tau sweep)");
    run->add_option("--jam-interval", jam_interval, "Jammer interval in seconds (0 disables)");
    run->add_option("--seed", seed, "Base seed");
    run->add_option("--packets", packets, "Measured packets per node");
    run->add_option("--replications", replications, "Replications per point");
    run->add_flag("--jam-sweep", jam_sweep, "Sweep the jammer interval list at tau = 1 s");
    run->add_option("--out", out_path, "Output CSV (default stdout)");

    auto* theory = app.add_subcommand("theory", "Analytical throughput and goodput table");
    std::string theory_out;
    int theory_mo = 8;
    theory->add_option("--out", theory_out, "Output CSV (default stdout)");
    theory->add_option("--mo", theory_mo, "Multisuperframe order")->check(CLI::Range(3, 14));

    auto* topo = app.add_subcommand("topology", "Print a generated topology");
    std::string kind_name = "line";
    int n = 10;
    bool dump = false;
    topo->add_option("--kind", kind_name, "line | star | tree");
    topo->add_option("--n", n, "Node count");
    topo->add_flag("--dump", dump, "Print the adjacency list");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            dsme::exp::ScenarioConfig cfg = dsme::exp::load_config(config_path);
            if (seed) cfg.seed = *seed;
            if (packets) cfg.packets_per_node = *packets;
            if (replications) cfg.replications = *replications;
            if (jam_interval) {
                if (*jam_interval > 0) {
                    dsme::exp::JammerSpec j;
                    j.interval_s = *jam_interval;
                    j.duration_s = cfg.jam_duration;
                    cfg.jammer = j;
                } else {
                    cfg.jammer.reset();
                }
            }
            std::vector<dsme::mac::AckScheme> schemes = dsme::exp::all_schemes();
            if (!scheme_name.empty()) {
                auto s = dsme::mac::parse_scheme(scheme_name);
                if (!s) {
                    std::cerr << "unknown scheme " << scheme_name << "\n";
                    return 2;
                }
                schemes = {*s};
            }
            std::vector<dsme::exp::MetricsReport> rows;
            if (jam_sweep) {
                if (cfg.jam_intervals.empty()) {
                    std::cerr << "config has no jam_intervals\n";
                    return 2;
                }
                rows = dsme::exp::sweep_jam(cfg, cfg.jam_intervals, schemes);
            } else {
                std::vector<double> taus = cfg.taus;
                if (tau || taus.empty()) {
                    taus = {tau.value_or(cfg.tau)};
                }
                rows = dsme::exp::sweep_tau(cfg, taus, schemes);
            }
            std::ostringstream os;
            dsme::exp::write_csv(os, rows);
            return write_output(out_path, os.str());
        }
        if (*theory) {
            return write_output(theory_out, dsme::analytics::to_csv(dsme::analytics::sweep(
                                                dsme::analytics::default_grid(theory_mo))));
        }
        if (*topo) {
            auto kind = dsme::exp::parse_topology(kind_name);
            if (!kind) {
                std::cerr << "unknown topology " << kind_name << "\n";
                return 2;
            }
            const auto t = dsme::exp::build_topology(*kind, n);
            std::cout << dsme::exp::to_string(*kind) << " n=" << t.n << " depth=" << t.depth() << "\n";
            if (dump) {
                std::cout << t.dump();
            }
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
