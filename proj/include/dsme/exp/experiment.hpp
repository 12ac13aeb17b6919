#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dsme/exp/topologies.hpp"
#include "dsme/exp/traffic.hpp"
#include "dsme/mac/mac.hpp"

namespace dsme::exp {

struct JammerSpec {
    double interval_s = 1.0;
    double duration_s = 312.0 / kSymbolsPerSecond;  // ~5 ms
};

struct ScenarioConfig {
    mac::AckScheme scheme = mac::AckScheme::RegularAck;
    SuperframeConfig sf;
    TopologyKind topology = TopologyKind::Line;
    int nodes = 10;
    double tau = 1.0;  // seconds
    PayloadSpec payload;
    std::optional<JammerSpec> jammer;
    double jam_duration = JammerSpec{}.duration_s;  // used by jam sweeps
    std::uint64_t seed = 1;
    int packets_per_node = 1000;
    int replications = 10;
    int max_warmup_bis = 8;

    // Sweep grids used by the CLI when no single point is forced.
    std::vector<double> taus;
    std::vector<double> jam_intervals;

    /// Throws std::invalid_argument on out-of-range fields.
    void validate() const;
};

/// Outcome of one replication.
struct RunResult {
    std::uint64_t seed = 0;
    std::int64_t generated = 0;
    std::int64_t delivered = 0;
    std::int64_t dropped_queue = 0;
    std::int64_t dropped_retry = 0;
    std::int64_t residual = 0;
    double pdr = 0;
    double data_delay_hop = 0;  // seconds, mean over delivered packets
    double ack_delay = 0;       // seconds, mean over acknowledged transmissions
    std::int64_t ack_samples = 0;
    sim::RadioLedger radio;     // summed over nodes during measurement
    Symbols warmup_end = 0;
    Symbols measure_end = 0;
    Symbols end = 0;
    std::uint64_t events = 0;
    std::uint64_t trace_digest = 0;
    mac::MacCounters counters;  // summed over nodes
};

struct MetricsReport {
    mac::AckScheme scheme = mac::AckScheme::RegularAck;
    double tau = 0;
    double jam_interval = 0;  // 0 when no jammer
    double pdr = 0;
    double pdr_ci = 0;
    double data_delay_hop = 0;
    double data_delay_ci = 0;
    double ack_delay = 0;
    double ack_delay_ci = 0;
    double drops_queue = 0;  // mean per replication
    double drops_retry = 0;
    // Mean seconds per node during the measurement phase.
    double tx_time = 0;
    double rx_time = 0;
    double idle_time = 0;
    double off_time = 0;
    std::uint64_t seed = 0;
    std::vector<RunResult> runs;
};

/// Seed of replication r; independent of the scheme.
std::uint64_t replication_seed(std::uint64_t base, int r);

RunResult run_once(const ScenarioConfig& cfg, std::uint64_t seed);
MetricsReport run(const ScenarioConfig& cfg);

/// Mean and 95% Student-t half-width; the half-width is NaN below two samples.
std::pair<double, double> mean_ci95(const std::vector<double>& xs);

std::vector<MetricsReport> sweep_tau(const ScenarioConfig& cfg, const std::vector<double>& taus,
                                     const std::vector<mac::AckScheme>& schemes);
std::vector<MetricsReport> sweep_jam(const ScenarioConfig& cfg, const std::vector<double>& intervals,
                                     const std::vector<mac::AckScheme>& schemes);

const std::vector<mac::AckScheme>& all_schemes();

extern const char* const kCsvHeader;
std::string csv_row(const MetricsReport& r);
void write_csv(std::ostream& os, const std::vector<MetricsReport>& rows);

/// Flat `key = value` text, `#` starts a comment.
ScenarioConfig parse_config(const std::string& text);
ScenarioConfig load_config(const std::string& path);

}  // namespace dsme::exp
