#include "dsme/exp/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include <boost/math/distributions/students_t.hpp>

namespace dsme::exp {

namespace {

enum class Phase { Warmup, Measure, Drain, Done };

enum class Fate : std::uint8_t { Pending, Delivered, Dropped };

struct PacketInfo {
    Symbols generated_at = 0;
    NodeAddr origin = 0;
    Fate fate = Fate::Pending;
    bool dropped_queue = false;
};

/// One replication: topology, medium, MAC instances, traffic and metrics.
class Network : public mac::MacObserver {
public:
    Network(const ScenarioConfig& cfg, std::uint64_t seed)
        : cfg_(cfg), topo_(build_topology(cfg.topology, cfg.nodes)), medium_(kernel_, topo_) {
        mac::MacConfig mc;
        mc.scheme = cfg.scheme;
        mc.sf = cfg.sf;
        const int sfs_per_bi = cfg.sf.superframes_per_beacon_interval();
        int ordinal = 0;
        for (int i = 0; i < topo_.n; ++i) {
            mac::NodeRole role;
            role.id = static_cast<NodeAddr>(i);
            role.parent = topo_.parent[i];
            role.children = topo_.children(static_cast<sim::NodeId>(i));
            if (!role.children.empty()) {
                if (ordinal >= sfs_per_bi) {
                    throw InvalidConfig("beacon interval too short for one beacon per coordinator");
                }
                role.beacon_sf = ordinal++;
            }
            macs_.push_back(std::make_unique<mac::DsmeMac>(role, mc, kernel_, medium_, *this, seed));
        }
        medium_.set_handlers([this](sim::NodeId rx, const Frame& f, Symbols start) { macs_[rx]->on_frame(f, start); },
                             [this](sim::NodeId tx, const Frame& f) { macs_[tx]->on_tx_done(f); });
        for (int i = 1; i < topo_.n; ++i) {
            sources_.emplace_back(cfg.tau, cfg.payload, seed, static_cast<std::uint16_t>(i));
        }
        measured_per_node_.assign(topo_.n, 0);
        if (cfg.jammer) {
            sim::JammerConfig j;
            j.interval = from_seconds(cfg.jammer->interval_s);
            j.duration = from_seconds(cfg.jammer->duration_s);
            j.first_start = j.interval;
            medium_.start_jammer(j);
        }
    }

    RunResult run() {
        const Symbols bi = beacon_interval_symbols(cfg_.sf);
        const Symbols msf = multisuperframe_duration_symbols(cfg_.sf);
        const Symbols sf = superframe_duration_symbols(cfg_.sf);
        for (auto& m : macs_) {
            m->start();
        }
        for (int i = 1; i < topo_.n; ++i) {
            schedule_arrival(i);
        }
        Symbols t = 0;
        int bis = 0;
        Symbols drain_end = 0;
        while (phase_ != Phase::Done) {
            t += sf;
            kernel_.run_until(t);
            if (phase_ == Phase::Warmup && t % bi == 0) {
                ++bis;
                if (bis >= cfg_.max_warmup_bis || settled()) {
                    phase_ = Phase::Measure;
                    result_.warmup_end = t;
                    for (int i = 0; i < topo_.n; ++i) {
                        ledger_at_start_.push_back(medium_.ledger(static_cast<sim::NodeId>(i)));
                    }
                }
            }
            if (phase_ == Phase::Measure && nodes_done_ == topo_.n - 1) {
                phase_ = Phase::Drain;
                result_.measure_end = t;
                drain_end = t + 2 * std::max(bi, msf);
            }
            if (phase_ == Phase::Drain && t >= drain_end) {
                phase_ = Phase::Done;
            }
        }
        return finish(t);
    }

    void delivered(NodeAddr, const mac::Packet& p, Symbols now) override {
        auto it = packets_.find(p.uid);
        if (it == packets_.end() || it->second.fate == Fate::Delivered) {
            return;
        }
        it->second.fate = Fate::Delivered;
        const int hops = topo_.hops_to_sink(it->second.origin);
        delay_sum_ += to_seconds(now - it->second.generated_at) / hops;
        ++delay_n_;
    }

    void dropped(NodeAddr, const mac::Packet& p, mac::DropCause cause, Symbols) override {
        auto it = packets_.find(p.uid);
        if (it == packets_.end() || it->second.fate != Fate::Pending) {
            return;
        }
        it->second.fate = Fate::Dropped;
        it->second.dropped_queue = cause == mac::DropCause::Queue;
    }

    void acknowledged(NodeAddr, const mac::Packet& p, Symbols delay) override {
        if (packets_.count(p.uid) == 0) {
            return;
        }
        ack_sum_ += to_seconds(delay);
        ++ack_n_;
    }

private:
    bool settled() const {
        for (int i = 0; i < topo_.n; ++i) {
            const auto& m = *macs_[i];
            if (m.handshake_in_flight()) {
                return false;
            }
            if (i == 0) {
                continue;
            }
            const auto& owned = m.slots().owned();
            const bool has_tx = std::any_of(owned.begin(), owned.end(), [](const mac::OwnedGts& g) {
                return g.desc.kind == GtsKind::Data && g.desc.direction == GtsDirection::Tx;
            });
            if (!has_tx) {
                return false;
            }
        }
        return true;
    }

    void schedule_arrival(int node) {
        auto& src = sources_[node - 1];
        const Symbols gap = src.next_interarrival();
        const int payload = src.next_payload();
        kernel_.schedule_in(gap, static_cast<sim::NodeId>(node), sim::EventKind::AppArrival,
                            [this, node, payload] { arrival(node, payload); });
    }

    void arrival(int node, int payload) {
        if (phase_ == Phase::Drain || phase_ == Phase::Done) {
            return;
        }
        mac::Packet p;
        p.uid = next_uid_++;
        p.origin = static_cast<NodeAddr>(node);
        p.payload_len = payload;
        p.generated_at = kernel_.now();
        if (phase_ == Phase::Measure && measured_per_node_[node] < cfg_.packets_per_node) {
            packets_[p.uid] = PacketInfo{p.generated_at, p.origin};
            if (++measured_per_node_[node] == cfg_.packets_per_node) {
                ++nodes_done_;
            }
        }
        macs_[node]->app_enqueue(p);
        schedule_arrival(node);
    }

    RunResult finish(Symbols t) {
        RunResult& r = result_;
        r.end = t;
        r.generated = static_cast<std::int64_t>(packets_.size());
        for (const auto& [uid, info] : packets_) {
            switch (info.fate) {
                case Fate::Delivered: ++r.delivered; break;
                case Fate::Dropped: (info.dropped_queue ? r.dropped_queue : r.dropped_retry) += 1; break;
                case Fate::Pending: ++r.residual; break;
            }
        }
        r.pdr = r.generated > 0 ? static_cast<double>(r.delivered) / static_cast<double>(r.generated) : 0.0;
        r.data_delay_hop = delay_n_ > 0 ? delay_sum_ / static_cast<double>(delay_n_) : 0.0;
        r.ack_delay = ack_n_ > 0 ? ack_sum_ / static_cast<double>(ack_n_) : 0.0;
        r.ack_samples = ack_n_;
        for (int i = 0; i < topo_.n; ++i) {
            const sim::RadioLedger now = medium_.ledger(static_cast<sim::NodeId>(i));
            const sim::RadioLedger& s = ledger_at_start_[i];
            r.radio.tx += now.tx - s.tx;
            r.radio.rx += now.rx - s.rx;
            r.radio.idle += now.idle - s.idle;
            r.radio.off += now.off - s.off;
            const auto& c = macs_[i]->counters();
            r.counters.data_frames_sent += c.data_frames_sent;
            r.counters.gack_frames_sent += c.gack_frames_sent;
            r.counters.beacons_sent += c.beacons_sent;
            r.counters.acks_sent += c.acks_sent;
            r.counters.handshakes_started += c.handshakes_started;
            r.counters.handshakes_succeeded += c.handshakes_succeeded;
            r.counters.cap_access_failures += c.cap_access_failures;
            r.counters.duplicates_received += c.duplicates_received;
            r.counters.rollbacks += c.rollbacks;
            r.counters.relocations += c.relocations;
        }
        r.events = kernel_.dispatched();
        r.trace_digest = kernel_.trace_digest();
        return r;
    }

    const ScenarioConfig& cfg_;
    sim::Kernel kernel_;
    sim::Topology topo_;
    sim::Medium medium_;
    std::vector<std::unique_ptr<mac::DsmeMac>> macs_;
    std::vector<PoissonSource> sources_;
    std::unordered_map<std::uint64_t, PacketInfo> packets_;
    std::vector<int> measured_per_node_;
    std::vector<sim::RadioLedger> ledger_at_start_;
    int nodes_done_ = 0;
    std::uint64_t next_uid_ = 1;
    Phase phase_ = Phase::Warmup;
    double delay_sum_ = 0;
    std::int64_t delay_n_ = 0;
    double ack_sum_ = 0;
    std::int64_t ack_n_ = 0;
    RunResult result_;
};

std::string format_double(double v) {
    if (std::isnan(v)) {
        return "nan";
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double d = 0;
    try {
        d = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != v.size()) {
        throw std::invalid_argument("bad number for " + key + ": " + v);
    }
    return d;
}

long long parse_int(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    long long x = 0;
    try {
        x = std::stoll(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != v.size()) {
        throw std::invalid_argument("bad integer for " + key + ": " + v);
    }
    return x;
}

std::vector<double> parse_list(const std::string& key, const std::string& v) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        out.push_back(parse_double(key, trim(item)));
    }
    return out;
}

}  // namespace

void ScenarioConfig::validate() const {
    sf.validate(scheme == mac::AckScheme::GackGts);
    if (nodes < 2) {
        throw std::invalid_argument("node count must be at least 2");
    }
    if (!(tau > 0)) {
        throw std::invalid_argument("tau must be positive");
    }
    if (payload.min < 1 || payload.max > kMaxMacPayload || payload.min > payload.max) {
        throw std::invalid_argument("payload must lie within [1, 116]");
    }
    if (packets_per_node < 1 || replications < 1) {
        throw std::invalid_argument("packets_per_node and replications must be positive");
    }
    if (jammer && !(jammer->interval_s > jammer->duration_s && jammer->duration_s > 0)) {
        throw std::invalid_argument("jammer needs interval > duration > 0");
    }
}

std::uint64_t replication_seed(std::uint64_t base, int r) {
    return base * 1000003ULL + static_cast<std::uint64_t>(r);
}

RunResult run_once(const ScenarioConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Network net(cfg, seed);
    RunResult r = net.run();
    r.seed = seed;
    return r;
}

std::pair<double, double> mean_ci95(const std::vector<double>& xs) {
    if (xs.empty()) {
        return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    }
    const double n = static_cast<double>(xs.size());
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    if (xs.size() < 2) {
        return {mean, std::numeric_limits<double>::quiet_NaN()};
    }
    double ss = 0;
    for (double x : xs) {
        ss += (x - mean) * (x - mean);
    }
    const double sd = std::sqrt(ss / (n - 1));
    const boost::math::students_t dist(n - 1);
    const double t = boost::math::quantile(boost::math::complement(dist, 0.025));
    return {mean, t * sd / std::sqrt(n)};
}

MetricsReport run(const ScenarioConfig& cfg) {
    MetricsReport rep;
    rep.scheme = cfg.scheme;
    rep.tau = cfg.tau;
    rep.jam_interval = cfg.jammer ? cfg.jammer->interval_s : 0.0;
    rep.seed = cfg.seed;
    std::vector<double> pdr, delay, ack;
    double dq = 0, dr = 0;
    sim::RadioLedger radio;
    for (int r = 0; r < cfg.replications; ++r) {
        RunResult res = run_once(cfg, replication_seed(cfg.seed, r));
        pdr.push_back(res.pdr);
        delay.push_back(res.data_delay_hop);
        ack.push_back(res.ack_delay);
        dq += static_cast<double>(res.dropped_queue);
        dr += static_cast<double>(res.dropped_retry);
        radio += res.radio;
        rep.runs.push_back(std::move(res));
    }
    const double reps = cfg.replications;
    std::tie(rep.pdr, rep.pdr_ci) = mean_ci95(pdr);
    std::tie(rep.data_delay_hop, rep.data_delay_ci) = mean_ci95(delay);
    std::tie(rep.ack_delay, rep.ack_delay_ci) = mean_ci95(ack);
    rep.drops_queue = dq / reps;
    rep.drops_retry = dr / reps;
    const double per_node = reps * cfg.nodes;
    rep.tx_time = to_seconds(radio.tx) / per_node;
    rep.rx_time = to_seconds(radio.rx) / per_node;
    rep.idle_time = to_seconds(radio.idle) / per_node;
    rep.off_time = to_seconds(radio.off) / per_node;
    return rep;
}

const std::vector<mac::AckScheme>& all_schemes() {
    static const std::vector<mac::AckScheme> s{mac::AckScheme::RegularAck, mac::AckScheme::GackBeacon,
                                               mac::AckScheme::GackCap, mac::AckScheme::GackGts};
    return s;
}

std::vector<MetricsReport> sweep_tau(const ScenarioConfig& cfg, const std::vector<double>& taus,
                                     const std::vector<mac::AckScheme>& schemes) {
    if (taus.empty() || schemes.empty()) {
        throw std::invalid_argument("empty sweep");
    }
    std::vector<MetricsReport> out;
    for (double tau : taus) {
        for (auto s : schemes) {
            ScenarioConfig c = cfg;
            c.tau = tau;
            c.scheme = s;
            out.push_back(run(c));
        }
    }
    return out;
}

std::vector<MetricsReport> sweep_jam(const ScenarioConfig& cfg, const std::vector<double>& intervals,
                                     const std::vector<mac::AckScheme>& schemes) {
    if (intervals.empty() || schemes.empty()) {
        throw std::invalid_argument("empty sweep");
    }
    std::vector<MetricsReport> out;
    for (double interval : intervals) {
        for (auto s : schemes) {
            ScenarioConfig c = cfg;
            c.tau = 1.0;
            c.scheme = s;
            JammerSpec j;
            j.interval_s = interval;
            j.duration_s = cfg.jam_duration;
            c.jammer = j;
            out.push_back(run(c));
        }
    }
    return out;
}

const char* const kCsvHeader =
    "scheme,tau,jam_interval,pdr,pdr_ci,data_delay_hop,data_delay_ci,ack_delay,ack_delay_ci,drops_queue,"
    "drops_retry,tx_time,rx_time,idle_time,off_time,seed";

std::string csv_row(const MetricsReport& r) {
    std::string s = mac::to_string(r.scheme);
    for (double v : {r.tau, r.jam_interval, r.pdr, r.pdr_ci, r.data_delay_hop, r.data_delay_ci, r.ack_delay,
                     r.ack_delay_ci, r.drops_queue, r.drops_retry, r.tx_time, r.rx_time, r.idle_time, r.off_time}) {
        s += ',';
        s += format_double(v);
    }
    s += ',';
    s += std::to_string(r.seed);
    return s;
}

void write_csv(std::ostream& os, const std::vector<MetricsReport>& rows) {
    os << kCsvHeader << '\n';
    for (const auto& r : rows) {
        os << csv_row(r) << '\n';
    }
}

ScenarioConfig parse_config(const std::string& text) {
    ScenarioConfig c;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    std::optional<double> jam_duration;
    while (std::getline(ss, line)) {
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos) {
            line.erase(h);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("line " + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string v = trim(line.substr(eq + 1));
        if (key == "scheme") {
            auto s = mac::parse_scheme(v);
            if (!s) throw std::invalid_argument("unknown scheme: " + v);
            c.scheme = *s;
        } else if (key == "so") {
            c.sf.so = static_cast<int>(parse_int(key, v));
        } else if (key == "mo") {
            c.sf.mo = static_cast<int>(parse_int(key, v));
        } else if (key == "bo") {
            c.sf.bo = static_cast<int>(parse_int(key, v));
        } else if (key == "gao") {
            c.sf.gao = static_cast<int>(parse_int(key, v));
        } else if (key == "topology") {
            auto t = parse_topology(v);
            if (!t) throw std::invalid_argument("unknown topology: " + v);
            c.topology = *t;
        } else if (key == "nodes") {
            c.nodes = static_cast<int>(parse_int(key, v));
        } else if (key == "tau") {
            c.tau = parse_double(key, v);
        } else if (key == "taus") {
            c.taus = parse_list(key, v);
        } else if (key == "payload") {
            const auto dash = v.find('-');
            if (dash == std::string::npos) {
                c.payload.min = c.payload.max = static_cast<int>(parse_int(key, v));
            } else {
                c.payload.min = static_cast<int>(parse_int(key, trim(v.substr(0, dash))));
                c.payload.max = static_cast<int>(parse_int(key, trim(v.substr(dash + 1))));
            }
        } else if (key == "jam_interval") {
            const double x = parse_double(key, v);
            if (x > 0) {
                c.jammer = c.jammer.value_or(JammerSpec{});
                c.jammer->interval_s = x;
            } else {
                c.jammer.reset();
            }
        } else if (key == "jam_duration") {
            jam_duration = parse_double(key, v);
        } else if (key == "jam_intervals") {
            c.jam_intervals = parse_list(key, v);
        } else if (key == "seed") {
            c.seed = static_cast<std::uint64_t>(parse_int(key, v));
        } else if (key == "packets_per_node") {
            c.packets_per_node = static_cast<int>(parse_int(key, v));
        } else if (key == "replications") {
            c.replications = static_cast<int>(parse_int(key, v));
        } else if (key == "max_warmup_bis") {
            c.max_warmup_bis = static_cast<int>(parse_int(key, v));
        } else {
            throw std::invalid_argument("line " + std::to_string(lineno) + ": unknown key " + key);
        }
    }
    if (jam_duration) {
        c.jam_duration = *jam_duration;
    }
    if (c.jammer) {
        c.jammer->duration_s = c.jam_duration;
    }
    return c;
}

ScenarioConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open config " + path);
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

}  // namespace dsme::exp
