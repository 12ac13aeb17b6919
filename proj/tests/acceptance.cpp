// Acceptance run: one PASS/FAIL line per criterion. Exit status is non-zero
// only when the harness itself breaks, so a failed criterion stays visible
// without masking the rest of the report.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "dsme/analytics.hpp"
#include "dsme/exp/experiment.hpp"
#include "dsme/frames.hpp"
#include "unit/mac_harness.hpp"

using namespace dsme;
using namespace dsme::analytics;
using mac::AckScheme;

namespace {

constexpr int kPackets = 300;
constexpr int kReplications = 5;

int failures = 0;

void report(int n, bool ok, const std::string& detail) {
    std::printf("criterion %2d: %s  %s\n", n, ok ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
    failures += ok ? 0 : 1;
}

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

// ---------------------------------------------------------------------------

int greedy_pack(bool immediate_ack, int so, int p) {
    const int slot = 60 << so;
    std::vector<char> line(static_cast<std::size_t>(slot), 0);
    const int frame = 34 + 2 * p;
    const int spacing = p > 18 ? 40 : 12;
    int t = 0;
    int placed = 0;
    for (;;) {
        const int need = frame + (immediate_ack ? 12 + 22 + spacing : spacing - 12);
        if (t + need > slot) {
            return placed;
        }
        for (int s = t; s < t + need; ++s) {
            if (line[s]++ != 0) {
                return -1;
            }
        }
        t += need;
        ++placed;
    }
}

void criterion1() {
    const auto t0 = std::chrono::steady_clock::now();
    int mismatches = 0;
    for (int so = 3; so <= 10; ++so) {
        for (int p = 1; p <= 116; ++p) {
            mismatches += packets_per_gts(TheoryScheme::RegularAck, so, p) != greedy_pack(true, so, p);
            mismatches += packets_per_gts(TheoryScheme::Gack, so, p) != greedy_pack(false, so, p);
        }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const int a = packets_per_gts(TheoryScheme::RegularAck, 3, 1);
    const int g = packets_per_gts(TheoryScheme::Gack, 3, 1);
    report(1, a == 5 && g == 13 && mismatches == 0 && secs < 1.0,
           "SO=3 p=1: " + std::to_string(a) + "/" + std::to_string(g) + ", mismatches " +
               std::to_string(mismatches) + ", " + fmt("%.3f s", secs));
}

void criterion2() {
    auto ratio = [](int so) {
        return max_goodput(TheoryScheme::Gack, so, so).value() / max_goodput(TheoryScheme::RegularAck, so, so).value();
    };
    const double r3 = ratio(3);
    const double r8 = ratio(8);
    bool flat = true;
    for (int so = 9; so <= 14; ++so) {
        flat = flat && std::abs(ratio(so) - r8) < 0.005;
    }
    const bool ok = std::abs(r3 - 1.35) <= 0.01 && std::abs(r8 - 1.16) <= 0.01 && std::abs(r3 - 1.30) <= 0.05 &&
                    std::abs(r8 - 1.17) <= 0.05 && flat;
    report(2, ok, fmt("ratio SO=3 %.4f", r3) + fmt(", SO=8 %.4f", r8) + (flat ? ", flat above 8" : ", not flat"));
}

void criterion3() {
    bool below_gack = true;
    for (int so = 3; so <= 8; ++so) {
        for (int p = 1; p <= 116; ++p) {
            below_gack = below_gack &&
                         max_throughput({TheoryScheme::GackIeee, so, 8, p}) < max_throughput({TheoryScheme::Gack, so, 8, p});
        }
    }
    auto beats = [](int p) {
        return max_throughput({TheoryScheme::GackIeee, 3, 8, p}) > max_throughput({TheoryScheme::RegularAck, 3, 8, p});
    };
    bool grid_ok = true;
    for (int p : {1, 25, 50, 75, 100, 116}) {
        grid_ok = grid_ok && beats(p) == (p == 1);
    }
    int off_grid = 0;
    for (int p = 2; p <= 116; ++p) {
        off_grid += beats(p);
    }
    report(3, below_gack && grid_ok,
           std::string("below GACK everywhere: ") + (below_gack ? "yes" : "no") + "; beats regular on payload grid only at p=1: " +
               (grid_ok ? "yes" : "no") + "; off-grid payloads also beating regular: " + std::to_string(off_grid));
}

void criterion4() {
    std::mt19937_64 rng(20240611);
    std::uniform_int_distribution<int> count(0, 12), len(1, 20), byte(0, 255), addr(0, 0xFFFF);
    int bad = 0;
    for (int i = 0; i < 10000; ++i) {
        GackBody b;
        const int n = count(rng);
        for (int k = 0; k < n; ++k) {
            GackPayload p;
            p.node_addr = static_cast<NodeAddr>(addr(rng));
            p.base_seq = static_cast<std::uint8_t>(byte(rng));
            p.bitmap.resize(static_cast<std::size_t>(len(rng)));
            for (auto& o : p.bitmap) {
                o = static_cast<std::uint8_t>(byte(rng));
            }
            b.payloads.push_back(std::move(p));
        }
        const auto wire = encode_gack(b);
        bad += !(wire.size() == encoded_size(b) && decode_gack(wire) == b);
    }

    int golden_bad = 0;
    std::ifstream in(std::string(GOLDEN_DIR) + "/gack_vectors.txt");
    std::string line;
    int vectors = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') {
            continue;
        }
        std::istringstream ls(line);
        std::string name, tok, hex;
        ls >> name;
        while (ls >> tok) {
            hex += tok;
        }
        std::vector<std::uint8_t> bytes;
        for (std::size_t i = 0; i + 1 < hex.size(); i += 2) {
            bytes.push_back(static_cast<std::uint8_t>(std::stoi(hex.substr(i, 2), nullptr, 16)));
        }
        ++vectors;
        try {
            golden_bad += encode_gack(decode_gack(bytes)) != bytes;
        } catch (const std::exception&) {
            ++golden_bad;
        }
    }

    using K = GackDecodeError::Kind;
    const std::vector<std::pair<std::vector<std::uint8_t>, K>> malformed = {
        {{}, K::Truncated},
        {{0x01, 0x02}, K::Truncated},
        {{0x01, 0x02, 0x01, 0x02, 0x05, 0xa0}, K::Truncated},
        {{0x01, 0x02, 0x01, 0x00, 0x05}, K::EmptyBitmap},
        {{0x00, 0x77}, K::CountMismatch},
        {{0x01, 0x02, 0x01, 0x01, 0x05, 0xa0, 0x00}, K::CountMismatch},
    };
    int wrong_kind = 0;
    for (const auto& [bytes, kind] : malformed) {
        try {
            decode_gack(bytes);
            ++wrong_kind;
        } catch (const GackDecodeError& e) {
            wrong_kind += e.kind() != kind;
        }
    }
    report(4, bad == 0 && vectors >= 4 && golden_bad == 0 && wrong_kind == 0,
           "round-trip failures " + std::to_string(bad) + "/10000, golden " + std::to_string(vectors - golden_bad) +
               "/" + std::to_string(vectors) + ", malformed misclassified " + std::to_string(wrong_kind));
}

// ---------------------------------------------------------------------------
// Scenario sweeps

struct Point {
    double pdr = 0, pdr_ci = 0, delay = 0, ack = 0;
};
using Sweep = std::map<double, std::map<AckScheme, Point>>;  // tau -> scheme -> point

std::vector<exp::RunResult> all_runs;

Sweep run_sweep(const char* file, double* seconds) {
    exp::ScenarioConfig cfg = exp::load_config(std::string(CONFIG_DIR) + "/" + file);
    cfg.packets_per_node = kPackets;
    cfg.replications = kReplications;
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::future<std::vector<exp::MetricsReport>>> jobs;
    for (auto s : exp::all_schemes()) {
        jobs.push_back(std::async(std::launch::async, [cfg, s] { return exp::sweep_tau(cfg, cfg.taus, {s}); }));
    }
    Sweep out;
    for (auto& j : jobs) {
        for (const auto& r : j.get()) {
            out[r.tau][r.scheme] = Point{r.pdr, r.pdr_ci, r.data_delay_hop, r.ack_delay};
            all_runs.insert(all_runs.end(), r.runs.begin(), r.runs.end());
        }
    }
    *seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

std::string pdr_line(const std::map<AckScheme, Point>& row) {
    std::string s;
    for (const auto& [scheme, p] : row) {
        s += std::string(s.empty() ? "" : " ") + mac::to_string(scheme) + fmt("=%.3f", p.pdr);
    }
    return s;
}

void criterion5(const Sweep& sw, double secs) {
    bool ok = secs < 300;
    std::string detail;
    int checked = 0;
    for (auto it = sw.begin(); it != sw.end() && checked < 3; ++it, ++checked) {  // smallest tau first
        const auto& r = it->second;
        const Point& a = r.at(AckScheme::RegularAck);
        const Point& b = r.at(AckScheme::GackBeacon);
        const Point& g = r.at(AckScheme::GackGts);
        const Point& c = r.at(AckScheme::GackCap);
        const bool order = a.pdr > b.pdr && a.pdr > g.pdr && b.pdr > c.pdr && g.pdr > c.pdr;
        const bool separated = a.pdr - a.pdr_ci > c.pdr + c.pdr_ci;
        ok = ok && order && separated;
        detail += fmt("[tau %.1f: ", it->first) + pdr_line(r) + (order && separated ? "] " : " x] ");
    }
    report(5, ok, detail + fmt("sweep %.0f s", secs));
}

void criterion6(const Sweep& sw) {
    const std::map<AckScheme, Point>* row = nullptr;
    double tau = 0;
    for (const auto& [t, r] : sw) {  // ascending tau: first unsaturated point is the smallest
        double best = 0;
        for (const auto& [s, p] : r) {
            best = std::max(best, p.pdr);
        }
        if (best >= 0.9) {
            row = &r;
            tau = t;
            break;
        }
    }
    if (!row) {
        report(6, false, "every tau point saturated");
        return;
    }
    const double ack = row->at(AckScheme::RegularAck).pdr;
    bool all_ge = true;
    double best_gack = 0;
    for (const auto& [s, p] : *row) {
        if (mac::uses_group_ack(s)) {
            all_ge = all_ge && p.pdr >= ack;
            best_gack = std::max(best_gack, p.pdr);
        }
    }
    report(6, all_ge && best_gack - ack >= 0.10,
           fmt("tau %.1f: ", tau) + pdr_line(*row) + fmt(", best GACK margin %+.3f", best_gack - ack));
}

void criterion7(const Sweep& sw) {
    bool ack_top = true;
    std::map<AckScheme, double> delay;
    std::string losses;
    for (const auto& [tau, r] : sw) {
        const double ack = r.at(AckScheme::RegularAck).pdr;
        for (const auto& [s, p] : r) {
            if (s != AckScheme::RegularAck && p.pdr >= ack) {
                ack_top = false;
                losses += fmt(" tau %.1f:", tau) + mac::to_string(s);
            }
            delay[s] += p.delay / static_cast<double>(sw.size());
        }
    }
    const auto lowest = std::min_element(delay.begin(), delay.end(), [](auto& x, auto& y) { return x.second < y.second; });
    const bool gts_lowest = lowest->first == AckScheme::GackGts && delay[AckScheme::GackGts] < delay[AckScheme::RegularAck];
    std::string d;
    for (const auto& [s, v] : delay) {
        d += std::string(" ") + mac::to_string(s) + fmt("=%.3f", v);
    }
    report(7, ack_top && gts_lowest,
           std::string("regular highest PDR: ") + (ack_top ? "yes" : "no" + losses) + "; mean per-hop delay (s):" + d);
}

void criterion8(const std::vector<std::pair<std::string, std::pair<const Sweep*, int>>>& scenarios) {
    bool ok = true;
    std::string detail;
    for (const auto& [name, v] : scenarios) {
        const auto& [sw, bo] = v;
        std::map<AckScheme, double> sum;
        std::map<AckScheme, int> n;
        for (const auto& [tau, r] : *sw) {
            for (const auto& [s, p] : r) {
                if (!std::isnan(p.ack)) {
                    sum[s] += p.ack;
                    ++n[s];
                }
            }
        }
        auto mean = [&](AckScheme s) { return n[s] ? sum[s] / n[s] : std::nan(""); };
        const double a = mean(AckScheme::RegularAck), c = mean(AckScheme::GackCap), b = mean(AckScheme::GackBeacon);
        bool this_ok = a < c;
        if (bo == 8) {
            this_ok = this_ok && c < b;
        }
        ok = ok && this_ok;
        detail += name + fmt(" ack=%.4f", a) + fmt(" cap=%.4f", c) + fmt(" beacon=%.4f", b) + (this_ok ? "; " : " x; ");
    }
    report(8, ok, detail);
}

void criterion9() {
    bool ok = true;
    std::string detail;
    for (auto [so, mo, bo] : {std::tuple{3, 6, 8}, std::tuple{4, 7, 7}, std::tuple{4, 6, 8}}) {
        harness::Net net('s', 2, harness::config(AckScheme::RegularAck, so, mo, bo));
        const Symbols bi = (kBaseSlotSymbols * kSlotsPerSuperframe) << bo;
        net.kernel.run_until(bi);
        const auto l = net.medium->ledger(1);
        const double share = static_cast<double>(l.rx + l.idle) / static_cast<double>(l.tx + l.rx + l.idle + l.off);
        const bool this_ok = std::abs(share - 0.5625) <= 0.005;
        ok = ok && this_ok;
        detail += fmt("SO=%.0f ", so) + fmt("%.4f%%  ", share * 100);
    }
    report(9, ok, detail);
}

void criterion10() {
    exp::ScenarioConfig cfg = exp::load_config(std::string(CONFIG_DIR) + "/average_case.cfg");
    cfg.packets_per_node = 50;
    cfg.replications = 2;
    cfg.tau = 0.3;
    bool identical = true;
    for (auto s : exp::all_schemes()) {
        cfg.scheme = s;
        std::ostringstream x, y;
        exp::write_csv(x, {exp::run(cfg)});
        exp::write_csv(y, {exp::run(cfg)});
        identical = identical && x.str() == y.str();
    }

    int broken = 0;
    for (const auto& r : all_runs) {
        broken += r.generated != r.delivered + r.dropped_queue + r.dropped_retry + r.residual;
    }

    const auto mcfg = harness::config(AckScheme::RegularAck, 3, 3, 3);
    const Symbols horizon = 8 * ((kBaseSlotSymbols * kSlotsPerSuperframe) << 3);
    int inconsistent = 0, successes = 0, rollbacks = 0;
    for (std::uint64_t trace = 0; trace < 1000; ++trace) {
        harness::Net net('s', 3, mcfg, trace + 1);
        std::vector<mac::SlotMap::Snapshot> before;
        for (auto& m : net.macs) {
            before.push_back(m->slots().snapshot());
        }
        std::mt19937_64 rng(trace);
        std::bernoulli_distribution lose(0.3);
        net.medium->set_loss_filter([&](sim::NodeId, const Frame& f) {
            const bool allocate = f.handshake && f.handshake->op == HandshakeOp::Allocate;
            return (allocate || f.kind == FrameKind::Ack) && lose(rng);
        });
        net.macs[1]->start_handshake(0, false);
        net.kernel.run_until(horizon);

        bool settled = net.rec.outcomes.size() == 1;
        for (auto& m : net.macs) {
            settled = settled && !m->handshake_in_flight();
        }
        bool rolled_back = true;
        for (std::size_t i = 0; i < net.macs.size(); ++i) {
            rolled_back = rolled_back && net.macs[i]->slots().snapshot() == before[i];
        }
        const auto& tx = net.macs[1]->slots().owned();
        const auto& rx = net.macs[0]->slots().owned();
        const bool consistent = tx.size() == 1 && rx.size() == 1 &&
                                tx[0].desc == GtsDescriptor{tx[0].desc.cell, GtsDirection::Tx, GtsKind::Data, 0} &&
                                rx[0].desc == GtsDescriptor{tx[0].desc.cell, GtsDirection::Rx, GtsKind::Data, 1} &&
                                !rx[0].provisional && net.macs[2]->slots().owned().empty();
        if (!settled || !(rolled_back || consistent)) {
            ++inconsistent;
        }
        successes += consistent;
        rollbacks += rolled_back;
    }
    report(10, identical && broken == 0 && !all_runs.empty() && inconsistent == 0,
           std::string("CSV identical: ") + (identical ? "yes" : "no") + "; conservation violations " +
               std::to_string(broken) + "/" + std::to_string(all_runs.size()) + " runs; handshake traces: " +
               std::to_string(successes) + " allocated, " + std::to_string(rollbacks) + " rolled back, " +
               std::to_string(inconsistent) + " inconsistent");
}

}  // namespace

int main() {
    try {
        criterion1();
        criterion2();
        criterion3();
        criterion4();
        double t_worst = 0, t_best = 0, t_avg = 0;
        const Sweep worst = run_sweep("worst_case.cfg", &t_worst);
        criterion5(worst, t_worst);
        const Sweep best = run_sweep("best_case.cfg", &t_best);
        criterion6(best);
        const Sweep avg = run_sweep("average_case.cfg", &t_avg);
        criterion7(avg);
        criterion8({{"worst", {&worst, 8}}, {"best", {&best, 7}}, {"average", {&avg, 8}}});
        criterion9();
        criterion10();
    } catch (const std::exception& e) {
        std::printf("acceptance harness error: %s\n", e.what());
        return 2;
    }
    std::printf("%d of 10 criteria failed\n", failures);
    return 0;
}
