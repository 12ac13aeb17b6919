#include "dsme/sim/medium.hpp"

#include <algorithm>

namespace dsme::sim {

Medium::Medium(Kernel& kernel, const Topology& topo)
    : kernel_(kernel), topo_(topo), nodes_(static_cast<std::size_t>(topo.n)) {
    for (auto& n : nodes_) {
        n.since = kernel.now();
    }
}

void Medium::set_handlers(DeliverFn deliver, TxDoneFn tx_done) {
    deliver_ = std::move(deliver);
    tx_done_ = std::move(tx_done);
}

void Medium::account(NodeId n) {
    NodeState& s = nodes_[n];
    const Symbols dt = kernel_.now() - s.since;
    switch (s.mode) {
        case RadioMode::Tx: s.ledger.tx += dt; break;
        case RadioMode::Listen: (s.receptions.empty() ? s.ledger.idle : s.ledger.rx) += dt; break;
        case RadioMode::Off: s.ledger.off += dt; break;
    }
    s.since = kernel_.now();
}

void Medium::drop_receptions(NodeId n) {
    frames_corrupted_ += nodes_[n].receptions.size();
    nodes_[n].receptions.clear();
}

void Medium::listen(NodeId n, int channel) {
    NodeState& s = nodes_[n];
    if (s.mode == RadioMode::Tx) {
        throw BusyRadio("listen requested while transmitting");
    }
    if (s.mode == RadioMode::Listen && s.channel == channel) {
        return;
    }
    account(n);
    drop_receptions(n);
    s.mode = RadioMode::Listen;
    s.channel = channel;
    // Frames starting at this very instant are still caught from their first symbol.
    int audible = 0;
    for (const ActiveTx& t : active_) {
        if (t.channel == channel && topo_.adjacent(t.src, n)) {
            ++audible;
        }
    }
    for (const ActiveTx& t : active_) {
        if (t.channel == channel && t.start == kernel_.now() && topo_.adjacent(t.src, n)) {
            s.receptions.push_back(Reception{t.id, jam_active_ || audible > 1});
        }
    }
}

void Medium::sleep(NodeId n) {
    NodeState& s = nodes_[n];
    if (s.mode == RadioMode::Tx) {
        throw BusyRadio("sleep requested while transmitting");
    }
    if (s.mode == RadioMode::Off) {
        return;
    }
    account(n);
    drop_receptions(n);
    s.mode = RadioMode::Off;
}

Symbols Medium::transmit(NodeId n, Frame f, int channel) {
    NodeState& s = nodes_[n];
    if (s.mode == RadioMode::Tx) {
        throw BusyRadio("transmitter already busy");
    }
    const Symbols airtime = airtime_symbols(f);
    account(n);
    drop_receptions(n);
    s.mode = RadioMode::Tx;
    s.channel = channel;

    const std::uint64_t id = next_tx_id_++;
    for (NodeId v : topo_.neighbors[n]) {
        NodeState& r = nodes_[v];
        if (r.mode != RadioMode::Listen || r.channel != channel) {
            continue;
        }
        bool corrupted = jam_active_;
        for (const ActiveTx& other : active_) {
            if (other.channel == channel && other.src != n && topo_.adjacent(other.src, v)) {
                corrupted = true;
            }
        }
        for (Reception& rec : r.receptions) {
            rec.corrupted = true;
            corrupted = true;
        }
        account(v);
        r.receptions.push_back(Reception{id, corrupted});
    }
    const Symbols end = kernel_.now() + airtime;
    active_.push_back(ActiveTx{id, n, channel, kernel_.now(), end, std::move(f)});
    ++frames_sent_;
    kernel_.schedule(end, n, EventKind::TxEnd, [this, id] { finish(id); });
    return airtime;
}

void Medium::finish(std::uint64_t tx_id) {
    auto it = std::find_if(active_.begin(), active_.end(), [&](const ActiveTx& t) { return t.id == tx_id; });
    ActiveTx tx = std::move(*it);
    active_.erase(it);

    account(tx.src);
    nodes_[tx.src].mode = RadioMode::Listen;

    std::vector<NodeId> intact;
    for (NodeId v : topo_.neighbors[tx.src]) {
        NodeState& r = nodes_[v];
        auto rec = std::find_if(r.receptions.begin(), r.receptions.end(),
                                [&](const Reception& x) { return x.tx_id == tx_id; });
        if (rec == r.receptions.end()) {
            continue;
        }
        account(v);
        const bool ok = !rec->corrupted && !(loss_filter_ && loss_filter_(v, tx.frame));
        r.receptions.erase(rec);
        if (ok) {
            intact.push_back(v);
        } else {
            ++frames_corrupted_;
        }
    }
    frames_delivered_ += intact.size();
    for (NodeId v : intact) {
        if (deliver_) {
            deliver_(v, tx.frame, tx.start);
        }
    }
    if (tx_done_) {
        tx_done_(tx.src, tx.frame);
    }
}

bool Medium::channel_busy(NodeId n, int channel) const {
    if (jam_active_) {
        return true;
    }
    return std::any_of(active_.begin(), active_.end(), [&](const ActiveTx& t) {
        return t.channel == channel && (t.src == n || topo_.adjacent(t.src, n));
    });
}

void Medium::start_jammer(const JammerConfig& cfg) {
    if (cfg.duration <= 0 || cfg.interval <= cfg.duration) {
        throw std::invalid_argument("jammer needs interval > duration > 0");
    }
    jammer_ = cfg;
    kernel_.schedule(std::max(cfg.first_start, kernel_.now()), kKernelTarget, EventKind::JamStart,
                     [this] { jam_start(); });
}

void Medium::jam_start() {
    jam_active_ = true;
    for (NodeState& s : nodes_) {
        for (Reception& rec : s.receptions) {
            rec.corrupted = true;
        }
    }
    kernel_.schedule_in(jammer_->duration, kKernelTarget, EventKind::JamEnd, [this] { jam_active_ = false; });
    kernel_.schedule_in(jammer_->interval, kKernelTarget, EventKind::JamStart, [this] { jam_start(); });
}

RadioLedger Medium::ledger(NodeId n) const {
    const NodeState& s = nodes_[n];
    RadioLedger l = s.ledger;
    const Symbols dt = kernel_.now() - s.since;
    switch (s.mode) {
        case RadioMode::Tx: l.tx += dt; break;
        case RadioMode::Listen: (s.receptions.empty() ? l.idle : l.rx) += dt; break;
        case RadioMode::Off: l.off += dt; break;
    }
    return l;
}

}  // namespace dsme::sim
