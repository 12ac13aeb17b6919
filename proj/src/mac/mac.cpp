#include "dsme/mac/mac.hpp"

#include <algorithm>

namespace dsme::mac {

namespace {

constexpr std::size_t kMaxGackFrameBody = 116;
constexpr std::size_t kMaxBeaconGackBody = 93;

using sim::EventKind;

std::mt19937_64 make_stream(std::uint64_t seed, NodeAddr id, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(id), static_cast<std::uint32_t>(stream)};
    return std::mt19937_64(seq);
}

Symbols cycle_symbols(AckScheme s, int payload) {
    const Symbols data = data_airtime_symbols(payload);
    if (s == AckScheme::RegularAck) {
        return data + kAckOverheadSymbols + ifs_symbols(payload);
    }
    return data + ifs_symbols(payload) - kTurnaroundSymbols;
}

}  // namespace

const char* to_string(AckScheme s) {
    switch (s) {
        case AckScheme::RegularAck: return "ack";
        case AckScheme::GackBeacon: return "gack-beacon";
        case AckScheme::GackCap: return "gack-cap";
        case AckScheme::GackGts: return "gack-gts";
    }
    return "?";
}

std::optional<AckScheme> parse_scheme(std::string_view name) {
    for (auto s : {AckScheme::RegularAck, AckScheme::GackBeacon, AckScheme::GackCap, AckScheme::GackGts}) {
        if (name == to_string(s)) {
            return s;
        }
    }
    return std::nullopt;
}

DsmeMac::DsmeMac(NodeRole role, const MacConfig& cfg, sim::Kernel& kernel, sim::Medium& medium,
                 MacObserver& observer, std::uint64_t seed)
    : role_(std::move(role)),
      cfg_(cfg),
      kernel_(kernel),
      medium_(medium),
      observer_(observer),
      backoff_rng_(make_stream(seed, role_.id, 2)),
      slot_rng_(make_stream(seed, role_.id, 3)),
      slot_len_(slot_duration_symbols(cfg.sf)),
      sf_len_(superframe_duration_symbols(cfg.sf)),
      msf_len_(multisuperframe_duration_symbols(cfg.sf)),
      sfs_per_msf_(cfg.sf.superframes_per_msf()),
      sfs_per_bi_(cfg.sf.superframes_per_beacon_interval()),
      queue_(cfg.queue_capacity) {
    cfg_.sf.validate(cfg_.scheme == AckScheme::GackGts);
    if (role_.beacon_sf && (*role_.beacon_sf < 0 || *role_.beacon_sf >= sfs_per_bi_)) {
        throw InvalidConfig("beacon superframe outside the beacon interval");
    }
}

// ---------------------------------------------------------------------------
// Timing

bool DsmeMac::in_cap() const {
    const Symbols rel = kernel_.now() % sf_len_;
    return rel >= slot_len_ && rel < kFirstCfpSlot * slot_len_;
}

Symbols DsmeMac::cap_end() const {
    return superframe_index(kernel_.now()) * sf_len_ + kFirstCfpSlot * slot_len_;
}

Symbols DsmeMac::gack_interval() const {
    switch (cfg_.scheme) {
        case AckScheme::GackBeacon: return beacon_interval_symbols(cfg_.sf);
        case AckScheme::GackCap: return sf_len_;
        case AckScheme::GackGts: return gack_interval_symbols(cfg_.sf);
        case AckScheme::RegularAck: break;
    }
    return sf_len_;
}

// ---------------------------------------------------------------------------
// Superframe structure

void DsmeMac::start() {
    const Symbols now = kernel_.now();
    const std::int64_t k = (now + sf_len_ - 1) / sf_len_;
    kernel_.schedule(k * sf_len_, role_.id, EventKind::SlotBoundary, [this, k] { on_superframe(k); });
}

void DsmeMac::install(const GtsDescriptor& d, std::int64_t from_msf) {
    OwnedGts g;
    g.desc = d;
    g.active_from_msf = from_msf;
    slots_.add(g);
}

const OwnedGts* DsmeMac::active_at(int sf, int slot) const {
    const std::int64_t m = current_msf();
    for (const auto& g : slots_.owned()) {
        if (g.desc.cell.sf_index == sf && g.desc.cell.slot_index == slot && g.active_from_msf <= m) {
            return &g;
        }
    }
    return nullptr;
}

void DsmeMac::on_superframe(std::int64_t k) {
    const Symbols t0 = kernel_.now();
    const int s = sf_in_msf(k);
    if (s == 0) {
        on_msf_boundary();
    }
    if (role_.beacon_sf && k % sfs_per_bi_ == *role_.beacon_sf) {
        beacon_tick();
    } else if (medium_.mode(role_.id) != sim::RadioMode::Tx) {
        medium_.listen(role_.id, cfg_.cap_channel);
    }
    stale_sweep();

    kernel_.schedule(t0 + slot_len_, role_.id, EventKind::SlotBoundary, [this] { on_cap_start(); });
    kernel_.schedule(t0 + kFirstCfpSlot * slot_len_, role_.id, EventKind::SlotBoundary,
                     [this, k] { on_cap_end(k); });
    for (int slot = kFirstCfpSlot; slot < kSlotsPerSuperframe; ++slot) {
        const Symbols start = t0 + slot * slot_len_;
        if (const OwnedGts* g = active_at(s, slot)) {
            const GtsDescriptor d = g->desc;
            kernel_.schedule(start, role_.id, EventKind::SlotBoundary,
                             [this, d, end = start + slot_len_] { on_cfp_slot(d, end); });
        }
        if (slot + 1 < kSlotsPerSuperframe) {
            kernel_.schedule(start + slot_len_, role_.id, EventKind::SlotBoundary,
                             [this, k, slot] { on_slot_end(k, slot); });
        }
    }
    kernel_.schedule(t0 + sf_len_, role_.id, EventKind::SlotBoundary, [this, k] { on_superframe(k + 1); });
}

void DsmeMac::on_msf_boundary() {
    const std::int64_t m = current_msf();
    std::vector<GtsDescriptor> idle;
    for (auto& g : slots_.owned()) {
        if (g.desc.kind != GtsKind::Data || g.active_from_msf >= m) {
            continue;
        }
        g.idle_msfs = g.used ? 0 : g.idle_msfs + 1;
        g.used = false;
        if (!cfg_.traffic_adaptive || g.provisional) {
            continue;
        }
        const int limit = cfg_.idle_msfs_before_release + (g.desc.direction == GtsDirection::Rx ? 1 : 0);
        if (g.idle_msfs >= limit) {
            idle.push_back(g.desc);
        }
    }
    for (const auto& d : idle) {
        release(d);
    }
    if (cfg_.scheme == AckScheme::GackGts && cfg_.traffic_adaptive) {
        const bool has_rx = std::any_of(slots_.owned().begin(), slots_.owned().end(), [](const OwnedGts& g) {
            return g.desc.kind == GtsKind::Data && g.desc.direction == GtsDirection::Rx;
        });
        if (!has_rx && responding_.empty()) {
            std::vector<GtsDescriptor> gacks;
            for (const auto& g : slots_.owned()) {
                if (g.desc.kind == GtsKind::Gack && g.desc.direction == GtsDirection::Tx) {
                    gacks.push_back(g.desc);
                }
            }
            for (const auto& d : gacks) {
                release_gack_slot(d);
            }
        }
    }
    drop_orphan_gack_listeners();
}

void DsmeMac::on_cap_start() {
    if (cfg_.scheme == AckScheme::GackCap && !ledger_.empty() && !gack_queued_) {
        CapItem item;
        item.frame.kind = FrameKind::Gack;
        item.frame.src = role_.id;
        item.frame.dst = kBroadcastAddr;
        item.is_gack = true;
        enqueue_cap(std::move(item), true);
        gack_queued_ = true;
    }
    demand_policy(sf_in_msf(superframe_index(kernel_.now())) == 0);
    cap_kick();
}

void DsmeMac::on_cap_end(std::int64_t k) {
    ++csma_attempt_;
    if (!cap_tx_) {
        csma_busy_ = false;
    }
    if (!active_at(sf_in_msf(k), kFirstCfpSlot) && medium_.mode(role_.id) != sim::RadioMode::Tx) {
        medium_.sleep(role_.id);
    }
}

void DsmeMac::on_cfp_slot(GtsDescriptor d, Symbols slot_end) {
    const OwnedGts* g = slots_.find(d);
    if (!g || g->active_from_msf > current_msf() || medium_.mode(role_.id) == sim::RadioMode::Tx) {
        return;
    }
    if (d.direction == GtsDirection::Tx && d.kind == GtsKind::Data) {
        medium_.listen(role_.id, d.cell.channel);
        burst_ = Burst{};
        burst_.active = true;
        burst_.desc = d;
        burst_.slot_end = slot_end;
        burst_.generation = ++burst_counter_;
        burst_step(burst_.generation);
    } else if (d.direction == GtsDirection::Tx) {
        medium_.listen(role_.id, d.cell.channel);
        emit_gack_in_slot(slot_end);
    } else {
        listen_with_guard(d.cell.channel, slot_end);
    }
}

void DsmeMac::on_slot_end(std::int64_t k, int slot) {
    if (burst_.active && burst_.slot_end <= kernel_.now()) {
        burst_.active = false;
        ++burst_counter_;
        burst_.generation = burst_counter_;
    }
    ++rx_generation_;
    if (active_at(sf_in_msf(k), slot + 1) || medium_.mode(role_.id) == sim::RadioMode::Tx) {
        return;
    }
    medium_.sleep(role_.id);
}

void DsmeMac::listen_with_guard(int channel, Symbols slot_end) {
    medium_.listen(role_.id, channel);
    last_rx_activity_ = kernel_.now();
    const std::uint64_t gen = ++rx_generation_;
    kernel_.schedule_in(cfg_.rx_guard, role_.id, EventKind::Timer,
                        [this, slot_end, gen] { guard_check(slot_end, gen); });
}

void DsmeMac::guard_check(Symbols slot_end, std::uint64_t generation) {
    if (generation != rx_generation_ || kernel_.now() >= slot_end) {
        return;
    }
    const Symbols quiet_until = last_rx_activity_ + cfg_.rx_guard;
    if (medium_.mode(role_.id) == sim::RadioMode::Tx || medium_.receiving(role_.id) || quiet_until > kernel_.now()) {
        const Symbols next = std::max(quiet_until, kernel_.now() + sim::kCcaSymbols);
        kernel_.schedule(next, role_.id, EventKind::Timer,
                         [this, slot_end, generation] { guard_check(slot_end, generation); });
        return;
    }
    medium_.sleep(role_.id);
}

void DsmeMac::beacon_tick() {
    if (medium_.mode(role_.id) == sim::RadioMode::Tx) {
        return;
    }
    medium_.listen(role_.id, cfg_.cap_channel);
    Frame f;
    f.kind = FrameKind::Beacon;
    f.src = role_.id;
    f.dst = kBroadcastAddr;
    f.seq = dsn_++;
    if (cfg_.scheme == AckScheme::GackBeacon && !ledger_.empty()) {
        GackBody body = ledger_.drain(max_beacon_body());
        if (!body.payloads.empty()) {
            f.embedded = std::move(body);
        }
    }
    medium_.transmit(role_.id, std::move(f), cfg_.cap_channel);
    ++counters_.beacons_sent;
}

// ---------------------------------------------------------------------------
// CAP access

void DsmeMac::enqueue_cap(CapItem item, bool front) {
    const bool head_busy = csma_busy_ || cap_awaiting_ack_ || cap_tx_;
    if (front && !cap_queue_.empty() && head_busy) {
        cap_queue_.insert(cap_queue_.begin() + 1, std::move(item));
    } else if (front) {
        cap_queue_.push_front(std::move(item));
    } else {
        cap_queue_.push_back(std::move(item));
    }
    cap_kick();
}

void DsmeMac::cap_kick() {
    if (csma_busy_ || cap_awaiting_ack_ || cap_tx_ || cap_queue_.empty() || !in_cap()) {
        return;
    }
    csma_busy_ = true;
    csma_nb_ = 0;
    csma_be_ = cfg_.min_be;
    csma_backoff();
}

Symbols DsmeMac::estimate_airtime(const CapItem& item) const {
    if (item.is_gack) {
        return kHeaderSymbols + kSymbolsPerByte * static_cast<Symbols>(preview_gack_size(kMaxGackFrameBody));
    }
    return airtime_symbols(item.frame);
}

void DsmeMac::csma_backoff() {
    const std::uint64_t attempt = ++csma_attempt_;
    const Symbols now = kernel_.now();
    const Symbols cap_start = superframe_index(now) * sf_len_ + slot_len_;
    const Symbols rel = now - cap_start;
    const Symbols boundary = cap_start + (rel + kUnitBackoffSymbols - 1) / kUnitBackoffSymbols * kUnitBackoffSymbols;
    std::uniform_int_distribution<int> pick(0, (1 << csma_be_) - 1);
    const Symbols cca_at = boundary + pick(backoff_rng_) * kUnitBackoffSymbols;
    const CapItem& item = cap_queue_.front();
    const Symbols done =
        cca_at + 2 * kUnitBackoffSymbols + estimate_airtime(item) + (item.needs_ack ? kMacAckMaxWaitSymbols : 0);
    if (done > cap_end()) {
        csma_busy_ = false;  // resumes at the next CAP
        return;
    }
    kernel_.schedule(cca_at, role_.id, EventKind::BackoffExpiry, [this, attempt] { csma_cca(2, attempt); });
}

void DsmeMac::csma_cca(int remaining, std::uint64_t attempt) {
    if (attempt != csma_attempt_) {
        return;
    }
    if (medium_.mode(role_.id) == sim::RadioMode::Tx || medium_.channel_busy(role_.id, cfg_.cap_channel)) {
        csma_channel_busy(attempt);
        return;
    }
    if (remaining > 1) {
        kernel_.schedule_in(kUnitBackoffSymbols, role_.id, EventKind::BackoffExpiry,
                            [this, attempt, remaining] { csma_cca(remaining - 1, attempt); });
    } else {
        kernel_.schedule_in(kUnitBackoffSymbols, role_.id, EventKind::BackoffExpiry,
                            [this, attempt] { csma_transmit(attempt); });
    }
}

void DsmeMac::csma_channel_busy(std::uint64_t attempt) {
    if (attempt != csma_attempt_) {
        return;
    }
    ++csma_nb_;
    csma_be_ = std::min(csma_be_ + 1, cfg_.max_be);
    if (csma_nb_ > cfg_.max_csma_backoffs) {
        ++counters_.cap_access_failures;
        csma_busy_ = false;
        if (++cap_queue_.front().retries > cfg_.max_frame_retries) {
            cap_item_failed();
        }
        return;
    }
    csma_backoff();
}

void DsmeMac::csma_transmit(std::uint64_t attempt) {
    if (attempt != csma_attempt_) {
        return;
    }
    if (medium_.mode(role_.id) == sim::RadioMode::Tx || !in_cap()) {
        csma_channel_busy(attempt);
        return;
    }
    CapItem& item = cap_queue_.front();
    if (item.is_gack) {
        gack_queued_ = false;
        GackBody body = ledger_.drain(kMaxGackFrameBody);
        if (body.payloads.empty()) {
            cap_queue_.pop_front();
            csma_busy_ = false;
            cap_kick();
            return;
        }
        item.frame.embedded = std::move(body);
        ++counters_.gack_frames_sent;
    }
    if (medium_.mode(role_.id) == sim::RadioMode::Off || medium_.channel(role_.id) != cfg_.cap_channel) {
        medium_.listen(role_.id, cfg_.cap_channel);
    }
    cap_tx_ = true;
    medium_.transmit(role_.id, item.frame, cfg_.cap_channel);
}

void DsmeMac::cap_item_done() {
    if (!cap_queue_.empty()) {
        cap_queue_.pop_front();
    }
    csma_busy_ = false;
    cap_kick();
}

void DsmeMac::cap_item_failed() {
    if (cap_queue_.empty()) {
        return;
    }
    CapItem item = std::move(cap_queue_.front());
    cap_queue_.pop_front();
    csma_busy_ = false;
    if (item.is_gack) {
        gack_queued_ = false;
    }
    if (item.frame.kind == FrameKind::GtsRequest && initiation_ && item.frame.handshake &&
        item.frame.handshake->handshake_id == initiation_->id) {
        finish_initiation(HandshakeOutcome::AccessFailure, true);
    }
    cap_kick();
}

void DsmeMac::send_cap_ack(const Frame& f) {
    Frame ack;
    ack.kind = FrameKind::Ack;
    ack.src = role_.id;
    ack.dst = f.src;
    ack.seq = f.seq;
    kernel_.schedule_in(kAifsSymbols, role_.id, EventKind::Timer, [this, ack] {
        if (medium_.mode(role_.id) == sim::RadioMode::Tx) {
            return;
        }
        medium_.transmit(role_.id, ack, cfg_.cap_channel);
        ++counters_.acks_sent;
    });
}

// ---------------------------------------------------------------------------
// Frame dispatch

void DsmeMac::on_frame(const Frame& f, Symbols start) {
    switch (f.kind) {
        case FrameKind::Data:
            if (f.dst == role_.id) {
                on_data(f, start);
            }
            break;
        case FrameKind::Ack:
            if (f.dst == role_.id) {
                on_ack(f);
            }
            break;
        case FrameKind::Gack:
            last_rx_activity_ = kernel_.now();
            if (f.embedded) {
                on_gack(*f.embedded, f.src);
            }
            break;
        case FrameKind::Beacon:
            if (f.embedded) {
                on_gack(*f.embedded, f.src);
            }
            break;
        case FrameKind::GtsRequest:
        case FrameKind::GtsResponse:
        case FrameKind::GtsNotify:
        case FrameKind::GtsChange:
            if (!f.is_broadcast()) {
                if (f.dst != role_.id) {
                    return;
                }
                send_cap_ack(f);
            }
            on_handshake_frame(f);
            break;
    }
}

void DsmeMac::on_tx_done(const Frame& f) {
    if (cap_tx_) {
        cap_tx_ = false;
        if (cap_queue_.empty()) {
            csma_busy_ = false;
            return;
        }
        if (cap_queue_.front().needs_ack) {
            cap_awaiting_ack_ = true;
            csma_busy_ = false;
            cap_ack_timer_ = kernel_.schedule_in(kMacAckMaxWaitSymbols, role_.id, EventKind::AckTimeout, [this] {
                if (!cap_awaiting_ack_) {
                    return;
                }
                cap_awaiting_ack_ = false;
                if (++cap_queue_.front().retries > cfg_.max_frame_retries) {
                    cap_item_failed();
                } else {
                    cap_kick();
                }
            });
        } else {
            cap_item_done();
        }
        return;
    }
    switch (f.kind) {
        case FrameKind::Data:
            if (!burst_.active) {
                return;
            }
            if (burst_.awaiting_ack) {
                const std::uint64_t gen = burst_.generation;
                burst_.ack_timer = kernel_.schedule_in(kMacAckMaxWaitSymbols, role_.id, EventKind::AckTimeout,
                                                       [this, gen] { data_ack_timeout(gen); });
            } else {
                const std::uint64_t gen = burst_.generation;
                kernel_.schedule_in(ifs_symbols(f.payload_len) - kTurnaroundSymbols, role_.id, EventKind::Timer,
                                    [this, gen] { burst_step(gen); });
            }
            break;
        case FrameKind::Gack: {
            const Symbols gap = ifs_symbols(static_cast<int>(encoded_size(*f.embedded)));
            const Symbols end = gack_slot_end_;
            kernel_.schedule_in(gap, role_.id, EventKind::Timer, [this, end] {
                if (medium_.mode(role_.id) != sim::RadioMode::Tx && kernel_.now() < end) {
                    emit_gack_in_slot(end);
                }
            });
            break;
        }
        case FrameKind::Ack:
            last_rx_activity_ = kernel_.now();
            break;
        default:
            break;
    }
}

// ---------------------------------------------------------------------------
// CFP data path

void DsmeMac::end_burst() {
    burst_.active = false;
    burst_.generation = ++burst_counter_;
    if (medium_.mode(role_.id) != sim::RadioMode::Tx) {
        medium_.sleep(role_.id);
    }
}

void DsmeMac::burst_step(std::uint64_t generation) {
    if (!burst_.active || generation != burst_.generation) {
        return;
    }
    Packet* p = queue_.front_eligible();
    if (!p) {
        end_burst();
        return;
    }
    const Symbols now = kernel_.now();
    if (now + cycle_symbols(cfg_.scheme, p->payload_len) > burst_.slot_end) {
        end_burst();
        return;
    }
    ++p->transmissions;
    if (p->first_tx_at < 0) {
        p->first_tx_at = now;
    }
    p->last_tx_at = now;

    Frame f;
    f.kind = FrameKind::Data;
    f.src = role_.id;
    f.dst = burst_.desc.peer;
    f.seq = p->seq;
    f.payload_len = p->payload_len;
    f.packet_uid = p->uid;
    f.origin = p->origin;
    f.generated_at = p->generated_at;

    if (OwnedGts* g = slots_.find(burst_.desc)) {
        g->used = true;
    }
    burst_.seq = p->seq;
    burst_.awaiting_ack = cfg_.scheme == AckScheme::RegularAck;
    if (!burst_.awaiting_ack) {
        queue_.mark_sent_front();
    }
    medium_.transmit(role_.id, std::move(f), burst_.desc.cell.channel);
    ++counters_.data_frames_sent;
}

void DsmeMac::data_ack_timeout(std::uint64_t generation) {
    if (!burst_.active || generation != burst_.generation || !burst_.awaiting_ack) {
        return;
    }
    burst_.awaiting_ack = false;
    Packet* p = queue_.front();
    int payload = 0;
    if (p) {
        payload = p->payload_len;
        if (p->transmissions >= cfg_.max_transmissions) {
            drop(*queue_.pop_front(), DropCause::Retry);
        }
    }
    kernel_.schedule_in(ifs_symbols(payload), role_.id, EventKind::Timer,
                        [this, generation] { burst_step(generation); });
}

void DsmeMac::on_ack(const Frame& f) {
    if (cap_awaiting_ack_ && !cap_queue_.empty() && f.seq == cap_queue_.front().frame.seq &&
        f.src == cap_queue_.front().frame.dst) {
        kernel_.cancel(cap_ack_timer_);
        cap_awaiting_ack_ = false;
        cap_item_done();
        return;
    }
    if (!burst_.active || !burst_.awaiting_ack || f.seq != burst_.seq || f.src != burst_.desc.peer) {
        return;
    }
    kernel_.cancel(burst_.ack_timer);
    burst_.awaiting_ack = false;
    std::optional<Packet> p = queue_.pop_front();
    int payload = 0;
    if (p) {
        payload = p->payload_len;
        observer_.acknowledged(role_.id, *p, kernel_.now() - p->first_tx_at);
    }
    const std::uint64_t gen = burst_.generation;
    kernel_.schedule_in(ifs_symbols(payload), role_.id, EventKind::Timer, [this, gen] { burst_step(gen); });
}

void DsmeMac::on_data(const Frame& f, Symbols start) {
    const SlotAddress at = locate(start, cfg_.sf);
    const GtsDescriptor expected{GtsCell{at.sf_index, at.slot_index, medium_.channel(role_.id)}, GtsDirection::Rx,
                                 GtsKind::Data, f.src};
    OwnedGts* g = slots_.find(expected);
    if (!g) {
        return;
    }
    g->used = true;
    last_rx_activity_ = kernel_.now();
    const bool fresh = rx_windows_[f.src].accept(f.seq);
    if (cfg_.scheme == AckScheme::RegularAck) {
        Frame ack;
        ack.kind = FrameKind::Ack;
        ack.src = role_.id;
        ack.dst = f.src;
        ack.seq = f.seq;
        const int channel = medium_.channel(role_.id);
        kernel_.schedule_in(kAifsSymbols, role_.id, EventKind::Timer, [this, ack, channel] {
            if (medium_.mode(role_.id) == sim::RadioMode::Tx) {
                return;
            }
            medium_.transmit(role_.id, ack, channel);
            ++counters_.acks_sent;
        });
    } else {
        ledger_.record(f.src, f.seq);
    }
    if (fresh) {
        deliver_up(f);
    }
}

void DsmeMac::deliver_up(const Frame& f) {
    Packet p;
    p.uid = f.packet_uid;
    p.origin = f.origin;
    p.payload_len = f.payload_len;
    p.generated_at = f.generated_at;
    if (!role_.parent) {
        observer_.delivered(role_.id, p, kernel_.now());
        return;
    }
    app_enqueue(p);
}

bool DsmeMac::app_enqueue(Packet p) {
    p.transmissions = 0;
    p.first_tx_at = -1;
    p.last_tx_at = -1;
    if (!queue_.push(p)) {
        drop(p, DropCause::Queue);
        return false;
    }
    return true;
}

void DsmeMac::drop(const Packet& p, DropCause cause) {
    observer_.dropped(role_.id, p, cause, kernel_.now());
}

void DsmeMac::requeue_or_drop(std::uint8_t seq) {
    const auto& un = queue_.unacked();
    auto it = std::find_if(un.begin(), un.end(), [&](const Packet& p) { return p.seq == seq; });
    if (it == un.end()) {
        return;
    }
    if (it->transmissions >= cfg_.max_transmissions) {
        drop(*queue_.release(seq), DropCause::Retry);
    } else {
        queue_.requeue(seq);
    }
}

// ---------------------------------------------------------------------------
// Group acknowledgements

void DsmeMac::on_gack(const GackBody& body, NodeAddr from) {
    if (!role_.parent || from != *role_.parent) {
        return;
    }
    for (const auto& payload : body.payloads) {
        if (payload.node_addr != role_.id) {
            continue;
        }
        const auto acked = acked_set(payload);
        const std::vector<Packet> pending = queue_.unacked();
        for (const auto& u : pending) {
            if (acked.count(u.seq)) {
                if (auto p = queue_.release(u.seq)) {
                    observer_.acknowledged(role_.id, *p, kernel_.now() - p->first_tx_at);
                }
            } else if (covers(payload, u.seq)) {
                requeue_or_drop(u.seq);
            }
        }
    }
}

void DsmeMac::stale_sweep() {
    if (!uses_group_ack(cfg_.scheme)) {
        return;
    }
    const Symbols deadline = kernel_.now() - 2 * gack_interval();
    for (std::uint8_t seq : queue_.unacked_older_than(deadline)) {
        requeue_or_drop(seq);
    }
}

std::size_t DsmeMac::preview_gack_size(std::size_t max_octets) const {
    PendingAckLedger copy = ledger_;
    return encoded_size(copy.drain(max_octets));
}

std::size_t DsmeMac::max_beacon_body() const {
    const Symbols room = (slot_len_ - control_airtime_symbols()) / kSymbolsPerByte;
    return static_cast<std::size_t>(std::clamp<Symbols>(room, 0, kMaxBeaconGackBody));
}

void DsmeMac::emit_gack_in_slot(Symbols slot_end) {
    if (ledger_.empty()) {
        medium_.sleep(role_.id);
        return;
    }
    const Symbols airtime =
        kHeaderSymbols + kSymbolsPerByte * static_cast<Symbols>(preview_gack_size(kMaxGackFrameBody));
    if (kernel_.now() + airtime > slot_end) {
        medium_.sleep(role_.id);
        return;
    }
    Frame f;
    f.kind = FrameKind::Gack;
    f.src = role_.id;
    f.dst = kBroadcastAddr;
    f.seq = dsn_++;
    f.embedded = ledger_.drain(kMaxGackFrameBody);
    gack_slot_end_ = slot_end;
    medium_.transmit(role_.id, std::move(f), medium_.channel(role_.id));
    ++counters_.gack_frames_sent;
}

// ---------------------------------------------------------------------------
// GTS handshake

Frame DsmeMac::control_frame(FrameKind kind, NodeAddr dst, GtsHandshakeBody body) {
    Frame f;
    f.kind = kind;
    f.src = role_.id;
    f.dst = dst;
    f.seq = dsn_++;
    f.handshake = std::move(body);
    return f;
}

bool DsmeMac::within_gack_interval(const GtsCell& data, const GtsCell& gack) const {
    const Symbols data_end =
        (static_cast<Symbols>(data.sf_index) * kSlotsPerSuperframe + data.slot_index + 1) * slot_len_;
    const Symbols gack_start = (static_cast<Symbols>(gack.sf_index) * kSlotsPerSuperframe + gack.slot_index) * slot_len_;
    const Symbols gap = ((gack_start - data_end) % msf_len_ + msf_len_) % msf_len_;
    return gap < gack_interval_symbols(cfg_.sf);
}

std::vector<int> DsmeMac::gack_candidate_superframes(const GtsCell& data) const {
    std::vector<int> out;
    for (int sf = 0; sf < sfs_per_msf_; ++sf) {
        if (within_gack_interval(data, GtsCell{sf, kSlotsPerSuperframe - 1, 0})) {
            out.push_back(sf);
        }
    }
    return out;
}

bool DsmeMac::start_handshake(NodeAddr peer, bool want_gack) {
    if (initiation_) {
        return false;
    }
    const std::uint32_t id = (static_cast<std::uint32_t>(role_.id) << 16) | (next_handshake_++ & 0xFFFFu);
    GtsHandshakeBody b;
    b.handshake_id = id;
    b.op = HandshakeOp::Allocate;
    b.initiator = role_.id;
    b.responder = peer;
    b.want_gack = want_gack;
    b.avoid_sf = pending_avoid_sf_;
    b.busy_times = slots_.busy_times();
    b.occupied_cells = slots_.occupied_cells();
    pending_avoid_sf_ = -1;

    Initiation init;
    init.id = id;
    init.peer = peer;
    init.want_gack = want_gack;
    init.avoid_sf = b.avoid_sf;
    init.timeout_event = kernel_.schedule_in(msf_len_, role_.id, EventKind::Timer,
                                             [this] { finish_initiation(HandshakeOutcome::Timeout, true); });
    initiation_ = init;
    ++counters_.handshakes_started;

    CapItem item;
    item.frame = control_frame(FrameKind::GtsRequest, peer, std::move(b));
    item.needs_ack = true;
    enqueue_cap(std::move(item));
    return true;
}

void DsmeMac::finish_initiation(HandshakeOutcome o, bool backoff) {
    if (!initiation_) {
        return;
    }
    const std::uint32_t id = initiation_->id;
    kernel_.cancel(initiation_->timeout_event);
    initiation_.reset();
    const bool head_busy = csma_busy_ || cap_awaiting_ack_ || cap_tx_;
    for (auto it = cap_queue_.begin(); it != cap_queue_.end();) {
        const bool stale = it->frame.kind == FrameKind::GtsRequest && it->frame.handshake &&
                           it->frame.handshake->handshake_id == id;
        if (stale && !(it == cap_queue_.begin() && head_busy)) {
            it = cap_queue_.erase(it);
        } else {
            ++it;
        }
    }
    if (backoff) {
        std::uniform_int_distribution<int> pick(1, 4);
        request_backoff_until_ = kernel_.now() + pick(slot_rng_) * sf_len_;
    }
    if (o == HandshakeOutcome::Success) {
        ++counters_.handshakes_succeeded;
    }
    observer_.handshake_finished(role_.id, id, o);
}

void DsmeMac::on_handshake_frame(const Frame& f) {
    if (!f.handshake) {
        return;
    }
    switch (f.kind) {
        case FrameKind::GtsRequest: handle_request(f); break;
        case FrameKind::GtsResponse: handle_response(f); break;
        case FrameKind::GtsNotify: handle_notify(f); break;
        case FrameKind::GtsChange: handle_deallocation(f); break;
        default: break;
    }
}

void DsmeMac::handle_request(const Frame& f) {
    const GtsHandshakeBody& b = *f.handshake;
    if (b.op == HandshakeOp::Duplicate) {
        handle_duplicate(f);
        return;
    }
    if (b.op != HandshakeOp::Allocate || !seen_requests_.insert(b.handshake_id).second) {
        return;
    }
    GtsHandshakeBody r;
    r.handshake_id = b.handshake_id;
    r.op = HandshakeOp::Allocate;
    r.initiator = b.initiator;
    r.responder = role_.id;
    r.want_gack = b.want_gack;

    auto deny = [&] {
        r.status = HandshakeStatus::Denied;
        CapItem item;
        item.frame = control_frame(FrameKind::GtsResponse, kBroadcastAddr, r);
        enqueue_cap(std::move(item));
    };

    const CellSearch search{sfs_per_msf_, cfg_.sf.channels, b.avoid_sf};
    const auto data = choose_data_cell(slots_, b.busy_times, b.occupied_cells, search, slot_rng_);
    if (!data) {
        deny();
        return;
    }
    std::optional<GtsCell> gack;
    bool gack_new = false;
    if (cfg_.scheme == AckScheme::GackGts && b.want_gack) {
        for (const auto& g : slots_.owned()) {
            if (g.desc.kind == GtsKind::Gack && g.desc.direction == GtsDirection::Tx &&
                within_gack_interval(*data, g.desc.cell) &&
                !(g.desc.cell.sf_index == data->sf_index && g.desc.cell.slot_index == data->slot_index)) {
                gack = g.desc.cell;
                break;
            }
        }
        if (!gack) {
            auto busy = b.busy_times;
            busy.push_back(*data);
            gack = choose_gack_cell(slots_, busy, gack_candidate_superframes(*data), cfg_.sf.channels, slot_rng_);
            if (!gack || !within_gack_interval(*data, *gack)) {
                deny();
                return;
            }
            gack_new = true;
        }
    }

    const std::int64_t next = current_msf() + 1;
    OwnedGts rx;
    rx.desc = GtsDescriptor{*data, GtsDirection::Rx, GtsKind::Data, b.initiator};
    rx.active_from_msf = next;
    rx.handshake_id = b.handshake_id;
    rx.provisional = true;
    slots_.add(rx);
    if (gack_new) {
        OwnedGts tx;
        tx.desc = GtsDescriptor{*gack, GtsDirection::Tx, GtsKind::Gack, kBroadcastAddr};
        tx.active_from_msf = next;
        tx.handshake_id = b.handshake_id;
        tx.provisional = true;
        slots_.add(tx);
    }
    Responding pending;
    pending.initiator = b.initiator;
    pending.data = *data;
    pending.gack = gack;
    pending.gack_new = gack_new;
    const std::uint32_t id = b.handshake_id;
    pending.deadline_event =
        kernel_.schedule_in(2 * msf_len_, role_.id, EventKind::Timer, [this, id] { responder_rollback(id); });
    responding_[id] = pending;

    r.status = HandshakeStatus::Success;
    r.data_cell = data;
    r.gack_cell = gack;
    CapItem item;
    item.frame = control_frame(FrameKind::GtsResponse, kBroadcastAddr, r);
    enqueue_cap(std::move(item));
}

void DsmeMac::handle_response(const Frame& f) {
    const GtsHandshakeBody& b = *f.handshake;
    if (b.op == HandshakeOp::Deallocate) {
        handle_deallocation(f);
        return;
    }
    if (b.op != HandshakeOp::Allocate) {
        return;
    }
    if (b.initiator == role_.id) {
        if (!initiation_ || initiation_->id != b.handshake_id) {
            return;
        }
        if (b.status != HandshakeStatus::Success || !b.data_cell) {
            finish_initiation(HandshakeOutcome::Denied, true);
            return;
        }
        const GtsCell data = *b.data_cell;
        GtsHandshakeBody n = b;
        n.busy_times.clear();
        n.occupied_cells.clear();
        auto abort = [&] {
            n.status = HandshakeStatus::Aborted;
            CapItem item;
            item.frame = control_frame(FrameKind::GtsNotify, kBroadcastAddr, n);
            enqueue_cap(std::move(item));
        };
        if (slots_.time_busy(data.sf_index, data.slot_index)) {
            abort();
            finish_initiation(HandshakeOutcome::Aborted, true);
            return;
        }
        bool gack_known = false;
        if (b.gack_cell) {
            const GtsCell g = *b.gack_cell;
            gack_known = slots_.find(GtsDescriptor{g, GtsDirection::Rx, GtsKind::Gack, f.src}) != nullptr;
            const bool same_time = g.sf_index == data.sf_index && g.slot_index == data.slot_index;
            if (!gack_known && (slots_.time_busy(g.sf_index, g.slot_index) || same_time)) {
                ++gack_conflicts_;
                abort();
                pending_avoid_sf_ = data.sf_index;
                if (gack_conflicts_ >= 2 && !same_time) {
                    relocate_conflict(g.sf_index, g.slot_index);
                    gack_conflicts_ = 0;
                }
                const NodeAddr peer = initiation_->peer;
                const bool want = initiation_->want_gack;
                finish_initiation(HandshakeOutcome::Aborted, false);
                start_handshake(peer, want);
                return;
            }
        }
        const std::int64_t next = current_msf() + 1;
        OwnedGts tx;
        tx.desc = GtsDescriptor{data, GtsDirection::Tx, GtsKind::Data, f.src};
        tx.active_from_msf = next;
        tx.handshake_id = b.handshake_id;
        slots_.add(tx);
        if (b.gack_cell && !gack_known) {
            OwnedGts rx;
            rx.desc = GtsDescriptor{*b.gack_cell, GtsDirection::Rx, GtsKind::Gack, f.src};
            rx.active_from_msf = next;
            rx.handshake_id = b.handshake_id;
            slots_.add(rx);
        }
        n.status = HandshakeStatus::Success;
        CapItem item;
        item.frame = control_frame(FrameKind::GtsNotify, kBroadcastAddr, n);
        enqueue_cap(std::move(item));
        gack_conflicts_ = 0;
        finish_initiation(HandshakeOutcome::Success, false);
        return;
    }
    if (b.status == HandshakeStatus::Success && b.data_cell && b.responder != role_.id) {
        check_duplicate(f);
        slots_.mark(AllocationKey{b.initiator, b.responder, *b.data_cell});
        if (b.gack_cell) {
            slots_.mark(AllocationKey{b.responder, kBroadcastAddr, *b.gack_cell});
        }
    }
}

void DsmeMac::handle_notify(const Frame& f) {
    const GtsHandshakeBody& b = *f.handshake;
    switch (b.op) {
        case HandshakeOp::Duplicate:
            if (f.dst == role_.id) {
                handle_duplicate(f);
            }
            return;
        case HandshakeOp::Deallocate:
            handle_deallocation(f);
            return;
        case HandshakeOp::Allocate:
            break;
    }
    if (b.responder == role_.id) {
        auto it = responding_.find(b.handshake_id);
        if (it == responding_.end()) {
            return;
        }
        if (b.status == HandshakeStatus::Success) {
            kernel_.cancel(it->second.deadline_event);
            for (auto& g : slots_.owned()) {
                if (g.handshake_id == b.handshake_id) {
                    g.provisional = false;
                }
                if (it->second.gack && g.desc.kind == GtsKind::Gack && g.desc.cell == *it->second.gack) {
                    g.provisional = false;
                }
            }
            responding_.erase(it);
        } else {
            responder_rollback(b.handshake_id);
        }
        return;
    }
    if (b.initiator != role_.id && b.status == HandshakeStatus::Success && b.data_cell) {
        check_duplicate(f);
        slots_.mark(AllocationKey{b.initiator, b.responder, *b.data_cell});
        if (b.gack_cell) {
            slots_.mark(AllocationKey{b.responder, kBroadcastAddr, *b.gack_cell});
        }
    }
}

void DsmeMac::check_duplicate(const Frame& f) {
    const GtsHandshakeBody& b = *f.handshake;
    if (!b.data_cell || b.initiator == role_.id || b.responder == role_.id) {
        return;
    }
    const bool clash = std::any_of(slots_.owned().begin(), slots_.owned().end(),
                                   [&](const OwnedGts& g) { return g.desc.cell == *b.data_cell; });
    if (!clash) {
        return;
    }
    GtsHandshakeBody d;
    d.handshake_id = b.handshake_id;
    d.op = HandshakeOp::Duplicate;
    d.initiator = b.initiator;
    d.responder = b.responder;
    d.data_cell = b.data_cell;
    CapItem item;
    item.frame = control_frame(FrameKind::GtsNotify, f.src, d);
    item.needs_ack = true;
    enqueue_cap(std::move(item));
}

void DsmeMac::handle_duplicate(const Frame& f) {
    const GtsHandshakeBody& b = *f.handshake;
    ++counters_.duplicates_received;
    if (!b.data_cell) {
        return;
    }
    if (responding_.count(b.handshake_id)) {
        responder_rollback(b.handshake_id);
        return;
    }
    if (b.initiator == role_.id) {
        const GtsDescriptor d{*b.data_cell, GtsDirection::Tx, GtsKind::Data, b.responder};
        if (slots_.find(d)) {
            release_as_initiator(d, FrameKind::GtsNotify);
        }
    } else if (b.responder == role_.id) {
        const GtsDescriptor d{*b.data_cell, GtsDirection::Rx, GtsKind::Data, b.initiator};
        if (slots_.find(d)) {
            release_as_responder(d);
        }
    }
}

void DsmeMac::responder_rollback(std::uint32_t id) {
    auto it = responding_.find(id);
    if (it == responding_.end()) {
        return;
    }
    const Responding r = it->second;
    responding_.erase(it);
    kernel_.cancel(r.deadline_event);
    slots_.remove(GtsDescriptor{r.data, GtsDirection::Rx, GtsKind::Data, r.initiator});
    std::optional<GtsCell> released_gack;
    if (r.gack_new && r.gack) {
        const GtsDescriptor gd{*r.gack, GtsDirection::Tx, GtsKind::Gack, kBroadcastAddr};
        const OwnedGts* g = slots_.find(gd);
        const bool shared = std::any_of(responding_.begin(), responding_.end(),
                                        [&](const auto& kv) { return kv.second.gack == r.gack; });
        if (g && g->provisional && !shared) {
            slots_.remove(gd);
            released_gack = r.gack;
        }
    }
    ++counters_.rollbacks;
    GtsHandshakeBody b;
    b.handshake_id = id;
    b.op = HandshakeOp::Deallocate;
    b.initiator = r.initiator;
    b.responder = role_.id;
    b.data_cell = r.data;
    b.gack_cell = released_gack;
    CapItem item;
    item.frame = control_frame(FrameKind::GtsResponse, kBroadcastAddr, b);
    enqueue_cap(std::move(item));
}

void DsmeMac::handle_deallocation(const Frame& f) {
    const GtsHandshakeBody& b = *f.handshake;
    const NodeAddr me = role_.id;
    if (b.data_cell) {
        if (b.initiator == me && f.src != me) {
            const GtsDescriptor d{*b.data_cell, GtsDirection::Tx, GtsKind::Data, b.responder};
            if (slots_.find(d)) {
                release_as_initiator(d, FrameKind::GtsNotify);
            }
        } else if (b.responder == me && f.src != me) {
            if (responding_.count(b.handshake_id) && responding_[b.handshake_id].data == *b.data_cell) {
                responder_rollback(b.handshake_id);
            } else {
                const GtsDescriptor d{*b.data_cell, GtsDirection::Rx, GtsKind::Data, b.initiator};
                if (slots_.find(d)) {
                    release_as_responder(d);
                }
            }
        } else if (b.initiator != me && b.responder != me) {
            slots_.unmark(AllocationKey{b.initiator, b.responder, *b.data_cell});
        }
    }
    if (b.gack_cell && b.responder != me) {
        slots_.unmark(AllocationKey{b.responder, kBroadcastAddr, *b.gack_cell});
        slots_.remove(GtsDescriptor{*b.gack_cell, GtsDirection::Rx, GtsKind::Gack, b.responder});
    }
}

void DsmeMac::release(const GtsDescriptor& d) {
    if (d.kind == GtsKind::Data) {
        if (d.direction == GtsDirection::Tx) {
            release_as_initiator(d, FrameKind::GtsNotify);
        } else {
            release_as_responder(d);
        }
    } else if (d.direction == GtsDirection::Tx) {
        release_gack_slot(d);
    } else {
        slots_.remove(d);
    }
}

void DsmeMac::release_as_initiator(const GtsDescriptor& d, FrameKind kind) {
    if (!slots_.remove(d)) {
        return;
    }
    GtsHandshakeBody b;
    b.op = HandshakeOp::Deallocate;
    b.initiator = role_.id;
    b.responder = d.peer;
    b.data_cell = d.cell;
    CapItem item;
    item.frame = control_frame(kind, kBroadcastAddr, b);
    enqueue_cap(std::move(item));
    drop_orphan_gack_listeners();
}

void DsmeMac::release_as_responder(const GtsDescriptor& d) {
    if (!slots_.remove(d)) {
        return;
    }
    GtsHandshakeBody b;
    b.op = HandshakeOp::Deallocate;
    b.initiator = d.peer;
    b.responder = role_.id;
    b.data_cell = d.cell;
    CapItem item;
    item.frame = control_frame(FrameKind::GtsResponse, kBroadcastAddr, b);
    enqueue_cap(std::move(item));
}

void DsmeMac::release_gack_slot(const GtsDescriptor& d) {
    if (!slots_.remove(d)) {
        return;
    }
    GtsHandshakeBody b;
    b.op = HandshakeOp::Deallocate;
    b.initiator = role_.id;
    b.responder = role_.id;
    b.gack_cell = d.cell;
    CapItem item;
    item.frame = control_frame(FrameKind::GtsResponse, kBroadcastAddr, b);
    enqueue_cap(std::move(item));
}

void DsmeMac::relocate_conflict(int sf, int slot) {
    const OwnedGts* g = slots_.at_time(sf, slot);
    if (!g) {
        return;
    }
    const GtsDescriptor d = g->desc;
    ++counters_.relocations;
    if (d.kind == GtsKind::Data && d.direction == GtsDirection::Tx) {
        release_as_initiator(d, FrameKind::GtsChange);
    } else if (d.kind == GtsKind::Data) {
        slots_.remove(d);
        GtsHandshakeBody b;
        b.op = HandshakeOp::Deallocate;
        b.initiator = d.peer;
        b.responder = role_.id;
        b.data_cell = d.cell;
        CapItem item;
        item.frame = control_frame(FrameKind::GtsChange, kBroadcastAddr, b);
        enqueue_cap(std::move(item));
    } else {
        release(d);
    }
}

void DsmeMac::drop_orphan_gack_listeners() {
    std::vector<GtsDescriptor> orphans;
    for (const auto& g : slots_.owned()) {
        if (g.desc.kind != GtsKind::Gack || g.desc.direction != GtsDirection::Rx) {
            continue;
        }
        const bool needed = std::any_of(slots_.owned().begin(), slots_.owned().end(), [&](const OwnedGts& o) {
            return o.desc.kind == GtsKind::Data && o.desc.direction == GtsDirection::Tx && o.desc.peer == g.desc.peer;
        });
        if (!needed) {
            orphans.push_back(g.desc);
        }
    }
    for (const auto& d : orphans) {
        slots_.remove(d);
    }
}

void DsmeMac::demand_policy(bool msf_boundary) {
    if (!cfg_.traffic_adaptive || !role_.parent || initiation_ || kernel_.now() < request_backoff_until_) {
        return;
    }
    const std::size_t waiting = queue_.waiting();
    if (waiting == 0) {
        return;
    }
    const std::int64_t m = current_msf();
    bool has_tx = false;
    bool pending_activation = false;
    for (const auto& g : slots_.owned()) {
        if (g.desc.kind == GtsKind::Data && g.desc.direction == GtsDirection::Tx && g.desc.peer == *role_.parent) {
            has_tx = true;
            pending_activation = pending_activation || g.active_from_msf > m;
        }
    }
    const bool want = !has_tx || (!pending_activation && (msf_boundary || waiting > queue_.capacity() / 2));
    if (want) {
        start_handshake(*role_.parent, cfg_.scheme == AckScheme::GackGts);
    }
}

}  // namespace dsme::mac
