#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string_view>
#include <vector>

#include "dsme/frame_timing.hpp"
#include "dsme/frames.hpp"
#include "dsme/mac/slot_map.hpp"
#include "dsme/mac/tx_queue.hpp"
#include "dsme/sim/kernel.hpp"
#include "dsme/sim/medium.hpp"

namespace dsme::mac {

enum class AckScheme { RegularAck, GackBeacon, GackCap, GackGts };

const char* to_string(AckScheme s);
std::optional<AckScheme> parse_scheme(std::string_view name);
inline bool uses_group_ack(AckScheme s) { return s != AckScheme::RegularAck; }

enum class DropCause { Queue, Retry };

enum class HandshakeOutcome { Success, Timeout, Denied, Aborted, AccessFailure };

/// Receives protocol outcomes that the experiment layer turns into metrics.
class MacObserver {
public:
    virtual ~MacObserver() = default;
    virtual void delivered(NodeAddr /*sink*/, const Packet& /*p*/, Symbols /*now*/) {}
    virtual void dropped(NodeAddr /*node*/, const Packet& /*p*/, DropCause /*cause*/, Symbols /*now*/) {}
    virtual void acknowledged(NodeAddr /*node*/, const Packet& /*p*/, Symbols /*delay*/) {}
    virtual void handshake_finished(NodeAddr /*initiator*/, std::uint32_t /*id*/, HandshakeOutcome /*o*/) {}
};

struct MacConfig {
    AckScheme scheme = AckScheme::RegularAck;
    SuperframeConfig sf;
    int cap_channel = 0;
    std::size_t queue_capacity = kQueueCapacity;
    int max_transmissions = 4;
    int min_be = 3;
    int max_be = 5;
    int max_csma_backoffs = 4;
    int max_frame_retries = 3;
    int idle_msfs_before_release = 4;
    /// Allocate and release data GTS from queue state. Off in tests that drive
    /// the handshake by hand.
    bool traffic_adaptive = true;
    Symbols rx_guard = kMacAckMaxWaitSymbols + kLifsSymbols + sim::kCcaSymbols;
};

inline constexpr Symbols kUnitBackoffSymbols = 20;

struct NodeRole {
    NodeAddr id = 0;
    std::optional<NodeAddr> parent;
    std::vector<NodeAddr> children;
    std::optional<int> beacon_sf;  // superframe within the beacon interval
};

struct MacCounters {
    std::uint64_t data_frames_sent = 0;
    std::uint64_t gack_frames_sent = 0;
    std::uint64_t beacons_sent = 0;
    std::uint64_t acks_sent = 0;
    std::uint64_t handshakes_started = 0;
    std::uint64_t handshakes_succeeded = 0;
    std::uint64_t cap_access_failures = 0;
    std::uint64_t duplicates_received = 0;
    std::uint64_t rollbacks = 0;
    std::uint64_t relocations = 0;
};

/// DSME MAC of one node: beacon emission, slotted CSMA/CA in the CAP, GTS
/// bursts, the 3-way GTS handshake and the four acknowledgement schemes.
class DsmeMac {
public:
    DsmeMac(NodeRole role, const MacConfig& cfg, sim::Kernel& kernel, sim::Medium& medium, MacObserver& observer,
            std::uint64_t seed);

    /// Schedules the first superframe boundary at or after now.
    void start();

    /// Queues a packet for the parent. Counts a queue drop and returns false
    /// when the buffer budget is exhausted.
    bool app_enqueue(Packet p);

    void on_frame(const Frame& f, Symbols start);
    void on_tx_done(const Frame& f);

    /// Starts a 3-way allocation handshake toward `peer`. False when one is
    /// already in flight.
    bool start_handshake(NodeAddr peer, bool want_gack);

    /// Releases an owned data GTS through the deallocation handshake.
    void release(const GtsDescriptor& d);

    /// Installs a descriptor without signalling, active from `from_msf`.
    void install(const GtsDescriptor& d, std::int64_t from_msf = 0);

    const NodeRole& role() const { return role_; }
    const SlotMap& slots() const { return slots_; }
    const TxQueue& queue() const { return queue_; }
    const PendingAckLedger& pending_acks() const { return ledger_; }
    const MacCounters& counters() const { return counters_; }
    bool handshake_in_flight() const { return initiation_.has_value() || !responding_.empty(); }

    /// Runs the GACK staleness check immediately.
    void stale_sweep();

private:
    struct CapItem {
        Frame frame;
        bool needs_ack = false;
        bool is_gack = false;
        int retries = 0;
    };
    struct Initiation {
        std::uint32_t id = 0;
        NodeAddr peer = 0;
        bool want_gack = false;
        int avoid_sf = -1;
        std::uint64_t timeout_event = 0;
    };
    struct Responding {
        NodeAddr initiator = 0;
        GtsCell data;
        std::optional<GtsCell> gack;
        bool gack_new = false;
        std::uint64_t deadline_event = 0;
    };
    struct Burst {
        bool active = false;
        GtsDescriptor desc;
        Symbols slot_end = 0;
        bool awaiting_ack = false;
        std::uint8_t seq = 0;
        std::uint64_t ack_timer = 0;
        std::uint64_t generation = 0;
    };

    // Timing.
    Symbols slot_len() const { return slot_len_; }
    std::int64_t superframe_index(Symbols t) const { return t / sf_len_; }
    int sf_in_msf(std::int64_t k) const { return static_cast<int>(k % sfs_per_msf_); }
    std::int64_t msf_of(std::int64_t k) const { return k / sfs_per_msf_; }
    std::int64_t current_msf() const { return msf_of(superframe_index(kernel_.now())); }
    bool in_cap() const;
    Symbols cap_end() const;
    Symbols gack_interval() const;

    // Superframe structure.
    void on_superframe(std::int64_t k);
    void on_msf_boundary();
    void on_cap_start();
    void on_cap_end(std::int64_t k);
    void on_cfp_slot(GtsDescriptor d, Symbols slot_end);
    void on_slot_end(std::int64_t k, int slot);
    const OwnedGts* active_at(int sf, int slot) const;
    void listen_with_guard(int channel, Symbols slot_end);
    void guard_check(Symbols slot_end, std::uint64_t generation);
    void beacon_tick();

    // CAP access.
    void enqueue_cap(CapItem item, bool front = false);
    void cap_kick();
    void csma_backoff();
    void csma_cca(int remaining, std::uint64_t attempt);
    void csma_transmit(std::uint64_t attempt);
    void csma_channel_busy(std::uint64_t attempt);
    void cap_item_done();
    void cap_item_failed();
    Symbols estimate_airtime(const CapItem& item) const;
    void send_cap_ack(const Frame& f);

    // CFP data path.
    void burst_step(std::uint64_t generation);
    void data_ack_timeout(std::uint64_t generation);
    void on_data(const Frame& f, Symbols start);
    void end_burst();
    void on_ack(const Frame& f);
    void deliver_up(const Frame& f);
    void drop(const Packet& p, DropCause cause);
    void requeue_or_drop(std::uint8_t seq);

    // Group acknowledgements.
    void on_gack(const GackBody& body, NodeAddr from);
    void emit_gack_in_slot(Symbols slot_end);
    std::size_t max_beacon_body() const;
    std::size_t preview_gack_size(std::size_t max_octets) const;

    // Handshake.
    void on_handshake_frame(const Frame& f);
    void handle_request(const Frame& f);
    void handle_response(const Frame& f);
    void handle_notify(const Frame& f);
    void handle_deallocation(const Frame& f);
    void handle_duplicate(const Frame& f);
    void check_duplicate(const Frame& f);
    void finish_initiation(HandshakeOutcome o, bool backoff);
    void responder_rollback(std::uint32_t id);
    void release_as_initiator(const GtsDescriptor& d, FrameKind kind);
    void release_as_responder(const GtsDescriptor& d);
    void release_gack_slot(const GtsDescriptor& d);
    void relocate_conflict(int sf, int slot);
    void drop_orphan_gack_listeners();
    void demand_policy(bool msf_boundary);
    Frame control_frame(FrameKind kind, NodeAddr dst, GtsHandshakeBody body);
    bool within_gack_interval(const GtsCell& data, const GtsCell& gack) const;
    std::vector<int> gack_candidate_superframes(const GtsCell& data) const;

    NodeRole role_;
    MacConfig cfg_;
    sim::Kernel& kernel_;
    sim::Medium& medium_;
    MacObserver& observer_;
    std::mt19937_64 backoff_rng_;
    std::mt19937_64 slot_rng_;

    Symbols slot_len_;
    Symbols sf_len_;
    Symbols msf_len_;
    int sfs_per_msf_;
    int sfs_per_bi_;

    TxQueue queue_;
    PendingAckLedger ledger_;
    std::map<NodeAddr, ReceiveWindow> rx_windows_;
    SlotMap slots_;
    MacCounters counters_;

    std::deque<CapItem> cap_queue_;
    bool csma_busy_ = false;
    bool cap_awaiting_ack_ = false;
    int csma_nb_ = 0;
    int csma_be_ = 3;
    std::uint64_t csma_attempt_ = 0;
    std::uint64_t cap_ack_timer_ = 0;
    std::uint8_t dsn_ = 0;
    bool gack_queued_ = false;
    bool cap_tx_ = false;

    Burst burst_;
    std::uint64_t burst_counter_ = 0;
    Symbols gack_slot_end_ = 0;
    std::uint64_t rx_generation_ = 0;
    Symbols last_rx_activity_ = 0;

    std::optional<Initiation> initiation_;
    std::map<std::uint32_t, Responding> responding_;
    std::set<std::uint32_t> seen_requests_;
    std::uint32_t next_handshake_ = 1;
    Symbols request_backoff_until_ = 0;
    int gack_conflicts_ = 0;
    int pending_avoid_sf_ = -1;
};

}  // namespace dsme::mac
