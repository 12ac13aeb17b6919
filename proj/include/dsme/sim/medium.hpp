#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "dsme/frames.hpp"
#include "dsme/sim/kernel.hpp"
#include "dsme/sim/topology.hpp"

namespace dsme::sim {

enum class RadioMode : std::uint8_t { Off, Listen, Tx };

/// Cumulative time per radio state. The buckets always sum to the time
/// elapsed since the medium was created.
struct RadioLedger {
    Symbols tx = 0;
    Symbols rx = 0;
    Symbols idle = 0;
    Symbols off = 0;

    Symbols total() const { return tx + rx + idle + off; }
    RadioLedger& operator+=(const RadioLedger& o) {
        tx += o.tx;
        rx += o.rx;
        idle += o.idle;
        off += o.off;
        return *this;
    }
};

class BusyRadio : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

struct JammerConfig {
    Symbols interval = 0;
    Symbols duration = 0;
    Symbols first_start = 0;
};

inline constexpr Symbols kCcaSymbols = 8;

/// Shared 16-channel radio channel. A frame reaches every adjacent node that
/// listens on its channel for the whole airtime, unless another adjacent
/// transmission on the same channel or a jam burst overlaps it there; then it
/// is lost at that receiver as a whole.
class Medium {
public:
    using DeliverFn = std::function<void(NodeId rx, const Frame& f, Symbols start)>;
    using TxDoneFn = std::function<void(NodeId tx, const Frame& f)>;
    using LossFilter = std::function<bool(NodeId rx, const Frame& f)>;

    Medium(Kernel& kernel, const Topology& topo);

    void set_handlers(DeliverFn deliver, TxDoneFn tx_done);
    /// Frames for which the filter returns true are silently dropped at that
    /// receiver. Used for scripted loss traces.
    void set_loss_filter(LossFilter f) { loss_filter_ = std::move(f); }

    void listen(NodeId n, int channel);
    void sleep(NodeId n);

    /// Starts a transmission now and returns its airtime. The radio returns
    /// to listening on the same channel when it ends.
    Symbols transmit(NodeId n, Frame f, int channel);

    /// Clear channel assessment over [now, now + kCcaSymbols).
    bool channel_busy(NodeId n, int channel) const;

    /// Schedules periodic bursts that corrupt every reception on all channels.
    void start_jammer(const JammerConfig& cfg);
    bool jamming() const { return jam_active_; }

    RadioMode mode(NodeId n) const { return nodes_[n].mode; }
    int channel(NodeId n) const { return nodes_[n].channel; }
    bool receiving(NodeId n) const { return !nodes_[n].receptions.empty(); }

    RadioLedger ledger(NodeId n) const;
    std::uint64_t frames_sent() const { return frames_sent_; }
    std::uint64_t frames_delivered() const { return frames_delivered_; }
    std::uint64_t frames_corrupted() const { return frames_corrupted_; }

private:
    struct Reception {
        std::uint64_t tx_id;
        bool corrupted;
    };
    struct NodeState {
        RadioMode mode = RadioMode::Off;
        int channel = 0;
        Symbols since = 0;
        RadioLedger ledger;
        std::vector<Reception> receptions;
    };
    struct ActiveTx {
        std::uint64_t id;
        NodeId src;
        int channel;
        Symbols start;
        Symbols end;
        Frame frame;
    };

    void account(NodeId n);
    void drop_receptions(NodeId n);
    void finish(std::uint64_t tx_id);
    void jam_start();

    Kernel& kernel_;
    const Topology& topo_;
    std::vector<NodeState> nodes_;
    std::vector<ActiveTx> active_;
    DeliverFn deliver_;
    TxDoneFn tx_done_;
    LossFilter loss_filter_;
    std::optional<JammerConfig> jammer_;
    bool jam_active_ = false;
    Symbols jam_until_ = 0;
    std::uint64_t next_tx_id_ = 0;
    std::uint64_t frames_sent_ = 0;
    std::uint64_t frames_delivered_ = 0;
    std::uint64_t frames_corrupted_ = 0;
};

}  // namespace dsme::sim
