#pragma once

#include <cstdint>
#include <functional>
#include <queue>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "dsme/frame_timing.hpp"

namespace dsme::sim {

using NodeId = std::uint16_t;
inline constexpr NodeId kKernelTarget = 0xFFFF;

enum class EventKind : std::uint8_t {
    SlotBoundary,
    TxEnd,
    AckTimeout,
    BackoffExpiry,
    AppArrival,
    JamStart,
    JamEnd,
    Timer,
};

struct Event {
    Symbols time = 0;
    std::uint64_t seqno = 0;
    NodeId target = kKernelTarget;
    EventKind kind = EventKind::Timer;
};

class PastEventError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Single-threaded discrete-event scheduler. Events with equal time fire in
/// insertion order.
class Kernel {
public:
    using Action = std::function<void()>;

    Symbols now() const { return now_; }

    /// Returns the event's seqno, usable with cancel(). Throws PastEventError
    /// when `time` lies before now().
    std::uint64_t schedule(Symbols time, NodeId target, EventKind kind, Action action);
    std::uint64_t schedule_in(Symbols delay, NodeId target, EventKind kind, Action action) {
        return schedule(now_ + delay, target, kind, std::move(action));
    }

    void cancel(std::uint64_t seqno);

    /// Dispatches every event with time < t_end, then advances the clock to
    /// t_end. Returns the number of events dispatched by this call.
    std::uint64_t run_until(Symbols t_end);

    std::uint64_t dispatched() const { return dispatched_; }
    std::size_t pending() const { return queue_.size(); }

    /// FNV-1a digest over (time, seqno, target, kind) of every dispatched event.
    std::uint64_t trace_digest() const { return digest_; }

private:
    struct Entry {
        Event ev;
        Action action;
    };
    struct Later {
        bool operator()(const Entry& a, const Entry& b) const {
            return a.ev.time != b.ev.time ? a.ev.time > b.ev.time : a.ev.seqno > b.ev.seqno;
        }
    };

    void mix(std::uint64_t v);

    std::priority_queue<Entry, std::vector<Entry>, Later> queue_;
    std::unordered_set<std::uint64_t> cancelled_;
    Symbols now_ = 0;
    std::uint64_t next_seqno_ = 0;
    std::uint64_t dispatched_ = 0;
    std::uint64_t digest_ = 0xcbf29ce484222325ULL;
};

}  // namespace dsme::sim
