#include "dsme/sim/kernel.hpp"

#include <string>

namespace dsme::sim {

std::uint64_t Kernel::schedule(Symbols time, NodeId target, EventKind kind, Action action) {
    if (time < now_) {
        throw PastEventError("event at t=" + std::to_string(time) + " scheduled at t=" + std::to_string(now_));
    }
    const std::uint64_t seqno = next_seqno_++;
    queue_.push(Entry{Event{time, seqno, target, kind}, std::move(action)});
    return seqno;
}

void Kernel::cancel(std::uint64_t seqno) {
    cancelled_.insert(seqno);
}

void Kernel::mix(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        digest_ ^= (v >> (8 * i)) & 0xFF;
        digest_ *= 0x100000001b3ULL;
    }
}

std::uint64_t Kernel::run_until(Symbols t_end) {
    std::uint64_t count = 0;
    while (!queue_.empty() && queue_.top().ev.time < t_end) {
        // priority_queue::top is const; the entry is discarded right after.
        Entry e = std::move(const_cast<Entry&>(queue_.top()));
        queue_.pop();
        if (!cancelled_.empty()) {
            if (auto it = cancelled_.find(e.ev.seqno); it != cancelled_.end()) {
                cancelled_.erase(it);
                continue;
            }
        }
        now_ = e.ev.time;
        mix(static_cast<std::uint64_t>(e.ev.time));
        mix(e.ev.seqno);
        mix((static_cast<std::uint64_t>(e.ev.target) << 8) | static_cast<std::uint64_t>(e.ev.kind));
        ++dispatched_;
        ++count;
        e.action();
    }
    if (t_end > now_) {
        now_ = t_end;
    }
    return count;
}

}  // namespace dsme::sim
