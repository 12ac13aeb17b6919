#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <vector>

#include "dsme/frames.hpp"

namespace dsme::mac {

inline constexpr std::size_t kQueueCapacity = 22;

struct Packet {
    std::uint64_t uid = 0;
    NodeAddr origin = 0;
    int payload_len = 0;
    Symbols generated_at = 0;
    std::uint8_t seq = 0;
    int transmissions = 0;
    Symbols first_tx_at = -1;
    Symbols last_tx_at = -1;
};

/// FIFO of packets waiting for a GTS plus the buffer of packets that were
/// sent and still wait for a (group) acknowledgement. Both share one
/// capacity budget. All packets go to the same next hop.
class TxQueue {
public:
    explicit TxQueue(std::size_t capacity = kQueueCapacity) : capacity_(capacity) {}

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return fifo_.size() + unacked_.size(); }
    std::size_t waiting() const { return fifo_.size(); }
    std::size_t outstanding() const { return unacked_.size(); }
    bool full() const { return size() >= capacity_; }
    bool empty() const { return size() == 0; }

    /// Appends a packet and stamps it with the next sequence number.
    /// Returns false, leaving the queue untouched, when the budget is spent.
    bool push(Packet p);

    /// Front of the FIFO if its sequence number stays within half the
    /// sequence space of the oldest unreleased packet.
    Packet* front_eligible();
    Packet* front() { return fifo_.empty() ? nullptr : &fifo_.front(); }

    /// Moves the FIFO front into the sent-unacked buffer.
    void mark_sent_front();
    std::optional<Packet> pop_front();

    const std::vector<Packet>& unacked() const { return unacked_; }
    std::optional<Packet> release(std::uint8_t seq);
    /// Moves an unacked packet back to the FIFO front. Several requeued packets
    /// keep their sequence order.
    bool requeue(std::uint8_t seq);
    std::vector<std::uint8_t> unacked_older_than(Symbols deadline) const;

    std::uint8_t next_seq() const { return next_seq_; }

private:
    std::size_t capacity_;
    std::deque<Packet> fifo_;
    std::vector<Packet> unacked_;
    std::uint8_t next_seq_ = 0;
    std::size_t requeued_front_ = 0;
};

/// Receiver-side duplicate filter for one sender (selective-repeat window of
/// 128 sequence numbers).
class ReceiveWindow {
public:
    /// True the first time a sequence number is seen inside the window.
    bool accept(std::uint8_t seq);

private:
    bool started_ = false;
    std::uint8_t highest_ = 0;
    std::vector<bool> seen_ = std::vector<bool>(256, false);
};

/// Sequence numbers received per source since the last group ack went out.
class PendingAckLedger {
public:
    void record(NodeAddr src, std::uint8_t seq);
    bool empty() const { return entries_.empty(); }
    std::size_t sources() const { return entries_.size(); }

    /// Payload acknowledging everything pending for `src`, or nothing.
    std::optional<GackPayload> payload_for(NodeAddr src) const;

    /// Builds a body no larger than `max_octets` (oldest sources first) and
    /// clears what it includes. Sources that do not fit stay pending.
    GackBody drain(std::size_t max_octets);

private:
    struct Entry {
        NodeAddr src;
        std::uint64_t order;
        std::vector<std::uint8_t> seqs;
    };
    std::vector<Entry> entries_;
    std::uint64_t counter_ = 0;
};

}  // namespace dsme::mac
