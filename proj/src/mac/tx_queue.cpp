#include "dsme/mac/tx_queue.hpp"

#include <algorithm>

namespace dsme::mac {

namespace {

// Signed distance a - b in sequence space.
int seq_diff(std::uint8_t a, std::uint8_t b) {
    return static_cast<std::int8_t>(static_cast<std::uint8_t>(a - b));
}

}  // namespace

bool TxQueue::push(Packet p) {
    if (full()) {
        return false;
    }
    p.seq = next_seq_++;
    fifo_.push_back(p);
    return true;
}

Packet* TxQueue::front_eligible() {
    if (fifo_.empty()) {
        return nullptr;
    }
    std::uint8_t oldest = fifo_.front().seq;
    auto older = [&](std::uint8_t s) {
        if (static_cast<std::uint8_t>(next_seq_ - s) > static_cast<std::uint8_t>(next_seq_ - oldest)) {
            oldest = s;
        }
    };
    for (const auto& p : fifo_) {
        older(p.seq);
    }
    for (const auto& p : unacked_) {
        older(p.seq);
    }
    const std::uint8_t span = static_cast<std::uint8_t>(fifo_.front().seq - oldest);
    return span < 128 ? &fifo_.front() : nullptr;
}

void TxQueue::mark_sent_front() {
    unacked_.push_back(fifo_.front());
    fifo_.pop_front();
    if (requeued_front_ > 0) {
        --requeued_front_;
    }
}

std::optional<Packet> TxQueue::pop_front() {
    if (fifo_.empty()) {
        return std::nullopt;
    }
    Packet p = fifo_.front();
    fifo_.pop_front();
    if (requeued_front_ > 0) {
        --requeued_front_;
    }
    return p;
}

std::optional<Packet> TxQueue::release(std::uint8_t seq) {
    auto it = std::find_if(unacked_.begin(), unacked_.end(), [&](const Packet& p) { return p.seq == seq; });
    if (it == unacked_.end()) {
        return std::nullopt;
    }
    Packet p = *it;
    unacked_.erase(it);
    return p;
}

bool TxQueue::requeue(std::uint8_t seq) {
    auto it = std::find_if(unacked_.begin(), unacked_.end(), [&](const Packet& p) { return p.seq == seq; });
    if (it == unacked_.end()) {
        return false;
    }
    Packet p = *it;
    unacked_.erase(it);
    // Requeued packets form a sorted run at the FIFO head.
    auto pos = fifo_.begin();
    std::size_t i = 0;
    while (i < requeued_front_ && seq_diff(pos->seq, p.seq) < 0) {
        ++pos;
        ++i;
    }
    fifo_.insert(pos, p);
    ++requeued_front_;
    return true;
}

std::vector<std::uint8_t> TxQueue::unacked_older_than(Symbols deadline) const {
    std::vector<std::uint8_t> out;
    for (const auto& p : unacked_) {
        if (p.last_tx_at < deadline) {
            out.push_back(p.seq);
        }
    }
    return out;
}

bool ReceiveWindow::accept(std::uint8_t seq) {
    if (!started_) {
        started_ = true;
        highest_ = seq;
        seen_[seq] = true;
        return true;
    }
    const int ahead = seq_diff(seq, highest_);
    if (ahead > 0) {
        // Slide: positions that re-enter the window become unseen.
        for (int k = 1; k <= ahead; ++k) {
            seen_[static_cast<std::uint8_t>(highest_ + k + 128)] = false;
        }
        for (int k = 1; k < ahead; ++k) {
            seen_[static_cast<std::uint8_t>(highest_ + k)] = false;
        }
        highest_ = seq;
        seen_[seq] = true;
        return true;
    }
    if (ahead == -128 || seen_[seq]) {
        return false;
    }
    seen_[seq] = true;
    return true;
}

void PendingAckLedger::record(NodeAddr src, std::uint8_t seq) {
    auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.src == src; });
    if (it == entries_.end()) {
        entries_.push_back(Entry{src, counter_++, {seq}});
        return;
    }
    if (std::find(it->seqs.begin(), it->seqs.end(), seq) == it->seqs.end()) {
        it->seqs.push_back(seq);
    }
}

namespace {

GackPayload make_payload(NodeAddr src, const std::vector<std::uint8_t>& seqs) {
    // All pending numbers of one source lie within half the sequence space.
    const std::uint8_t ref = seqs.front();
    int lo = 0;
    int hi = 0;
    for (std::uint8_t s : seqs) {
        lo = std::min(lo, seq_diff(s, ref));
        hi = std::max(hi, seq_diff(s, ref));
    }
    GackPayload p;
    p.node_addr = src;
    p.base_seq = static_cast<std::uint8_t>(ref + lo);
    p.bitmap.assign(static_cast<std::size_t>((hi - lo) / 8 + 1), 0);
    for (std::uint8_t s : seqs) {
        const auto bit = static_cast<std::uint8_t>(s - p.base_seq);
        p.bitmap[bit / 8] |= static_cast<std::uint8_t>(0x80u >> (bit % 8));
    }
    return p;
}

}  // namespace

std::optional<GackPayload> PendingAckLedger::payload_for(NodeAddr src) const {
    auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.src == src; });
    if (it == entries_.end()) {
        return std::nullopt;
    }
    return make_payload(src, it->seqs);
}

GackBody PendingAckLedger::drain(std::size_t max_octets) {
    std::sort(entries_.begin(), entries_.end(), [](const Entry& a, const Entry& b) { return a.order < b.order; });
    GackBody body;
    std::size_t size = 1;
    std::vector<Entry> kept;
    for (auto& e : entries_) {
        GackPayload p = make_payload(e.src, e.seqs);
        const std::size_t need = 4 + p.bitmap_len();
        if (size + need <= max_octets && body.payloads.size() < 255) {
            size += need;
            body.payloads.push_back(std::move(p));
        } else {
            kept.push_back(std::move(e));
        }
    }
    entries_ = std::move(kept);
    return body;
}

}  // namespace dsme::mac
