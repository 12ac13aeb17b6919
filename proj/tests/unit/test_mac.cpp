#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <random>
#include <set>

#include "mac_harness.hpp"

using namespace dsme;
using harness::Net;
using mac::AckScheme;

namespace {

constexpr GtsCell kCell{0, 9, 1};

Symbols slot_start(int sf, int slot) {
    return (static_cast<Symbols>(sf) * kSlotsPerSuperframe + slot) * (kBaseSlotSymbols << 3);
}

bool has_owned(const mac::DsmeMac& m, const GtsDescriptor& d) {
    const auto& o = m.slots().owned();
    return std::any_of(o.begin(), o.end(), [&](const mac::OwnedGts& g) { return g.desc == d; });
}

}  // namespace

TEST_CASE("one CFP slot carries 5 acked or 13 group-acked minimum frames") {
    for (auto [scheme, expected] : {std::pair{AckScheme::RegularAck, 5}, std::pair{AckScheme::GackCap, 13}}) {
        CAPTURE(mac::to_string(scheme));
        Net net('s', 2, harness::config(scheme, 3, 3, 3));
        net.link(1, kCell);
        net.enqueue(1, 20, 1);
        net.kernel.run_until(slot_start(0, 10));
        CHECK(net.macs[1]->counters().data_frames_sent == static_cast<std::uint64_t>(expected));
        CHECK(net.rec.delivered_uids.size() == static_cast<std::size_t>(expected));
    }
}

TEST_CASE("a gap in the group ack bitmap requeues exactly the missing frame") {
    Net net('s', 2, harness::config(AckScheme::GackCap, 3, 3, 3));
    net.link(1, kCell);
    net.enqueue(1, 13, 1);
    int losses = 0;
    net.medium->set_loss_filter([&](sim::NodeId rx, const Frame& f) {
        if (rx == 0 && f.kind == FrameKind::Data && f.packet_uid == 7 && losses == 0) {
            ++losses;
            return true;
        }
        return false;
    });
    net.kernel.run_until(slot_start(0, 10));
    CHECK(net.rec.delivered_uids.size() == 12);
    CHECK(net.macs[1]->queue().outstanding() == 13);

    // The GACK goes out in the next CAP.
    net.kernel.run_until(slot_start(1, 9));
    CHECK(net.macs[1]->queue().outstanding() == 0);
    CHECK(net.macs[1]->queue().waiting() == 1);
    CHECK(net.rec.ack_delays.size() == 12);

    net.kernel.run_until(slot_start(1, 10));
    CHECK(net.rec.delivered_uids.size() == 13);
    CHECK(net.rec.delivered_uids.back() == 7);
    CHECK(net.rec.drops_retry.empty());
}

TEST_CASE("lost group acks lead to stale requeues and a retry drop") {
    Net net('s', 2, harness::config(AckScheme::GackCap, 3, 3, 3));
    net.link(1, kCell);
    net.enqueue(1, 13, 1);
    net.medium->set_loss_filter([](sim::NodeId rx, const Frame& f) { return rx == 1 && f.kind == FrameKind::Gack; });
    net.kernel.run_until(slot_start(40, 0));
    CHECK(net.macs[1]->counters().data_frames_sent == 13 * 4);
    CHECK(net.rec.drops_retry.size() == 13);
    for (const auto& [uid, n] : net.rec.drops_retry) {
        CHECK(n == 1);
    }
    const std::set<std::uint64_t> unique(net.rec.delivered_uids.begin(), net.rec.delivered_uids.end());
    CHECK(unique.size() == 13);
    CHECK(net.rec.delivered_uids.size() == 13);
    CHECK(net.macs[1]->queue().size() == 0);
}

TEST_CASE("a lost ack is recovered inside the slot and the duplicate is filtered") {
    Net net('s', 2, harness::config(AckScheme::RegularAck, 3, 3, 3));
    net.link(1, kCell);
    net.enqueue(1, 5, 1);
    bool lost = false;
    net.medium->set_loss_filter([&](sim::NodeId rx, const Frame& f) {
        if (rx == 1 && f.kind == FrameKind::Ack && !lost) {
            lost = true;
            return true;
        }
        return false;
    });
    net.kernel.run_until(slot_start(0, 10));
    CHECK(lost);
    CHECK(net.macs[1]->counters().data_frames_sent >= 3);
    CHECK(net.rec.delivered_uids.front() == 1);
    CHECK(std::count(net.rec.delivered_uids.begin(), net.rec.delivered_uids.end(), 1u) == 1);
    CHECK(net.macs[0]->counters().acks_sent == net.macs[1]->counters().data_frames_sent);
    REQUIRE(!net.rec.ack_delays.empty());
    // First-transmission reference: the recovered frame waited a full ack timeout.
    CHECK(net.rec.ack_delays.front() > kMacAckMaxWaitSymbols);
}

TEST_CASE("a frame is dropped after four unacknowledged transmissions") {
    Net net('s', 2, harness::config(AckScheme::RegularAck, 3, 3, 3));
    net.link(1, kCell);
    net.enqueue(1, 3, 1);
    net.medium->set_loss_filter([](sim::NodeId rx, const Frame& f) { return rx == 1 && f.kind == FrameKind::Ack; });
    net.kernel.run_until(slot_start(0, 10));
    CHECK(net.rec.drops_retry.count(1) == 1);
    CHECK(net.macs[1]->counters().data_frames_sent >= 4);
    CHECK(std::count(net.rec.delivered_uids.begin(), net.rec.delivered_uids.end(), 1u) == 1);
}

TEST_CASE("an idle node keeps its radio on for the beacon and CAP only") {
    Net net('s', 2, harness::config(AckScheme::RegularAck, 3, 3, 3));
    net.kernel.run_until(slot_start(16, 0));
    const auto l = net.medium->ledger(1);
    const double total = static_cast<double>(l.tx + l.rx + l.idle + l.off);
    const double on = static_cast<double>(l.tx + l.rx + l.idle) / total;
    CHECK(on == doctest::Approx(9.0 / 16.0).epsilon(0.005));
}

TEST_CASE("the allocation handshake installs matching descriptors") {
    Net net('s', 3, harness::config(AckScheme::RegularAck, 3, 3, 3));
    REQUIRE(net.macs[1]->start_handshake(0, false));
    CHECK_FALSE(net.macs[1]->start_handshake(0, false));
    net.kernel.run_until(slot_start(4, 0));
    REQUIRE(net.rec.outcomes.size() == 1);
    CHECK(net.rec.outcomes[0] == mac::HandshakeOutcome::Success);
    REQUIRE(net.macs[1]->slots().owned().size() == 1);
    const GtsDescriptor tx = net.macs[1]->slots().owned()[0].desc;
    CHECK(tx.direction == GtsDirection::Tx);
    CHECK(tx.peer == 0);
    CHECK(has_owned(*net.macs[0], GtsDescriptor{tx.cell, GtsDirection::Rx, GtsKind::Data, 1}));
    CHECK_FALSE(net.macs[0]->slots().owned()[0].provisional);
    CHECK(net.macs[2]->slots().heard(mac::AllocationKey{1, 0, tx.cell}));
    CHECK_FALSE(net.macs[0]->handshake_in_flight());
}

TEST_CASE("a group ack GTS handshake also allocates the acknowledgement cell") {
    Net net('s', 2, harness::config(AckScheme::GackGts, 3, 4, 4, 3));
    REQUIRE(net.macs[1]->start_handshake(0, true));
    net.kernel.run_until(8 * 2 * kSlotsPerSuperframe * (kBaseSlotSymbols << 3));
    REQUIRE(net.rec.outcomes.size() == 1);
    CHECK(net.rec.outcomes[0] == mac::HandshakeOutcome::Success);
    std::optional<GtsCell> data, gack_rx, gack_tx;
    for (const auto& g : net.macs[1]->slots().owned()) {
        if (g.desc.kind == GtsKind::Data) {
            data = g.desc.cell;
        } else {
            gack_rx = g.desc.cell;
            CHECK(g.desc.direction == GtsDirection::Rx);
        }
    }
    for (const auto& g : net.macs[0]->slots().owned()) {
        if (g.desc.kind == GtsKind::Gack) {
            gack_tx = g.desc.cell;
            CHECK(g.desc.direction == GtsDirection::Tx);
        }
    }
    REQUIRE(data);
    REQUIRE(gack_rx);
    REQUIRE(gack_tx);
    CHECK(*gack_rx == *gack_tx);
    CHECK(gack_tx->slot_index == kSlotsPerSuperframe - 1);
    const bool same_time = gack_tx->sf_index == data->sf_index && gack_tx->slot_index == data->slot_index;
    CHECK_FALSE(same_time);
}

TEST_CASE("group acks sent in a GACK GTS reach the sender") {
    Net net('s', 2, harness::config(AckScheme::GackGts, 3, 3, 3, 3));
    net.link(1, kCell);
    const GtsCell g{0, 15, 2};
    net.macs[0]->install(GtsDescriptor{g, GtsDirection::Tx, GtsKind::Gack, kBroadcastAddr});
    net.macs[1]->install(GtsDescriptor{g, GtsDirection::Rx, GtsKind::Gack, 0});
    net.enqueue(1, 13, 1);
    net.kernel.run_until(slot_start(1, 0));
    CHECK(net.rec.delivered_uids.size() == 13);
    CHECK(net.rec.ack_delays.size() == 13);
    CHECK(net.macs[0]->counters().gack_frames_sent == 1);
    CHECK(net.macs[1]->queue().size() == 0);
}

TEST_CASE("a duplicate notification releases the clashing allocation on both ends") {
    Net net('m', 3, harness::config(AckScheme::RegularAck, 3, 3, 3));
    net.link(1, kCell);
    net.macs[2]->install(GtsDescriptor{kCell, GtsDirection::Tx, GtsKind::Data, 0});
    net.macs[0]->install(GtsDescriptor{kCell, GtsDirection::Rx, GtsKind::Data, 2});

    Frame notify;
    notify.kind = FrameKind::GtsNotify;
    notify.src = 2;
    notify.dst = kBroadcastAddr;
    GtsHandshakeBody b;
    b.handshake_id = 0x20001;
    b.op = HandshakeOp::Allocate;
    b.initiator = 2;
    b.responder = 0;
    b.status = HandshakeStatus::Success;
    b.data_cell = kCell;
    notify.handshake = b;
    net.macs[1]->on_frame(notify, 0);

    net.kernel.run_until(slot_start(3, 0));
    CHECK(net.macs[2]->counters().duplicates_received == 1);
    CHECK(net.macs[2]->slots().owned().empty());
    CHECK(net.macs[0]->slots().owned().size() == 1);
    CHECK(has_owned(*net.macs[0], GtsDescriptor{kCell, GtsDirection::Rx, GtsKind::Data, 1}));
    CHECK(has_owned(*net.macs[1], GtsDescriptor{kCell, GtsDirection::Tx, GtsKind::Data, 0}));
}

TEST_CASE("handshakes under allocation loss end consistent or fully rolled back") {
    const auto cfg = harness::config(AckScheme::RegularAck, 3, 3, 3);
    int successes = 0;
    int rollbacks = 0;
    for (std::uint64_t trace = 0; trace < 1000; ++trace) {
        CAPTURE(trace);
        Net net('s', 3, cfg, trace + 1);
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
        net.kernel.run_until(slot_start(8, 0));

        REQUIRE(net.rec.outcomes.size() == 1);
        for (auto& m : net.macs) {
            REQUIRE_FALSE(m->handshake_in_flight());
        }
        bool rolled_back = true;
        for (std::size_t i = 0; i < net.macs.size(); ++i) {
            rolled_back = rolled_back && net.macs[i]->slots().snapshot() == before[i];
        }
        if (rolled_back) {
            ++rollbacks;
            continue;
        }
        const auto& tx = net.macs[1]->slots().owned();
        const auto& rx = net.macs[0]->slots().owned();
        REQUIRE(tx.size() == 1);
        REQUIRE(rx.size() == 1);
        CHECK(tx[0].desc == GtsDescriptor{tx[0].desc.cell, GtsDirection::Tx, GtsKind::Data, 0});
        CHECK(rx[0].desc == GtsDescriptor{tx[0].desc.cell, GtsDirection::Rx, GtsKind::Data, 1});
        CHECK_FALSE(rx[0].provisional);
        CHECK(net.macs[2]->slots().owned().empty());
        ++successes;
    }
    CHECK(successes > 0);
    CHECK(rollbacks > 0);
}
