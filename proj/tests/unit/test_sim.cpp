#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <vector>

#include "dsme/sim/kernel.hpp"
#include "dsme/sim/medium.hpp"
#include "dsme/sim/topology.hpp"

using namespace dsme;
using namespace dsme::sim;

namespace {

Topology chain(int n) {
    Topology t;
    t.n = n;
    t.neighbors.resize(n);
    t.parent.assign(n, std::nullopt);
    for (int i = 1; i < n; ++i) {
        t.parent[i] = static_cast<NodeId>(i - 1);
        t.neighbors[i].push_back(static_cast<NodeId>(i - 1));
        t.neighbors[i - 1].push_back(static_cast<NodeId>(i));
    }
    return t;
}

Frame data(NodeAddr src, NodeAddr dst, int p) {
    Frame f;
    f.kind = FrameKind::Data;
    f.src = src;
    f.dst = dst;
    f.payload_len = p;
    return f;
}

}  // namespace

TEST_CASE("events fire in time then insertion order") {
    Kernel k;
    std::vector<int> order;
    k.schedule(10, 0, EventKind::Timer, [&] { order.push_back(2); });
    k.schedule(5, 0, EventKind::Timer, [&] { order.push_back(1); });
    k.schedule(10, 0, EventKind::Timer, [&] { order.push_back(3); });
    const auto id = k.schedule(7, 0, EventKind::Timer, [&] { order.push_back(99); });
    k.cancel(id);
    CHECK(k.run_until(11) == 3);
    CHECK(order == std::vector<int>{1, 2, 3});
    CHECK(k.now() == 11);
    CHECK_THROWS_AS(k.schedule(3, 0, EventKind::Timer, [] {}), PastEventError);
}

TEST_CASE("run_until excludes the end instant") {
    Kernel k;
    int hits = 0;
    k.schedule(10, 0, EventKind::Timer, [&] { ++hits; });
    k.run_until(10);
    CHECK(hits == 0);
    k.run_until(11);
    CHECK(hits == 1);
}

TEST_CASE("trace digest is reproducible") {
    auto digest = [] {
        Kernel k;
        for (int i = 0; i < 50; ++i) {
            k.schedule(i * 7 % 13, static_cast<NodeId>(i % 3), EventKind::Timer, [] {});
        }
        k.run_until(100);
        return k.trace_digest();
    };
    CHECK(digest() == digest());
}

TEST_CASE("topology helpers") {
    const Topology t = chain(4);
    CHECK_NOTHROW(t.validate());
    CHECK(t.hops_to_sink(3) == 3);
    CHECK(t.depth() == 3);
    CHECK(t.is_coordinator(2));
    CHECK_FALSE(t.is_coordinator(3));
    Topology bad = t;
    bad.neighbors[0].clear();
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("intact delivery and ledger") {
    Kernel k;
    const Topology t = chain(2);
    Medium m(k, t);
    std::vector<std::pair<NodeId, Symbols>> got;
    int done = 0;
    m.set_handlers([&](NodeId rx, const Frame&, Symbols start) { got.push_back({rx, start}); },
                   [&](NodeId, const Frame&) { ++done; });
    m.listen(0, 3);
    k.schedule(100, 1, EventKind::Timer, [&] { CHECK(m.transmit(1, data(1, 0, 10), 3) == 54); });
    k.run_until(1000);
    REQUIRE(got.size() == 1);
    CHECK(got[0].first == 0);
    CHECK(got[0].second == 100);
    CHECK(done == 1);
    CHECK(m.ledger(1).tx == 54);
    CHECK(m.ledger(0).rx == 54);
    CHECK(m.ledger(0).total() == 1000);
    CHECK(m.ledger(1).total() == 1000);
}

TEST_CASE("other channel is not heard") {
    Kernel k;
    const Topology t = chain(2);
    Medium m(k, t);
    int got = 0;
    m.set_handlers([&](NodeId, const Frame&, Symbols) { ++got; }, nullptr);
    m.listen(0, 2);
    m.transmit(1, data(1, 0, 10), 3);
    k.run_until(500);
    CHECK(got == 0);
}

TEST_CASE("hidden terminals collide at the common neighbour") {
    Kernel k;
    const Topology t = chain(3);  // 0 and 2 cannot hear each other
    Medium m(k, t);
    std::vector<NodeId> got;
    m.set_handlers([&](NodeId rx, const Frame&, Symbols) { got.push_back(rx); }, nullptr);
    m.listen(1, 0);
    m.transmit(0, data(0, 1, 10), 0);
    CHECK_FALSE(m.channel_busy(2, 0));
    k.schedule(20, 2, EventKind::Timer, [&] { m.transmit(2, data(2, 1, 10), 0); });
    k.run_until(500);
    CHECK(got.empty());
    CHECK(m.frames_corrupted() == 2);
}

TEST_CASE("listening from the first symbol catches a frame") {
    Kernel k;
    const Topology t = chain(2);
    Medium m(k, t);
    int got = 0;
    m.set_handlers([&](NodeId, const Frame&, Symbols) { ++got; }, nullptr);
    m.transmit(0, data(0, 1, 5), 4);
    m.listen(1, 4);
    k.run_until(10);
    m.listen(1, 5);
    m.listen(1, 4);  // joining late misses it
    k.run_until(500);
    CHECK(got == 0);
    m.transmit(0, data(0, 1, 5), 4);
    m.listen(1, 4);
    k.run_until(1000);
    CHECK(got == 1);
}

TEST_CASE("jammer corrupts overlapping frames on every channel") {
    Kernel k;
    const Topology t = chain(2);
    Medium m(k, t);
    int got = 0;
    m.set_handlers([&](NodeId, const Frame&, Symbols) { ++got; }, nullptr);
    m.start_jammer(JammerConfig{1000, 312, 1000});
    m.listen(1, 7);
    k.schedule(900, 0, EventKind::Timer, [&] { m.transmit(0, data(0, 1, 116), 7); });  // overlaps burst
    k.schedule(1400, 0, EventKind::Timer, [&] { m.transmit(0, data(0, 1, 116), 7); });
    k.run_until(1990);
    CHECK(got == 1);
    CHECK_THROWS_AS(m.start_jammer(JammerConfig{100, 100, 0}), std::invalid_argument);
}

TEST_CASE("radio misuse") {
    Kernel k;
    const Topology t = chain(2);
    Medium m(k, t);
    m.transmit(0, data(0, 1, 5), 0);
    CHECK_THROWS_AS(m.listen(0, 0), BusyRadio);
    CHECK_THROWS_AS(m.sleep(0), BusyRadio);
    CHECK_THROWS_AS(m.transmit(0, data(0, 1, 5), 0), BusyRadio);
}
