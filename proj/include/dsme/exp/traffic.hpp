#pragma once

#include <cstdint>
#include <random>

#include "dsme/frame_timing.hpp"

namespace dsme::exp {

struct PayloadSpec {
    int min = 116;
    int max = 116;
    bool fixed() const { return min == max; }
};

/// Poisson packet source of one node. Draws come from a stream keyed by
/// (seed, node) only, so every scheme sees the same arrivals.
class PoissonSource {
public:
    PoissonSource(double tau_seconds, PayloadSpec payload, std::uint64_t seed, std::uint16_t node);

    Symbols next_interarrival();
    int next_payload();

private:
    std::mt19937_64 rng_;
    std::exponential_distribution<double> gap_;
    std::uniform_int_distribution<int> payload_;
};

}  // namespace dsme::exp
