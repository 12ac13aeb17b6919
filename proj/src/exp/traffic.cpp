#include "dsme/exp/traffic.hpp"

#include <cmath>
#include <stdexcept>

namespace dsme::exp {

namespace {

std::mt19937_64 traffic_stream(std::uint64_t seed, std::uint16_t node) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(node), 1u};
    return std::mt19937_64(seq);
}

}  // namespace

PoissonSource::PoissonSource(double tau_seconds, PayloadSpec payload, std::uint64_t seed, std::uint16_t node)
    : rng_(traffic_stream(seed, node)), gap_(1.0 / tau_seconds), payload_(payload.min, payload.max) {
    if (!(tau_seconds > 0)) {
        throw std::invalid_argument("tau must be positive");
    }
    if (payload.min < 1 || payload.max > 116 || payload.min > payload.max) {
        throw std::invalid_argument("payload must lie within [1, 116]");
    }
}

Symbols PoissonSource::next_interarrival() {
    const double s = gap_(rng_);
    return std::max<Symbols>(1, static_cast<Symbols>(std::llround(s * kSymbolsPerSecond)));
}

int PoissonSource::next_payload() {
    return payload_(rng_);
}

}  // namespace dsme::exp
