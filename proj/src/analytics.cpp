#include "dsme/analytics.hpp"

#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "dsme/frames.hpp"

namespace dsme::analytics {

namespace {

void check(int so, int mo, int p) {
    if (so < 0 || so > mo || mo > kMaxOrder) {
        throw std::invalid_argument("theory input needs 0 <= SO <= MO <= 14");
    }
    if (p < 1 || p > kMaxMacPayload) {
        throw std::invalid_argument("payload must be within 1..116 bytes");
    }
}

bool is_group(TheoryScheme s) { return s != TheoryScheme::RegularAck; }

// Fixed part of one transmission that the remainder term of the goodput has
// to pay before any payload byte fits.
Symbols fixed_overhead(TheoryScheme s) {
    const Symbols ifs = ifs_symbols(kMaxMacPayload);
    return is_group(s) ? kHeaderSymbols + ifs - kTurnaroundSymbols : kHeaderSymbols + kAckOverheadSymbols + ifs;
}

}  // namespace

const char* to_string(TheoryScheme s) {
    switch (s) {
        case TheoryScheme::RegularAck: return "ack";
        case TheoryScheme::Gack: return "gack";
        case TheoryScheme::GackIeee: return "gack-ieee";
    }
    return "?";
}

Rational Rational::reduced() const {
    const std::int64_t g = std::gcd(num, den);
    return g == 0 ? *this : Rational{num / g, den / g};
}

Symbols cycle_symbols(TheoryScheme scheme, int p) {
    const Symbols base = kHeaderSymbols + kSymbolsPerByte * p + ifs_symbols(p);
    return is_group(scheme) ? base - kTurnaroundSymbols : base + kAckOverheadSymbols;
}

int packets_per_gts(TheoryScheme scheme, int so, int p) {
    check(so, so, p);
    const Symbols gts = kBaseSlotSymbols << so;
    return static_cast<int>(gts / cycle_symbols(scheme, p));
}

std::int64_t ieee_data_gts_per_msf(int so, int mo) {
    const std::int64_t slots = static_cast<std::int64_t>(kGtsPerSuperframe) << (mo - so);
    return (slots - 2) / 2;
}

Rational max_throughput(const TheoryInput& in) {
    check(in.so, in.mo, in.p);
    const std::int64_t per_gts = packets_per_gts(in.scheme, in.so, in.p);
    const Symbols sf = kSlotsPerSuperframe * (kBaseSlotSymbols << in.so);
    if (in.scheme == TheoryScheme::GackIeee) {
        const Symbols msf = sf << (in.mo - in.so);
        return Rational{kSymbolsPerSecond * ieee_data_gts_per_msf(in.so, in.mo) * per_gts, msf}.reduced();
    }
    return Rational{kSymbolsPerSecond * kGtsPerSuperframe * per_gts, sf}.reduced();
}

Rational goodput_per_gts(TheoryScheme scheme, int so) {
    check(so, so, kMaxMacPayload);
    const Symbols gts = kBaseSlotSymbols << so;
    const Symbols cycle = cycle_symbols(scheme, kMaxMacPayload);
    const Symbols full = gts / cycle;
    const Symbols spare = gts % cycle - fixed_overhead(scheme);
    // Twice the byte count keeps the remainder term integral.
    const std::int64_t doubled = 2 * kMaxMacPayload * full + std::max<Symbols>(0, spare);
    return Rational{doubled, 2}.reduced();
}

Rational max_goodput(TheoryScheme scheme, int so, int mo) {
    check(so, mo, 1);
    const Rational g = goodput_per_gts(scheme, so);
    const Symbols sf = kSlotsPerSuperframe * (kBaseSlotSymbols << so);
    if (scheme == TheoryScheme::GackIeee) {
        const Symbols msf = sf << (mo - so);
        return Rational{kSymbolsPerSecond * ieee_data_gts_per_msf(so, mo) * g.num, msf * g.den}.reduced();
    }
    return Rational{kSymbolsPerSecond * kGtsPerSuperframe * g.num, sf * g.den}.reduced();
}

std::vector<TheoryInput> default_grid(int mo) {
    static constexpr int kPayloads[] = {1, 25, 50, 75, 100, 116};
    static constexpr TheoryScheme kSchemes[] = {TheoryScheme::RegularAck, TheoryScheme::Gack, TheoryScheme::GackIeee};
    std::vector<TheoryInput> grid;
    for (int so = 3; so <= 8; ++so) {
        for (TheoryScheme s : kSchemes) {
            for (int p : kPayloads) {
                grid.push_back({s, so, mo, p});
            }
        }
    }
    return grid;
}

std::vector<TheoryRow> sweep(const std::vector<TheoryInput>& inputs) {
    std::vector<TheoryRow> rows;
    rows.reserve(inputs.size());
    for (const auto& in : inputs) {
        rows.push_back({in.scheme, in.so, in.mo, in.p, max_throughput(in).value(),
                        max_goodput(in.scheme, in.so, in.mo).value()});
    }
    return rows;
}

std::string to_csv(const std::vector<TheoryRow>& rows) {
    std::string out = kTheoryCsvHeader;
    out += '\n';
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%s,%d,%d,%d,%.6f,%.6f\n", to_string(r.scheme), r.so, r.mo, r.p,
                      r.packets_per_s, r.goodput_Bps);
        out += buf;
    }
    return out;
}

}  // namespace dsme::analytics
