#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dsme/frame_timing.hpp"

namespace dsme::analytics {

enum class TheoryScheme { RegularAck, Gack, GackIeee };

const char* to_string(TheoryScheme s);

inline constexpr int kGtsPerSuperframe = 7;

/// Exact non-negative rational used for throughput and goodput values.
struct Rational {
    std::int64_t num = 0;
    std::int64_t den = 1;

    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
    Rational reduced() const;
    friend bool operator==(const Rational& a, const Rational& b) { return a.num * b.den == b.num * a.den; }
    friend auto operator<=>(const Rational& a, const Rational& b) {
        return static_cast<__int128>(a.num) * b.den <=> static_cast<__int128>(b.num) * a.den;
    }
};

struct TheoryInput {
    TheoryScheme scheme = TheoryScheme::RegularAck;
    int so = 3;
    int mo = 8;
    int p = 1;
};

/// Symbols consumed by one data transmission: S_A(p) with an immediate ACK,
/// S_G(p) without (the trailing turnaround is saved).
Symbols cycle_symbols(TheoryScheme scheme, int p);

int packets_per_gts(TheoryScheme scheme, int so, int p);

/// Data GTS per multisuperframe left for first transmissions under the 2012
/// group-ack layout: two slots go to GACK 1/GACK 2 and every data GTS needs a
/// retransmission twin.
std::int64_t ieee_data_gts_per_msf(int so, int mo);

/// Packets per second.
Rational max_throughput(const TheoryInput& in);

/// Application bytes per GTS (may be a half byte from the remainder term).
Rational goodput_per_gts(TheoryScheme scheme, int so);

/// Application bytes per second.
Rational max_goodput(TheoryScheme scheme, int so, int mo);

struct TheoryRow {
    TheoryScheme scheme;
    int so;
    int mo;
    int p;
    double packets_per_s;
    double goodput_Bps;
};

std::vector<TheoryInput> default_grid(int mo = 8);
std::vector<TheoryRow> sweep(const std::vector<TheoryInput>& inputs);

inline constexpr const char* kTheoryCsvHeader = "scheme,so,mo,p,packets_per_s,goodput_Bps";
std::string to_csv(const std::vector<TheoryRow>& rows);

}  // namespace dsme::analytics
