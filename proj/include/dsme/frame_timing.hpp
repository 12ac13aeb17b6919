#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dsme {

/// Simulation time in symbols (16 us each at 62 500 symbols/s).
using Symbols = std::int64_t;

inline constexpr Symbols kSymbolsPerSecond = 62500;
inline constexpr Symbols kBaseSlotSymbols = 60;  // aBaseSlotDuration
inline constexpr int kSlotsPerSuperframe = 16;
inline constexpr int kBeaconSlot = 0;
inline constexpr int kFirstCapSlot = 1;
inline constexpr int kFirstCfpSlot = 9;
inline constexpr int kMaxOrder = 14;

class InvalidConfig : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct SuperframeConfig {
    int so = 3;
    int mo = 6;
    int bo = 8;
    int gao = 6;
    int cap_slots = 8;
    int cfp_slots = 7;
    int channels = 16;

    /// Throws InvalidConfig unless 0 <= so <= mo <= bo <= 14 and the slot
    /// layout is beacon + 8 CAP + 7 CFP. When `check_gao` is set the group
    /// acknowledgement order must also satisfy so <= gao <= mo.
    void validate(bool check_gao = false) const;

    int superframes_per_msf() const { return 1 << (mo - so); }
    int superframes_per_beacon_interval() const { return 1 << (bo - so); }
};

struct SlotAddress {
    std::int64_t msf_index = 0;
    int sf_index = 0;
    int slot_index = 0;

    friend auto operator<=>(const SlotAddress&, const SlotAddress&) = default;
};

Symbols slot_duration_symbols(const SuperframeConfig& cfg);
Symbols superframe_duration_symbols(const SuperframeConfig& cfg);
Symbols multisuperframe_duration_symbols(const SuperframeConfig& cfg);
Symbols beacon_interval_symbols(const SuperframeConfig& cfg);

/// Number of GACK-GTS per multisuperframe, 2^(mo - gao). Throws when gao > mo.
int gack_slots_per_msf(const SuperframeConfig& cfg);

/// Spacing between consecutive GACK-GTS emissions.
Symbols gack_interval_symbols(const SuperframeConfig& cfg);

SlotAddress locate(Symbols t, const SuperframeConfig& cfg);

/// Inverse of locate: first symbol of the addressed slot.
Symbols slot_start(const SlotAddress& a, const SuperframeConfig& cfg);

inline double to_seconds(Symbols s) { return static_cast<double>(s) / kSymbolsPerSecond; }
Symbols from_seconds(double seconds);

}  // namespace dsme
