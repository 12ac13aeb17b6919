#include "dsme/frame_timing.hpp"

#include <cmath>

namespace dsme {

void SuperframeConfig::validate(bool check_gao) const {
    if (so < 0 || so > mo || mo > bo || bo > kMaxOrder) {
        throw InvalidConfig("orders must satisfy 0 <= SO <= MO <= BO <= 14 (got SO=" + std::to_string(so) +
                            " MO=" + std::to_string(mo) + " BO=" + std::to_string(bo) + ")");
    }
    if (cap_slots + cfp_slots + 1 != kSlotsPerSuperframe || cap_slots != 8) {
        throw InvalidConfig("slot layout must be 1 beacon + 8 CAP + 7 CFP slots");
    }
    if (channels < 1 || channels > 16) {
        throw InvalidConfig("channel count must be in [1, 16]");
    }
    if (check_gao && (gao > mo || gao < so)) {
        throw InvalidConfig("GAO must satisfy SO <= GAO <= MO (got GAO=" + std::to_string(gao) + ")");
    }
}

Symbols slot_duration_symbols(const SuperframeConfig& cfg) {
    return kBaseSlotSymbols << cfg.so;
}

Symbols superframe_duration_symbols(const SuperframeConfig& cfg) {
    return kSlotsPerSuperframe * slot_duration_symbols(cfg);
}

Symbols multisuperframe_duration_symbols(const SuperframeConfig& cfg) {
    return (kBaseSlotSymbols * kSlotsPerSuperframe) << cfg.mo;
}

Symbols beacon_interval_symbols(const SuperframeConfig& cfg) {
    return (kBaseSlotSymbols * kSlotsPerSuperframe) << cfg.bo;
}

int gack_slots_per_msf(const SuperframeConfig& cfg) {
    if (cfg.gao > cfg.mo) {
        throw InvalidConfig("GAO must not exceed MO");
    }
    return 1 << (cfg.mo - cfg.gao);
}

Symbols gack_interval_symbols(const SuperframeConfig& cfg) {
    return multisuperframe_duration_symbols(cfg) / gack_slots_per_msf(cfg);
}

SlotAddress locate(Symbols t, const SuperframeConfig& cfg) {
    const Symbols msf = multisuperframe_duration_symbols(cfg);
    const Symbols sf = superframe_duration_symbols(cfg);
    const Symbols slot = slot_duration_symbols(cfg);
    const Symbols in_msf = t % msf;
    return SlotAddress{t / msf, static_cast<int>(in_msf / sf), static_cast<int>((in_msf % sf) / slot)};
}

Symbols slot_start(const SlotAddress& a, const SuperframeConfig& cfg) {
    return a.msf_index * multisuperframe_duration_symbols(cfg) + a.sf_index * superframe_duration_symbols(cfg) +
           a.slot_index * slot_duration_symbols(cfg);
}

Symbols from_seconds(double seconds) {
    return static_cast<Symbols>(std::llround(seconds * static_cast<double>(kSymbolsPerSecond)));
}

}  // namespace dsme
