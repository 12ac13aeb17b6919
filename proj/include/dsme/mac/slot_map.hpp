#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <vector>

#include "dsme/frames.hpp"

namespace dsme::mac {

/// Identity of one allocation as announced in handshake frames.
struct AllocationKey {
    NodeAddr tx_node = 0;
    NodeAddr rx_node = 0;  // kBroadcastAddr for GACK slots
    GtsCell cell;
    friend auto operator<=>(const AllocationKey&, const AllocationKey&) = default;
};

struct OwnedGts {
    GtsDescriptor desc;
    std::int64_t active_from_msf = 0;
    std::uint32_t handshake_id = 0;
    bool provisional = false;
    int idle_msfs = 0;
    bool used = false;
};

/// A node's view of the CFP schedule: the slots it owns and the cells it
/// heard being allocated by its neighbours.
class SlotMap {
public:
    const std::vector<OwnedGts>& owned() const { return owned_; }
    std::vector<OwnedGts>& owned() { return owned_; }

    void add(OwnedGts g) { owned_.push_back(g); }
    bool remove(const GtsDescriptor& d);
    OwnedGts* find(const GtsDescriptor& d);

    /// True when this node already holds a slot at (sf, slot) on any channel.
    bool time_busy(int sf_index, int slot_index) const;
    const OwnedGts* at_time(int sf_index, int slot_index) const;
    bool cell_in_use(const GtsCell& c) const;

    void mark(const AllocationKey& k) { heard_[k] += 1; }
    void unmark(const AllocationKey& k);
    bool heard(const AllocationKey& k) const { return heard_.count(k) != 0; }

    std::vector<GtsCell> busy_times() const;
    std::vector<GtsCell> occupied_cells() const;

    /// Comparable image of the schedule state (owned descriptors and heard
    /// allocations) used to check rollbacks.
    struct Snapshot {
        std::vector<GtsDescriptor> owned;
        std::vector<AllocationKey> heard;
        bool operator==(const Snapshot&) const = default;
    };
    Snapshot snapshot() const;

private:
    std::vector<OwnedGts> owned_;
    std::map<AllocationKey, int> heard_;
};

struct CellSearch {
    int superframes = 1;  // per multisuperframe
    int channels = 16;
    int avoid_sf = -1;
};

/// Free data cell, preferring the lowest CFP slot index; ties are broken at
/// random across superframes and channels.
std::optional<GtsCell> choose_data_cell(const SlotMap& responder, const std::vector<GtsCell>& initiator_busy,
                                        const std::vector<GtsCell>& initiator_occupied, const CellSearch& search,
                                        std::mt19937_64& rng);

/// Free cell for a new GACK-GTS, taken from the highest slot index of one of
/// the candidate superframes.
std::optional<GtsCell> choose_gack_cell(const SlotMap& responder, const std::vector<GtsCell>& initiator_busy,
                                        const std::vector<int>& candidate_sfs, int channels, std::mt19937_64& rng);

}  // namespace dsme::mac
