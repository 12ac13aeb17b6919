#include "dsme/mac/slot_map.hpp"

#include <algorithm>

namespace dsme::mac {

bool SlotMap::remove(const GtsDescriptor& d) {
    auto it = std::find_if(owned_.begin(), owned_.end(), [&](const OwnedGts& g) { return g.desc == d; });
    if (it == owned_.end()) {
        return false;
    }
    owned_.erase(it);
    return true;
}

OwnedGts* SlotMap::find(const GtsDescriptor& d) {
    auto it = std::find_if(owned_.begin(), owned_.end(), [&](const OwnedGts& g) { return g.desc == d; });
    return it == owned_.end() ? nullptr : &*it;
}

bool SlotMap::time_busy(int sf_index, int slot_index) const {
    return at_time(sf_index, slot_index) != nullptr;
}

const OwnedGts* SlotMap::at_time(int sf_index, int slot_index) const {
    for (const auto& g : owned_) {
        if (g.desc.cell.sf_index == sf_index && g.desc.cell.slot_index == slot_index) {
            return &g;
        }
    }
    return nullptr;
}

bool SlotMap::cell_in_use(const GtsCell& c) const {
    for (const auto& g : owned_) {
        if (g.desc.cell == c) {
            return true;
        }
    }
    for (const auto& [k, n] : heard_) {
        if (k.cell == c) {
            return true;
        }
    }
    return false;
}

void SlotMap::unmark(const AllocationKey& k) {
    heard_.erase(k);
}

std::vector<GtsCell> SlotMap::busy_times() const {
    std::vector<GtsCell> out;
    for (const auto& g : owned_) {
        out.push_back(GtsCell{g.desc.cell.sf_index, g.desc.cell.slot_index, 0});
    }
    return out;
}

std::vector<GtsCell> SlotMap::occupied_cells() const {
    std::vector<GtsCell> out;
    for (const auto& g : owned_) {
        out.push_back(g.desc.cell);
    }
    for (const auto& [k, n] : heard_) {
        out.push_back(k.cell);
    }
    return out;
}

SlotMap::Snapshot SlotMap::snapshot() const {
    Snapshot s;
    for (const auto& g : owned_) {
        s.owned.push_back(g.desc);
    }
    std::sort(s.owned.begin(), s.owned.end(), [](const GtsDescriptor& a, const GtsDescriptor& b) {
        return std::tie(a.cell, a.direction, a.kind, a.peer) < std::tie(b.cell, b.direction, b.kind, b.peer);
    });
    for (const auto& [k, n] : heard_) {
        s.heard.push_back(k);
    }
    return s;
}

namespace {

bool contains_time(const std::vector<GtsCell>& busy, int sf, int slot) {
    return std::any_of(busy.begin(), busy.end(),
                       [&](const GtsCell& c) { return c.sf_index == sf && c.slot_index == slot; });
}

bool contains_cell(const std::vector<GtsCell>& cells, const GtsCell& c) {
    return std::find(cells.begin(), cells.end(), c) != cells.end();
}

}  // namespace

std::optional<GtsCell> choose_data_cell(const SlotMap& responder, const std::vector<GtsCell>& initiator_busy,
                                        const std::vector<GtsCell>& initiator_occupied, const CellSearch& search,
                                        std::mt19937_64& rng) {
    for (int slot = kFirstCfpSlot; slot < kSlotsPerSuperframe; ++slot) {
        std::vector<GtsCell> candidates;
        for (int sf = 0; sf < search.superframes; ++sf) {
            if (sf == search.avoid_sf || responder.time_busy(sf, slot) || contains_time(initiator_busy, sf, slot)) {
                continue;
            }
            for (int ch = 0; ch < search.channels; ++ch) {
                const GtsCell c{sf, slot, ch};
                if (!responder.cell_in_use(c) && !contains_cell(initiator_occupied, c)) {
                    candidates.push_back(c);
                }
            }
        }
        if (!candidates.empty()) {
            std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
            return candidates[pick(rng)];
        }
    }
    return std::nullopt;
}

std::optional<GtsCell> choose_gack_cell(const SlotMap& responder, const std::vector<GtsCell>& initiator_busy,
                                        const std::vector<int>& candidate_sfs, int channels, std::mt19937_64& rng) {
    for (int slot = kSlotsPerSuperframe - 1; slot >= kFirstCfpSlot; --slot) {
        std::vector<GtsCell> candidates;
        for (int sf : candidate_sfs) {
            if (responder.time_busy(sf, slot) || contains_time(initiator_busy, sf, slot)) {
                continue;
            }
            for (int ch = 0; ch < channels; ++ch) {
                const GtsCell c{sf, slot, ch};
                if (!responder.cell_in_use(c)) {
                    candidates.push_back(c);
                }
            }
        }
        if (!candidates.empty()) {
            std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
            return candidates[pick(rng)];
        }
    }
    return std::nullopt;
}

}  // namespace dsme::mac
