#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dsme/sim/kernel.hpp"

namespace dsme::sim {

/// Logical connectivity plus the routing tree toward the sink (node 0).
struct Topology {
    int n = 0;
    std::vector<std::vector<NodeId>> neighbors;
    std::vector<std::optional<NodeId>> parent;

    bool adjacent(NodeId a, NodeId b) const;
    std::vector<NodeId> children(NodeId v) const;
    bool is_coordinator(NodeId v) const { return !children(v).empty(); }
    int hops_to_sink(NodeId v) const;
    int depth() const;

    /// Throws std::invalid_argument unless adjacency is symmetric and the
    /// parent relation is a tree rooted at node 0 whose edges are adjacent.
    void validate() const;

    /// One line per node: "id parent: neighbours".
    std::string dump() const;
};

}  // namespace dsme::sim
