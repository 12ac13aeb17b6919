#pragma once

#include <optional>
#include <stdexcept>
#include <string_view>

#include "dsme/sim/topology.hpp"

namespace dsme::exp {

enum class TopologyKind { Line, Star, BinaryTree };

const char* to_string(TopologyKind k);
std::optional<TopologyKind> parse_topology(std::string_view name);

class InvalidSize : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Line: i talks to i-1 and i+1, parent i-1.
/// Star: every node talks to node 0 only.
/// Binary tree: parent floor((i-1)/2); only parent-child pairs hear each
/// other, so siblings are hidden from one another.
sim::Topology build_topology(TopologyKind kind, int n);

}  // namespace dsme::exp
