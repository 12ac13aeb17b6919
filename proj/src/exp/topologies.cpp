#include "dsme/exp/topologies.hpp"

#include <string>

namespace dsme::exp {

const char* to_string(TopologyKind k) {
    switch (k) {
        case TopologyKind::Line: return "line";
        case TopologyKind::Star: return "star";
        case TopologyKind::BinaryTree: return "tree";
    }
    return "?";
}

std::optional<TopologyKind> parse_topology(std::string_view name) {
    if (name == "line") return TopologyKind::Line;
    if (name == "star") return TopologyKind::Star;
    if (name == "tree" || name == "binary_tree" || name == "binary-tree") return TopologyKind::BinaryTree;
    return std::nullopt;
}

namespace {

void link(sim::Topology& t, int a, int b) {
    t.neighbors[a].push_back(static_cast<sim::NodeId>(b));
    t.neighbors[b].push_back(static_cast<sim::NodeId>(a));
}

}  // namespace

sim::Topology build_topology(TopologyKind kind, int n) {
    if (n < 2 || n > 4096) {
        throw InvalidSize("topology needs between 2 and 4096 nodes, got " + std::to_string(n));
    }
    if (kind == TopologyKind::BinaryTree && ((n + 1) & n) != 0) {
        throw InvalidSize("binary tree needs 2^k - 1 nodes, got " + std::to_string(n));
    }
    sim::Topology t;
    t.n = n;
    t.neighbors.resize(n);
    t.parent.assign(n, std::nullopt);
    for (int i = 1; i < n; ++i) {
        int p = 0;
        switch (kind) {
            case TopologyKind::Line: p = i - 1; break;
            case TopologyKind::Star: p = 0; break;
            case TopologyKind::BinaryTree: p = (i - 1) / 2; break;
        }
        t.parent[i] = static_cast<sim::NodeId>(p);
        link(t, i, p);
    }
    t.validate();
    return t;
}

}  // namespace dsme::exp
