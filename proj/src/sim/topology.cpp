#include "dsme/sim/topology.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace dsme::sim {

bool Topology::adjacent(NodeId a, NodeId b) const {
    const auto& nb = neighbors.at(a);
    return std::find(nb.begin(), nb.end(), b) != nb.end();
}

std::vector<NodeId> Topology::children(NodeId v) const {
    std::vector<NodeId> out;
    for (int i = 0; i < n; ++i) {
        if (parent[i] && *parent[i] == v) {
            out.push_back(static_cast<NodeId>(i));
        }
    }
    return out;
}

int Topology::hops_to_sink(NodeId v) const {
    int hops = 0;
    std::optional<NodeId> cur = v;
    while (parent.at(*cur)) {
        cur = parent[*cur];
        if (++hops > n) {
            throw std::invalid_argument("parent relation contains a cycle");
        }
    }
    return hops;
}

int Topology::depth() const {
    int d = 0;
    for (int i = 0; i < n; ++i) {
        d = std::max(d, hops_to_sink(static_cast<NodeId>(i)));
    }
    return d;
}

void Topology::validate() const {
    if (n < 2 || static_cast<int>(neighbors.size()) != n || static_cast<int>(parent.size()) != n) {
        throw std::invalid_argument("topology needs at least two nodes and complete tables");
    }
    if (parent[0]) {
        throw std::invalid_argument("node 0 is the sink and has no parent");
    }
    for (int a = 0; a < n; ++a) {
        for (NodeId b : neighbors[a]) {
            if (b >= n || b == a || !adjacent(b, static_cast<NodeId>(a))) {
                throw std::invalid_argument("adjacency must be symmetric and irreflexive");
            }
        }
        if (a != 0) {
            if (!parent[a] || *parent[a] >= n) {
                throw std::invalid_argument("every non-sink node needs a parent");
            }
            if (!adjacent(static_cast<NodeId>(a), *parent[a])) {
                throw std::invalid_argument("parent edge missing from adjacency");
            }
            hops_to_sink(static_cast<NodeId>(a));
        }
    }
}

std::string Topology::dump() const {
    std::ostringstream os;
    for (int i = 0; i < n; ++i) {
        os << i << ' ';
        if (parent[i]) {
            os << *parent[i];
        } else {
            os << '-';
        }
        os << ':';
        for (NodeId b : neighbors[i]) {
            os << ' ' << b;
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace dsme::sim
