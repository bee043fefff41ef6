#pragma once

#include <algorithm>
#include <map>
#include <queue>
#include <tuple>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "mlrn/error.hpp"
#include "mlrn/ops.hpp"

namespace mlrn {

enum class NodeKind {
    input,
    output,
    conv,
    bn,
    relu,
    combine,
    channel_mean,
    per_channel_gap,
    global_avg_pool,
    flatten,
    concat,
    linear,
};

inline const char* node_kind_name(NodeKind k) {
    switch (k) {
        case NodeKind::input: return "input";
        case NodeKind::output: return "output";
        case NodeKind::conv: return "conv";
        case NodeKind::bn: return "bn";
        case NodeKind::relu: return "relu";
        case NodeKind::combine: return "combine";
        case NodeKind::channel_mean: return "channel_mean";
        case NodeKind::per_channel_gap: return "per_channel_gap";
        case NodeKind::global_avg_pool: return "global_avg_pool";
        case NodeKind::flatten: return "flatten";
        case NodeKind::concat: return "concat";
        case NodeKind::linear: return "linear";
    }
    return "?";
}

struct ConvAttrs {
    int in_channels = 0, out_channels = 0;
    int kh = 3, kw = 3;
    int stride = 1, pad = 1;
    bool bias = false;
    bool operator==(const ConvAttrs&) const = default;
};

struct BnAttrs {
    int channels = 0;
    double eps = 1e-5;
    double momentum = 0.1;
    bool operator==(const BnAttrs&) const = default;
};

struct CombineAttrs {
    CombineMode mode = CombineMode::add;
    bool operator==(const CombineAttrs&) const = default;
};

struct LinearAttrs {
    int in_features = 0, out_features = 0;
    bool operator==(const LinearAttrs&) const = default;
};

struct InputAttrs {
    int channels = 3, height = 32, width = 32;
    bool operator==(const InputAttrs&) const = default;
};

using NodeAttrs = std::variant<std::monostate, ConvAttrs, BnAttrs, CombineAttrs, LinearAttrs, InputAttrs>;

struct LayerNode {
    int id = -1;
    NodeKind kind = NodeKind::input;
    NodeAttrs attrs;
    bool operator==(const LayerNode&) const = default;
};

struct Edge {
    int src = -1, dst = -1, slot = 0;
    bool operator==(const Edge&) const = default;
};

// Directed acyclic layer graph: the unit builders emit and rewrites operate
// on. Immutable by convention once built; rewrites copy.
class NetworkGraph {
public:
    std::string name;
    int class_count = 0;
    std::vector<LayerNode> nodes;  // kept sorted by id
    std::vector<Edge> edges;

    // Structural equality: edge order is not significant.
    friend bool operator==(const NetworkGraph& a, const NetworkGraph& b) {
        auto sorted_edges = [](const NetworkGraph& g) {
            std::vector<Edge> e = g.edges;
            std::sort(e.begin(), e.end(), [](const Edge& x, const Edge& y) {
                return std::tie(x.src, x.dst, x.slot) < std::tie(y.src, y.dst, y.slot);
            });
            return e;
        };
        return a.name == b.name && a.class_count == b.class_count && a.nodes == b.nodes &&
               sorted_edges(a) == sorted_edges(b);
    }

    int add_node(NodeKind kind, NodeAttrs attrs = std::monostate{}) {
        const int id = nodes.empty() ? 0 : nodes.back().id + 1;
        nodes.push_back({id, kind, std::move(attrs)});
        return id;
    }

    void add_edge(int src, int dst, int slot = 0) { edges.push_back({src, dst, slot}); }

    const LayerNode& node(int id) const {
        for (const auto& n : nodes)
            if (n.id == id) return n;
        throw GraphError("no node with id " + std::to_string(id));
    }

    LayerNode& node(int id) {
        for (auto& n : nodes)
            if (n.id == id) return n;
        throw GraphError("no node with id " + std::to_string(id));
    }

    bool has_node(int id) const {
        for (const auto& n : nodes)
            if (n.id == id) return true;
        return false;
    }

    // In-edges of a node sorted by slot.
    std::vector<Edge> in_edges(int id) const {
        std::vector<Edge> r;
        for (const auto& e : edges)
            if (e.dst == id) r.push_back(e);
        std::sort(r.begin(), r.end(), [](const Edge& a, const Edge& b) { return a.slot < b.slot; });
        return r;
    }

    std::vector<int> consumers(int id) const {
        std::vector<int> r;
        for (const auto& e : edges)
            if (e.src == id) r.push_back(e.dst);
        std::sort(r.begin(), r.end());
        r.erase(std::unique(r.begin(), r.end()), r.end());
        return r;
    }

    int input_id() const { return only_node_of(NodeKind::input); }
    int output_id() const { return only_node_of(NodeKind::output); }

    // Deterministic topological order: among ready nodes, lowest id first.
    std::vector<int> topo_order() const {
        std::map<int, int> indegree;
        for (const auto& n : nodes) indegree[n.id] = 0;
        for (const auto& e : edges) ++indegree[e.dst];
        std::priority_queue<int, std::vector<int>, std::greater<int>> ready;
        for (const auto& [id, deg] : indegree)
            if (deg == 0) ready.push(id);
        std::vector<int> order;
        while (!ready.empty()) {
            const int id = ready.top();
            ready.pop();
            order.push_back(id);
            for (const auto& e : edges)
                if (e.src == id && --indegree[e.dst] == 0) ready.push(e.dst);
        }
        if (order.size() != nodes.size())
            throw GraphError("graph '" + name + "' contains a cycle");
        return order;
    }

    void validate() const {
        if (class_count <= 0) throw GraphError("graph '" + name + "': class_count must be positive");
        std::set<int> ids;
        for (const auto& n : nodes)
            if (!ids.insert(n.id).second)
                throw GraphError("duplicate node id " + std::to_string(n.id));
        for (const auto& e : edges) {
            if (!ids.count(e.src) || !ids.count(e.dst))
                throw GraphError("edge references unknown node " + std::to_string(e.src) + "->" +
                                 std::to_string(e.dst));
        }
        only_node_of(NodeKind::input);
        only_node_of(NodeKind::output);
        for (const auto& n : nodes) check_arity(n);
        topo_order();  // throws on cycles

        // reachable from input, co-reachable to output
        const auto fwd = reach(input_id(), false);
        const auto bwd = reach(output_id(), true);
        for (const auto& n : nodes) {
            if (!fwd.count(n.id))
                throw GraphError("node " + std::to_string(n.id) + " (" + node_kind_name(n.kind) +
                                 ") unreachable from input");
            if (!bwd.count(n.id))
                throw GraphError("node " + std::to_string(n.id) + " (" + node_kind_name(n.kind) +
                                 ") cannot reach output");
        }
    }

private:
    int only_node_of(NodeKind kind) const {
        int found = -1;
        for (const auto& n : nodes) {
            if (n.kind != kind) continue;
            if (found != -1)
                throw GraphError("graph '" + name + "' has more than one " + node_kind_name(kind) +
                                 " node");
            found = n.id;
        }
        if (found == -1)
            throw GraphError("graph '" + name + "' has no " + std::string(node_kind_name(kind)) +
                             " node");
        return found;
    }

    void check_arity(const LayerNode& n) const {
        const auto in = in_edges(n.id);
        for (std::size_t i = 0; i < in.size(); ++i)
            if (in[i].slot != static_cast<int>(i))
                throw GraphError("node " + std::to_string(n.id) + ": input slots not dense");
        const int k = static_cast<int>(in.size());
        auto expect = [&](int want) {
            if (k != want)
                throw GraphError("node " + std::to_string(n.id) + " (" + node_kind_name(n.kind) +
                                 ") expects " + std::to_string(want) + " inputs, has " +
                                 std::to_string(k));
        };
        switch (n.kind) {
            case NodeKind::input: expect(0); break;
            case NodeKind::combine: expect(2); break;
            case NodeKind::concat:
                if (k < 2)
                    throw GraphError("node " + std::to_string(n.id) + ": concat needs >= 2 inputs");
                break;
            default: expect(1); break;
        }
    }

    std::set<int> reach(int start, bool reverse) const {
        std::set<int> seen{start};
        std::vector<int> stack{start};
        while (!stack.empty()) {
            const int id = stack.back();
            stack.pop_back();
            for (const auto& e : edges) {
                const int from = reverse ? e.dst : e.src;
                const int to = reverse ? e.src : e.dst;
                if (from == id && seen.insert(to).second) stack.push_back(to);
            }
        }
        return seen;
    }
};

}  // namespace mlrn
