#pragma once

#include <algorithm>
#include <set>
#include <vector>

#include "mlrn/builders.hpp"
#include "mlrn/graph.hpp"
#include "mlrn/shape_infer.hpp"

namespace mlrn {

namespace detail {

// Walks producer links from `start` while nodes have exactly one input,
// collecting the chain. Stops after appending a node with zero or multiple
// inputs (input node, combine, concat).
inline std::vector<int> back_chain(const NetworkGraph& g, int start) {
    std::vector<int> chain;
    int cur = start;
    for (;;) {
        chain.push_back(cur);
        const auto in = g.in_edges(cur);
        if (in.size() != 1) break;
        cur = in[0].src;
    }
    return chain;
}

}  // namespace detail

// A residual block is identified by its combine node; the block entry is the
// node where the branch and shortcut paths meet when walked backwards. For
// post-activation blocks this is exactly the activation feeding the block.
// A block reduces when either path crosses a conv with stride > 1 before the
// meeting point.
inline std::vector<int> find_tap_points(const NetworkGraph& g) {
    std::vector<int> taps;
    std::set<int> seen;
    for (int id : g.topo_order()) {
        const LayerNode& n = g.node(id);
        if (n.kind != NodeKind::combine) continue;
        const auto in = g.in_edges(id);
        const auto chain_a = detail::back_chain(g, in[0].src);
        const auto chain_b = detail::back_chain(g, in[1].src);
        const std::set<int> b_set(chain_b.begin(), chain_b.end());
        int entry = -1;
        for (int a : chain_a) {
            if (b_set.count(a)) {
                entry = a;
                break;
            }
        }
        if (entry == -1) continue;  // paths never meet; not a residual block
        bool reduces = false;
        auto scan = [&](const std::vector<int>& chain) {
            for (int nid : chain) {
                if (nid == entry) break;
                const LayerNode& node = g.node(nid);
                if (node.kind == NodeKind::conv && std::get<ConvAttrs>(node.attrs).stride > 1)
                    reduces = true;
            }
        };
        scan(chain_a);
        scan(chain_b);
        if (reduces && seen.insert(entry).second) taps.push_back(entry);
    }
    // topological tap order for a stable concatenation layout
    const auto order = g.topo_order();
    std::sort(taps.begin(), taps.end(), [&](int a, int b) {
        return std::find(order.begin(), order.end(), a) < std::find(order.begin(), order.end(), b);
    });
    return taps;
}

// Adds, for every residual block with a spatial reduction, a connection that
// pools the activation feeding the block along the requested axis and routes
// it forward into the final classifier. Original nodes and edges are left
// untouched; the classifier input is rebuilt as concat(tap features...,
// original head features) and its weight matrix widened accordingly.
inline NetworkGraph apply_multilevel_transform(const NetworkGraph& g, PoolMode pool_mode) {
    const std::vector<int> taps = find_tap_points(g);
    if (taps.empty()) throw GraphError("transform: no spatial reduction found in '" + g.name + "'");

    const int out_id = g.output_id();
    const auto out_in = g.in_edges(out_id);
    const int fc_id = out_in.at(0).src;
    if (g.node(fc_id).kind != NodeKind::linear)
        throw GraphError("transform: head not recognizable, output is not fed by a linear layer");
    const auto fc_in = g.in_edges(fc_id);
    const int head_feat = fc_in.at(0).src;
    switch (g.node(head_feat).kind) {
        case NodeKind::global_avg_pool:
        case NodeKind::per_channel_gap:
        case NodeKind::concat:
        case NodeKind::flatten:
            break;
        default:
            throw GraphError("transform: head not recognizable, classifier is not fed by pooled features");
    }

    const auto& in_attrs = std::get<InputAttrs>(g.node(g.input_id()).attrs);
    const auto shapes = infer_shapes(g, {1, in_attrs.channels, in_attrs.height, in_attrs.width});

    NetworkGraph t = g;
    t.name = g.name + "+multilevel";

    int added_width = 0;
    std::vector<int> tap_feats;
    for (int tap : taps) {
        const Shape& s = shapes.at(tap);
        const int pool = t.add_node(pool_mode == PoolMode::channel_mean ? NodeKind::channel_mean
                                                                        : NodeKind::per_channel_gap);
        t.add_edge(tap, pool);
        const int flat = t.add_node(NodeKind::flatten);
        t.add_edge(pool, flat);
        tap_feats.push_back(flat);
        added_width += pool_mode == PoolMode::channel_mean ? s[2] * s[3] : s[1];
    }

    const int cat = t.add_node(NodeKind::concat);
    for (std::size_t i = 0; i < tap_feats.size(); ++i)
        t.add_edge(tap_feats[i], cat, static_cast<int>(i));
    t.add_edge(head_feat, cat, static_cast<int>(tap_feats.size()));  // original features last

    // reroute the classifier input and widen its weight
    for (auto& e : t.edges)
        if (e.dst == fc_id && e.src == head_feat) {
            e.src = cat;
            break;
        }
    auto& fc_attrs = std::get<LinearAttrs>(t.node(fc_id).attrs);
    fc_attrs.in_features += added_width;

    t.validate();
    return t;
}

}  // namespace mlrn
