#pragma once

#include <map>
#include <string>

#include "mlrn/graph.hpp"
#include "mlrn/tensor.hpp"

namespace mlrn {

// Propagates shapes from the input node through the graph. Throws GraphError
// on any inconsistency, naming the offending node.
inline std::map<int, Shape> infer_shapes(const NetworkGraph& g, const Shape& input_shape) {
    if (input_shape.size() != 4)
        throw GraphError("infer_shapes: input shape must be NCHW, got " + shape_str(input_shape));
    std::map<int, Shape> shapes;
    auto fail = [](const LayerNode& n, const std::string& why) {
        throw GraphError("node " + std::to_string(n.id) + " (" + node_kind_name(n.kind) + "): " + why);
    };
    for (int id : g.topo_order()) {
        const LayerNode& n = g.node(id);
        const auto in = g.in_edges(id);
        auto in_shape = [&](int slot) -> const Shape& { return shapes.at(in.at(slot).src); };
        switch (n.kind) {
            case NodeKind::input: {
                const auto& a = std::get<InputAttrs>(n.attrs);
                if (input_shape[1] != a.channels)
                    fail(n, "expects " + std::to_string(a.channels) + " channels, got " +
                                std::to_string(input_shape[1]));
                shapes[id] = input_shape;
                break;
            }
            case NodeKind::conv: {
                const auto& a = std::get<ConvAttrs>(n.attrs);
                const Shape& s = in_shape(0);
                if (s.size() != 4) fail(n, "needs 4-D input, got " + shape_str(s));
                if (s[1] != a.in_channels)
                    fail(n, "expects " + std::to_string(a.in_channels) + " input channels, got " +
                                std::to_string(s[1]));
                if (a.kh > s[2] + 2 * a.pad || a.kw > s[3] + 2 * a.pad)
                    fail(n, "kernel larger than padded input " + shape_str(s));
                const int h = (s[2] + 2 * a.pad - a.kh) / a.stride + 1;
                const int w = (s[3] + 2 * a.pad - a.kw) / a.stride + 1;
                shapes[id] = {s[0], a.out_channels, h, w};
                break;
            }
            case NodeKind::bn: {
                const auto& a = std::get<BnAttrs>(n.attrs);
                const Shape& s = in_shape(0);
                if (s.size() != 4) fail(n, "needs 4-D input, got " + shape_str(s));
                if (s[1] != a.channels)
                    fail(n, "expects " + std::to_string(a.channels) + " channels, got " +
                                std::to_string(s[1]));
                shapes[id] = s;
                break;
            }
            case NodeKind::relu:
                shapes[id] = in_shape(0);
                break;
            case NodeKind::combine: {
                const Shape& a = in_shape(0);
                const Shape& b = in_shape(1);
                if (a != b) fail(n, "input shapes differ: " + shape_str(a) + " vs " + shape_str(b));
                shapes[id] = a;
                break;
            }
            case NodeKind::channel_mean: {
                const Shape& s = in_shape(0);
                if (s.size() != 4) fail(n, "needs 4-D input, got " + shape_str(s));
                shapes[id] = {s[0], 1, s[2], s[3]};
                break;
            }
            case NodeKind::per_channel_gap:
            case NodeKind::global_avg_pool: {
                const Shape& s = in_shape(0);
                if (s.size() != 4) fail(n, "needs 4-D input, got " + shape_str(s));
                shapes[id] = {s[0], s[1]};
                break;
            }
            case NodeKind::flatten: {
                const Shape& s = in_shape(0);
                if (s.size() < 2) fail(n, "needs rank >= 2, got " + shape_str(s));
                int d = 1;
                for (std::size_t i = 1; i < s.size(); ++i) d *= s[i];
                shapes[id] = {s[0], d};
                break;
            }
            case NodeKind::concat: {
                int total = 0;
                const int batch = in_shape(0)[0];
                for (std::size_t i = 0; i < in.size(); ++i) {
                    const Shape& s = in_shape(static_cast<int>(i));
                    if (s.size() != 2) fail(n, "concat input " + std::to_string(i) + " is not 2-D");
                    if (s[0] != batch) fail(n, "concat batch dimensions disagree");
                    total += s[1];
                }
                shapes[id] = {batch, total};
                break;
            }
            case NodeKind::linear: {
                const auto& a = std::get<LinearAttrs>(n.attrs);
                const Shape& s = in_shape(0);
                if (s.size() != 2) fail(n, "needs 2-D input, got " + shape_str(s));
                if (s[1] != a.in_features)
                    fail(n, "expects " + std::to_string(a.in_features) + " features, got " +
                                std::to_string(s[1]));
                shapes[id] = {s[0], a.out_features};
                break;
            }
            case NodeKind::output:
                shapes[id] = in_shape(0);
                break;
        }
    }
    return shapes;
}

struct ParamCount {
    std::int64_t learnable = 0;
    std::int64_t non_learnable = 0;  // BN running statistics
    std::vector<std::pair<int, std::int64_t>> per_node;  // (node id, learnable), id order
};

inline ParamCount count_params(const NetworkGraph& g) {
    ParamCount pc;
    for (const auto& n : g.nodes) {
        std::int64_t p = 0;
        if (n.kind == NodeKind::conv) {
            const auto& a = std::get<ConvAttrs>(n.attrs);
            p = static_cast<std::int64_t>(a.out_channels) * a.in_channels * a.kh * a.kw;
            if (a.bias) p += a.out_channels;
        } else if (n.kind == NodeKind::bn) {
            const auto& a = std::get<BnAttrs>(n.attrs);
            p = 2LL * a.channels;
            pc.non_learnable += 2LL * a.channels;
        } else if (n.kind == NodeKind::linear) {
            const auto& a = std::get<LinearAttrs>(n.attrs);
            p = static_cast<std::int64_t>(a.in_features) * a.out_features + a.out_features;
        }
        if (p > 0) pc.per_node.emplace_back(n.id, p);
        pc.learnable += p;
    }
    return pc;
}

}  // namespace mlrn
