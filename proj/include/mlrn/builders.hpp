#pragma once

#include <string>
#include <vector>

#include "mlrn/graph.hpp"
#include "mlrn/shape_infer.hpp"

namespace mlrn {

enum class PoolMode { channel_mean, per_channel_gap };

inline const char* pool_mode_name(PoolMode m) {
    return m == PoolMode::channel_mean ? "channel_mean" : "per_channel_gap";
}

namespace detail {

inline int add_conv(NetworkGraph& g, int src, int in_c, int out_c, int k, int stride, int pad) {
    const int id = g.add_node(NodeKind::conv, ConvAttrs{in_c, out_c, k, k, stride, pad, false});
    g.add_edge(src, id);
    return id;
}

inline int add_bn(NetworkGraph& g, int src, int channels) {
    const int id = g.add_node(NodeKind::bn, BnAttrs{channels});
    g.add_edge(src, id);
    return id;
}

inline int add_relu(NetworkGraph& g, int src) {
    const int id = g.add_node(NodeKind::relu);
    g.add_edge(src, id);
    return id;
}

// Post-activation residual block: conv-BN-ReLU-conv-BN on the branch,
// identity or projection (1x1 stride-s conv + BN) on the shortcut, then
// combine and a final ReLU. Branch feeds combine slot 0, so max-mode ties
// favor the branch.
inline int add_postact_block(NetworkGraph& g, int entry, int in_c, int out_c, int stride,
                             CombineMode mode) {
    int b = add_conv(g, entry, in_c, out_c, 3, stride, 1);
    b = add_bn(g, b, out_c);
    b = add_relu(g, b);
    b = add_conv(g, b, out_c, out_c, 3, 1, 1);
    b = add_bn(g, b, out_c);

    int shortcut = entry;
    if (stride != 1 || in_c != out_c) {
        shortcut = add_conv(g, entry, in_c, out_c, 1, stride, 0);
        shortcut = add_bn(g, shortcut, out_c);
    }
    const int comb = g.add_node(NodeKind::combine, CombineAttrs{mode});
    g.add_edge(b, comb, 0);
    g.add_edge(shortcut, comb, 1);
    return add_relu(g, comb);
}

}  // namespace detail

// CIFAR-style ResNet-(6n+2): 3x3 stem at 16*width_mult channels, three stages
// of n residual blocks at {16,32,64}*width_mult, stages 2-3 downsample at
// entry, global average pooling head. n=5 gives ResNet-32; width_mult=2 is
// the double-depth variant (wider stages, same block count).
inline NetworkGraph build_resnet(int n, int classes, int width_mult,
                                 CombineMode mode = CombineMode::add, int base_width = 16,
                                 int input_hw = 32) {
    if (n <= 0) throw GraphError("build_resnet: n must be positive");
    if (classes <= 0) throw GraphError("build_resnet: classes must be positive");
    if (width_mult <= 0) throw GraphError("build_resnet: width_mult must be positive");
    if (base_width <= 0) throw GraphError("build_resnet: base_width must be positive");

    NetworkGraph g;
    g.name = "resnet" + std::to_string(6 * n + 2);
    if (width_mult != 1) g.name += "w" + std::to_string(width_mult);
    if (mode == CombineMode::max) g.name += "-max";
    g.class_count = classes;

    const int in = g.add_node(NodeKind::input, InputAttrs{3, input_hw, input_hw});
    int ch = base_width * width_mult;
    int cur = detail::add_relu(g, detail::add_bn(g, detail::add_conv(g, in, 3, ch, 3, 1, 1), ch));

    for (int stage = 0; stage < 3; ++stage) {
        const int out_c = base_width * (1 << stage) * width_mult;
        for (int block = 0; block < n; ++block) {
            const int stride = (stage > 0 && block == 0) ? 2 : 1;
            cur = detail::add_postact_block(g, cur, ch, out_c, stride, mode);
            ch = out_c;
        }
    }

    const int gap = g.add_node(NodeKind::global_avg_pool);
    g.add_edge(cur, gap);
    const int fc = g.add_node(NodeKind::linear, LinearAttrs{ch, classes});
    g.add_edge(gap, fc);
    const int out = g.add_node(NodeKind::output);
    g.add_edge(fc, out);
    g.validate();
    return g;
}

// The proposed architecture: stem conv-BN-ReLU, three stages of two residual
// blocks at {32,64,128}*width_mult channels (twice the ResNet-32 stage
// widths), and every stage output pooled and forwarded to the classifier
// alongside the usual global-average-pool features.
inline NetworkGraph build_newnet(int classes, int width_mult,
                                 PoolMode pool_mode = PoolMode::channel_mean, int base_width = 32,
                                 int input_hw = 32) {
    if (classes <= 0) throw GraphError("build_newnet: classes must be positive");
    if (width_mult <= 0) throw GraphError("build_newnet: width_mult must be positive");
    if (base_width <= 0) throw GraphError("build_newnet: base_width must be positive");

    NetworkGraph g;
    g.name = "newnet";
    if (width_mult != 1) g.name += "w" + std::to_string(width_mult);
    g.class_count = classes;

    const int in = g.add_node(NodeKind::input, InputAttrs{3, input_hw, input_hw});
    int ch = base_width * width_mult;
    int cur = detail::add_relu(g, detail::add_bn(g, detail::add_conv(g, in, 3, ch, 3, 1, 1), ch));

    std::vector<int> stage_outputs;
    for (int stage = 0; stage < 3; ++stage) {
        const int out_c = base_width * (1 << stage) * width_mult;
        for (int block = 0; block < 2; ++block) {
            const int stride = (stage > 0 && block == 0) ? 2 : 1;
            cur = detail::add_postact_block(g, cur, ch, out_c, stride, CombineMode::add);
            ch = out_c;
        }
        stage_outputs.push_back(cur);
    }

    // integrated taps: pool + flatten per stage output, taps first, head last
    std::vector<int> feats;
    for (int s : stage_outputs) {
        const int pool = g.add_node(pool_mode == PoolMode::channel_mean ? NodeKind::channel_mean
                                                                        : NodeKind::per_channel_gap);
        g.add_edge(s, pool);
        const int flat = g.add_node(NodeKind::flatten);
        g.add_edge(pool, flat);
        feats.push_back(flat);
    }
    const int gap = g.add_node(NodeKind::global_avg_pool);
    g.add_edge(cur, gap);
    feats.push_back(gap);

    const int cat = g.add_node(NodeKind::concat);
    for (std::size_t i = 0; i < feats.size(); ++i)
        g.add_edge(feats[i], cat, static_cast<int>(i));

    const int cat_width = infer_shapes(g, {1, 3, input_hw, input_hw}).at(cat)[1];
    const int fc = g.add_node(NodeKind::linear, LinearAttrs{cat_width, classes});
    g.add_edge(cat, fc);
    const int out = g.add_node(NodeKind::output);
    g.add_edge(fc, out);
    g.validate();
    return g;
}

// Pre-activation WideResNet-d-k per its defining recipe ((d-4)/6 blocks per
// group at {16,32,64}*k channels, bare-conv shortcuts, final BN-ReLU before
// pooling). Built for transform, shape and parameter checks.
inline NetworkGraph build_wideresnet(int depth, int widen, int classes, int input_hw = 32) {
    if ((depth - 4) % 6 != 0 || depth <= 4)
        throw GraphError("build_wideresnet: depth must satisfy (depth-4) %% 6 == 0");
    if (widen <= 0) throw GraphError("build_wideresnet: widen must be positive");
    if (classes <= 0) throw GraphError("build_wideresnet: classes must be positive");
    const int per_group = (depth - 4) / 6;

    NetworkGraph g;
    g.name = "wrn" + std::to_string(depth) + "x" + std::to_string(widen);
    g.class_count = classes;

    const int in = g.add_node(NodeKind::input, InputAttrs{3, input_hw, input_hw});
    int ch = 16;
    int cur = detail::add_conv(g, in, 3, ch, 3, 1, 1);

    for (int group = 0; group < 3; ++group) {
        const int out_c = 16 * (1 << group) * widen;
        for (int block = 0; block < per_group; ++block) {
            const int stride = (group > 0 && block == 0) ? 2 : 1;
            const bool equal = (ch == out_c && stride == 1);
            int pre = detail::add_relu(g, detail::add_bn(g, cur, ch));
            int b = detail::add_conv(g, pre, ch, out_c, 3, stride, 1);
            b = detail::add_relu(g, detail::add_bn(g, b, out_c));
            b = detail::add_conv(g, b, out_c, out_c, 3, 1, 1);
            int shortcut = equal ? cur : detail::add_conv(g, pre, ch, out_c, 1, stride, 0);
            const int comb = g.add_node(NodeKind::combine, CombineAttrs{CombineMode::add});
            g.add_edge(b, comb, 0);
            g.add_edge(shortcut, comb, 1);
            cur = comb;
            ch = out_c;
        }
    }
    cur = detail::add_relu(g, detail::add_bn(g, cur, ch));

    const int gap = g.add_node(NodeKind::global_avg_pool);
    g.add_edge(cur, gap);
    const int fc = g.add_node(NodeKind::linear, LinearAttrs{ch, classes});
    g.add_edge(gap, fc);
    const int out = g.add_node(NodeKind::output);
    g.add_edge(fc, out);
    g.validate();
    return g;
}

}  // namespace mlrn
