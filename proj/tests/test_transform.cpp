#include <gtest/gtest.h>

#include <set>

#include "mlrn/builders.hpp"
#include "mlrn/shape_infer.hpp"
#include "mlrn/transform.hpp"

using mlrn::apply_multilevel_transform;
using mlrn::build_resnet;
using mlrn::build_wideresnet;
using mlrn::CombineMode;
using mlrn::find_tap_points;
using mlrn::NetworkGraph;
using mlrn::NodeKind;
using mlrn::PoolMode;

namespace {

int count_kind(const NetworkGraph& g, NodeKind k) {
    int c = 0;
    for (const auto& n : g.nodes)
        if (n.kind == k) ++c;
    return c;
}

const mlrn::LinearAttrs& classifier(const NetworkGraph& g) {
    return std::get<mlrn::LinearAttrs>(g.node(g.in_edges(g.output_id())[0].src).attrs);
}

}  // namespace

TEST(Transform, ResnetChannelMeanWidths) {
    auto g = build_resnet(5, 100, 1, CombineMode::add);
    auto t = apply_multilevel_transform(g, PoolMode::channel_mean);

    EXPECT_EQ(find_tap_points(g).size(), 2u);  // entries of stages 2 and 3
    EXPECT_EQ(count_kind(t, NodeKind::channel_mean), 2);
    EXPECT_EQ(count_kind(t, NodeKind::concat), 1);
    EXPECT_EQ(classifier(t).in_features, 32 * 32 + 16 * 16 + 64);
    EXPECT_EQ(classifier(t).in_features, 1344);

    auto tg = apply_multilevel_transform(g, PoolMode::per_channel_gap);
    EXPECT_EQ(classifier(tg).in_features, 16 + 32 + 64);
}

TEST(Transform, ParamDeltaIsClassesTimesAddedWidth) {
    auto g = build_resnet(5, 100, 1, CombineMode::add);
    const auto base = mlrn::count_params(g).learnable;
    for (auto mode : {PoolMode::channel_mean, PoolMode::per_channel_gap}) {
        auto t = apply_multilevel_transform(g, mode);
        const long long added = classifier(t).in_features - classifier(g).in_features;
        EXPECT_EQ(mlrn::count_params(t).learnable - base, 100LL * added);
    }
}

TEST(Transform, OriginalNodesAndEdgesUnchanged) {
    auto g = build_resnet(3, 10, 1, CombineMode::add);
    auto t = apply_multilevel_transform(g, PoolMode::channel_mean);
    for (const auto& n : g.nodes) {
        ASSERT_TRUE(t.has_node(n.id));
        if (n.kind == NodeKind::linear) continue;  // widened in place
        EXPECT_EQ(t.node(n.id), n);
    }
    int missing = 0;
    for (const auto& e : g.edges) {
        bool found = false;
        for (const auto& te : t.edges) found = found || (te == e);
        if (!found) ++missing;
    }
    EXPECT_EQ(missing, 1);  // only the head->classifier edge is rerouted
}

TEST(Transform, NoReductionIsAnError) {
    // single-stage residual net, stride 1 everywhere
    NetworkGraph g;
    g.name = "flat";
    g.class_count = 3;
    const int in = g.add_node(NodeKind::input, mlrn::InputAttrs{3, 8, 8});
    const int c1 = g.add_node(NodeKind::conv, mlrn::ConvAttrs{3, 8, 3, 3, 1, 1, false});
    g.add_edge(in, c1);
    const int r1 = g.add_node(NodeKind::relu);
    g.add_edge(c1, r1);
    const int c2 = g.add_node(NodeKind::conv, mlrn::ConvAttrs{8, 8, 3, 3, 1, 1, false});
    g.add_edge(r1, c2);
    const int comb = g.add_node(NodeKind::combine, mlrn::CombineAttrs{CombineMode::add});
    g.add_edge(c2, comb, 0);
    g.add_edge(r1, comb, 1);
    const int gap = g.add_node(NodeKind::global_avg_pool);
    g.add_edge(comb, gap);
    const int fc = g.add_node(NodeKind::linear, mlrn::LinearAttrs{8, 3});
    g.add_edge(gap, fc);
    const int out = g.add_node(NodeKind::output);
    g.add_edge(fc, out);
    g.validate();

    EXPECT_TRUE(find_tap_points(g).empty());
    try {
        apply_multilevel_transform(g, PoolMode::channel_mean);
        FAIL() << "expected GraphError";
    } catch (const mlrn::GraphError& e) {
        EXPECT_NE(std::string(e.what()).find("no spatial reduction"), std::string::npos);
    }
}

TEST(Transform, UnrecognizableHeadIsAnError) {
    // reducing residual block but classifier fed by raw relu, not pooling
    NetworkGraph g;
    g.name = "headless";
    g.class_count = 3;
    const int in = g.add_node(NodeKind::input, mlrn::InputAttrs{3, 8, 8});
    const int c1 = g.add_node(NodeKind::conv, mlrn::ConvAttrs{3, 8, 3, 3, 2, 1, false});
    g.add_edge(in, c1);
    const int sc = g.add_node(NodeKind::conv, mlrn::ConvAttrs{3, 8, 1, 1, 2, 0, false});
    g.add_edge(in, sc);
    const int comb = g.add_node(NodeKind::combine, mlrn::CombineAttrs{CombineMode::add});
    g.add_edge(c1, comb, 0);
    g.add_edge(sc, comb, 1);
    const int flat = g.add_node(NodeKind::flatten);
    g.add_edge(comb, flat);
    const int r = g.add_node(NodeKind::relu);  // breaks the pooled-head pattern
    g.add_edge(flat, r);
    EXPECT_THROW(g.validate(), mlrn::GraphError);  // relu on 2-D is fine; missing linear/output
    const int fc = g.add_node(NodeKind::linear, mlrn::LinearAttrs{128, 3});
    g.add_edge(r, fc);
    const int out = g.add_node(NodeKind::output);
    g.add_edge(fc, out);
    g.validate();

    EXPECT_THROW(apply_multilevel_transform(g, PoolMode::channel_mean), mlrn::GraphError);
}

TEST(Transform, SecondApplicationTapsSameBlocks) {
    auto g = build_resnet(3, 10, 1, CombineMode::add);
    const auto taps = find_tap_points(g);
    auto t1 = apply_multilevel_transform(g, PoolMode::channel_mean);
    // tap detection keys on residual blocks, not on the added pooling nodes
    EXPECT_EQ(find_tap_points(t1), taps);
    auto t2 = apply_multilevel_transform(t1, PoolMode::channel_mean);
    EXPECT_EQ(find_tap_points(t2), taps);
    EXPECT_EQ(count_kind(t2, NodeKind::channel_mean), count_kind(t1, NodeKind::channel_mean) + 2);
}

TEST(Transform, MaxCombineAndWideResnet) {
    auto gm = build_resnet(3, 10, 1, CombineMode::max);
    auto tm = apply_multilevel_transform(gm, PoolMode::channel_mean);
    tm.validate();
    EXPECT_EQ(classifier(tm).in_features, 32 * 32 + 16 * 16 + 64);

    auto w = build_wideresnet(28, 10, 100);
    EXPECT_EQ(find_tap_points(w).size(), 2u);
    auto tw = apply_multilevel_transform(w, PoolMode::channel_mean);
    tw.validate();
    // taps carry 32x32 and 16x16 maps; head keeps its 640 pooled channels
    EXPECT_EQ(classifier(tw).in_features, 32 * 32 + 16 * 16 + 640);
    const auto shapes = mlrn::infer_shapes(tw, {1, 3, 32, 32});
    EXPECT_EQ(shapes.at(tw.output_id()), (mlrn::Shape{1, 100}));
}

TEST(Transform, NewnetIsAlreadyTapped) {
    // the integrated taps keep their own reduction points transformable
    auto g = mlrn::build_newnet(10, 1);
    const auto taps = find_tap_points(g);
    EXPECT_EQ(taps.size(), 2u);  // entries of stages 2 and 3
}
