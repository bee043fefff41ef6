#include <gtest/gtest.h>

#include "mlrn/builders.hpp"
#include "mlrn/graph_json.hpp"
#include "mlrn/shape_infer.hpp"
#include "mlrn/transform.hpp"

using mlrn::build_newnet;
using mlrn::build_resnet;
using mlrn::build_wideresnet;
using mlrn::CombineMode;
using mlrn::NetworkGraph;
using mlrn::NodeKind;
using mlrn::PoolMode;

namespace {

// Independent counting oracle: per-layer parameter arithmetic straight from
// the construction rules, never touching the graph.
long long conv_p(int i, int o, int k) { return 1LL * i * o * k * k; }
long long bn_p(int c) { return 2LL * c; }

long long resnet_params(int n, int classes, int wm, int base = 16) {
    long long t = conv_p(3, base * wm, 3) + bn_p(base * wm);
    int ch = base * wm;
    for (int s = 0; s < 3; ++s) {
        const int out = base * (1 << s) * wm;
        for (int b = 0; b < n; ++b) {
            const int stride = (s > 0 && b == 0) ? 2 : 1;
            t += conv_p(ch, out, 3) + bn_p(out) + conv_p(out, out, 3) + bn_p(out);
            if (stride != 1 || ch != out) t += conv_p(ch, out, 1) + bn_p(out);
            ch = out;
        }
    }
    return t + 1LL * ch * classes + classes;
}

long long newnet_params(int classes, int wm, bool channel_mean_mode, int base = 32, int hw = 32) {
    long long t = conv_p(3, base * wm, 3) + bn_p(base * wm);
    int ch = base * wm, spatial = hw;
    long long width = 0;
    for (int s = 0; s < 3; ++s) {
        const int out = base * (1 << s) * wm;
        for (int b = 0; b < 2; ++b) {
            const int stride = (s > 0 && b == 0) ? 2 : 1;
            t += conv_p(ch, out, 3) + bn_p(out) + conv_p(out, out, 3) + bn_p(out);
            if (stride != 1 || ch != out) t += conv_p(ch, out, 1) + bn_p(out);
            if (stride == 2) spatial = (spatial + 2 - 3) / 2 + 1;
            ch = out;
        }
        width += channel_mean_mode ? 1LL * spatial * spatial : out;
    }
    width += ch;
    return t + width * classes + classes;
}

long long wrn_params(int depth, int widen, int classes) {
    const int nb = (depth - 4) / 6;
    long long t = conv_p(3, 16, 3);
    int ch = 16;
    for (int g = 0; g < 3; ++g) {
        const int out = 16 * (1 << g) * widen;
        for (int b = 0; b < nb; ++b) {
            const int stride = (g > 0 && b == 0) ? 2 : 1;
            const bool equal = (ch == out && stride == 1);
            t += bn_p(ch) + conv_p(ch, out, 3) + bn_p(out) + conv_p(out, out, 3);
            if (!equal) t += conv_p(ch, out, 1);
            ch = out;
        }
    }
    return t + bn_p(ch) + 1LL * ch * classes + classes;
}

int count_kind(const NetworkGraph& g, NodeKind k) {
    int c = 0;
    for (const auto& n : g.nodes)
        if (n.kind == k) ++c;
    return c;
}

}  // namespace

TEST(BuildResnet, ParameterizedLayerCount) {
    auto g = build_resnet(5, 100, 1, CombineMode::add);
    // 6n+2 = 32 named layers; graph holds 1 stem + 30 block convs +
    // 2 projection shortcuts = 33 convs plus the classifier.
    EXPECT_EQ(count_kind(g, NodeKind::conv), 33);
    EXPECT_EQ(count_kind(g, NodeKind::linear), 1);
    const auto shapes = mlrn::infer_shapes(g, {1, 3, 32, 32});
    EXPECT_EQ(shapes.at(g.output_id()), (mlrn::Shape{1, 100}));
}

TEST(BuildResnet, GoldenParamCounts) {
    const auto pc = mlrn::count_params(build_resnet(5, 100, 1, CombineMode::add));
    EXPECT_EQ(pc.learnable, resnet_params(5, 100, 1));
    EXPECT_EQ(pc.learnable, 472756);  // ~0.47M

    const auto pc2 = mlrn::count_params(build_resnet(5, 100, 2, CombineMode::add));
    EXPECT_EQ(pc2.learnable, resnet_params(5, 100, 2));
    EXPECT_EQ(pc2.learnable, 1872132);
    const double ratio = static_cast<double>(pc2.learnable) / static_cast<double>(pc.learnable);
    EXPECT_GT(ratio, 3.5);
    EXPECT_LT(ratio, 4.0);
}

TEST(BuildResnet, StageOutputShapes) {
    auto g = build_resnet(5, 100, 1, CombineMode::add);
    const auto shapes = mlrn::infer_shapes(g, {1, 3, 32, 32});
    const auto taps = mlrn::find_tap_points(g);  // stage 1 and 2 outputs
    ASSERT_EQ(taps.size(), 2u);
    EXPECT_EQ(shapes.at(taps[0]), (mlrn::Shape{1, 16, 32, 32}));
    EXPECT_EQ(shapes.at(taps[1]), (mlrn::Shape{1, 32, 16, 16}));
    // final stage via the classifier width
    const auto& fc = std::get<mlrn::LinearAttrs>(g.node(g.in_edges(g.output_id())[0].src).attrs);
    EXPECT_EQ(fc.in_features, 64);
}

TEST(BuildNewnet, ClassifierWidths) {
    auto g = build_newnet(100, 1, PoolMode::channel_mean);
    const auto& fc = std::get<mlrn::LinearAttrs>(g.node(g.in_edges(g.output_id())[0].src).attrs);
    // three stage taps (32x32, 16x16, 8x8 maps) plus 128 pooled channels
    EXPECT_EQ(fc.in_features, 32 * 32 + 16 * 16 + 8 * 8 + 128);
    EXPECT_EQ(fc.in_features, 1472);

    auto gg = build_newnet(100, 1, PoolMode::per_channel_gap);
    const auto& fcg = std::get<mlrn::LinearAttrs>(gg.node(gg.in_edges(gg.output_id())[0].src).attrs);
    EXPECT_EQ(fcg.in_features, 32 + 64 + 128 + 128);
    EXPECT_EQ(fcg.in_features, 352);
}

TEST(BuildNewnet, StageOutputShapes) {
    auto g = build_newnet(100, 1);
    const auto shapes = mlrn::infer_shapes(g, {1, 3, 32, 32});
    std::vector<mlrn::Shape> tap_inputs;
    for (const auto& n : g.nodes)
        if (n.kind == NodeKind::channel_mean) tap_inputs.push_back(shapes.at(g.in_edges(n.id)[0].src));
    ASSERT_EQ(tap_inputs.size(), 3u);
    EXPECT_EQ(tap_inputs[0], (mlrn::Shape{1, 32, 32, 32}));
    EXPECT_EQ(tap_inputs[1], (mlrn::Shape{1, 64, 16, 16}));
    EXPECT_EQ(tap_inputs[2], (mlrn::Shape{1, 128, 8, 8}));
}

TEST(BuildNewnet, SavesParamsOverDoubleDepthResnet) {
    const auto nn = mlrn::count_params(build_newnet(100, 1));
    EXPECT_EQ(nn.learnable, newnet_params(100, 1, true));
    EXPECT_EQ(nn.learnable, 842628);
    const auto rd = mlrn::count_params(build_resnet(5, 100, 2, CombineMode::add));
    EXPECT_LT(nn.learnable, rd.learnable);

    const auto nng = mlrn::count_params(build_newnet(100, 1, PoolMode::per_channel_gap));
    EXPECT_EQ(nng.learnable, newnet_params(100, 1, false));
}

TEST(BuildWideResnet, ShapeAndParams) {
    auto g = build_wideresnet(28, 10, 100);
    const auto shapes = mlrn::infer_shapes(g, {2, 3, 32, 32});
    EXPECT_EQ(shapes.at(g.output_id()), (mlrn::Shape{2, 100}));
    EXPECT_EQ(count_kind(g, NodeKind::combine), 3 * (28 - 4) / 6);  // 4 blocks per group
    const auto pc = mlrn::count_params(g);
    EXPECT_EQ(pc.learnable, wrn_params(28, 10, 100));
    EXPECT_EQ(pc.learnable, 36536884);  // ~36.5M
    EXPECT_THROW(build_wideresnet(27, 10, 100), mlrn::GraphError);
}

TEST(Builders, AllValidateAcrossSizes) {
    for (int classes : {2, 10, 100}) {
        for (int wm : {1, 2}) {
            for (auto mode : {CombineMode::add, CombineMode::max}) {
                auto r = build_resnet(3, classes, wm, mode);
                r.validate();
                const auto s = mlrn::infer_shapes(r, {1, 3, 32, 32});
                EXPECT_EQ(s.at(r.output_id()), (mlrn::Shape{1, classes}));
            }
            auto nn = build_newnet(classes, wm);
            nn.validate();
            const auto s = mlrn::infer_shapes(nn, {1, 3, 32, 32});
            EXPECT_EQ(s.at(nn.output_id()), (mlrn::Shape{1, classes}));
        }
    }
}

TEST(CountParams, SingleLayerExamples) {
    NetworkGraph g;
    g.name = "tiny";
    g.class_count = 10;
    const int in = g.add_node(NodeKind::input, mlrn::InputAttrs{3, 32, 32});
    const int c = g.add_node(NodeKind::conv, mlrn::ConvAttrs{3, 16, 3, 3, 1, 1, true});
    g.add_edge(in, c);
    const int b = g.add_node(NodeKind::bn, mlrn::BnAttrs{16});
    g.add_edge(c, b);
    const int gap = g.add_node(NodeKind::global_avg_pool);
    g.add_edge(b, gap);
    const int fc = g.add_node(NodeKind::linear, mlrn::LinearAttrs{16, 10});
    g.add_edge(gap, fc);
    const int out = g.add_node(NodeKind::output);
    g.add_edge(fc, out);
    g.validate();

    const auto pc = mlrn::count_params(g);
    // conv with bias: 16*3*9 + 16 = 448
    EXPECT_EQ(pc.per_node[0].second, 448);
    // bn: 2C learnable, 2C running stats reported separately
    EXPECT_EQ(pc.per_node[1].second, 32);
    EXPECT_EQ(pc.non_learnable, 32);
    EXPECT_EQ(pc.learnable, 448 + 32 + 16 * 10 + 10);
}

TEST(GraphJson, RoundTripAllBuilders) {
    std::vector<NetworkGraph> graphs;
    graphs.push_back(build_resnet(3, 10, 1, CombineMode::add));
    graphs.push_back(build_resnet(5, 100, 2, CombineMode::max));
    graphs.push_back(build_newnet(100, 1));
    graphs.push_back(build_newnet(10, 2, PoolMode::per_channel_gap));
    graphs.push_back(build_wideresnet(16, 2, 10));
    graphs.push_back(mlrn::apply_multilevel_transform(graphs[0], PoolMode::channel_mean));
    for (const auto& g : graphs) {
        const auto text = mlrn::serialize_graph(g);
        const auto back = mlrn::deserialize_graph(text);
        EXPECT_EQ(back, g) << g.name;
        // serialization is stable
        EXPECT_EQ(mlrn::serialize_graph(back), text);
    }
}

TEST(GraphJson, UnknownKindNamesTheKind) {
    const std::string bad = R"({"name":"x","class_count":2,
      "nodes":[{"id":0,"kind":"input","channels":3,"height":8,"width":8},
               {"id":1,"kind":"warp"},
               {"id":2,"kind":"output"}],
      "edges":[[0,1,0],[1,2,0]]})";
    try {
        mlrn::deserialize_graph(bad);
        FAIL() << "expected ParseError";
    } catch (const mlrn::ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("warp"), std::string::npos);
    }
}

TEST(GraphJson, HandWrittenMinimalSpecParses) {
    const std::string text = R"({
      "name": "minimal",
      "class_count": 4,
      "nodes": [
        {"id": 0, "kind": "input", "channels": 3, "height": 8, "width": 8},
        {"id": 1, "kind": "conv", "in": 3, "out": 6, "kh": 3, "kw": 3, "stride": 1, "pad": 1, "bias": false},
        {"id": 2, "kind": "global_avg_pool"},
        {"id": 3, "kind": "linear", "in": 6, "out": 4},
        {"id": 4, "kind": "output"}
      ],
      "edges": [[0,1,0],[1,2,0],[2,3,0],[3,4,0]]
    })";
    const auto g = mlrn::deserialize_graph(text);
    const auto shapes = mlrn::infer_shapes(g, {2, 3, 8, 8});
    EXPECT_EQ(shapes.at(4), (mlrn::Shape{2, 4}));
}

TEST(GraphValidation, CatchesStructuralProblems) {
    NetworkGraph g;
    g.name = "broken";
    g.class_count = 2;
    const int in = g.add_node(NodeKind::input, mlrn::InputAttrs{3, 8, 8});
    const int r = g.add_node(NodeKind::relu);
    g.add_edge(in, r);
    EXPECT_THROW(g.validate(), mlrn::GraphError);  // no output node

    const int out = g.add_node(NodeKind::output);
    g.add_edge(r, out);
    g.validate();

    // dangling node: unreachable and cannot reach output
    g.add_node(NodeKind::relu);
    EXPECT_THROW(g.validate(), mlrn::GraphError);
}

TEST(ShapeInfer, ReportsInconsistencies) {
    NetworkGraph g;
    g.name = "bad-shapes";
    g.class_count = 2;
    const int in = g.add_node(NodeKind::input, mlrn::InputAttrs{3, 8, 8});
    const int c = g.add_node(NodeKind::conv, mlrn::ConvAttrs{4, 8, 3, 3, 1, 1, false});
    g.add_edge(in, c);
    const int gap = g.add_node(NodeKind::global_avg_pool);
    g.add_edge(c, gap);
    const int fc = g.add_node(NodeKind::linear, mlrn::LinearAttrs{8, 2});
    g.add_edge(gap, fc);
    const int out = g.add_node(NodeKind::output);
    g.add_edge(fc, out);
    // conv expects 4 input channels, input provides 3
    EXPECT_THROW(mlrn::infer_shapes(g, {1, 3, 8, 8}), mlrn::GraphError);
}
