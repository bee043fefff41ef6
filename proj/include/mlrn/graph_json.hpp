#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "mlrn/graph.hpp"

namespace mlrn {

// JSON graph spec: {name, class_count, nodes:[{id, kind, attrs...}],
// edges:[[src,dst,slot]]}. Nodes are emitted in id order and edges sorted,
// so equal graphs serialize to identical text.

inline nlohmann::ordered_json node_to_json(const LayerNode& n) {
    nlohmann::ordered_json j;
    j["id"] = n.id;
    j["kind"] = node_kind_name(n.kind);
    switch (n.kind) {
        case NodeKind::conv: {
            const auto& a = std::get<ConvAttrs>(n.attrs);
            j["in"] = a.in_channels;
            j["out"] = a.out_channels;
            j["kh"] = a.kh;
            j["kw"] = a.kw;
            j["stride"] = a.stride;
            j["pad"] = a.pad;
            j["bias"] = a.bias;
            break;
        }
        case NodeKind::bn: {
            const auto& a = std::get<BnAttrs>(n.attrs);
            j["channels"] = a.channels;
            j["eps"] = a.eps;
            j["momentum"] = a.momentum;
            break;
        }
        case NodeKind::combine:
            j["mode"] = combine_mode_name(std::get<CombineAttrs>(n.attrs).mode);
            break;
        case NodeKind::linear: {
            const auto& a = std::get<LinearAttrs>(n.attrs);
            j["in"] = a.in_features;
            j["out"] = a.out_features;
            break;
        }
        case NodeKind::input: {
            const auto& a = std::get<InputAttrs>(n.attrs);
            j["channels"] = a.channels;
            j["height"] = a.height;
            j["width"] = a.width;
            break;
        }
        default:
            break;
    }
    return j;
}

inline std::string serialize_graph(const NetworkGraph& g) {
    nlohmann::ordered_json j;
    j["name"] = g.name;
    j["class_count"] = g.class_count;
    auto nodes = nlohmann::ordered_json::array();
    std::vector<LayerNode> sorted = g.nodes;
    std::sort(sorted.begin(), sorted.end(),
              [](const LayerNode& a, const LayerNode& b) { return a.id < b.id; });
    for (const auto& n : sorted) nodes.push_back(node_to_json(n));
    j["nodes"] = std::move(nodes);
    std::vector<Edge> edges = g.edges;
    std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
        return std::tie(a.src, a.dst, a.slot) < std::tie(b.src, b.dst, b.slot);
    });
    auto je = nlohmann::ordered_json::array();
    for (const auto& e : edges) je.push_back({e.src, e.dst, e.slot});
    j["edges"] = std::move(je);
    return j.dump(2) + "\n";
}

inline NetworkGraph deserialize_graph(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("graph spec is not valid JSON: ") + e.what());
    }
    NetworkGraph g;
    try {
        g.name = j.at("name").get<std::string>();
        g.class_count = j.at("class_count").get<int>();
        for (const auto& jn : j.at("nodes")) {
            LayerNode n;
            n.id = jn.at("id").get<int>();
            const std::string kind = jn.at("kind").get<std::string>();
            if (kind == "input") {
                n.kind = NodeKind::input;
                n.attrs = InputAttrs{jn.at("channels").get<int>(), jn.at("height").get<int>(),
                                     jn.at("width").get<int>()};
            } else if (kind == "output") {
                n.kind = NodeKind::output;
            } else if (kind == "conv") {
                n.kind = NodeKind::conv;
                n.attrs = ConvAttrs{jn.at("in").get<int>(),     jn.at("out").get<int>(),
                                    jn.at("kh").get<int>(),     jn.at("kw").get<int>(),
                                    jn.at("stride").get<int>(), jn.at("pad").get<int>(),
                                    jn.at("bias").get<bool>()};
            } else if (kind == "bn") {
                n.kind = NodeKind::bn;
                n.attrs = BnAttrs{jn.at("channels").get<int>(), jn.at("eps").get<double>(),
                                  jn.at("momentum").get<double>()};
            } else if (kind == "relu") {
                n.kind = NodeKind::relu;
            } else if (kind == "combine") {
                n.kind = NodeKind::combine;
                const std::string mode = jn.at("mode").get<std::string>();
                if (mode != "add" && mode != "max")
                    throw ParseError("unknown combine mode '" + mode + "'");
                n.attrs = CombineAttrs{mode == "add" ? CombineMode::add : CombineMode::max};
            } else if (kind == "channel_mean") {
                n.kind = NodeKind::channel_mean;
            } else if (kind == "per_channel_gap") {
                n.kind = NodeKind::per_channel_gap;
            } else if (kind == "global_avg_pool") {
                n.kind = NodeKind::global_avg_pool;
            } else if (kind == "flatten") {
                n.kind = NodeKind::flatten;
            } else if (kind == "concat") {
                n.kind = NodeKind::concat;
            } else if (kind == "linear") {
                n.kind = NodeKind::linear;
                n.attrs = LinearAttrs{jn.at("in").get<int>(), jn.at("out").get<int>()};
            } else {
                throw ParseError("unknown node kind '" + kind + "'");
            }
            g.nodes.push_back(n);
        }
        for (const auto& je : j.at("edges")) {
            if (!je.is_array() || je.size() != 3)
                throw ParseError("edge entries must be [src, dst, slot]");
            g.add_edge(je[0].get<int>(), je[1].get<int>(), je[2].get<int>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("graph spec is missing required fields: ") + e.what());
    }
    std::sort(g.nodes.begin(), g.nodes.end(),
              [](const LayerNode& a, const LayerNode& b) { return a.id < b.id; });
    g.validate();
    return g;
}

inline NetworkGraph load_graph_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open graph spec '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_graph(text);
}

inline void save_graph_file(const NetworkGraph& g, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write graph spec '" + path + "'");
    out << serialize_graph(g);
    if (!out) throw IoError("failed writing graph spec '" + path + "'");
}

}  // namespace mlrn
