#pragma once

#include <cmath>
#include <map>
#include <vector>

#include "mlrn/graph.hpp"
#include "mlrn/ops.hpp"
#include "mlrn/rng.hpp"
#include "mlrn/shape_infer.hpp"
#include "mlrn/tensor.hpp"

namespace mlrn {

// Runtime instantiation of a NetworkGraph: owns one parameter set and the
// batch-norm statistics, executes forward passes in topological order.
// He fan-in normal init for conv/linear weights, zeros for biases and beta,
// ones for gamma. Confined to one worker during training.
template <typename T>
class Model {
public:
    explicit Model(NetworkGraph g, std::uint64_t seed) : graph_(std::move(g)) {
        graph_.validate();
        topo_ = graph_.topo_order();
        Rng rng(mix_seed(seed, 17));
        for (const auto& n : graph_.nodes) {
            if (n.kind == NodeKind::conv) {
                const auto& a = std::get<ConvAttrs>(n.attrs);
                Tensor<T> w({a.out_channels, a.in_channels, a.kh, a.kw});
                const double std = std::sqrt(2.0 / (static_cast<double>(a.in_channels) * a.kh * a.kw));
                for (std::int64_t i = 0; i < w.size(); ++i) w.at(i) = static_cast<T>(rng.normal(0.0, std));
                w.set_requires_grad(true);
                weights_.emplace(n.id, std::move(w));
                if (a.bias) {
                    Tensor<T> b({a.out_channels});
                    b.set_requires_grad(true);
                    biases_.emplace(n.id, std::move(b));
                }
            } else if (n.kind == NodeKind::bn) {
                const auto& a = std::get<BnAttrs>(n.attrs);
                BatchNorm<T> bn(a.channels);
                bn.eps = static_cast<T>(a.eps);
                bn.momentum = static_cast<T>(a.momentum);
                bns_.emplace(n.id, std::move(bn));
            } else if (n.kind == NodeKind::linear) {
                const auto& a = std::get<LinearAttrs>(n.attrs);
                Tensor<T> w({a.out_features, a.in_features});
                const double std = std::sqrt(2.0 / static_cast<double>(a.in_features));
                for (std::int64_t i = 0; i < w.size(); ++i) w.at(i) = static_cast<T>(rng.normal(0.0, std));
                w.set_requires_grad(true);
                weights_.emplace(n.id, std::move(w));
                Tensor<T> b({a.out_features});
                b.set_requires_grad(true);
                biases_.emplace(n.id, std::move(b));
            }
        }
    }

    // Transfers parameters from `src` onto a rewritten graph. Shared nodes
    // are deep-copied; a widened classifier keeps its old columns in the
    // trailing positions (original head features concatenate last) and new
    // columns start at zero, so the grafted net reproduces src's logits.
    static Model graft(const Model& src, NetworkGraph new_graph) {
        Model dst(std::move(new_graph), 0);
        for (auto& [id, w] : dst.weights_) {
            if (!src.graph_.has_node(id)) continue;
            const LayerNode& n = dst.graph_.node(id);
            if (src.graph_.node(id).kind != n.kind) continue;
            const Tensor<T>& sw = src.weights_.at(id);
            if (sw.shape() == w.shape()) {
                copy_data(sw, w);
            } else if (n.kind == NodeKind::linear) {
                const int m = w.dim(0), d_new = w.dim(1), d_old = sw.dim(1);
                if (sw.dim(0) != m || d_old > d_new)
                    throw GraphError("graft: classifier shapes incompatible");
                std::fill(w.data(), w.data() + w.size(), T(0));
                for (int r = 0; r < m; ++r)
                    for (int c = 0; c < d_old; ++c)
                        w.data()[static_cast<std::int64_t>(r) * d_new + (d_new - d_old) + c] =
                            sw.data()[static_cast<std::int64_t>(r) * d_old + c];
            } else {
                throw GraphError("graft: node " + std::to_string(id) + " changed shape");
            }
        }
        for (auto& [id, b] : dst.biases_) {
            auto it = src.biases_.find(id);
            if (it != src.biases_.end() && it->second.shape() == b.shape()) copy_data(it->second, b);
        }
        for (auto& [id, bn] : dst.bns_) {
            auto it = src.bns_.find(id);
            if (it == src.bns_.end()) continue;
            copy_data(it->second.gamma, bn.gamma);
            copy_data(it->second.beta, bn.beta);
            bn.running_mean = it->second.running_mean;
            bn.running_var = it->second.running_var;
        }
        return dst;
    }

    Tensor<T> forward(const Tensor<T>& x, BnMode mode, Tape<T>* tape = nullptr) {
        std::map<int, Tensor<T>> acts;
        for (int id : topo_) {
            const LayerNode& n = graph_.node(id);
            const auto in = graph_.in_edges(id);
            switch (n.kind) {
                case NodeKind::input: {
                    const auto& a = std::get<InputAttrs>(n.attrs);
                    if (x.rank() != 4 || x.dim(1) != a.channels)
                        throw ShapeError("model '" + graph_.name + "' expects [N," +
                                         std::to_string(a.channels) + ",H,W] input, got " +
                                         shape_str(x.shape()));
                    acts.emplace(id, x);
                    break;
                }
                case NodeKind::conv: {
                    const auto& a = std::get<ConvAttrs>(n.attrs);
                    auto bit = biases_.find(id);
                    acts.emplace(id, conv2d(acts.at(in[0].src), weights_.at(id),
                                            bit == biases_.end() ? nullptr : &bit->second, a.stride,
                                            a.pad, tape));
                    break;
                }
                case NodeKind::bn: {
                    BatchNorm<T>& bn = bns_.at(id);
                    bn.mode = mode;
                    acts.emplace(id, batchnorm2d(acts.at(in[0].src), bn, tape));
                    break;
                }
                case NodeKind::relu:
                    acts.emplace(id, relu(acts.at(in[0].src), tape));
                    break;
                case NodeKind::combine:
                    acts.emplace(id, combine(acts.at(in[0].src), acts.at(in[1].src),
                                             std::get<CombineAttrs>(n.attrs).mode, tape));
                    break;
                case NodeKind::channel_mean:
                    acts.emplace(id, channel_mean(acts.at(in[0].src), tape));
                    break;
                case NodeKind::per_channel_gap:
                    acts.emplace(id, per_channel_gap(acts.at(in[0].src), tape));
                    break;
                case NodeKind::global_avg_pool:
                    acts.emplace(id, global_avg_pool(acts.at(in[0].src), tape));
                    break;
                case NodeKind::flatten:
                    acts.emplace(id, flatten(acts.at(in[0].src)));
                    break;
                case NodeKind::concat: {
                    std::vector<Tensor<T>> xs;
                    for (const auto& e : in) xs.push_back(acts.at(e.src));
                    acts.emplace(id, concat_features(xs, tape));
                    break;
                }
                case NodeKind::linear:
                    acts.emplace(id, linear(acts.at(in[0].src), weights_.at(id), biases_.at(id), tape));
                    break;
                case NodeKind::output:
                    acts.emplace(id, acts.at(in[0].src));
                    break;
            }
        }
        return acts.at(graph_.output_id());
    }

    // Learnable tensors in node-id order: conv weight (+bias), bn gamma and
    // beta, linear weight and bias. The order is the serialization contract.
    std::vector<Tensor<T>*> parameters() {
        std::vector<Tensor<T>*> ps;
        for (const auto& n : graph_.nodes) {
            auto wit = weights_.find(n.id);
            if (wit != weights_.end()) ps.push_back(&wit->second);
            auto bnit = bns_.find(n.id);
            if (bnit != bns_.end()) {
                ps.push_back(&bnit->second.gamma);
                ps.push_back(&bnit->second.beta);
            }
            auto bit = biases_.find(n.id);
            if (bit != biases_.end()) ps.push_back(&bit->second);
        }
        return ps;
    }

    std::int64_t parameter_count() {
        std::int64_t total = 0;
        for (const auto* p : parameters()) total += p->size();
        return total;
    }

    void zero_grad() {
        for (auto* p : parameters()) p->zero_grad();
    }

    const NetworkGraph& graph() const { return graph_; }
    std::map<int, BatchNorm<T>>& bn_states() { return bns_; }
    Tensor<T>& weight(int id) { return weights_.at(id); }
    Tensor<T>& bias(int id) { return biases_.at(id); }

private:
    static void copy_data(const Tensor<T>& from, Tensor<T>& to) {
        std::copy(from.data(), from.data() + from.size(), to.data());
    }

    NetworkGraph graph_;
    std::vector<int> topo_;
    std::map<int, Tensor<T>> weights_;
    std::map<int, Tensor<T>> biases_;
    std::map<int, BatchNorm<T>> bns_;
};

}  // namespace mlrn
