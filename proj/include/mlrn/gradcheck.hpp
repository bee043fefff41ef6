#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mlrn/config.hpp"
#include "mlrn/model.hpp"
#include "mlrn/rng.hpp"

namespace mlrn {

struct GradCheckReport {
    std::string arch;
    double max_rel_err = 0;
    std::int64_t values_checked = 0;
    double tolerance = 1e-4;
    bool pass = false;
};

// Compares full-model parameter and input gradients against central finite
// differences in double precision. `corrupt`, when set, mutates the analytic
// gradients after backward; the harness must then report a failure.
inline GradCheckReport gradcheck_graph(
    const NetworkGraph& g, double tolerance, std::uint64_t seed, double h = 1e-5,
    const std::function<void(std::vector<Tensor<double>*>&)>& corrupt = {}) {
    Model<double> model(g, seed);
    const auto& in_attrs = std::get<InputAttrs>(g.node(g.input_id()).attrs);
    Rng rng(mix_seed(seed, 99));
    Tensor<double> x({2, in_attrs.channels, in_attrs.height, in_attrs.width});
    for (std::int64_t i = 0; i < x.size(); ++i) x.at(i) = rng.uniform();
    x.set_requires_grad(true);
    std::vector<int> labels;
    for (int n = 0; n < 2; ++n) labels.push_back(rng.uniform_int(0, g.class_count - 1));

    auto loss_value = [&]() {
        auto logits = model.forward(x, BnMode::train);
        return softmax_cross_entropy(logits, labels).at(0);
    };

    std::vector<Tensor<double>*> leaves = model.parameters();
    leaves.push_back(&x);
    for (auto* leaf : leaves) leaf->zero_grad();
    {
        Tape<double> tape;
        auto logits = model.forward(x, BnMode::train, &tape);
        auto loss = softmax_cross_entropy(logits, labels, &tape);
        backward(loss, tape);
    }
    if (corrupt) corrupt(leaves);

    GradCheckReport report;
    report.arch = g.name;
    report.tolerance = tolerance;
    for (auto* leaf : leaves) {
        const double* analytic = leaf->grad();
        for (std::int64_t i = 0; i < leaf->size(); ++i) {
            const double orig = leaf->at(i);
            leaf->at(i) = orig + h;
            const double fp = loss_value();
            leaf->at(i) = orig - h;
            const double fm = loss_value();
            leaf->at(i) = orig;
            const double fd = (fp - fm) / (2 * h);
            const double an = analytic ? analytic[i] : 0.0;
            const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6});
            report.max_rel_err = std::max(report.max_rel_err, rel);
            ++report.values_checked;
        }
    }
    report.pass = report.max_rel_err < tolerance;
    return report;
}

// Scales an architecture down to gradcheck size: 8x8 inputs, a few channels
// per stage, at most 5 classes.
inline NetworkGraph tiny_arch(const ArchSpec& spec) {
    ArchSpec a = spec;
    a.classes = std::min(a.classes, 5);
    NetworkGraph g;
    if (a.name == "newnet") {
        g = build_newnet(a.classes, a.width_mult, a.pool_mode, /*base_width=*/4, /*input_hw=*/8);
    } else if (a.name.rfind("resnet", 0) == 0) {
        const int layers = std::stoi(a.name.substr(6));
        g = build_resnet((layers - 2) / 6, a.classes, a.width_mult, a.combine, /*base_width=*/2,
                         /*input_hw=*/8);
    } else if (a.name.rfind("wrn", 0) == 0) {
        g = build_wideresnet(10, 1, a.classes, /*input_hw=*/8);
    } else {
        throw Error("gradcheck: no tiny form for arch '" + a.name + "'");
    }
    if (a.transform) g = apply_multilevel_transform(g, a.pool_mode);
    return g;
}

inline GradCheckReport gradcheck(const ArchSpec& spec, double tolerance = 1e-4,
                                 std::uint64_t seed = 1) {
    return gradcheck_graph(tiny_arch(spec), tolerance, seed);
}

}  // namespace mlrn
