#pragma once

#include <vector>

#include "mlrn/error.hpp"
#include "mlrn/parallel.hpp"
#include "mlrn/tensor.hpp"

namespace mlrn {

// v <- momentum*v + grad + weight_decay*param; param <- param - lr*v.
// Gradients are zeroed after the step. Parameters without an allocated
// gradient are treated as having zero gradient.
template <typename T>
void sgd_momentum_step(const std::vector<Tensor<T>*>& params,
                       std::vector<std::vector<T>>& velocities, T lr, T momentum,
                       T weight_decay) {
    if (velocities.size() != params.size())
        throw Error("sgd_momentum_step: velocity count does not match parameter count");
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor<T>& p = *params[i];
        auto& v = velocities[i];
        if (v.empty()) v.assign(static_cast<std::size_t>(p.size()), T(0));
        if (static_cast<std::int64_t>(v.size()) != p.size())
            throw Error("sgd_momentum_step: velocity size mismatch at parameter " + std::to_string(i));
        T* pd = p.data();
        T* g = p.grad();
        T* vd = v.data();
        const std::int64_t n = p.size();
        parallel_for(0, n, [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t j = lo; j < hi; ++j) {
                const T grad = (g ? g[j] : T(0)) + weight_decay * pd[j];
                vd[j] = momentum * vd[j] + grad;
                pd[j] -= lr * vd[j];
            }
        });
        p.zero_grad();
    }
}

}  // namespace mlrn
