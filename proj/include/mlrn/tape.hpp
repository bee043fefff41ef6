#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "mlrn/error.hpp"
#include "mlrn/tensor.hpp"

namespace mlrn {

// Reverse-mode record of one forward pass. Ops push a backward rule as they
// execute; replaying the rules in reverse order applies the chain rule over
// the implicit DAG. Captured tensors alias the forward tensors, so gradient
// writes land in the buffers the caller sees.
template <typename T>
class Tape {
public:
    void record(std::function<void()> backward_rule) {
        nodes_.push_back(std::move(backward_rule));
    }

    std::size_t size() const { return nodes_.size(); }

    void replay_backward() {
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    }

    void clear() { nodes_.clear(); }

private:
    std::vector<std::function<void()>> nodes_;
};

// Seeds d(loss)/d(loss) = 1 and replays the tape. Gradients accumulate
// additively into every requires_grad tensor reachable from the loss.
template <typename T>
void backward(Tensor<T>& loss, Tape<T>& tape) {
    if (loss.size() != 1)
        throw ShapeError("backward expects a scalar loss, got shape " + shape_str(loss.shape()));
    loss.ensure_grad()[0] += T(1);
    tape.replay_backward();
}

}  // namespace mlrn
