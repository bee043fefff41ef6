#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "mlrn/error.hpp"

namespace mlrn {

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
}

// N-dimensional array, row-major, NCHW for 4-D activations. Copies are
// shallow: data, gradient and the requires_grad flag live in a shared
// storage block, so a tensor captured on the tape aliases the original.
template <typename T>
class Tensor {
    struct Storage {
        std::vector<T> data;
        std::vector<T> grad;  // empty until ensure_grad()
        bool requires_grad = false;
    };

public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(Shape shape) : shape_(std::move(shape)), storage_(std::make_shared<Storage>()) {
        check_shape(shape_);
        storage_->data.assign(static_cast<std::size_t>(shape_numel(shape_)), T(0));
    }

    Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
        : shape_(std::move(shape)), storage_(std::make_shared<Storage>()) {
        check_shape(shape_);
        if (static_cast<std::int64_t>(values.size()) != shape_numel(shape_))
            throw ShapeError("tensor data length " + std::to_string(values.size()) +
                             " does not match shape " + shape_str(shape_));
        storage_->data = std::move(values);
        storage_->requires_grad = requires_grad;
    }

    static Tensor full(Shape shape, T value) {
        Tensor t(std::move(shape));
        std::fill(t.data(), t.data() + t.size(), value);
        return t;
    }

    static Tensor scalar(T value) {
        Tensor t(Shape{1});
        t.at(0) = value;
        return t;
    }

    bool defined() const { return storage_ != nullptr; }
    const Shape& shape() const { return shape_; }
    int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    int rank() const { return static_cast<int>(shape_.size()); }
    std::int64_t size() const { return storage_ ? static_cast<std::int64_t>(storage_->data.size()) : 0; }

    T* data() { return storage_->data.data(); }
    const T* data() const { return storage_->data.data(); }
    T& at(std::int64_t i) { return storage_->data[static_cast<std::size_t>(i)]; }
    T at(std::int64_t i) const { return storage_->data[static_cast<std::size_t>(i)]; }

    bool requires_grad() const { return storage_ && storage_->requires_grad; }
    void set_requires_grad(bool rg) { storage_->requires_grad = rg; }

    bool has_grad() const { return storage_ && !storage_->grad.empty(); }
    // Allocates a zero gradient buffer on first use; shared by all aliases.
    T* ensure_grad() {
        if (storage_->grad.empty()) storage_->grad.assign(storage_->data.size(), T(0));
        return storage_->grad.data();
    }
    T* grad() { return storage_->grad.empty() ? nullptr : storage_->grad.data(); }
    const T* grad() const { return storage_->grad.empty() ? nullptr : storage_->grad.data(); }
    void zero_grad() {
        if (storage_ && !storage_->grad.empty())
            std::fill(storage_->grad.begin(), storage_->grad.end(), T(0));
    }

    // Same storage (data, grad, flag) under a new shape; numel must match.
    Tensor reshape(Shape new_shape) const {
        if (shape_numel(new_shape) != size())
            throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(new_shape));
        Tensor t;
        t.shape_ = std::move(new_shape);
        t.storage_ = storage_;
        return t;
    }

    bool same_storage(const Tensor& other) const { return storage_ == other.storage_; }

private:
    static void check_shape(const Shape& shape) {
        if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
        for (int d : shape)
            if (d <= 0) throw ShapeError("tensor shape must be positive, got " + shape_str(shape));
    }

    Shape shape_;
    std::shared_ptr<Storage> storage_;
};

template <typename T>
Tensor<T> tensor1d(std::initializer_list<T> values) {
    return Tensor<T>({static_cast<int>(values.size())}, std::vector<T>(values));
}

}  // namespace mlrn
