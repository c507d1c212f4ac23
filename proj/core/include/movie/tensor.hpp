#pragma once

#include <algorithm>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace movie {

/// Raised when operand shapes are incompatible. The message names the
/// offending axis so callers can report precisely what went wrong.
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when an operation's contract is violated (non-scalar loss,
/// missing gradient, bad configuration value, ...).
class ContractError : public std::runtime_error {
public:
    explicit ContractError(const std::string& what) : std::runtime_error(what) {}
};

/// Dense row-major 64-bit-float array with an optional gradient buffer.
///
/// Copies are shallow: two Tensor values may share the same storage, and a
/// reshape() produces a view of the same storage under a new shape, so
/// gradients accumulated through a view are visible through every alias.
/// The shape of a given Tensor value is fixed after construction.
class Tensor {
    struct Storage {
        std::vector<double> data;
        std::vector<double> grad;  // empty until first use
    };

public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape, bool requires_grad = false)
        : shape_(std::move(shape)), storage_(std::make_shared<Storage>()), requires_grad_(requires_grad) {
        storage_->data.assign(static_cast<size_t>(numel_of(shape_)), 0.0);
    }

    Tensor(std::vector<int> shape, std::vector<double> values, bool requires_grad = false)
        : shape_(std::move(shape)), storage_(std::make_shared<Storage>()), requires_grad_(requires_grad) {
        if (static_cast<size_t>(numel_of(shape_)) != values.size())
            throw ShapeError("tensor: value count " + std::to_string(values.size()) +
                             " does not match shape product " + std::to_string(numel_of(shape_)));
        storage_->data = std::move(values);
    }

    static Tensor scalar(double v, bool requires_grad = false) {
        return Tensor({1}, {v}, requires_grad);
    }

    const std::vector<int>& shape() const { return shape_; }
    int dim(int axis) const { return shape_.at(static_cast<size_t>(axis)); }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int64_t numel() const { return numel_of(shape_); }
    bool defined() const { return storage_ != nullptr; }

    double* data() { return storage_->data.data(); }
    const double* data() const { return storage_->data.data(); }
    double& at(int64_t i) { return storage_->data[static_cast<size_t>(i)]; }
    double at(int64_t i) const { return storage_->data[static_cast<size_t>(i)]; }
    double item() const {
        if (numel() != 1) throw ContractError("item(): tensor has " + std::to_string(numel()) + " elements");
        return storage_->data[0];
    }

    bool requires_grad() const { return requires_grad_; }
    void set_requires_grad(bool rg) { requires_grad_ = rg; }

    bool has_grad() const { return storage_ && !storage_->grad.empty(); }
    /// Gradient buffer, allocated (zero-filled) on first access.
    double* grad() {
        if (storage_->grad.empty()) storage_->grad.assign(storage_->data.size(), 0.0);
        return storage_->grad.data();
    }
    const double* grad_or_null() const {
        return (storage_ && !storage_->grad.empty()) ? storage_->grad.data() : nullptr;
    }
    void zero_grad() {
        if (storage_ && !storage_->grad.empty())
            std::fill(storage_->grad.begin(), storage_->grad.end(), 0.0);
    }

    /// Whether two tensors share the same underlying storage.
    bool same_storage(const Tensor& other) const { return storage_ == other.storage_; }

    /// View of the same storage under a different shape.
    Tensor reshape(std::vector<int> new_shape) const {
        if (numel_of(new_shape) != numel())
            throw ShapeError("reshape: element count mismatch (" + std::to_string(numel()) +
                             " vs " + std::to_string(numel_of(new_shape)) + ")");
        Tensor t;
        t.shape_ = std::move(new_shape);
        t.storage_ = storage_;
        t.requires_grad_ = requires_grad_;
        return t;
    }

    /// Deep copy of values (gradient buffer not copied).
    Tensor clone() const {
        Tensor t(shape_);
        t.storage_->data = storage_->data;
        t.requires_grad_ = requires_grad_;
        return t;
    }

    static int64_t numel_of(const std::vector<int>& shape) {
        int64_t n = 1;
        for (int d : shape) {
            if (d <= 0) throw ShapeError("shape axes must be positive, got " + std::to_string(d));
            n *= d;
        }
        return n;
    }

private:
    std::vector<int> shape_;
    std::shared_ptr<Storage> storage_;
    bool requires_grad_ = false;
};

inline std::string shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

}  // namespace movie
