#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fmgan/common.hpp"

namespace fmgan {

enum class OpKind {
    Leaf,
    Matmul,
    Add,
    Sub,
    Mul,
    Div,
    Scale,
    AddScalar,
    Exp,
    Log,
    Tanh,
    Relu,
    Sigmoid,
    Sqrt,
    Square,
    Clamp,
    Softmax,
    Reshape,
    Concat,
    Slice,
    ReduceSum,
    ReduceMean,
    Conv2d,
    Conv2dTranspose,
    UpsampleNearest,
};

const char* op_kind_name(OpKind k);

template <typename T>
class TapeT;

template <typename T>
struct TensorImpl {
    Shape shape;
    std::shared_ptr<std::vector<T>> data;
    std::vector<T> grad;  // empty until a backward pass reaches this leaf
    bool requires_grad = false;
    bool leaf = false;
    // Tape linkage; valid only while (tape, epoch) match the live tape.
    TapeT<T>* tape = nullptr;
    uint64_t epoch = 0;
    int node = -1;
};

// Dense row-major tensor. Value-semantic handle over shared storage; ops
// record themselves on the thread-active tape when an input requires grad.
template <typename T>
class TensorT {
public:
    using value_type = T;

    TensorT() = default;

    static TensorT zeros(Shape shape);
    static TensorT full(Shape shape, T value);
    static TensorT from_vec(Shape shape, std::vector<T> values);
    static TensorT scalar(T value);
    // Leaf with requires_grad=true (a trainable parameter or a probe input).
    static TensorT param(Shape shape, std::vector<T> values);
    static TensorT param_zeros(Shape shape);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int64_t numel() const { return static_cast<int64_t>(impl_->data->size()); }
    int64_t dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(impl_->shape.size()); }

    T* data() { return impl_->data->data(); }
    const T* data() const { return impl_->data->data(); }
    std::span<T> values() { return {impl_->data->data(), impl_->data->size()}; }
    std::span<const T> values() const { return {impl_->data->data(), impl_->data->size()}; }

    T item() const {
        FMGAN_CHECK(numel() == 1, "item: tensor is not scalar, shape " << shape_str(shape()));
        return (*impl_->data)[0];
    }
    T at(std::initializer_list<int64_t> idx) const;

    bool requires_grad() const { return impl_->requires_grad; }
    bool is_leaf() const { return impl_->leaf; }
    bool has_grad() const { return !impl_->grad.empty(); }
    std::span<const T> grad() const {
        FMGAN_CHECK(has_grad(), "grad: no gradient present (run backward first)");
        return {impl_->grad.data(), impl_->grad.size()};
    }
    void zero_grad() { impl_->grad.assign(impl_->data->size(), T(0)); }

    // Shares storage, drops the grad path.
    TensorT detach() const;
    // Deep copy of the value buffer; never on a tape.
    TensorT clone() const;

    std::shared_ptr<TensorImpl<T>> impl() const { return impl_; }
    static TensorT wrap(std::shared_ptr<TensorImpl<T>> impl) {
        TensorT t;
        t.impl_ = std::move(impl);
        return t;
    }

private:
    std::shared_ptr<TensorImpl<T>> impl_;
};

// Recorded operation. `inputs` holds producer node ids (-1 for constant
// inputs); creation order is topological by construction. The backward
// callback receives those ids along with the output gradient.
template <typename T>
struct TapeNode {
    OpKind kind = OpKind::Leaf;
    std::vector<int> inputs;
    int64_t out_numel = 0;
    std::weak_ptr<TensorImpl<T>> leaf_impl;
    std::function<void(const std::vector<int>&, const std::vector<T>&, TapeT<T>&)> backward;
};

template <typename T>
class TapeT {
public:
    TapeT() = default;
    TapeT(const TapeT&) = delete;
    TapeT& operator=(const TapeT&) = delete;

    // Makes this tape the active recording target for the current thread.
    class Scope {
    public:
        explicit Scope(TapeT& tape) : prev_(active_), tape_(&tape) { active_ = tape_; }
        ~Scope() { active_ = prev_; }
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

    private:
        TapeT* prev_;
        TapeT* tape_;
    };

    static TapeT* active() { return active_; }

    // Backpropagates d(loss)/d(leaf) into every requires-grad leaf recorded
    // on this tape. Leaves unreachable from `loss` hold zeros afterwards.
    // May be called repeatedly (each call starts from fresh gradients).
    void backward(const TensorT<T>& loss);

    // Drops every recorded node and invalidates node ids held by tensors.
    void clear() {
        nodes_.clear();
        grads_.clear();
        ++epoch_;
    }

    size_t size() const { return nodes_.size(); }
    uint64_t epoch() const { return epoch_; }
    const TapeNode<T>& node(size_t i) const { return nodes_[i]; }

    // --- recording interface (used by op implementations) ---
    int add_node(TapeNode<T> n) {
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }
    // Gradient accumulation buffer for a node, zero-initialized on demand.
    std::vector<T>& grad_buf(int id) {
        auto& g = grads_[static_cast<size_t>(id)];
        if (g.empty()) g.assign(static_cast<size_t>(nodes_[static_cast<size_t>(id)].out_numel), T(0));
        return g;
    }
    bool grad_present(int id) const { return !grads_[static_cast<size_t>(id)].empty(); }

private:
    static thread_local TapeT* active_;
    std::vector<TapeNode<T>> nodes_;
    std::vector<std::vector<T>> grads_;
    uint64_t epoch_ = 1;
};

template <typename T>
thread_local TapeT<T>* TapeT<T>::active_ = nullptr;

using Tensor = TensorT<float>;
using Tape = TapeT<float>;
using Tensor64 = TensorT<double>;
using Tape64 = TapeT<double>;

enum class Padding { Same, Valid };

// --- operations ----------------------------------------------------------

template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b);

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b);
template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b);
template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b);
template <typename T>
TensorT<T> div(const TensorT<T>& a, const TensorT<T>& b);

template <typename T>
TensorT<T> scale(const TensorT<T>& a, T c);
template <typename T>
TensorT<T> add_scalar(const TensorT<T>& a, T c);
template <typename T>
TensorT<T> neg(const TensorT<T>& a) {
    return scale(a, T(-1));
}

template <typename T>
TensorT<T> exp(const TensorT<T>& a);
template <typename T>
TensorT<T> log(const TensorT<T>& a);
template <typename T>
TensorT<T> tanh(const TensorT<T>& a);
template <typename T>
TensorT<T> relu(const TensorT<T>& a);
template <typename T>
TensorT<T> sigmoid(const TensorT<T>& a);
template <typename T>
TensorT<T> sqrt(const TensorT<T>& a);
template <typename T>
TensorT<T> square(const TensorT<T>& a);
template <typename T>
TensorT<T> clamp(const TensorT<T>& a, T lo, T hi);

// Softmax over the last dimension.
template <typename T>
TensorT<T> softmax(const TensorT<T>& a);

template <typename T>
TensorT<T> reshape(const TensorT<T>& a, Shape shape);
template <typename T>
TensorT<T> concat(const std::vector<TensorT<T>>& parts, int dim);
template <typename T>
TensorT<T> slice(const TensorT<T>& a, int dim, int64_t start, int64_t len);

// Reductions over all elements (scalar result).
template <typename T>
TensorT<T> reduce_sum(const TensorT<T>& a);
template <typename T>
TensorT<T> reduce_mean(const TensorT<T>& a);
// Reductions over a set of dimensions.
template <typename T>
TensorT<T> reduce_sum(const TensorT<T>& a, const std::vector<int>& dims, bool keepdim);
template <typename T>
TensorT<T> reduce_mean(const TensorT<T>& a, const std::vector<int>& dims, bool keepdim);

// x: [N, Cin, H, W], w: [Cout, Cin, kh, kw], b: [Cout] or undefined.
// Strides 1 and 2; Same keeps ceil(size/stride), Valid uses no padding.
template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b, int stride,
                  Padding padding);

// x: [N, Cin, H, W], w: [Cin, Cout, kh, kw], b: [Cout] or undefined.
// out spatial = (in - 1)*stride - 2*pad + k.
template <typename T>
TensorT<T> conv2d_transpose(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                            int stride, int pad);

template <typename T>
TensorT<T> upsample_nearest(const TensorT<T>& x, int factor);

// Per-channel mean and biased variance over the given dims (a composition of
// primitive ops, so both outputs stay differentiable).
template <typename T>
std::pair<TensorT<T>, TensorT<T>> batch_stats(const TensorT<T>& x, const std::vector<int>& dims);

// One-hot rows as a constant tensor, shape [labels.size(), classes].
template <typename T>
TensorT<T> one_hot(const std::vector<int>& labels, int classes);

}  // namespace fmgan
