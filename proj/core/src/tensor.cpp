#include "fmgan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "fmgan/kernels.hpp"

namespace fmgan {

const char* op_kind_name(OpKind k) {
    switch (k) {
        case OpKind::Leaf: return "leaf";
        case OpKind::Matmul: return "matmul";
        case OpKind::Add: return "add";
        case OpKind::Sub: return "sub";
        case OpKind::Mul: return "mul";
        case OpKind::Div: return "div";
        case OpKind::Scale: return "scale";
        case OpKind::AddScalar: return "add-scalar";
        case OpKind::Exp: return "exp";
        case OpKind::Log: return "log";
        case OpKind::Tanh: return "tanh";
        case OpKind::Relu: return "relu";
        case OpKind::Sigmoid: return "sigmoid";
        case OpKind::Sqrt: return "sqrt";
        case OpKind::Square: return "square";
        case OpKind::Clamp: return "clamp";
        case OpKind::Softmax: return "softmax";
        case OpKind::Reshape: return "reshape";
        case OpKind::Concat: return "concat";
        case OpKind::Slice: return "slice";
        case OpKind::ReduceSum: return "reduce-sum";
        case OpKind::ReduceMean: return "reduce-mean";
        case OpKind::Conv2d: return "conv2d";
        case OpKind::Conv2dTranspose: return "conv2d-transpose";
        case OpKind::UpsampleNearest: return "upsample-nearest";
    }
    return "?";
}

// --- tensor construction --------------------------------------------------

namespace {

template <typename T>
std::shared_ptr<TensorImpl<T>> make_impl(Shape shape, std::vector<T> values) {
    int64_t n = shape_numel(shape);
    FMGAN_CHECK(n == static_cast<int64_t>(values.size()),
                "tensor: shape " << shape_str(shape) << " expects " << n << " values, got "
                                 << values.size());
    for (int64_t d : shape)
        FMGAN_CHECK(d > 0, "tensor: dimensions must be positive, shape " << shape_str(shape));
    auto impl = std::make_shared<TensorImpl<T>>();
    impl->shape = std::move(shape);
    impl->data = std::make_shared<std::vector<T>>(std::move(values));
    return impl;
}

}  // namespace

template <typename T>
TensorT<T> TensorT<T>::zeros(Shape shape) {
    auto n = static_cast<size_t>(shape_numel(shape));
    return wrap(make_impl<T>(std::move(shape), std::vector<T>(n, T(0))));
}

template <typename T>
TensorT<T> TensorT<T>::full(Shape shape, T value) {
    auto n = static_cast<size_t>(shape_numel(shape));
    return wrap(make_impl<T>(std::move(shape), std::vector<T>(n, value)));
}

template <typename T>
TensorT<T> TensorT<T>::from_vec(Shape shape, std::vector<T> values) {
    return wrap(make_impl<T>(std::move(shape), std::move(values)));
}

template <typename T>
TensorT<T> TensorT<T>::scalar(T value) {
    return wrap(make_impl<T>(Shape{}, std::vector<T>{value}));
}

template <typename T>
TensorT<T> TensorT<T>::param(Shape shape, std::vector<T> values) {
    auto impl = make_impl<T>(std::move(shape), std::move(values));
    impl->requires_grad = true;
    impl->leaf = true;
    return wrap(std::move(impl));
}

template <typename T>
TensorT<T> TensorT<T>::param_zeros(Shape shape) {
    auto n = static_cast<size_t>(shape_numel(shape));
    return param(std::move(shape), std::vector<T>(n, T(0)));
}

template <typename T>
T TensorT<T>::at(std::initializer_list<int64_t> idx) const {
    FMGAN_CHECK(idx.size() == impl_->shape.size(),
                "at: index rank " << idx.size() << " vs tensor rank " << impl_->shape.size());
    int64_t flat = 0;
    size_t i = 0;
    for (int64_t v : idx) {
        FMGAN_CHECK(v >= 0 && v < impl_->shape[i],
                    "at: index " << v << " out of range for dim " << i);
        flat = flat * impl_->shape[i] + v;
        ++i;
    }
    return (*impl_->data)[static_cast<size_t>(flat)];
}

template <typename T>
TensorT<T> TensorT<T>::detach() const {
    auto impl = std::make_shared<TensorImpl<T>>();
    impl->shape = impl_->shape;
    impl->data = impl_->data;
    return wrap(std::move(impl));
}

template <typename T>
TensorT<T> TensorT<T>::clone() const {
    auto impl = std::make_shared<TensorImpl<T>>();
    impl->shape = impl_->shape;
    impl->data = std::make_shared<std::vector<T>>(*impl_->data);
    return wrap(std::move(impl));
}

// --- tape -------------------------------------------------------------

template <typename T>
void TapeT<T>::backward(const TensorT<T>& loss) {
    auto impl = loss.impl();
    FMGAN_CHECK(impl != nullptr, "backward: undefined tensor");
    FMGAN_CHECK(impl->tape == this && impl->epoch == epoch_ && impl->node >= 0,
                "backward: loss is not on tape");
    FMGAN_CHECK(loss.numel() == 1,
                "backward: loss must be scalar, shape " << shape_str(loss.shape()));

    grads_.assign(nodes_.size(), {});
    // Every leaf starts at zero so unreachable leaves report zero gradient.
    for (auto& n : nodes_) {
        if (n.kind == OpKind::Leaf) {
            if (auto li = n.leaf_impl.lock()) li->grad.assign(li->data->size(), T(0));
        }
    }
    grad_buf(impl->node)[0] = T(1);
    for (int i = impl->node; i >= 0; --i) {
        if (!grad_present(i)) continue;
        auto& n = nodes_[static_cast<size_t>(i)];
        if (n.kind == OpKind::Leaf) {
            if (auto li = n.leaf_impl.lock()) {
                const auto& g = grads_[static_cast<size_t>(i)];
                for (size_t j = 0; j < g.size(); ++j) li->grad[j] += g[j];
            }
        } else if (n.backward) {
            n.backward(n.inputs, grads_[static_cast<size_t>(i)], *this);
        }
        grads_[static_cast<size_t>(i)].clear();
        grads_[static_cast<size_t>(i)].shrink_to_fit();
    }
    grads_.clear();
}

// --- recording helpers ------------------------------------------------

namespace {

// Registers `t` as a leaf on the active tape if it requires grad; returns
// the node id or -1 for constants.
template <typename T>
int node_of(TapeT<T>& tape, const TensorT<T>& t) {
    auto impl = t.impl();
    if (!impl->requires_grad) return -1;
    if (impl->tape == &tape && impl->epoch == tape.epoch() && impl->node >= 0) return impl->node;
    // A non-leaf survivor of a cleared tape has no producers left; its value
    // participates as a constant.
    if (!impl->leaf) return -1;
    TapeNode<T> n;
    n.kind = OpKind::Leaf;
    n.out_numel = static_cast<int64_t>(impl->data->size());
    n.leaf_impl = impl;
    int id = tape.add_node(std::move(n));
    impl->tape = &tape;
    impl->epoch = tape.epoch();
    impl->node = id;
    return id;
}

template <typename T>
using BackFn = std::function<void(const std::vector<int>&, const std::vector<T>&, TapeT<T>&)>;

template <typename T>
void record(OpKind kind, const std::vector<TensorT<T>>& inputs, TensorT<T>& out, BackFn<T> fn) {
    TapeT<T>* tape = TapeT<T>::active();
    if (!tape) return;
    bool any = false;
    for (const auto& t : inputs) any = any || t.requires_grad();
    if (!any) return;
    std::vector<int> ids;
    ids.reserve(inputs.size());
    for (const auto& t : inputs) ids.push_back(node_of(*tape, t));
    TapeNode<T> n;
    n.kind = kind;
    n.inputs = std::move(ids);
    n.out_numel = out.numel();
    n.backward = std::move(fn);
    int id = tape->add_node(std::move(n));
    auto oimpl = out.impl();
    oimpl->requires_grad = true;
    oimpl->tape = tape;
    oimpl->epoch = tape->epoch();
    oimpl->node = id;
}

}  // namespace

// --- matmul -------------------------------------------------------------

template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
    FMGAN_CHECK(a.ndim() == 2 && b.ndim() == 2,
                "matmul: expects rank-2 tensors, got " << shape_str(a.shape()) << " and "
                                                       << shape_str(b.shape()));
    FMGAN_CHECK(a.dim(1) == b.dim(0), "matmul: inner dimensions differ, " << shape_str(a.shape())
                                                                          << " vs "
                                                                          << shape_str(b.shape()));
    int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    auto out = TensorT<T>::zeros({m, n});
    kernels::matmul_nn(m, n, k, a.data(), b.data(), out.data(), false);

    auto ai = a.impl(), bi = b.impl();
    record<T>(OpKind::Matmul, {a, b}, out,
              [ai, bi, m, k, n](const std::vector<int>& in, const std::vector<T>& g, TapeT<T>& tp) {
                  if (in[0] >= 0) {
                      auto& ga = tp.grad_buf(in[0]);
                      kernels::matmul_nt(m, k, n, g.data(), bi->data->data(), ga.data(), true);
                  }
                  if (in[1] >= 0) {
                      auto& gb = tp.grad_buf(in[1]);
                      kernels::matmul_tn(k, n, m, ai->data->data(), g.data(), gb.data(), true);
                  }
              });
    return out;
}

// --- broadcasting binary ops ---------------------------------------------

namespace {

// Right-aligned broadcast limited to equal-or-one dims.
struct Bcast {
    Shape out;
    std::vector<int64_t> stride_a, stride_b;  // per out-dim strides, 0 on broadcast dims
    bool both_same = false;
};

inline Bcast make_bcast(const Shape& a, const Shape& b, const char* opname) {
    Bcast r;
    size_t ra = a.size(), rb = b.size();
    size_t rank = std::max(ra, rb);
    r.out.resize(rank);
    std::vector<int64_t> da(rank, 1), db(rank, 1);
    for (size_t i = 0; i < rank; ++i) {
        int64_t va = i < rank - ra ? 1 : a[i - (rank - ra)];
        int64_t vb = i < rank - rb ? 1 : b[i - (rank - rb)];
        FMGAN_CHECK(va == vb || va == 1 || vb == 1,
                    opname << ": shapes not broadcastable, " << shape_str(a) << " vs "
                           << shape_str(b));
        r.out[i] = std::max(va, vb);
        da[i] = va;
        db[i] = vb;
    }
    r.stride_a.assign(rank, 0);
    r.stride_b.assign(rank, 0);
    int64_t sa = 1, sb = 1;
    for (size_t i = rank; i-- > 0;) {
        r.stride_a[i] = (da[i] == 1) ? 0 : sa;
        r.stride_b[i] = (db[i] == 1) ? 0 : sb;
        sa *= da[i];
        sb *= db[i];
    }
    r.both_same = (da == r.out) && (db == r.out);
    return r;
}

template <typename F>
void bcast_iter(const Bcast& bc, F&& fn) {
    size_t rank = bc.out.size();
    if (rank == 0) {
        fn(int64_t{0}, int64_t{0}, int64_t{0});
        return;
    }
    std::vector<int64_t> idx(rank, 0);
    int64_t n = shape_numel(bc.out);
    int64_t oa = 0, ob = 0;
    for (int64_t flat = 0; flat < n; ++flat) {
        fn(flat, oa, ob);
        for (size_t d = rank; d-- > 0;) {
            ++idx[d];
            oa += bc.stride_a[d];
            ob += bc.stride_b[d];
            if (idx[d] < bc.out[d]) break;
            oa -= bc.stride_a[d] * bc.out[d];
            ob -= bc.stride_b[d] * bc.out[d];
            idx[d] = 0;
        }
    }
}

enum class BinOp { Add, Sub, Mul, Div };

template <typename T>
TensorT<T> binary_op(BinOp which, OpKind kind, const char* name, const TensorT<T>& a,
                     const TensorT<T>& b) {
    Bcast bc = make_bcast(a.shape(), b.shape(), name);
    auto out = TensorT<T>::zeros(bc.out);
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    if (bc.both_same) {
        int64_t n = out.numel();
        switch (which) {
            case BinOp::Add:
                for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
                break;
            case BinOp::Sub:
                for (int64_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
                break;
            case BinOp::Mul:
                for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
                break;
            case BinOp::Div:
                for (int64_t i = 0; i < n; ++i) po[i] = pa[i] / pb[i];
                break;
        }
    } else {
        bcast_iter(bc, [&](int64_t o, int64_t ia, int64_t ib) {
            switch (which) {
                case BinOp::Add: po[o] = pa[ia] + pb[ib]; break;
                case BinOp::Sub: po[o] = pa[ia] - pb[ib]; break;
                case BinOp::Mul: po[o] = pa[ia] * pb[ib]; break;
                case BinOp::Div: po[o] = pa[ia] / pb[ib]; break;
            }
        });
    }

    auto ai = a.impl(), bi = b.impl();
    record<T>(kind, {a, b}, out,
              [which, bc, ai, bi](const std::vector<int>& in, const std::vector<T>& g,
                                  TapeT<T>& tp) {
                  const T* pa = ai->data->data();
                  const T* pb = bi->data->data();
                  T* ga = in[0] >= 0 ? tp.grad_buf(in[0]).data() : nullptr;
                  T* gb = in[1] >= 0 ? tp.grad_buf(in[1]).data() : nullptr;
                  bcast_iter(bc, [&](int64_t o, int64_t ia2, int64_t ib2) {
                      T gv = g[static_cast<size_t>(o)];
                      switch (which) {
                          case BinOp::Add:
                              if (ga) ga[ia2] += gv;
                              if (gb) gb[ib2] += gv;
                              break;
                          case BinOp::Sub:
                              if (ga) ga[ia2] += gv;
                              if (gb) gb[ib2] -= gv;
                              break;
                          case BinOp::Mul:
                              if (ga) ga[ia2] += gv * pb[ib2];
                              if (gb) gb[ib2] += gv * pa[ia2];
                              break;
                          case BinOp::Div: {
                              T bv = pb[ib2];
                              if (ga) ga[ia2] += gv / bv;
                              if (gb) gb[ib2] -= gv * pa[ia2] / (bv * bv);
                              break;
                          }
                      }
                  });
              });
    return out;
}

}  // namespace

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
    return binary_op(BinOp::Add, OpKind::Add, "add", a, b);
}
template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
    return binary_op(BinOp::Sub, OpKind::Sub, "sub", a, b);
}
template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
    return binary_op(BinOp::Mul, OpKind::Mul, "mul", a, b);
}
template <typename T>
TensorT<T> div(const TensorT<T>& a, const TensorT<T>& b) {
    return binary_op(BinOp::Div, OpKind::Div, "div", a, b);
}

// --- scalar + unary elementwise -------------------------------------------

template <typename T>
TensorT<T> scale(const TensorT<T>& a, T c) {
    auto out = TensorT<T>::zeros(a.shape());
    const T* pa = a.data();
    T* po = out.data();
    int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * c;
    record<T>(OpKind::Scale, {a}, out,
              [c, n](const std::vector<int>& in, const std::vector<T>& g, TapeT<T>& tp) {
                  if (in[0] < 0) return;
                  auto& ga = tp.grad_buf(in[0]);
                  for (int64_t i = 0; i < n; ++i)
                      ga[static_cast<size_t>(i)] += g[static_cast<size_t>(i)] * c;
              });
    return out;
}

template <typename T>
TensorT<T> add_scalar(const TensorT<T>& a, T c) {
    auto out = TensorT<T>::zeros(a.shape());
    const T* pa = a.data();
    T* po = out.data();
    int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + c;
    record<T>(OpKind::AddScalar, {a}, out,
              [n](const std::vector<int>& in, const std::vector<T>& g, TapeT<T>& tp) {
                  if (in[0] < 0) return;
                  auto& ga = tp.grad_buf(in[0]);
                  for (int64_t i = 0; i < n; ++i)
                      ga[static_cast<size_t>(i)] += g[static_cast<size_t>(i)];
              });
    return out;
}

namespace {

template <typename T, typename FwdF, typename BwdF>
TensorT<T> unary_op(OpKind kind, const TensorT<T>& a, FwdF&& f, BwdF&& df) {
    auto out = TensorT<T>::zeros(a.shape());
    const T* pa = a.data();
    T* po = out.data();
    int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = f(pa[i]);
    auto ai = a.impl();
    auto oi = out.impl();
    record<T>(kind, {a}, out,
              [ai, oi, df, n](const std::vector<int>& in, const std::vector<T>& g, TapeT<T>& tp) {
                  if (in[0] < 0) return;
                  auto& ga = tp.grad_buf(in[0]);
                  const T* px = ai->data->data();
                  const T* py = oi->data->data();
                  for (int64_t i = 0; i < n; ++i)
                      ga[static_cast<size_t>(i)] += g[static_cast<size_t>(i)] * df(px[i], py[i]);
              });
    return out;
}

}  // namespace

template <typename T>
TensorT<T> exp(const TensorT<T>& a) {
    return unary_op<T>(
        OpKind::Exp, a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}
template <typename T>
TensorT<T> log(const TensorT<T>& a) {
    return unary_op<T>(
        OpKind::Log, a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}
template <typename T>
TensorT<T> tanh(const TensorT<T>& a) {
    return unary_op<T>(
        OpKind::Tanh, a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}
template <typename T>
TensorT<T> relu(const TensorT<T>& a) {
    return unary_op<T>(
        OpKind::Relu, a, [](T x) { return x > T(0) ? x : T(0); },
        [](T x, T) { return x > T(0) ? T(1) : T(0); });
}
template <typename T>
TensorT<T> sigmoid(const TensorT<T>& a) {
    return unary_op<T>(
        OpKind::Sigmoid, a,
        [](T x) {
            return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
        },
        [](T, T y) { return y * (T(1) - y); });
}
template <typename T>
TensorT<T> sqrt(const TensorT<T>& a) {
    return unary_op<T>(
        OpKind::Sqrt, a, [](T x) { return std::sqrt(x); }, [](T, T y) { return T(0.5) / y; });
}
template <typename T>
TensorT<T> square(const TensorT<T>& a) {
    return unary_op<T>(
        OpKind::Square, a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}
template <typename T>
TensorT<T> clamp(const TensorT<T>& a, T lo, T hi) {
    FMGAN_CHECK(lo <= hi, "clamp: lo " << lo << " > hi " << hi);
    return unary_op<T>(
        OpKind::Clamp, a, [lo, hi](T x) { return x < lo ? lo : (x > hi ? hi : x); },
        [lo, hi](T x, T) { return (x >= lo && x <= hi) ? T(1) : T(0); });
}

// --- softmax ----------------------------------------------------------

template <typename T>
TensorT<T> softmax(const TensorT<T>& a) {
    FMGAN_CHECK(a.ndim() >= 1, "softmax: rank must be >= 1");
    int64_t cols = a.dim(a.ndim() - 1);
    int64_t rows = a.numel() / cols;
    auto out = TensorT<T>::zeros(a.shape());
    const T* pa = a.data();
    T* po = out.data();
    for (int64_t r = 0; r < rows; ++r) {
        const T* x = pa + r * cols;
        T* y = po + r * cols;
        T mx = x[0];
        for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
        T sum = T(0);
        for (int64_t j = 0; j < cols; ++j) {
            y[j] = std::exp(x[j] - mx);
            sum += y[j];
        }
        for (int64_t j = 0; j < cols; ++j) y[j] /= sum;
    }
    auto oi = out.impl();
    record<T>(OpKind::Softmax, {a}, out,
              [oi, rows, cols](const std::vector<int>& in, const std::vector<T>& g, TapeT<T>& tp) {
                  if (in[0] < 0) return;
                  auto& ga = tp.grad_buf(in[0]);
                  const T* py = oi->data->data();
                  for (int64_t r = 0; r < rows; ++r) {
                      const T* y = py + r * cols;
                      const T* gr = g.data() + r * cols;
                      T dot = T(0);
                      for (int64_t j = 0; j < cols; ++j) dot += gr[j] * y[j];
                      T* gx = ga.data() + r * cols;
                      for (int64_t j = 0; j < cols; ++j) gx[j] += y[j] * (gr[j] - dot);
                  }
              });
    return out;
}

// --- shape ops ----------------------------------------------------------

template <typename T>
TensorT<T> reshape(const TensorT<T>& a, Shape shape) {
    FMGAN_CHECK(shape_numel(shape) == a.numel(),
                "reshape: cannot view " << shape_str(a.shape()) << " as " << shape_str(shape));
    auto out =
        TensorT<T>::from_vec(std::move(shape), std::vector<T>(a.data(), a.data() + a.numel()));
    int64_t n = a.numel();
    record<T>(OpKind::Reshape, {a}, out,
              [n](const std::vector<int>& in, const std::vector<T>& g, TapeT<T>& tp) {
                  if (in[0] < 0) return;
                  auto& ga = tp.grad_buf(in[0]);
                  for (int64_t i = 0; i < n; ++i)
                      ga[static_cast<size_t>(i)] += g[static_cast<size_t>(i)];
              });
    return out;
}

template <typename T>
TensorT<T> concat(const std::vector<TensorT<T>>& parts, int dim) {
    FMGAN_CHECK(!parts.empty(), "concat: no inputs");
    const Shape s0 = parts[0].shape();
    FMGAN_CHECK(dim >= 0 && dim < static_cast<int>(s0.size()), "concat: bad dim " << dim);
    int64_t total = 0;
    for (const auto& p : parts) {
        FMGAN_CHECK(p.ndim() == static_cast<int>(s0.size()), "concat: rank mismatch");
        for (int d = 0; d < p.ndim(); ++d) {
            if (d == dim) continue;
            FMGAN_CHECK(p.dim(d) == s0[static_cast<size_t>(d)],
                        "concat: shape mismatch, " << shape_str(p.shape()) << " vs "
                                                   << shape_str(s0));
        }
        total += p.dim(dim);
    }
    Shape out_shape = s0;
    out_shape[static_cast<size_t>(dim)] = total;
    auto out = TensorT<T>::zeros(out_shape);

    int64_t outer = 1, inner = 1;
    for (int d = 0; d < dim; ++d) outer *= s0[static_cast<size_t>(d)];
    for (size_t d = static_cast<size_t>(dim) + 1; d < s0.size(); ++d) inner *= s0[d];

    std::vector<int64_t> offsets;
    std::vector<int64_t> lens;
    {
        int64_t off = 0;
        for (const auto& p : parts) {
            offsets.push_back(off);
            lens.push_back(p.dim(dim));
            off += p.dim(dim);
        }
    }
    T* po = out.data();
    for (size_t pi = 0; pi < parts.size(); ++pi) {
        const T* pp = parts[pi].data();
        int64_t len = lens[pi];
        for (int64_t o = 0; o < outer; ++o) {
            std::memcpy(po + (o * total + offsets[pi]) * inner, pp + o * len * inner,
                        static_cast<size_t>(len * inner) * sizeof(T));
        }
    }

    record<T>(OpKind::Concat, parts, out,
              [lens, offsets, outer, inner, total](const std::vector<int>& in,
                                                   const std::vector<T>& g, TapeT<T>& tp) {
                  for (size_t pi = 0; pi < in.size(); ++pi) {
                      if (in[pi] < 0) continue;
                      auto& gb = tp.grad_buf(in[pi]);
                      int64_t len = lens[pi];
                      for (int64_t o = 0; o < outer; ++o) {
                          const T* gs = g.data() + (o * total + offsets[pi]) * inner;
                          T* gd = gb.data() + o * len * inner;
                          for (int64_t i = 0; i < len * inner; ++i) gd[i] += gs[i];
                      }
                  }
              });
    return out;
}

template <typename T>
TensorT<T> slice(const TensorT<T>& a, int dim, int64_t start, int64_t len) {
    FMGAN_CHECK(dim >= 0 && dim < a.ndim(), "slice: bad dim " << dim);
    int64_t d = a.dim(dim);
    FMGAN_CHECK(start >= 0 && len > 0 && start + len <= d,
                "slice: range [" << start << ", " << start + len << ") out of bounds for size "
                                 << d);
    Shape out_shape = a.shape();
    out_shape[static_cast<size_t>(dim)] = len;
    auto out = TensorT<T>::zeros(out_shape);
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < dim; ++i) outer *= a.dim(i);
    for (int i = dim + 1; i < a.ndim(); ++i) inner *= a.dim(i);
    const T* pa = a.data();
    T* po = out.data();
    for (int64_t o = 0; o < outer; ++o) {
        std::memcpy(po + o * len * inner, pa + (o * d + start) * inner,
                    static_cast<size_t>(len * inner) * sizeof(T));
    }
    record<T>(OpKind::Slice, {a}, out,
              [outer, inner, d, start, len](const std::vector<int>& in, const std::vector<T>& g,
                                            TapeT<T>& tp) {
                  if (in[0] < 0) return;
                  auto& ga = tp.grad_buf(in[0]);
                  for (int64_t o = 0; o < outer; ++o) {
                      const T* gs = g.data() + o * len * inner;
                      T* gd = ga.data() + (o * d + start) * inner;
                      for (int64_t i = 0; i < len * inner; ++i) gd[i] += gs[i];
                  }
              });
    return out;
}

// --- reductions ---------------------------------------------------------

template <typename T>
TensorT<T> reduce_sum(const TensorT<T>& a) {
    auto out = TensorT<T>::scalar(T(0));
    const T* pa = a.data();
    T s = T(0);
    int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) s += pa[i];
    out.data()[0] = s;
    record<T>(OpKind::ReduceSum, {a}, out,
              [n](const std::vector<int>& in, const std::vector<T>& g, TapeT<T>& tp) {
                  if (in[0] < 0) return;
                  auto& ga = tp.grad_buf(in[0]);
                  T gv = g[0];
                  for (int64_t i = 0; i < n; ++i) ga[static_cast<size_t>(i)] += gv;
              });
    return out;
}

template <typename T>
TensorT<T> reduce_mean(const TensorT<T>& a) {
    return scale(reduce_sum(a), T(1) / static_cast<T>(a.numel()));
}

namespace {

struct ReducePlan {
    Shape out_shape;
    std::shared_ptr<std::vector<int64_t>> map;  // out flat index per in flat index
    int64_t count = 1;
};

inline ReducePlan make_reduce_plan(const Shape& in, const std::vector<int>& dims, bool keepdim) {
    std::vector<bool> red(in.size(), false);
    for (int d : dims) {
        FMGAN_CHECK(d >= 0 && d < static_cast<int>(in.size()), "reduce: bad dim " << d);
        red[static_cast<size_t>(d)] = true;
    }
    ReducePlan plan;
    for (size_t i = 0; i < in.size(); ++i) {
        if (red[i]) {
            plan.count *= in[i];
            if (keepdim) plan.out_shape.push_back(1);
        } else {
            plan.out_shape.push_back(in[i]);
        }
    }
    std::vector<int64_t> ostride(in.size(), 0);
    int64_t s = 1;
    for (size_t i = in.size(); i-- > 0;) {
        if (!red[i]) {
            ostride[i] = s;
            s *= in[i];
        }
    }
    int64_t n = shape_numel(in);
    plan.map = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(n));
    std::vector<int64_t> idx(in.size(), 0);
    int64_t o = 0;
    for (int64_t flat = 0; flat < n; ++flat) {
        (*plan.map)[static_cast<size_t>(flat)] = o;
        for (size_t d = in.size(); d-- > 0;) {
            ++idx[d];
            o += ostride[d];
            if (idx[d] < in[d]) break;
            o -= ostride[d] * in[d];
            idx[d] = 0;
        }
    }
    return plan;
}

}  // namespace

template <typename T>
TensorT<T> reduce_sum(const TensorT<T>& a, const std::vector<int>& dims, bool keepdim) {
    ReducePlan plan = make_reduce_plan(a.shape(), dims, keepdim);
    auto out = TensorT<T>::zeros(plan.out_shape);
    const T* pa = a.data();
    T* po = out.data();
    int64_t n = a.numel();
    const auto& map = *plan.map;
    for (int64_t i = 0; i < n; ++i) po[map[static_cast<size_t>(i)]] += pa[i];
    auto mp = plan.map;
    record<T>(OpKind::ReduceSum, {a}, out,
              [mp, n](const std::vector<int>& in, const std::vector<T>& g, TapeT<T>& tp) {
                  if (in[0] < 0) return;
                  auto& ga = tp.grad_buf(in[0]);
                  for (int64_t i = 0; i < n; ++i)
                      ga[static_cast<size_t>(i)] +=
                          g[static_cast<size_t>((*mp)[static_cast<size_t>(i)])];
              });
    return out;
}

template <typename T>
TensorT<T> reduce_mean(const TensorT<T>& a, const std::vector<int>& dims, bool keepdim) {
    ReducePlan plan = make_reduce_plan(a.shape(), dims, keepdim);
    return scale(reduce_sum(a, dims, keepdim), T(1) / static_cast<T>(plan.count));
}

// --- convolution -----------------------------------------------------------

namespace {

struct ConvGeom {
    int64_t out_h, out_w, pad_h, pad_w;
};

inline ConvGeom conv_geom(int64_t h, int64_t w, int64_t kh, int64_t kw, int64_t stride,
                          Padding padding) {
    ConvGeom g{};
    if (padding == Padding::Same) {
        g.out_h = (h + stride - 1) / stride;
        g.out_w = (w + stride - 1) / stride;
        int64_t pad_total_h = std::max<int64_t>(0, (g.out_h - 1) * stride + kh - h);
        int64_t pad_total_w = std::max<int64_t>(0, (g.out_w - 1) * stride + kw - w);
        g.pad_h = pad_total_h / 2;
        g.pad_w = pad_total_w / 2;
    } else {
        FMGAN_CHECK(h >= kh && w >= kw, "conv2d: input " << h << "x" << w
                                                         << " smaller than kernel " << kh << "x"
                                                         << kw << " with valid padding");
        g.out_h = (h - kh) / stride + 1;
        g.out_w = (w - kw) / stride + 1;
        g.pad_h = 0;
        g.pad_w = 0;
    }
    return g;
}

}  // namespace

template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b, int stride,
                  Padding padding) {
    FMGAN_CHECK(x.ndim() == 4, "conv2d: input must be [N,C,H,W], got " << shape_str(x.shape()));
    FMGAN_CHECK(w.ndim() == 4,
                "conv2d: weight must be [Cout,Cin,kh,kw], got " << shape_str(w.shape()));
    FMGAN_CHECK(stride == 1 || stride == 2, "conv2d: stride must be 1 or 2, got " << stride);
    FMGAN_CHECK(x.dim(1) == w.dim(1), "conv2d: channel mismatch, input " << shape_str(x.shape())
                                                                         << " weight "
                                                                         << shape_str(w.shape()));
    int64_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
    int64_t cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    if (b.defined()) {
        FMGAN_CHECK(b.ndim() == 1 && b.dim(0) == cout,
                    "conv2d: bias shape " << shape_str(b.shape()) << " vs Cout " << cout);
    }
    ConvGeom geo = conv_geom(h, wd, kh, kw, stride, padding);
    auto out = TensorT<T>::zeros({n, cout, geo.out_h, geo.out_w});

    const int64_t ck = cin * kh * kw;
    const int64_t plane = geo.out_h * geo.out_w;
    {
        const T* px = x.data();
        const T* pw = w.data();
        const T* pb = b.defined() ? b.data() : nullptr;
        T* po = out.data();
        parallel_for(n, 1, [&](int64_t n0, int64_t n1) {
            std::vector<T> col(static_cast<size_t>(ck * plane));
            for (int64_t img = n0; img < n1; ++img) {
                kernels::im2col(px + img * cin * h * wd, cin, h, wd, kh, kw, stride, geo.pad_h,
                                geo.pad_w, geo.out_h, geo.out_w, col.data());
                T* optr = po + img * cout * plane;
                kernels::matmul_nn(cout, plane, ck, pw, col.data(), optr, false);
                if (pb) {
                    for (int64_t c = 0; c < cout; ++c) {
                        T bv = pb[c];
                        T* row = optr + c * plane;
                        for (int64_t i = 0; i < plane; ++i) row[i] += bv;
                    }
                }
            }
        });
    }

    auto xi = x.impl(), wi = w.impl();
    std::vector<TensorT<T>> ins{x, w};
    if (b.defined()) ins.push_back(b);
    record<T>(OpKind::Conv2d, ins, out,
              [xi, wi, n, cin, h, wd, cout, kh, kw, stride, geo, ck,
               plane](const std::vector<int>& in, const std::vector<T>& g, TapeT<T>& tp) {
                  const T* px = xi->data->data();
                  const T* pw = wi->data->data();

                  if (in[0] >= 0) {
                      T* gx = tp.grad_buf(in[0]).data();
                      parallel_for(n, 1, [&](int64_t n0, int64_t n1) {
                          std::vector<T> col(static_cast<size_t>(ck * plane));
                          for (int64_t img = n0; img < n1; ++img) {
                              const T* gout = g.data() + img * cout * plane;
                              kernels::matmul_tn(ck, plane, cout, pw, gout, col.data(), false);
                              kernels::col2im(col.data(), cin, kh, kw, stride, geo.pad_h,
                                              geo.pad_w, geo.out_h, geo.out_w, h, wd,
                                              gx + img * cin * h * wd);
                          }
                      });
                  }
                  if (in[1] >= 0) {
                      // Serial over the batch: the weight-gradient reduction
                      // order must not depend on the worker count.
                      auto& gw = tp.grad_buf(in[1]);
                      std::vector<T> col(static_cast<size_t>(ck * plane));
                      for (int64_t img = 0; img < n; ++img) {
                          kernels::im2col(px + img * cin * h * wd, cin, h, wd, kh, kw, stride,
                                          geo.pad_h, geo.pad_w, geo.out_h, geo.out_w, col.data());
                          const T* gout = g.data() + img * cout * plane;
                          kernels::matmul_nt(cout, ck, plane, gout, col.data(), gw.data(), true);
                      }
                  }
                  if (in.size() > 2 && in[2] >= 0) {
                      auto& gb = tp.grad_buf(in[2]);
                      for (int64_t img = 0; img < n; ++img) {
                          const T* gout = g.data() + img * cout * plane;
                          for (int64_t c = 0; c < cout; ++c) {
                              T s = T(0);
                              const T* row = gout + c * plane;
                              for (int64_t i = 0; i < plane; ++i) s += row[i];
                              gb[static_cast<size_t>(c)] += s;
                          }
                      }
                  }
              });
    return out;
}

template <typename T>
TensorT<T> conv2d_transpose(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                            int stride, int pad) {
    FMGAN_CHECK(x.ndim() == 4,
                "conv2d_transpose: input must be [N,C,H,W], got " << shape_str(x.shape()));
    FMGAN_CHECK(w.ndim() == 4,
                "conv2d_transpose: weight must be [Cin,Cout,kh,kw], got " << shape_str(w.shape()));
    FMGAN_CHECK(stride == 1 || stride == 2,
                "conv2d_transpose: stride must be 1 or 2, got " << stride);
    FMGAN_CHECK(pad >= 0, "conv2d_transpose: pad must be >= 0, got " << pad);
    FMGAN_CHECK(x.dim(1) == w.dim(0), "conv2d_transpose: channel mismatch, input "
                                          << shape_str(x.shape()) << " weight "
                                          << shape_str(w.shape()));
    int64_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
    int64_t cout = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    int64_t out_h = (h - 1) * stride - 2 * pad + kh;
    int64_t out_w = (wd - 1) * stride - 2 * pad + kw;
    FMGAN_CHECK(out_h > 0 && out_w > 0,
                "conv2d_transpose: empty output " << out_h << "x" << out_w);
    if (b.defined()) {
        FMGAN_CHECK(b.ndim() == 1 && b.dim(0) == cout,
                    "conv2d_transpose: bias shape " << shape_str(b.shape()) << " vs Cout "
                                                    << cout);
    }
    auto out = TensorT<T>::zeros({n, cout, out_h, out_w});

    const int64_t ck = cout * kh * kw;
    const int64_t src_plane = h * wd;
    const int64_t dst_plane = out_h * out_w;
    {
        const T* px = x.data();
        const T* pw = w.data();
        const T* pb = b.defined() ? b.data() : nullptr;
        T* po = out.data();
        parallel_for(n, 1, [&](int64_t n0, int64_t n1) {
            std::vector<T> col(static_cast<size_t>(ck * src_plane));
            for (int64_t img = n0; img < n1; ++img) {
                kernels::matmul_tn(ck, src_plane, cin, pw, px + img * cin * src_plane, col.data(),
                                   false);
                T* optr = po + img * cout * dst_plane;
                kernels::col2im(col.data(), cout, kh, kw, stride, pad, pad, h, wd, out_h, out_w,
                                optr);
                if (pb) {
                    for (int64_t c = 0; c < cout; ++c) {
                        T bv = pb[c];
                        T* row = optr + c * dst_plane;
                        for (int64_t i = 0; i < dst_plane; ++i) row[i] += bv;
                    }
                }
            }
        });
    }

    auto xi = x.impl(), wi = w.impl();
    std::vector<TensorT<T>> ins{x, w};
    if (b.defined()) ins.push_back(b);
    record<T>(OpKind::Conv2dTranspose, ins, out,
              [xi, wi, n, cin, h, wd, cout, kh, kw, stride, pad, ck, src_plane, dst_plane, out_h,
               out_w](const std::vector<int>& in, const std::vector<T>& g, TapeT<T>& tp) {
                  const T* px = xi->data->data();
                  const T* pw = wi->data->data();

                  if (in[0] >= 0) {
                      T* gx = tp.grad_buf(in[0]).data();
                      parallel_for(n, 1, [&](int64_t n0, int64_t n1) {
                          std::vector<T> col(static_cast<size_t>(ck * src_plane));
                          for (int64_t img = n0; img < n1; ++img) {
                              kernels::im2col(g.data() + img * cout * dst_plane, cout, out_h,
                                              out_w, kh, kw, stride, pad, pad, h, wd, col.data());
                              kernels::matmul_nn(cin, src_plane, ck, pw, col.data(),
                                                 gx + img * cin * src_plane, true);
                          }
                      });
                  }
                  if (in[1] >= 0) {
                      auto& gw = tp.grad_buf(in[1]);
                      std::vector<T> col(static_cast<size_t>(ck * src_plane));
                      for (int64_t img = 0; img < n; ++img) {
                          kernels::im2col(g.data() + img * cout * dst_plane, cout, out_h, out_w,
                                          kh, kw, stride, pad, pad, h, wd, col.data());
                          kernels::matmul_nt(cin, ck, src_plane, px + img * cin * src_plane,
                                             col.data(), gw.data(), true);
                      }
                  }
                  if (in.size() > 2 && in[2] >= 0) {
                      auto& gb = tp.grad_buf(in[2]);
                      for (int64_t img = 0; img < n; ++img) {
                          const T* gout = g.data() + img * cout * dst_plane;
                          for (int64_t c = 0; c < cout; ++c) {
                              T s = T(0);
                              const T* row = gout + c * dst_plane;
                              for (int64_t i = 0; i < dst_plane; ++i) s += row[i];
                              gb[static_cast<size_t>(c)] += s;
                          }
                      }
                  }
              });
    return out;
}

template <typename T>
TensorT<T> upsample_nearest(const TensorT<T>& x, int factor) {
    FMGAN_CHECK(x.ndim() == 4, "upsample_nearest: input must be [N,C,H,W]");
    FMGAN_CHECK(factor >= 1, "upsample_nearest: factor must be >= 1, got " << factor);
    int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    int64_t f = factor;
    auto out = TensorT<T>::zeros({n, c, h * f, w * f});
    const T* px = x.data();
    T* po = out.data();
    for (int64_t img = 0; img < n * c; ++img) {
        const T* splane = px + img * h * w;
        T* dplane = po + img * h * f * w * f;
        for (int64_t y = 0; y < h * f; ++y) {
            const T* srow = splane + (y / f) * w;
            T* drow = dplane + y * w * f;
            for (int64_t xx = 0; xx < w * f; ++xx) drow[xx] = srow[xx / f];
        }
    }
    record<T>(OpKind::UpsampleNearest, {x}, out,
              [n, c, h, w, f](const std::vector<int>& in, const std::vector<T>& g, TapeT<T>& tp) {
                  if (in[0] < 0) return;
                  auto& gx = tp.grad_buf(in[0]);
                  for (int64_t img = 0; img < n * c; ++img) {
                      const T* gplane = g.data() + img * h * f * w * f;
                      T* dplane = gx.data() + img * h * w;
                      for (int64_t y = 0; y < h * f; ++y) {
                          const T* grow = gplane + y * w * f;
                          T* drow = dplane + (y / f) * w;
                          for (int64_t xx = 0; xx < w * f; ++xx) drow[xx / f] += grow[xx];
                      }
                  }
              });
    return out;
}

template <typename T>
std::pair<TensorT<T>, TensorT<T>> batch_stats(const TensorT<T>& x, const std::vector<int>& dims) {
    auto mean = reduce_mean(x, dims, true);
    auto centered = sub(x, mean);
    auto var = reduce_mean(square(centered), dims, true);
    return {mean, var};
}

template <typename T>
TensorT<T> one_hot(const std::vector<int>& labels, int classes) {
    FMGAN_CHECK(classes >= 1, "one_hot: classes must be >= 1");
    auto out = TensorT<T>::zeros({static_cast<int64_t>(labels.size()), classes});
    T* po = out.data();
    for (size_t i = 0; i < labels.size(); ++i) {
        FMGAN_CHECK(labels[i] >= 0 && labels[i] < classes,
                    "one_hot: label " << labels[i] << " out of range [0, " << classes << ")");
        po[i * static_cast<size_t>(classes) + static_cast<size_t>(labels[i])] = T(1);
    }
    return out;
}

// --- explicit instantiations ------------------------------------------------

#define FMGAN_INSTANTIATE_TENSOR(T)                                                               \
    template class TensorT<T>;                                                                    \
    template void TapeT<T>::backward(const TensorT<T>&);                                          \
    template TensorT<T> matmul<T>(const TensorT<T>&, const TensorT<T>&);                          \
    template TensorT<T> add<T>(const TensorT<T>&, const TensorT<T>&);                             \
    template TensorT<T> sub<T>(const TensorT<T>&, const TensorT<T>&);                             \
    template TensorT<T> mul<T>(const TensorT<T>&, const TensorT<T>&);                             \
    template TensorT<T> div<T>(const TensorT<T>&, const TensorT<T>&);                             \
    template TensorT<T> scale<T>(const TensorT<T>&, T);                                           \
    template TensorT<T> add_scalar<T>(const TensorT<T>&, T);                                      \
    template TensorT<T> exp<T>(const TensorT<T>&);                                                \
    template TensorT<T> log<T>(const TensorT<T>&);                                                \
    template TensorT<T> tanh<T>(const TensorT<T>&);                                               \
    template TensorT<T> relu<T>(const TensorT<T>&);                                               \
    template TensorT<T> sigmoid<T>(const TensorT<T>&);                                            \
    template TensorT<T> sqrt<T>(const TensorT<T>&);                                               \
    template TensorT<T> square<T>(const TensorT<T>&);                                             \
    template TensorT<T> clamp<T>(const TensorT<T>&, T, T);                                        \
    template TensorT<T> softmax<T>(const TensorT<T>&);                                            \
    template TensorT<T> reshape<T>(const TensorT<T>&, Shape);                                     \
    template TensorT<T> concat<T>(const std::vector<TensorT<T>>&, int);                           \
    template TensorT<T> slice<T>(const TensorT<T>&, int, int64_t, int64_t);                       \
    template TensorT<T> reduce_sum<T>(const TensorT<T>&);                                         \
    template TensorT<T> reduce_mean<T>(const TensorT<T>&);                                        \
    template TensorT<T> reduce_sum<T>(const TensorT<T>&, const std::vector<int>&, bool);          \
    template TensorT<T> reduce_mean<T>(const TensorT<T>&, const std::vector<int>&, bool);         \
    template TensorT<T> conv2d<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&, int,   \
                                  Padding);                                                       \
    template TensorT<T> conv2d_transpose<T>(const TensorT<T>&, const TensorT<T>&,                 \
                                            const TensorT<T>&, int, int);                         \
    template TensorT<T> upsample_nearest<T>(const TensorT<T>&, int);                              \
    template std::pair<TensorT<T>, TensorT<T>> batch_stats<T>(const TensorT<T>&,                  \
                                                              const std::vector<int>&);           \
    template TensorT<T> one_hot<T>(const std::vector<int>&, int);

FMGAN_INSTANTIATE_TENSOR(float)
FMGAN_INSTANTIATE_TENSOR(double)

}  // namespace fmgan
