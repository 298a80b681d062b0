#pragma once

// Central-difference sweep over every differentiable op kind, shared by the
// unit suite and the acceptance runner. All checks run in 64-bit mode on
// random tensors with dims <= 8; kinked ops (relu, clamp) sample inputs away
// from their corners, sqrt/log/div away from zero.

#include <functional>
#include <string>
#include <vector>

#include "fmgan/gradcheck.hpp"
#include "fmgan/tensor.hpp"

namespace fmgan::testing {

struct OpCheckResult {
    std::string op;
    double max_rel_err = 0;
};

inline Tensor64 rand_tensor(Shape shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
    int64_t n = shape_numel(shape);
    std::vector<double> v(static_cast<size_t>(n));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor64::from_vec(std::move(shape), std::move(v));
}

// Uniform magnitudes in [lo_abs, hi_abs], random sign; keeps kinked and
// singular ops away from their non-differentiable points.
inline Tensor64 rand_tensor_away_from(Shape shape, Rng& rng, double lo_abs, double hi_abs) {
    int64_t n = shape_numel(shape);
    std::vector<double> v(static_cast<size_t>(n));
    for (auto& x : v) {
        double mag = rng.uniform(lo_abs, hi_abs);
        x = rng.uniform() < 0.5 ? -mag : mag;
    }
    return Tensor64::from_vec(std::move(shape), std::move(v));
}

inline Tensor64 rand_positive(Shape shape, Rng& rng, double lo = 0.2, double hi = 2.0) {
    int64_t n = shape_numel(shape);
    std::vector<double> v(static_cast<size_t>(n));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor64::from_vec(std::move(shape), std::move(v));
}

// Projects an arbitrary-shaped output to a scalar with fixed random weights
// so every output coordinate influences the loss.
inline Tensor64 project(const Tensor64& out, Rng& rng) {
    std::vector<double> w(static_cast<size_t>(out.numel()));
    for (auto& x : w) x = rng.uniform(-1.0, 1.0);
    auto wt = Tensor64::from_vec(out.shape(), std::move(w));
    return reduce_sum(mul(out, wt));
}

inline int64_t rand_dim(Rng& rng) { return 1 + rng.index(8); }

// Runs `seeds` random instances per op kind; returns the worst relative
// error per op.
inline std::vector<OpCheckResult> check_all_ops(int seeds, double h = 1e-5) {
    std::vector<OpCheckResult> results;
    auto run = [&](const std::string& name,
                   const std::function<double(Rng&)>& one_case) {
        double worst = 0;
        for (int s = 0; s < seeds; ++s) {
            Rng rng(static_cast<uint64_t>(s) * 7919 + std::hash<std::string>{}(name) % 100003);
            worst = std::max(worst, one_case(rng));
        }
        results.push_back({name, worst});
    };

    using F = std::function<Tensor64(const Tensor64&)>;

    run("matmul", [&](Rng& rng) {
        int64_t m = rand_dim(rng), k = rand_dim(rng), n = rand_dim(rng);
        auto b = rand_tensor({k, n}, rng);
        auto x0 = rand_tensor({m, k}, rng);
        Rng prj(rng.next_u64());
        F f = [&](const Tensor64& x) { return project(matmul(x, b), prj); };
        double e1 = finite_diff_check<double>(f, x0, h);
        // and through the second operand
        auto a = rand_tensor({m, k}, rng);
        F g = [&](const Tensor64& x) { return project(matmul(a, x), prj); };
        auto b0 = rand_tensor({k, n}, rng);
        return std::max(e1, finite_diff_check<double>(g, b0, h));
    });

    auto binary_case = [&](const std::string& name, auto opfn, bool b_positive) {
        run(name, [&, opfn, b_positive](Rng& rng) {
            int64_t r = rand_dim(rng), c = rand_dim(rng);
            auto b = b_positive ? rand_positive({r, c}, rng) : rand_tensor({r, c}, rng);
            auto x0 = rand_tensor({r, c}, rng);
            Rng prj(rng.next_u64());
            F f = [&](const Tensor64& x) { return project(opfn(x, b), prj); };
            double e1 = finite_diff_check<double>(f, x0, h);
            // broadcast arm: [r, c] against [c]
            auto brow = b_positive ? rand_positive({c}, rng) : rand_tensor({c}, rng);
            F g = [&](const Tensor64& x) { return project(opfn(x, brow), prj); };
            double e2 = finite_diff_check<double>(g, x0, h);
            // gradient through the broadcast side
            F g2 = [&](const Tensor64& x) { return project(opfn(x0, x), prj); };
            double e3 = b_positive ? 0.0 : finite_diff_check<double>(g2, brow, h);
            return std::max({e1, e2, e3});
        });
    };
    binary_case("add", [](const Tensor64& a, const Tensor64& b) { return add(a, b); }, false);
    binary_case("sub", [](const Tensor64& a, const Tensor64& b) { return sub(a, b); }, false);
    binary_case("mul", [](const Tensor64& a, const Tensor64& b) { return mul(a, b); }, false);
    binary_case("div", [](const Tensor64& a, const Tensor64& b) { return div(a, b); }, true);

    run("scale", [&](Rng& rng) {
        auto x0 = rand_tensor({rand_dim(rng), rand_dim(rng)}, rng);
        double c = rng.uniform(-3.0, 3.0);
        Rng prj(rng.next_u64());
        F f = [&](const Tensor64& x) { return project(scale(x, c), prj); };
        return finite_diff_check<double>(f, x0, h);
    });
    run("add-scalar", [&](Rng& rng) {
        auto x0 = rand_tensor({rand_dim(rng)}, rng);
        double c = rng.uniform(-3.0, 3.0);
        Rng prj(rng.next_u64());
        F f = [&](const Tensor64& x) { return project(add_scalar(x, c), prj); };
        return finite_diff_check<double>(f, x0, h);
    });

    auto unary_case = [&](const std::string& name, auto opfn,
                          const std::function<Tensor64(Rng&)>& make_input) {
        run(name, [&, opfn, make_input](Rng& rng) {
            auto x0 = make_input(rng);
            Rng prj(rng.next_u64());
            F f = [&](const Tensor64& x) { return project(opfn(x), prj); };
            return finite_diff_check<double>(f, x0, h);
        });
    };
    auto any2d = [&](Rng& rng) { return rand_tensor({rand_dim(rng), rand_dim(rng)}, rng); };
    auto pos2d = [&](Rng& rng) { return rand_positive({rand_dim(rng), rand_dim(rng)}, rng); };
    auto away2d = [&](Rng& rng) {
        return rand_tensor_away_from({rand_dim(rng), rand_dim(rng)}, rng, 0.05, 2.0);
    };
    unary_case("exp", [](const Tensor64& x) { return exp(x); }, any2d);
    unary_case("log", [](const Tensor64& x) { return log(x); }, pos2d);
    unary_case("tanh", [](const Tensor64& x) { return tanh(x); }, any2d);
    unary_case("relu", [](const Tensor64& x) { return relu(x); }, away2d);
    unary_case("sigmoid", [](const Tensor64& x) { return sigmoid(x); }, any2d);
    unary_case("sqrt", [](const Tensor64& x) { return sqrt(x); }, pos2d);
    unary_case("square", [](const Tensor64& x) { return square(x); }, any2d);
    unary_case("clamp", [](const Tensor64& x) { return clamp(x, -1.0, 1.0); },
               [&](Rng& rng) {
                   // keep samples off the clamp corners at +-1
                   int64_t n = rand_dim(rng) * rand_dim(rng);
                   std::vector<double> v(static_cast<size_t>(n));
                   for (auto& x : v) {
                       double u = rng.uniform(-0.9, 0.9);
                       x = u + (u > 0 ? 0.15 : -0.15) * 2;  // in (-1.95,-0.15) or (0.15,1.95) ish
                   }
                   return Tensor64::from_vec({n}, std::move(v));
               });
    unary_case("softmax", [](const Tensor64& x) { return softmax(x); }, any2d);

    run("reshape", [&](Rng& rng) {
        int64_t r = rand_dim(rng), c = rand_dim(rng);
        auto x0 = rand_tensor({r, c}, rng);
        Rng prj(rng.next_u64());
        F f = [&](const Tensor64& x) { return project(reshape(x, {c * r}), prj); };
        return finite_diff_check<double>(f, x0, h);
    });
    run("concat", [&](Rng& rng) {
        int64_t r = rand_dim(rng), c1 = rand_dim(rng), c2 = rand_dim(rng);
        auto other = rand_tensor({r, c2}, rng);
        auto x0 = rand_tensor({r, c1}, rng);
        Rng prj(rng.next_u64());
        F f = [&](const Tensor64& x) {
            return project(concat<double>({x, other}, 1), prj);
        };
        return finite_diff_check<double>(f, x0, h);
    });
    run("slice", [&](Rng& rng) {
        int64_t r = rand_dim(rng), c = 2 + rng.index(7);
        auto x0 = rand_tensor({r, c}, rng);
        int64_t start = rng.index(c - 1);
        int64_t len = 1 + rng.index(c - start);
        Rng prj(rng.next_u64());
        F f = [&](const Tensor64& x) { return project(slice(x, 1, start, len), prj); };
        return finite_diff_check<double>(f, x0, h);
    });
    run("reduce-sum", [&](Rng& rng) {
        auto x0 = rand_tensor({rand_dim(rng), rand_dim(rng)}, rng);
        F f = [&](const Tensor64& x) { return reduce_sum(x); };
        double e1 = finite_diff_check<double>(f, x0, h);
        Rng prj(rng.next_u64());
        F g = [&](const Tensor64& x) { return project(reduce_sum(x, {0}, false), prj); };
        return std::max(e1, finite_diff_check<double>(g, x0, h));
    });
    run("reduce-mean", [&](Rng& rng) {
        auto x0 = rand_tensor({rand_dim(rng), rand_dim(rng)}, rng);
        F f = [&](const Tensor64& x) { return reduce_mean(x); };
        double e1 = finite_diff_check<double>(f, x0, h);
        Rng prj(rng.next_u64());
        F g = [&](const Tensor64& x) { return project(reduce_mean(x, {1}, true), prj); };
        return std::max(e1, finite_diff_check<double>(g, x0, h));
    });

    run("conv2d", [&](Rng& rng) {
        int64_t n = 1 + rng.index(2), cin = 1 + rng.index(3), cout = 1 + rng.index(3);
        int64_t sside = 3 + rng.index(5);
        int64_t kk = 1 + rng.index(3);
        int stride = 1 + static_cast<int>(rng.index(2));
        Padding pad = rng.uniform() < 0.5 ? Padding::Same : Padding::Valid;
        if (pad == Padding::Valid && kk > sside) kk = sside;
        auto w = rand_tensor({cout, cin, kk, kk}, rng);
        auto b = rand_tensor({cout}, rng);
        auto x0 = rand_tensor({n, cin, sside, sside}, rng);
        Rng prj(rng.next_u64());
        F f = [&](const Tensor64& x) { return project(conv2d(x, w, b, stride, pad), prj); };
        double e1 = finite_diff_check<double>(f, x0, h);
        F fw = [&](const Tensor64& ww) { return project(conv2d(x0, ww, b, stride, pad), prj); };
        double e2 = finite_diff_check<double>(fw, w, h);
        F fb = [&](const Tensor64& bb) { return project(conv2d(x0, w, bb, stride, pad), prj); };
        double e3 = finite_diff_check<double>(fb, b, h);
        return std::max({e1, e2, e3});
    });
    run("conv2d-transpose", [&](Rng& rng) {
        int64_t n = 1 + rng.index(2), cin = 1 + rng.index(3), cout = 1 + rng.index(3);
        int64_t sside = 2 + rng.index(4);
        int64_t kk = 2 + rng.index(3);
        int stride = 1 + static_cast<int>(rng.index(2));
        int pad = static_cast<int>(rng.index(2));
        if ((sside - 1) * stride - 2 * pad + kk <= 0) pad = 0;
        auto w = rand_tensor({cin, cout, kk, kk}, rng);
        auto b = rand_tensor({cout}, rng);
        auto x0 = rand_tensor({n, cin, sside, sside}, rng);
        Rng prj(rng.next_u64());
        F f = [&](const Tensor64& x) {
            return project(conv2d_transpose(x, w, b, stride, pad), prj);
        };
        double e1 = finite_diff_check<double>(f, x0, h);
        F fw = [&](const Tensor64& ww) {
            return project(conv2d_transpose(x0, ww, b, stride, pad), prj);
        };
        double e2 = finite_diff_check<double>(fw, w, h);
        return std::max(e1, e2);
    });
    run("upsample-nearest", [&](Rng& rng) {
        int64_t n = 1 + rng.index(2), c = 1 + rng.index(3), sside = 1 + rng.index(4);
        int f2 = 1 + static_cast<int>(rng.index(3));
        auto x0 = rand_tensor({n, c, sside, sside}, rng);
        Rng prj(rng.next_u64());
        F f = [&](const Tensor64& x) { return project(upsample_nearest(x, f2), prj); };
        return finite_diff_check<double>(f, x0, h);
    });
    run("batch-stats", [&](Rng& rng) {
        int64_t n = 2 + rng.index(6), c = 1 + rng.index(4);
        auto x0 = rand_tensor({n, c}, rng);
        Rng prj(rng.next_u64());
        F f = [&](const Tensor64& x) {
            auto [m, v] = batch_stats(x, {0});
            return add(project(m, prj), project(v, prj));
        };
        return finite_diff_check<double>(f, x0, h);
    });

    return results;
}

}  // namespace fmgan::testing
