#pragma once

#include <cmath>
#include <functional>

#include "fmgan/tensor.hpp"

namespace fmgan {

// Central-difference gradient check. Runs f twice per coordinate of x and
// compares against the tape gradient; returns the max over coordinates of
//   |analytic - numeric| / max(1, |analytic|).
// f must be deterministic. Non-finite values raise with the coordinate.
template <typename T>
T finite_diff_check(const std::function<TensorT<T>(const TensorT<T>&)>& f, const TensorT<T>& x0,
                    T h) {
    FMGAN_CHECK(h > T(0), "finite_diff_check: step size must be positive");
    auto x = TensorT<T>::param(x0.shape(), std::vector<T>(x0.data(), x0.data() + x0.numel()));

    std::vector<T> analytic;
    {
        TapeT<T> tape;
        typename TapeT<T>::Scope scope(tape);
        auto loss = f(x);
        FMGAN_CHECK(loss.numel() == 1, "finite_diff_check: f must return a scalar");
        FMGAN_CHECK(std::isfinite(static_cast<double>(loss.item())),
                    "finite_diff_check: non-finite loss at base point");
        tape.backward(loss);
        auto g = x.grad();
        analytic.assign(g.begin(), g.end());
    }

    T worst = T(0);
    T* px = x.data();
    for (int64_t i = 0; i < x.numel(); ++i) {
        T keep = px[i];
        px[i] = keep + h;
        T fp = f(x).item();
        px[i] = keep - h;
        T fm = f(x).item();
        px[i] = keep;
        FMGAN_CHECK(std::isfinite(static_cast<double>(fp)) &&
                        std::isfinite(static_cast<double>(fm)),
                    "finite_diff_check: non-finite value at coordinate " << i);
        T numeric = (fp - fm) / (T(2) * h);
        T a = analytic[static_cast<size_t>(i)];
        FMGAN_CHECK(std::isfinite(static_cast<double>(a)),
                    "finite_diff_check: non-finite gradient at coordinate " << i);
        T err = std::abs(a - numeric) / std::max(T(1), std::abs(a));
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace fmgan
