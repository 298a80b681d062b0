#include "fmgan/kernels.hpp"

#include <algorithm>
#include <cstring>

#include "fmgan/common.hpp"

namespace fmgan::kernels {

namespace {
constexpr int64_t kMatmulGrain = 8192;  // flop threshold below which we stay serial
}

template <typename T>
void matmul_nn(int64_t m, int64_t n, int64_t k, const T* a, const T* b, T* c, bool acc) {
    int64_t grain = std::max<int64_t>(1, kMatmulGrain / std::max<int64_t>(1, n * k));
    parallel_for(m, grain, [=](int64_t i0, int64_t i1) {
        for (int64_t i = i0; i < i1; ++i) {
            T* crow = c + i * n;
            if (!acc) std::fill(crow, crow + n, T(0));
            const T* arow = a + i * k;
            for (int64_t p = 0; p < k; ++p) {
                T av = arow[p];
                if (av == T(0)) continue;
                const T* brow = b + p * n;
                for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    });
}

template <typename T>
void matmul_tn(int64_t m, int64_t n, int64_t k, const T* a, const T* b, T* c, bool acc) {
    // a is [k, m]; row i of the result reads column i of a.
    int64_t grain = std::max<int64_t>(1, kMatmulGrain / std::max<int64_t>(1, n * k));
    parallel_for(m, grain, [=](int64_t i0, int64_t i1) {
        for (int64_t i = i0; i < i1; ++i) {
            T* crow = c + i * n;
            if (!acc) std::fill(crow, crow + n, T(0));
            for (int64_t p = 0; p < k; ++p) {
                T av = a[p * m + i];
                if (av == T(0)) continue;
                const T* brow = b + p * n;
                for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    });
}

template <typename T>
void matmul_nt(int64_t m, int64_t n, int64_t k, const T* a, const T* b, T* c, bool acc) {
    int64_t grain = std::max<int64_t>(1, kMatmulGrain / std::max<int64_t>(1, n * k));
    parallel_for(m, grain, [=](int64_t i0, int64_t i1) {
        for (int64_t i = i0; i < i1; ++i) {
            const T* arow = a + i * k;
            T* crow = c + i * n;
            for (int64_t j = 0; j < n; ++j) {
                const T* brow = b + j * k;
                T s = acc ? crow[j] : T(0);
                for (int64_t p = 0; p < k; ++p) s += arow[p] * brow[p];
                crow[j] = s;
            }
        }
    });
}

template <typename T>
void im2col(const T* src, int64_t c, int64_t h, int64_t w, int64_t kh, int64_t kw, int64_t stride,
            int64_t pad_h, int64_t pad_w, int64_t out_h, int64_t out_w, T* col) {
    const int64_t plane = out_h * out_w;
    for (int64_t ch = 0; ch < c; ++ch) {
        const T* splane = src + ch * h * w;
        for (int64_t r = 0; r < kh; ++r) {
            for (int64_t s = 0; s < kw; ++s) {
                T* crow = col + ((ch * kh + r) * kw + s) * plane;
                for (int64_t oy = 0; oy < out_h; ++oy) {
                    int64_t iy = oy * stride - pad_h + r;
                    T* cptr = crow + oy * out_w;
                    if (iy < 0 || iy >= h) {
                        std::fill(cptr, cptr + out_w, T(0));
                        continue;
                    }
                    const T* srow = splane + iy * w;
                    for (int64_t ox = 0; ox < out_w; ++ox) {
                        int64_t ix = ox * stride - pad_w + s;
                        cptr[ox] = (ix >= 0 && ix < w) ? srow[ix] : T(0);
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im(const T* col, int64_t c, int64_t kh, int64_t kw, int64_t stride, int64_t pad_h,
            int64_t pad_w, int64_t src_h, int64_t src_w, int64_t dst_h, int64_t dst_w, T* dst) {
    const int64_t plane = src_h * src_w;
    for (int64_t ch = 0; ch < c; ++ch) {
        T* dplane = dst + ch * dst_h * dst_w;
        for (int64_t r = 0; r < kh; ++r) {
            for (int64_t s = 0; s < kw; ++s) {
                const T* crow = col + ((ch * kh + r) * kw + s) * plane;
                for (int64_t sy = 0; sy < src_h; ++sy) {
                    int64_t dy = sy * stride - pad_h + r;
                    if (dy < 0 || dy >= dst_h) continue;
                    const T* cptr = crow + sy * src_w;
                    T* drow = dplane + dy * dst_w;
                    for (int64_t sx = 0; sx < src_w; ++sx) {
                        int64_t dx = sx * stride - pad_w + s;
                        if (dx >= 0 && dx < dst_w) drow[dx] += cptr[sx];
                    }
                }
            }
        }
    }
}

#define FMGAN_INSTANTIATE_KERNELS(T)                                                              \
    template void matmul_nn<T>(int64_t, int64_t, int64_t, const T*, const T*, T*, bool);          \
    template void matmul_tn<T>(int64_t, int64_t, int64_t, const T*, const T*, T*, bool);          \
    template void matmul_nt<T>(int64_t, int64_t, int64_t, const T*, const T*, T*, bool);          \
    template void im2col<T>(const T*, int64_t, int64_t, int64_t, int64_t, int64_t, int64_t,       \
                            int64_t, int64_t, int64_t, int64_t, T*);                              \
    template void col2im<T>(const T*, int64_t, int64_t, int64_t, int64_t, int64_t, int64_t,       \
                            int64_t, int64_t, int64_t, int64_t, T*);

FMGAN_INSTANTIATE_KERNELS(float)
FMGAN_INSTANTIATE_KERNELS(double)

}  // namespace fmgan::kernels
