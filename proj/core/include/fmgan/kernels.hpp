#pragma once

#include <cstdint>

namespace fmgan::kernels {

// C[M,N] = A[M,K] * B[K,N]; accumulates into C when acc is true.
template <typename T>
void matmul_nn(int64_t m, int64_t n, int64_t k, const T* a, const T* b, T* c, bool acc);
// C[M,N] = A[K,M]^T * B[K,N]
template <typename T>
void matmul_tn(int64_t m, int64_t n, int64_t k, const T* a, const T* b, T* c, bool acc);
// C[M,N] = A[M,K] * B[N,K]^T
template <typename T>
void matmul_nt(int64_t m, int64_t n, int64_t k, const T* a, const T* b, T* c, bool acc);

// src: [C, H, W] -> col: [C*kh*kw, outH*outW], zero-padded reads.
template <typename T>
void im2col(const T* src, int64_t c, int64_t h, int64_t w, int64_t kh, int64_t kw, int64_t stride,
            int64_t pad_h, int64_t pad_w, int64_t out_h, int64_t out_w, T* col);

// col: [C*kh*kw, srcH*srcW] scattered (accumulating) into dst [C, dstH, dstW]
// at dst_y = src_y*stride - pad + kernel offset. dst must be pre-zeroed by
// the caller when accumulation starts from nothing.
template <typename T>
void col2im(const T* col, int64_t c, int64_t kh, int64_t kw, int64_t stride, int64_t pad_h,
            int64_t pad_w, int64_t src_h, int64_t src_w, int64_t dst_h, int64_t dst_w, T* dst);

}  // namespace fmgan::kernels
