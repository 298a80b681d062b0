#pragma once

#include <vector>

#include "fmgan/models.hpp"

namespace fmgan {

// Attribute morphing: encodes x1 and x2 (deterministic z = mu), then decodes
// G(a*z1 + (1-a)*z2, c) for `steps` evenly spaced a in [0, 1] ascending.
// Frame 0 is the pure-z2 endpoint, the last frame the pure-z1 endpoint.
std::vector<Tensor> morph_frames(Encoder& enc, Generator& gen, const Tensor& x1, int cls1,
                                 const Tensor& x2, int cls2, int steps);

// Iterative inpainting: per iteration z = E(x, c), x' = G(z, c),
// x <- M*x' + (1-M)*x. Emits the image after every iteration. The mask is
// [1, H, W] with values exactly 0 or 1; pixels outside the mask are copied
// bit for bit.
std::vector<Tensor> inpaint_frames(Encoder& enc, Generator& gen, const Tensor& corrupted,
                                   const Tensor& mask, int cls, int iterations);

// Class-conditional prior sampling (eval mode): count items of class cls.
Tensor generate_class_batch(Generator& gen, int cls, int64_t count, Rng& rng);

}  // namespace fmgan
