#pragma once

#include "groundcheck/geometry.hpp"
#include "groundcheck/tensor.hpp"

namespace groundcheck {

// Bilinear resize with half-pixel sampling. Accepts rank-2 (h, w) or
// rank-3 (h, w, c) tensors; constants are preserved exactly.
Tensor resize_bilinear(const Tensor& in, int dst_h, int dst_w);

// Exact adjoint of resize_bilinear for a source of (src_h, src_w).
Tensor resize_bilinear_adjoint(const Tensor& grad_out, int src_h, int src_w);

// Softmax over all pixels of a rank-2 logit map.
SegMap softmax_global(const Tensor& logits);

}  // namespace groundcheck
