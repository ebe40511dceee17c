#include "groundcheck/interp.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace groundcheck {

namespace {

// Sampling weights shared by the forward resize and its adjoint; the
// adjoint must mirror the forward exactly.
struct ResizePlan {
  std::vector<int> y0, y1, x0, x1;
  std::vector<double> fy, fx;

  ResizePlan(int sh, int sw, int dh, int dw) {
    y0.resize(dh);
    y1.resize(dh);
    fy.resize(dh);
    x0.resize(dw);
    x1.resize(dw);
    fx.resize(dw);
    const double sy = static_cast<double>(sh) / dh;
    const double sx = static_cast<double>(sw) / dw;
    for (int y = 0; y < dh; ++y) {
      double s = (y + 0.5) * sy - 0.5;
      s = std::clamp(s, 0.0, static_cast<double>(sh - 1));
      y0[y] = static_cast<int>(s);
      y1[y] = std::min(y0[y] + 1, sh - 1);
      fy[y] = s - y0[y];
    }
    for (int x = 0; x < dw; ++x) {
      double s = (x + 0.5) * sx - 0.5;
      s = std::clamp(s, 0.0, static_cast<double>(sw - 1));
      x0[x] = static_cast<int>(s);
      x1[x] = std::min(x0[x] + 1, sw - 1);
      fx[x] = s - x0[x];
    }
  }
};

}  // namespace

Tensor resize_bilinear(const Tensor& in, int dst_h, int dst_w) {
  if (in.rank() != 2 && in.rank() != 3)
    throw GeometryError("resize_bilinear: rank must be 2 or 3");
  const int sh = static_cast<int>(in.dim(0));
  const int sw = static_cast<int>(in.dim(1));
  const int c = in.rank() == 3 ? static_cast<int>(in.dim(2)) : 1;
  const ResizePlan plan(sh, sw, dst_h, dst_w);
  Tensor out(in.rank() == 3
                 ? std::vector<std::size_t>{static_cast<std::size_t>(dst_h),
                                            static_cast<std::size_t>(dst_w),
                                            static_cast<std::size_t>(c)}
                 : std::vector<std::size_t>{static_cast<std::size_t>(dst_h),
                                            static_cast<std::size_t>(dst_w)});
  const double* src = in.data();
  double* dst = out.data();
  for (int y = 0; y < dst_h; ++y) {
    for (int x = 0; x < dst_w; ++x) {
      const double w00 = (1 - plan.fy[y]) * (1 - plan.fx[x]);
      const double w01 = (1 - plan.fy[y]) * plan.fx[x];
      const double w10 = plan.fy[y] * (1 - plan.fx[x]);
      const double w11 = plan.fy[y] * plan.fx[x];
      const std::size_t o = (static_cast<std::size_t>(y) * dst_w + x) * c;
      const std::size_t i00 = (static_cast<std::size_t>(plan.y0[y]) * sw + plan.x0[x]) * c;
      const std::size_t i01 = (static_cast<std::size_t>(plan.y0[y]) * sw + plan.x1[x]) * c;
      const std::size_t i10 = (static_cast<std::size_t>(plan.y1[y]) * sw + plan.x0[x]) * c;
      const std::size_t i11 = (static_cast<std::size_t>(plan.y1[y]) * sw + plan.x1[x]) * c;
      for (int ch = 0; ch < c; ++ch)
        dst[o + ch] = w00 * src[i00 + ch] + w01 * src[i01 + ch] +
                      w10 * src[i10 + ch] + w11 * src[i11 + ch];
    }
  }
  return out;
}

Tensor resize_bilinear_adjoint(const Tensor& grad_out, int src_h, int src_w) {
  if (grad_out.rank() != 2 && grad_out.rank() != 3)
    throw GeometryError("resize_bilinear_adjoint: rank must be 2 or 3");
  const int dh = static_cast<int>(grad_out.dim(0));
  const int dw = static_cast<int>(grad_out.dim(1));
  const int c = grad_out.rank() == 3 ? static_cast<int>(grad_out.dim(2)) : 1;
  const ResizePlan plan(src_h, src_w, dh, dw);
  Tensor grad_in(grad_out.rank() == 3
                     ? std::vector<std::size_t>{static_cast<std::size_t>(src_h),
                                                static_cast<std::size_t>(src_w),
                                                static_cast<std::size_t>(c)}
                     : std::vector<std::size_t>{static_cast<std::size_t>(src_h),
                                                static_cast<std::size_t>(src_w)});
  const double* g = grad_out.data();
  double* gi = grad_in.data();
  for (int y = 0; y < dh; ++y) {
    for (int x = 0; x < dw; ++x) {
      const double w00 = (1 - plan.fy[y]) * (1 - plan.fx[x]);
      const double w01 = (1 - plan.fy[y]) * plan.fx[x];
      const double w10 = plan.fy[y] * (1 - plan.fx[x]);
      const double w11 = plan.fy[y] * plan.fx[x];
      const std::size_t o = (static_cast<std::size_t>(y) * dw + x) * c;
      const std::size_t i00 = (static_cast<std::size_t>(plan.y0[y]) * src_w + plan.x0[x]) * c;
      const std::size_t i01 = (static_cast<std::size_t>(plan.y0[y]) * src_w + plan.x1[x]) * c;
      const std::size_t i10 = (static_cast<std::size_t>(plan.y1[y]) * src_w + plan.x0[x]) * c;
      const std::size_t i11 = (static_cast<std::size_t>(plan.y1[y]) * src_w + plan.x1[x]) * c;
      for (int ch = 0; ch < c; ++ch) {
        gi[i00 + ch] += w00 * g[o + ch];
        gi[i01 + ch] += w01 * g[o + ch];
        gi[i10 + ch] += w10 * g[o + ch];
        gi[i11 + ch] += w11 * g[o + ch];
      }
    }
  }
  return grad_in;
}

SegMap softmax_global(const Tensor& logits) {
  if (logits.rank() != 2) throw GeometryError("softmax_global: rank-2 input required");
  const int h = static_cast<int>(logits.dim(0));
  const int w = static_cast<int>(logits.dim(1));
  SegMap out(ImageDims{h, w});
  double max_v = logits[0];
  for (std::size_t i = 1; i < logits.size(); ++i) max_v = std::max(max_v, logits[i]);
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out.values[i] = std::exp(logits[i] - max_v);
    total += out.values[i];
  }
  for (double& v : out.values) v /= total;
  return out;
}

}  // namespace groundcheck
