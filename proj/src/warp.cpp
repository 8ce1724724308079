#include "condvc/warp.hpp"

#include <torch/torch.h>

#include "condvc/errors.hpp"

namespace condvc {

torch::Tensor warp(const torch::Tensor& ref, const torch::Tensor& flow) {
  if (ref.dim() != 4 || flow.dim() != 4 || flow.size(1) != 2 || ref.size(0) != flow.size(0) ||
      ref.size(2) != flow.size(2) || ref.size(3) != flow.size(3)) {
    fail(ErrorCategory::kShape, "warp: reference " + c10::str(ref.sizes()) +
                                    " and flow " + c10::str(flow.sizes()) + " do not match");
  }
  // NaN would become an out-of-range gather index below.
  if (!torch::isfinite(flow).all().item<bool>()) fail(ErrorCategory::kNumeric, "warp: flow has non-finite values");
  const auto n = ref.size(0);
  const auto c = ref.size(1);
  const auto h = ref.size(2);
  const auto w = ref.size(3);
  const auto opts = flow.options().requires_grad(false);

  auto base_x = torch::arange(w, opts).view({1, 1, w}).expand({n, h, w});
  auto base_y = torch::arange(h, opts).view({1, h, 1}).expand({n, h, w});
  auto sx = torch::clamp(base_x + flow.select(1, 0), 0, w - 1);
  auto sy = torch::clamp(base_y + flow.select(1, 1), 0, h - 1);

  torch::Tensor x0, y0, x1, y1;
  {
    torch::NoGradGuard no_grad;
    x0 = torch::floor(sx);
    y0 = torch::floor(sy);
    x1 = torch::clamp_max(x0 + 1, w - 1);
    y1 = torch::clamp_max(y0 + 1, h - 1);
  }
  auto wx = (sx - x0).unsqueeze(1);
  auto wy = (sy - y0).unsqueeze(1);

  auto flat = ref.reshape({n, c, h * w});
  auto gather = [&](const torch::Tensor& yy, const torch::Tensor& xx) {
    auto idx = (yy * w + xx).to(torch::kLong).reshape({n, 1, h * w}).expand({n, c, h * w});
    return flat.gather(2, idx).reshape({n, c, h, w});
  };
  auto top_left = gather(y0, x0);
  auto top_right = gather(y0, x1);
  auto bottom_left = gather(y1, x0);
  auto bottom_right = gather(y1, x1);

  // Lerp form: a zero weight returns the first operand unchanged.
  auto top = top_left + wx * (top_right - top_left);
  auto bottom = bottom_left + wx * (bottom_right - bottom_left);
  return top + wy * (bottom - top);
}

torch::Tensor pad_to_multiple(const torch::Tensor& x, int64_t multiple) {
  const auto h = x.size(-2);
  const auto w = x.size(-1);
  const auto pad_h = (multiple - h % multiple) % multiple;
  const auto pad_w = (multiple - w % multiple) % multiple;
  if (pad_h == 0 && pad_w == 0) return x;
  namespace F = torch::nn::functional;
  return F::pad(x, F::PadFuncOptions({0, pad_w, 0, pad_h}).mode(torch::kReplicate));
}

torch::Tensor crop_to(const torch::Tensor& x, int64_t height, int64_t width) {
  if (x.size(-2) == height && x.size(-1) == width) return x;
  using torch::indexing::Slice;
  return x.index({"...", Slice(0, height), Slice(0, width)});
}

}  // namespace condvc
