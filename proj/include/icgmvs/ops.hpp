#pragma once

#include <array>
#include <cstddef>
#include <utility>
#include <vector>

#include "icgmvs/tensor.hpp"

namespace icgmvs {

// ---- elementwise ----------------------------------------------------------
// Binary ops broadcast numpy-style: axes align from the trailing end and an
// extent of 1 broadcasts.

Shape broadcast_shape(const Shape& a, const Shape& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double s);
Tensor add_scalar(const Tensor& x, double s);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor square(const Tensor& x);

// ---- reductions and layout ------------------------------------------------
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum_axis(const Tensor& x, std::size_t axis, bool keepdim = false);
Tensor mean_axis(const Tensor& x, std::size_t axis, bool keepdim = false);
Tensor reshape(const Tensor& x, Shape shape);
Tensor broadcast_to(const Tensor& x, const Shape& shape);
Tensor concat(const std::vector<Tensor>& xs, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
// Zero padding; pads[i] = (before, after) for axis i. Missing axes are unpadded.
Tensor pad(const Tensor& x, const std::vector<std::pair<std::size_t, std::size_t>>& pads);

// Numerically stable softmax along one axis (max subtraction).
Tensor softmax_axis(const Tensor& x, std::size_t axis);

// ---- convolution ----------------------------------------------------------
// Weights are (out_ch, in_ch, k...) for convolution and (in_ch, out_ch, k...)
// for transposed convolution. Bias may be undefined.
struct ConvParams {
  Tensor weight;
  Tensor bias;
  std::array<std::size_t, 3> stride{1, 1, 1};
  std::array<std::size_t, 3> padding{0, 0, 0};
  std::array<std::size_t, 3> output_padding{0, 0, 0};
};

// x: (C_in, H, W); weight (C_out, C_in, kh, kw). Uses stride/padding[0..1].
Tensor conv2d(const Tensor& x, const ConvParams& p);
// x: (C_in, D, H, W); weight (C_out, C_in, kd, kh, kw).
Tensor conv3d(const Tensor& x, const ConvParams& p);
// x: (C_in, D, H, W); weight (C_in, C_out, kd, kh, kw).
// Output extent = (in - 1) * stride - 2 * pad + k + output_pad.
Tensor conv_transpose3d(const Tensor& x, const ConvParams& p);

// ---- sampling -------------------------------------------------------------
// src: (C, H, W); coords: (2, ...) holding (x, y) in pixel units, integer
// values at pixel centers. Output: (C, ...). A sample is valid when
// 0 <= x <= W-1 and 0 <= y <= H-1; invalid samples are exactly 0.
// Gradients flow to src only.
Tensor grid_sample_bilinear(const Tensor& src, const Tensor& coords,
                            std::vector<unsigned char>* valid_mask = nullptr);

// (C, H, W) -> (C, 2H, 2W), align-corners bilinear.
Tensor upsample_bilinear2x(const Tensor& x);

// ---- normalization --------------------------------------------------------
struct BatchNormState {
  Tensor running_mean;  // (C)
  Tensor running_var;   // (C)
  double eps = 1e-5;
  double momentum = 0.9;  // weight kept on the old running value
};

// Statistics over every axis except axis 0 (channels). Updates running stats.
Tensor batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                        BatchNormState& state);
Tensor batch_norm_infer(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                        const BatchNormState& state);

// ---- loss -----------------------------------------------------------------
// prob: (D, H, W). Mean over pixels with mask != 0 of -log(max(prob[target], 1e-12)).
// Returns scalar 0 (with no tape) when the mask is empty.
Tensor nll_loss(const Tensor& prob, const std::vector<int>& target,
                const std::vector<unsigned char>& mask);

}  // namespace icgmvs
