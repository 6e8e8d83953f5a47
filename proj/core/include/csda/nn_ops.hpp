#ifndef CSDA_NN_OPS_HPP
#define CSDA_NN_OPS_HPP

#include "csda/tensor.hpp"

namespace csda {

// Spatial ops on NHWC batches (rank 4).
//
// conv2d: stride 1, zero "same" padding, odd square kernel.
//   x: {N,H,W,Cin}, w: {kh,kw,Cin,Cout}, b: {Cout} -> {N,H,W,Cout}
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b);

// 2x upsampling transposed convolution (kernel 2, stride 2).
//   x: {N,H,W,Cin}, w: {2,2,Cin,Cout}, b: {Cout} -> {N,2H,2W,Cout}
Tensor conv_transpose2d_x2(const Tensor& x, const Tensor& w, const Tensor& b);

// 2x2 max pooling, stride 2; H and W must be even. Ties route the
// gradient to the first maximal element in scan order.
Tensor maxpool2x2(const Tensor& x);

}  // namespace csda

#endif  // CSDA_NN_OPS_HPP
