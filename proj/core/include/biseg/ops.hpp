#pragma once

#include "biseg/tensor.hpp"

namespace biseg {

struct ConvSpec {
  int stride = 1;
  int pad = 0;
};

// Output spatial size for one axis, or throws ShapeError when non-positive.
int conv_output_size(int input, int kernel, const ConvSpec& spec, const char* axis);

// Cross-correlation of input [Cin,H,W] with weight [Cout,Cin,kh,kw] plus bias [Cout].
// Accumulates in double regardless of T.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, const ConvSpec& spec);

template <typename T>
struct Conv2dGrads {
  BasicTensor<T> input;  // empty-shaped scalar when not requested
  BasicTensor<T> weight;
  BasicTensor<T> bias;
};

template <typename T>
Conv2dGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                               const BasicTensor<T>& grad_output, const ConvSpec& spec,
                               bool want_input_grad = true);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input);

// Gradient passes where input > 0; zero at input == 0.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_output);

// Softmax across axis 0 of a [C,H,W] tensor, independently per pixel.
template <typename T>
BasicTensor<T> softmax_channels(const BasicTensor<T>& input);

// Takes the forward *output* and the upstream gradient.
template <typename T>
BasicTensor<T> softmax_channels_backward(const BasicTensor<T>& output,
                                         const BasicTensor<T>& grad_output);

// Bilinear x2 upsampling with align-corners sampling: output index i reads
// input coordinate i * (n - 1) / (2n - 1) on each axis.
template <typename T>
BasicTensor<T> upsample_x2(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> upsample_x2_backward(const BasicTensor<T>& grad_output, const Shape& input_shape);

// Softmax over a flat vector, stabilized by max subtraction.
template <typename T>
std::vector<T> softmax_vector(std::span<const T> logits);

template <typename T>
std::vector<T> softmax_vector_backward(std::span<const T> output, std::span<const T> grad_output);

}  // namespace biseg
