#include "biseg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "biseg/ops.hpp"

namespace biseg {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] <= 0) {
      throw ShapeError("dimension " + std::to_string(i) + " of shape " + shape_string(shape) +
                       " is not positive");
    }
    n *= static_cast<std::size_t>(shape[i]);
  }
  return n;
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : shape_(std::move(shape)) {
  data_.assign(shape_numel(shape_), fill);
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_numel(shape_)) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_string(shape_));
  }
}

template <typename T>
void BasicTensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

void require_same_shape(const Shape& a, const Shape& b, const std::string& what) {
  if (a == b) return;
  std::ostringstream os;
  os << what << ": shape " << shape_string(a) << " vs " << shape_string(b);
  if (a.size() != b.size()) {
    os << " (rank " << a.size() << " vs " << b.size() << ")";
  } else {
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i] != b[i]) {
        os << " (dimension " << i << ": " << a[i] << " vs " << b[i] << ")";
        break;
      }
    }
  }
  throw ShapeError(os.str());
}

void require_ndim(const Shape& shape, std::size_t ndim, const std::string& what) {
  if (shape.size() != ndim) {
    throw ShapeError(what + ": expected rank " + std::to_string(ndim) + ", got shape " +
                     shape_string(shape));
  }
}

template <typename T>
bool all_finite(const BasicTensor<T>& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  BasicTensor<T> out = a;
  add_inplace(out, b);
  return out;
}

template <typename T>
void add_inplace(BasicTensor<T>& dst, const BasicTensor<T>& src) {
  require_same_shape(dst.shape(), src.shape(), "add");
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

template <typename T>
BasicTensor<T> multiply(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "multiply");
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

// ---------------------------------------------------------------------------
// conv2d

int conv_output_size(int input, int kernel, const ConvSpec& spec, const char* axis) {
  if (spec.stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  if (spec.pad < 0) throw ShapeError("conv2d: pad must be >= 0");
  const int span = input + 2 * spec.pad - kernel;
  if (span < 0) {
    throw ShapeError(std::string("conv2d: kernel ") + axis + " " + std::to_string(kernel) +
                     " exceeds padded input " + axis + " " + std::to_string(input + 2 * spec.pad));
  }
  return span / spec.stride + 1;
}

namespace {

int floor_div(int a, int b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

// Range [lo, hi) of output columns whose input column ox*s - pad + k lies in [0, n).
std::pair<int, int> valid_outputs(int n, int out, int k, int s, int pad) {
  const int lo = std::max(0, -floor_div(k - pad, s));
  const int hi = std::min(out, floor_div(n - 1 + pad - k, s) + 1);
  return {lo, std::max(lo, hi)};
}

struct ConvGeometry {
  int cin, h, w, cout, kh, kw, oh, ow;
};

template <typename T>
ConvGeometry conv_geometry(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                           const ConvSpec& spec) {
  require_ndim(input.shape(), 3, "conv2d input");
  require_ndim(weight.shape(), 4, "conv2d weight");
  ConvGeometry g{};
  g.cin = input.dim(0);
  g.h = input.dim(1);
  g.w = input.dim(2);
  g.cout = weight.dim(0);
  g.kh = weight.dim(2);
  g.kw = weight.dim(3);
  if (weight.dim(1) != g.cin) {
    throw ShapeError("conv2d: weight dimension 1 (input channels) is " +
                     std::to_string(weight.dim(1)) + " but input has " + std::to_string(g.cin) +
                     " channels");
  }
  g.oh = conv_output_size(g.h, g.kh, spec, "height");
  g.ow = conv_output_size(g.w, g.kw, spec, "width");
  return g;
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, const ConvSpec& spec) {
  const ConvGeometry g = conv_geometry(input, weight, spec);
  require_ndim(bias.shape(), 1, "conv2d bias");
  if (bias.dim(0) != g.cout) {
    throw ShapeError("conv2d: bias dimension 0 is " + std::to_string(bias.dim(0)) +
                     " but weight has " + std::to_string(g.cout) + " output channels");
  }
  const int s = spec.stride;
  const int pad = spec.pad;
  BasicTensor<T> out({g.cout, g.oh, g.ow});
  std::vector<double> acc(static_cast<std::size_t>(g.oh) * g.ow);
  for (int co = 0; co < g.cout; ++co) {
    std::fill(acc.begin(), acc.end(), static_cast<double>(bias[co]));
    for (int ci = 0; ci < g.cin; ++ci) {
      const T* in = input.plane(ci);
      for (int ky = 0; ky < g.kh; ++ky) {
        for (int kx = 0; kx < g.kw; ++kx) {
          const double wv = weight[((static_cast<std::size_t>(co) * g.cin + ci) * g.kh + ky) * g.kw + kx];
          for (int oy = 0; oy < g.oh; ++oy) {
            const int iy = oy * s - pad + ky;
            if (iy < 0 || iy >= g.h) continue;
            const T* row = in + static_cast<std::size_t>(iy) * g.w;
            double* arow = acc.data() + static_cast<std::size_t>(oy) * g.ow;
            const auto [ox_lo, ox_hi] = valid_outputs(g.w, g.ow, kx, s, pad);
            for (int ox = ox_lo; ox < ox_hi; ++ox) {
              arow[ox] += wv * static_cast<double>(row[ox * s - pad + kx]);
            }
          }
        }
      }
    }
    T* o = out.plane(co);
    for (std::size_t i = 0; i < acc.size(); ++i) o[i] = static_cast<T>(acc[i]);
  }
  return out;
}

template <typename T>
Conv2dGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                               const BasicTensor<T>& grad_output, const ConvSpec& spec,
                               bool want_input_grad) {
  const ConvGeometry g = conv_geometry(input, weight, spec);
  require_same_shape(grad_output.shape(), Shape{g.cout, g.oh, g.ow}, "conv2d_backward grad_output");
  const int s = spec.stride;
  const int pad = spec.pad;

  std::vector<double> gin;
  if (want_input_grad) gin.assign(input.size(), 0.0);
  std::vector<double> gw(weight.size(), 0.0);
  std::vector<double> gb(static_cast<std::size_t>(g.cout), 0.0);

  for (int co = 0; co < g.cout; ++co) {
    const T* go = grad_output.plane(co);
    double bsum = 0.0;
    for (int i = 0; i < g.oh * g.ow; ++i) bsum += static_cast<double>(go[i]);
    gb[co] = bsum;
    for (int ci = 0; ci < g.cin; ++ci) {
      const T* in = input.plane(ci);
      double* gi = want_input_grad ? gin.data() + static_cast<std::size_t>(ci) * g.h * g.w : nullptr;
      for (int ky = 0; ky < g.kh; ++ky) {
        for (int kx = 0; kx < g.kw; ++kx) {
          const std::size_t widx = ((static_cast<std::size_t>(co) * g.cin + ci) * g.kh + ky) * g.kw + kx;
          const double wv = weight[widx];
          const auto [ox_lo, ox_hi] = valid_outputs(g.w, g.ow, kx, s, pad);
          double wsum = 0.0;
          for (int oy = 0; oy < g.oh; ++oy) {
            const int iy = oy * s - pad + ky;
            if (iy < 0 || iy >= g.h) continue;
            const T* row = in + static_cast<std::size_t>(iy) * g.w;
            const T* grow = go + static_cast<std::size_t>(oy) * g.ow;
            for (int ox = ox_lo; ox < ox_hi; ++ox) {
              const int ix = ox * s - pad + kx;
              const double gv = grow[ox];
              wsum += gv * static_cast<double>(row[ix]);
              if (gi) gi[static_cast<std::size_t>(iy) * g.w + ix] += gv * wv;
            }
          }
          gw[widx] += wsum;
        }
      }
    }
  }

  Conv2dGrads<T> grads;
  if (want_input_grad) grads.input = BasicTensor<T>(input.shape(), std::vector<T>(gin.begin(), gin.end()));
  grads.weight = BasicTensor<T>(weight.shape(), std::vector<T>(gw.begin(), gw.end()));
  grads.bias = BasicTensor<T>(Shape{g.cout}, std::vector<T>(gb.begin(), gb.end()));
  return grads;
}

// ---------------------------------------------------------------------------
// relu

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
  BasicTensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > T{0} ? input[i] : T{0};
  return out;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& grad_output) {
  require_same_shape(input.shape(), grad_output.shape(), "relu_backward");
  BasicTensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > T{0} ? grad_output[i] : T{0};
  return out;
}

// ---------------------------------------------------------------------------
// softmax

template <typename T>
BasicTensor<T> softmax_channels(const BasicTensor<T>& input) {
  require_ndim(input.shape(), 3, "softmax_channels");
  const int c = input.dim(0);
  const std::size_t hw = static_cast<std::size_t>(input.dim(1)) * input.dim(2);
  BasicTensor<T> out(input.shape());
  std::vector<double> e(static_cast<std::size_t>(c));
  for (std::size_t p = 0; p < hw; ++p) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < c; ++k) mx = std::max(mx, static_cast<double>(input[k * hw + p]));
    double sum = 0.0;
    for (int k = 0; k < c; ++k) {
      e[k] = std::exp(static_cast<double>(input[k * hw + p]) - mx);
      sum += e[k];
    }
    for (int k = 0; k < c; ++k) out[k * hw + p] = static_cast<T>(e[k] / sum);
  }
  return out;
}

template <typename T>
BasicTensor<T> softmax_channels_backward(const BasicTensor<T>& output,
                                         const BasicTensor<T>& grad_output) {
  require_same_shape(output.shape(), grad_output.shape(), "softmax_channels_backward");
  require_ndim(output.shape(), 3, "softmax_channels_backward");
  const int c = output.dim(0);
  const std::size_t hw = static_cast<std::size_t>(output.dim(1)) * output.dim(2);
  BasicTensor<T> out(output.shape());
  for (std::size_t p = 0; p < hw; ++p) {
    double dot = 0.0;
    for (int k = 0; k < c; ++k) {
      dot += static_cast<double>(output[k * hw + p]) * static_cast<double>(grad_output[k * hw + p]);
    }
    for (int k = 0; k < c; ++k) {
      const double y = output[k * hw + p];
      out[k * hw + p] = static_cast<T>(y * (static_cast<double>(grad_output[k * hw + p]) - dot));
    }
  }
  return out;
}

template <typename T>
std::vector<T> softmax_vector(std::span<const T> logits) {
  double mx = -std::numeric_limits<double>::infinity();
  for (T v : logits) mx = std::max(mx, static_cast<double>(v));
  std::vector<double> e(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    e[i] = std::exp(static_cast<double>(logits[i]) - mx);
    sum += e[i];
  }
  std::vector<T> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = static_cast<T>(e[i] / sum);
  return out;
}

template <typename T>
std::vector<T> softmax_vector_backward(std::span<const T> output, std::span<const T> grad_output) {
  double dot = 0.0;
  for (std::size_t i = 0; i < output.size(); ++i) {
    dot += static_cast<double>(output[i]) * static_cast<double>(grad_output[i]);
  }
  std::vector<T> out(output.size());
  for (std::size_t i = 0; i < output.size(); ++i) {
    out[i] = static_cast<T>(static_cast<double>(output[i]) * (static_cast<double>(grad_output[i]) - dot));
  }
  return out;
}

// ---------------------------------------------------------------------------
// upsample

namespace {

struct Tap {
  int lo;
  int hi;
  double frac;  // weight of hi
};

std::vector<Tap> align_corner_taps(int n) {
  const int m = 2 * n;
  std::vector<Tap> taps(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    const double coord = n == 1 ? 0.0 : static_cast<double>(i) * (n - 1) / (m - 1);
    int lo = static_cast<int>(std::floor(coord));
    lo = std::min(lo, n - 1);
    const int hi = std::min(lo + 1, n - 1);
    taps[i] = {lo, hi, coord - lo};
  }
  return taps;
}

}  // namespace

template <typename T>
BasicTensor<T> upsample_x2(const BasicTensor<T>& input) {
  require_ndim(input.shape(), 3, "upsample_x2");
  const int c = input.dim(0);
  const int h = input.dim(1);
  const int w = input.dim(2);
  const auto ty = align_corner_taps(h);
  const auto tx = align_corner_taps(w);
  BasicTensor<T> out({c, 2 * h, 2 * w});
  for (int ch = 0; ch < c; ++ch) {
    const T* in = input.plane(ch);
    T* o = out.plane(ch);
    for (int y = 0; y < 2 * h; ++y) {
      const Tap& a = ty[y];
      for (int x = 0; x < 2 * w; ++x) {
        const Tap& b = tx[x];
        const double v00 = in[a.lo * w + b.lo];
        const double v01 = in[a.lo * w + b.hi];
        const double v10 = in[a.hi * w + b.lo];
        const double v11 = in[a.hi * w + b.hi];
        const double top = v00 + (v01 - v00) * b.frac;
        const double bot = v10 + (v11 - v10) * b.frac;
        o[y * 2 * w + x] = static_cast<T>(top + (bot - top) * a.frac);
      }
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> upsample_x2_backward(const BasicTensor<T>& grad_output, const Shape& input_shape) {
  require_ndim(input_shape, 3, "upsample_x2_backward");
  const int c = input_shape[0];
  const int h = input_shape[1];
  const int w = input_shape[2];
  require_same_shape(grad_output.shape(), Shape{c, 2 * h, 2 * w}, "upsample_x2_backward");
  const auto ty = align_corner_taps(h);
  const auto tx = align_corner_taps(w);
  BasicTensor<T> out(input_shape);
  std::vector<double> acc(static_cast<std::size_t>(h) * w);
  for (int ch = 0; ch < c; ++ch) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const T* g = grad_output.plane(ch);
    for (int y = 0; y < 2 * h; ++y) {
      const Tap& a = ty[y];
      for (int x = 0; x < 2 * w; ++x) {
        const Tap& b = tx[x];
        const double gv = g[y * 2 * w + x];
        acc[a.lo * w + b.lo] += gv * (1 - a.frac) * (1 - b.frac);
        acc[a.lo * w + b.hi] += gv * (1 - a.frac) * b.frac;
        acc[a.hi * w + b.lo] += gv * a.frac * (1 - b.frac);
        acc[a.hi * w + b.hi] += gv * a.frac * b.frac;
      }
    }
    T* o = out.plane(ch);
    for (std::size_t i = 0; i < acc.size(); ++i) o[i] = static_cast<T>(acc[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------

#define BISEG_INSTANTIATE_TENSOR(T)                                                            \
  template class BasicTensor<T>;                                                               \
  template bool all_finite(const BasicTensor<T>&);                                             \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                   \
  template void add_inplace(BasicTensor<T>&, const BasicTensor<T>&);                           \
  template BasicTensor<T> multiply(const BasicTensor<T>&, const BasicTensor<T>&);              \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&,                 \
                                 const BasicTensor<T>&, const ConvSpec&);                      \
  template Conv2dGrads<T> conv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&,        \
                                          const BasicTensor<T>&, const ConvSpec&, bool);       \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                         \
  template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&);         \
  template BasicTensor<T> softmax_channels(const BasicTensor<T>&);                             \
  template BasicTensor<T> softmax_channels_backward(const BasicTensor<T>&,                     \
                                                    const BasicTensor<T>&);                    \
  template std::vector<T> softmax_vector(std::span<const T>);                                  \
  template std::vector<T> softmax_vector_backward(std::span<const T>, std::span<const T>);     \
  template BasicTensor<T> upsample_x2(const BasicTensor<T>&);                                  \
  template BasicTensor<T> upsample_x2_backward(const BasicTensor<T>&, const Shape&);

BISEG_INSTANTIATE_TENSOR(float)
BISEG_INSTANTIATE_TENSOR(double)

}  // namespace biseg
