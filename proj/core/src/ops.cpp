#include "dualmotion/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace dualmotion::ops {

namespace {

using MatRM = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using ConstMapRM = Eigen::Map<const MatRM>;

template <typename Fwd, typename Deriv>
Var unary(const Var& a, Fwd fwd, Deriv deriv) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  Tensor y_copy = y;
  return make_op_result(std::move(y), {a}, [a, y = std::move(y_copy), deriv](const Tensor& g) {
    const Tensor& x = a.value();
    Tensor gx(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] = g[i] * deriv(x[i], y[i]);
    a.node()->accumulate(gx);
  });
}

void check_rank(const Var& v, int rank, const char* what) {
  if (v.value().rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " + to_string(v.shape()));
  }
}

// Unfolds one [C, H, W] image into [C*k*k, Ho*Wo] patch columns (zero padding).
void im2col(const Scalar* src, int channels, int height, int width, const ConvGeometry& g, int out_h, int out_w,
            Scalar* cols) {
  const int k = g.kernel;
  const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
  for (int c = 0; c < channels; ++c) {
    const Scalar* img = src + static_cast<std::size_t>(c) * height * width;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        Scalar* row = cols + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * plane;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * g.stride - g.pad_lo + ky;
          Scalar* dst = row + static_cast<std::size_t>(oy) * out_w;
          if (iy < 0 || iy >= height) {
            std::fill(dst, dst + out_w, 0.0);
            continue;
          }
          const Scalar* line = img + static_cast<std::size_t>(iy) * width;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * g.stride - g.pad_lo + kx;
            dst[ox] = (ix >= 0 && ix < width) ? line[ix] : 0.0;
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters patch columns back, accumulating into dst.
void col2im(const Scalar* cols, int channels, int height, int width, const ConvGeometry& g, int out_h, int out_w,
            Scalar* dst) {
  const int k = g.kernel;
  const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
  for (int c = 0; c < channels; ++c) {
    Scalar* img = dst + static_cast<std::size_t>(c) * height * width;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Scalar* row = cols + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * plane;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * g.stride - g.pad_lo + ky;
          if (iy < 0 || iy >= height) continue;
          const Scalar* srcp = row + static_cast<std::size_t>(oy) * out_w;
          Scalar* line = img + static_cast<std::size_t>(iy) * width;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * g.stride - g.pad_lo + kx;
            if (ix >= 0 && ix < width) line[ix] += srcp[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Var add(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b.value()[i];
  return make_op_result(std::move(y), {a, b}, [a, b](const Tensor& g) {
    if (a.requires_grad()) a.node()->accumulate(g);
    if (b.requires_grad()) b.node()->accumulate(g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= b.value()[i];
  return make_op_result(std::move(y), {a, b}, [a, b](const Tensor& g) {
    if (a.requires_grad()) a.node()->accumulate(g);
    if (b.requires_grad()) {
      Tensor gb = g;
      for (auto& v : gb.values()) v = -v;
      b.node()->accumulate(gb);
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= b.value()[i];
  return make_op_result(std::move(y), {a, b}, [a, b](const Tensor& g) {
    if (a.requires_grad()) {
      Tensor ga = g;
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= b.value()[i];
      a.node()->accumulate(ga);
    }
    if (b.requires_grad()) {
      Tensor gb = g;
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] *= a.value()[i];
      b.node()->accumulate(gb);
    }
  });
}

Var scale(const Var& a, Scalar s) {
  return unary(a, [s](Scalar x) { return s * x; }, [s](Scalar, Scalar) { return s; });
}

Var add_scalar(const Var& a, Scalar s) {
  return unary(a, [s](Scalar x) { return x + s; }, [](Scalar, Scalar) { return 1.0; });
}

Var sigmoid(const Var& a) {
  return unary(
      a, [](Scalar x) { return 1.0 / (1.0 + std::exp(-x)); }, [](Scalar, Scalar y) { return y * (1.0 - y); });
}

Var tanh(const Var& a) {
  return unary(a, [](Scalar x) { return std::tanh(x); }, [](Scalar, Scalar y) { return 1.0 - y * y; });
}

Var relu(const Var& a) {
  return unary(
      a, [](Scalar x) { return x > 0 ? x : 0.0; }, [](Scalar x, Scalar) { return x > 0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& a, Scalar slope) {
  return unary(
      a, [slope](Scalar x) { return x > 0 ? x : slope * x; },
      [slope](Scalar x, Scalar) { return x > 0 ? 1.0 : slope; });
}

Var exp(const Var& a) {
  return unary(a, [](Scalar x) { return std::exp(x); }, [](Scalar, Scalar y) { return y; });
}

Scalar soft_clip_value(Scalar x, Scalar knee) {
  const Scalar ax = std::abs(x);
  if (ax <= knee) return x;
  const Scalar tail = 1.0 - knee;
  return std::copysign(knee + tail * std::tanh((ax - knee) / tail), x);
}

Var soft_clip(const Var& a, Scalar knee) {
  if (!(knee >= 0.0 && knee < 1.0)) throw std::invalid_argument("soft_clip knee must lie in [0, 1)");
  return unary(
      a, [knee](Scalar x) { return soft_clip_value(x, knee); },
      [knee](Scalar x, Scalar) {
        const Scalar ax = std::abs(x);
        if (ax <= knee) return 1.0;
        const Scalar t = std::tanh((ax - knee) / (1.0 - knee));
        return 1.0 - t * t;
      });
}

Var sum(const Var& a) {
  Scalar s = 0;
  for (Scalar v : a.value().values()) s += v;
  return make_op_result(Tensor::scalar(s), {a}, [a](const Tensor& g) {
    a.node()->accumulate(Tensor(a.shape(), g[0]));
  });
}

Var mean(const Var& a) {
  const auto n = static_cast<Scalar>(a.value().size());
  if (n == 0) throw ShapeError("mean of empty tensor");
  Scalar s = 0;
  for (Scalar v : a.value().values()) s += v;
  return make_op_result(Tensor::scalar(s / n), {a}, [a, n](const Tensor& g) {
    a.node()->accumulate(Tensor(a.shape(), g[0] / n));
  });
}

Var weighted_sum(const Var& a, const Tensor& weights) {
  require_same_shape(a.value(), weights, "weighted_sum");
  Scalar s = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += a.value()[i] * weights[i];
  return make_op_result(Tensor::scalar(s), {a}, [a, weights](const Tensor& g) {
    Tensor ga = weights;
    for (auto& v : ga.values()) v *= g[0];
    a.node()->accumulate(ga);
  });
}

Var reshape(const Var& a, Shape shape) {
  Tensor y = a.value().reshaped(std::move(shape));
  return make_op_result(std::move(y), {a}, [a](const Tensor& g) { a.node()->accumulate(g.reshaped(a.shape())); });
}

Var concat(std::span<const Var> parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const Shape& first = parts.front().shape();
  const int rank = static_cast<int>(first.size());
  if (axis < 0 || axis >= rank) throw ShapeError("concat axis out of range");
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= first[i];
  for (int i = axis + 1; i < rank; ++i) inner *= first[i];
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<int> extents;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = static_cast<int>(s.size()) == rank;
    for (int i = 0; ok && i < rank; ++i) ok = (i == axis) || s[i] == first[i];
    if (!ok) throw ShapeError("concat: incompatible shapes " + to_string(s) + " and " + to_string(first));
    extents.push_back(s[axis]);
    out_shape[axis] += s[axis];
  }
  Tensor y(out_shape);
  const std::size_t out_row = static_cast<std::size_t>(out_shape[axis]) * inner;
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const std::size_t row = static_cast<std::size_t>(extents[p]) * inner;
    const Scalar* src = parts[p].value().data();
    for (std::size_t o = 0; o < outer; ++o) std::copy(src + o * row, src + (o + 1) * row, y.data() + o * out_row + offset);
    offset += row;
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return make_op_result(std::move(y), inputs, [inputs, extents, outer, inner, out_row](const Tensor& g) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < inputs.size(); ++p) {
      const std::size_t row = static_cast<std::size_t>(extents[p]) * inner;
      if (inputs[p].requires_grad()) {
        Tensor gp(inputs[p].shape());
        for (std::size_t o = 0; o < outer; ++o) {
          std::copy(g.data() + o * out_row + offset, g.data() + o * out_row + offset + row, gp.data() + o * row);
        }
        inputs[p].node()->accumulate(gp);
      }
      offset += row;
    }
  });
}

Var slice(const Var& a, int axis, int start, int length) {
  const Shape& s = a.shape();
  const int rank = static_cast<int>(s.size());
  if (axis < 0 || axis >= rank || start < 0 || length < 0 || start + length > s[axis]) {
    throw ShapeError("slice out of range for shape " + to_string(s));
  }
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[i];
  for (int i = axis + 1; i < rank; ++i) inner *= s[i];
  Shape out_shape = s;
  out_shape[axis] = length;
  Tensor y(out_shape);
  const std::size_t in_row = static_cast<std::size_t>(s[axis]) * inner;
  const std::size_t out_row = static_cast<std::size_t>(length) * inner;
  const std::size_t off = static_cast<std::size_t>(start) * inner;
  for (std::size_t o = 0; o < outer; ++o) {
    const Scalar* src = a.value().data() + o * in_row + off;
    std::copy(src, src + out_row, y.data() + o * out_row);
  }
  return make_op_result(std::move(y), {a}, [a, outer, in_row, out_row, off](const Tensor& g) {
    Tensor ga(a.shape());
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy(g.data() + o * out_row, g.data() + (o + 1) * out_row, ga.data() + o * in_row + off);
    }
    a.node()->accumulate(ga);
  });
}

int conv_output_size(int input, const ConvGeometry& g) {
  const int span = input + g.pad_lo + g.pad_hi - g.kernel;
  if (span < 0) throw ShapeError("convolution kernel larger than padded input");
  return span / g.stride + 1;
}

int conv_transpose_output_size(int input, const ConvGeometry& g) {
  return (input - 1) * g.stride - g.pad_lo - g.pad_hi + g.kernel + g.output_padding;
}

Var conv2d(const Var& x, const Var& weight, const Var& bias, const ConvGeometry& g) {
  check_rank(x, 4, "conv2d input");
  check_rank(weight, 4, "conv2d weight");
  const int n = x.shape()[0], ci = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  const int co = weight.shape()[0], k = g.kernel;
  if (weight.shape() != Shape{co, ci, k, k}) {
    throw ShapeError("conv2d: weight " + to_string(weight.shape()) + " incompatible with input " + to_string(x.shape()));
  }
  if (bias.defined() && bias.shape() != Shape{co}) throw ShapeError("conv2d: bias shape " + to_string(bias.shape()));
  const int ho = conv_output_size(h, g), wo = conv_output_size(w, g);
  const int kk = ci * k * k;
  const std::size_t plane = static_cast<std::size_t>(ho) * wo;

  Tensor y({n, co, ho, wo});
  Tensor cols({n, kk, static_cast<int>(plane)});
  ConstMapRM wmat(weight.value().data(), co, kk);
  for (int s = 0; s < n; ++s) {
    Scalar* c = cols.data() + static_cast<std::size_t>(s) * kk * plane;
    im2col(x.value().data() + static_cast<std::size_t>(s) * ci * h * w, ci, h, w, g, ho, wo, c);
    MapRM out(y.data() + static_cast<std::size_t>(s) * co * plane, co, static_cast<Eigen::Index>(plane));
    out.noalias() = wmat * ConstMapRM(c, kk, static_cast<Eigen::Index>(plane));
    if (bias.defined()) {
      for (int o = 0; o < co; ++o) out.row(o).array() += bias.value()[o];
    }
  }

  std::vector<Var> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_op_result(std::move(y), inputs, [x, weight, bias, g, cols = std::move(cols), n, ci, h, w, co, kk, ho, wo,
                                               plane](const Tensor& gy) {
    ConstMapRM wmat(weight.value().data(), co, kk);
    Tensor gw, gb, gx;
    if (weight.requires_grad()) gw = Tensor(weight.shape());
    if (bias.defined() && bias.requires_grad()) gb = Tensor(bias.shape());
    if (x.requires_grad()) gx = Tensor(x.shape());
    Buffer dcols(x.requires_grad() ? static_cast<std::size_t>(kk) * plane : 0);
    for (int s = 0; s < n; ++s) {
      ConstMapRM go(gy.data() + static_cast<std::size_t>(s) * co * plane, co, static_cast<Eigen::Index>(plane));
      ConstMapRM c(cols.data() + static_cast<std::size_t>(s) * kk * plane, kk, static_cast<Eigen::Index>(plane));
      if (!gw.empty()) MapRM(gw.data(), co, kk).noalias() += go * c.transpose();
      if (!gb.empty()) {
        for (int o = 0; o < co; ++o) gb[o] += go.row(o).sum();
      }
      if (!gx.empty()) {
        MapRM dc(dcols.data(), kk, static_cast<Eigen::Index>(plane));
        dc.noalias() = wmat.transpose() * go;
        col2im(dcols.data(), ci, h, w, g, ho, wo, gx.data() + static_cast<std::size_t>(s) * ci * h * w);
      }
    }
    if (!gw.empty()) weight.node()->accumulate(gw);
    if (!gb.empty()) bias.node()->accumulate(gb);
    if (!gx.empty()) x.node()->accumulate(gx);
  });
}

Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias, const ConvGeometry& g) {
  check_rank(x, 4, "conv_transpose2d input");
  check_rank(weight, 4, "conv_transpose2d weight");
  const int n = x.shape()[0], ci = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  const int co = weight.shape()[1], k = g.kernel;
  if (weight.shape() != Shape{ci, co, k, k}) {
    throw ShapeError("conv_transpose2d: weight " + to_string(weight.shape()) + " incompatible with input " +
                     to_string(x.shape()));
  }
  if (bias.defined() && bias.shape() != Shape{co}) {
    throw ShapeError("conv_transpose2d: bias shape " + to_string(bias.shape()));
  }
  if (g.output_padding >= g.stride && g.output_padding > 0) throw ShapeError("output_padding must be < stride");
  const int ho = conv_transpose_output_size(h, g), wo = conv_transpose_output_size(w, g);
  if (ho <= 0 || wo <= 0) throw ShapeError("conv_transpose2d: empty output");
  const int kk = co * k * k;
  const std::size_t in_plane = static_cast<std::size_t>(h) * w;
  const std::size_t out_plane = static_cast<std::size_t>(ho) * wo;

  Tensor y({n, co, ho, wo});
  Buffer cols(static_cast<std::size_t>(kk) * in_plane);
  ConstMapRM wmat(weight.value().data(), ci, kk);
  for (int s = 0; s < n; ++s) {
    ConstMapRM xin(x.value().data() + static_cast<std::size_t>(s) * ci * in_plane, ci,
                   static_cast<Eigen::Index>(in_plane));
    MapRM(cols.data(), kk, static_cast<Eigen::Index>(in_plane)).noalias() = wmat.transpose() * xin;
    Scalar* out = y.data() + static_cast<std::size_t>(s) * co * out_plane;
    col2im(cols.data(), co, ho, wo, g, h, w, out);
    if (bias.defined()) {
      for (int o = 0; o < co; ++o) {
        Scalar* p = out + static_cast<std::size_t>(o) * out_plane;
        for (std::size_t i = 0; i < out_plane; ++i) p[i] += bias.value()[o];
      }
    }
  }

  std::vector<Var> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_op_result(std::move(y), inputs, [x, weight, bias, g, n, ci, h, w, co, kk, ho, wo, in_plane,
                                               out_plane](const Tensor& gy) {
    ConstMapRM wmat(weight.value().data(), ci, kk);
    Tensor gw, gb, gx;
    if (weight.requires_grad()) gw = Tensor(weight.shape());
    if (bias.defined() && bias.requires_grad()) gb = Tensor(bias.shape());
    if (x.requires_grad()) gx = Tensor(x.shape());
    Buffer gcols(static_cast<std::size_t>(kk) * in_plane);
    for (int s = 0; s < n; ++s) {
      const Scalar* go = gy.data() + static_cast<std::size_t>(s) * co * out_plane;
      if (!gb.empty()) {
        for (int o = 0; o < co; ++o) {
          const Scalar* p = go + static_cast<std::size_t>(o) * out_plane;
          Scalar acc = 0;
          for (std::size_t i = 0; i < out_plane; ++i) acc += p[i];
          gb[o] += acc;
        }
      }
      if (gw.empty() && gx.empty()) continue;
      im2col(go, co, ho, wo, g, h, w, gcols.data());
      ConstMapRM gc(gcols.data(), kk, static_cast<Eigen::Index>(in_plane));
      if (!gw.empty()) {
        ConstMapRM xin(x.value().data() + static_cast<std::size_t>(s) * ci * in_plane, ci,
                       static_cast<Eigen::Index>(in_plane));
        MapRM(gw.data(), ci, kk).noalias() += xin * gc.transpose();
      }
      if (!gx.empty()) {
        MapRM(gx.data() + static_cast<std::size_t>(s) * ci * in_plane, ci, static_cast<Eigen::Index>(in_plane))
            .noalias() = wmat * gc;
      }
    }
    if (!gw.empty()) weight.node()->accumulate(gw);
    if (!gb.empty()) bias.node()->accumulate(gb);
    if (!gx.empty()) x.node()->accumulate(gx);
  });
}

Var instance_norm(const Var& x, const Var& gamma, const Var& beta, Scalar eps) {
  check_rank(x, 4, "instance_norm");
  const int n = x.shape()[0], c = x.shape()[1];
  const std::size_t plane = static_cast<std::size_t>(x.shape()[2]) * x.shape()[3];
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) throw ShapeError("instance_norm: affine shape mismatch");
  Tensor y(x.shape());
  Tensor xhat(x.shape());
  std::vector<Scalar> inv_std(static_cast<std::size_t>(n) * c);
  for (int s = 0; s < n; ++s) {
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t base = (static_cast<std::size_t>(s) * c + ch) * plane;
      const Scalar* px = x.value().data() + base;
      Scalar mu = 0;
      for (std::size_t i = 0; i < plane; ++i) mu += px[i];
      mu /= static_cast<Scalar>(plane);
      Scalar var = 0;
      for (std::size_t i = 0; i < plane; ++i) var += (px[i] - mu) * (px[i] - mu);
      var /= static_cast<Scalar>(plane);
      const Scalar is = 1.0 / std::sqrt(var + eps);
      inv_std[static_cast<std::size_t>(s) * c + ch] = is;
      const Scalar gm = gamma.value()[ch], bt = beta.value()[ch];
      for (std::size_t i = 0; i < plane; ++i) {
        const Scalar xh = (px[i] - mu) * is;
        xhat[base + i] = xh;
        y[base + i] = gm * xh + bt;
      }
    }
  }
  return make_op_result(std::move(y), {x, gamma, beta},
                        [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), n, c,
                         plane](const Tensor& gy) {
                          Tensor gx, gg, gb;
                          if (x.requires_grad()) gx = Tensor(x.shape());
                          if (gamma.requires_grad()) gg = Tensor(gamma.shape());
                          if (beta.requires_grad()) gb = Tensor(beta.shape());
                          const auto m = static_cast<Scalar>(plane);
                          for (int s = 0; s < n; ++s) {
                            for (int ch = 0; ch < c; ++ch) {
                              const std::size_t base = (static_cast<std::size_t>(s) * c + ch) * plane;
                              Scalar sum_g = 0, sum_gx = 0;
                              for (std::size_t i = 0; i < plane; ++i) {
                                sum_g += gy[base + i];
                                sum_gx += gy[base + i] * xhat[base + i];
                              }
                              if (!gg.empty()) gg[ch] += sum_gx;
                              if (!gb.empty()) gb[ch] += sum_g;
                              if (!gx.empty()) {
                                const Scalar k = gamma.value()[ch] * inv_std[static_cast<std::size_t>(s) * c + ch] / m;
                                for (std::size_t i = 0; i < plane; ++i) {
                                  gx[base + i] = k * (m * gy[base + i] - sum_g - xhat[base + i] * sum_gx);
                                }
                              }
                            }
                          }
                          if (!gx.empty()) x.node()->accumulate(gx);
                          if (!gg.empty()) gamma.node()->accumulate(gg);
                          if (!gb.empty()) beta.node()->accumulate(gb);
                        });
}

Var global_avg_pool(const Var& x) {
  check_rank(x, 4, "global_avg_pool");
  const int n = x.shape()[0], c = x.shape()[1];
  const std::size_t plane = static_cast<std::size_t>(x.shape()[2]) * x.shape()[3];
  Tensor y({n, c});
  for (std::size_t i = 0; i < static_cast<std::size_t>(n) * c; ++i) {
    Scalar acc = 0;
    for (std::size_t j = 0; j < plane; ++j) acc += x.value()[i * plane + j];
    y[i] = acc / static_cast<Scalar>(plane);
  }
  return make_op_result(std::move(y), {x}, [x, plane](const Tensor& g) {
    Tensor gx(x.shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const Scalar v = g[i] / static_cast<Scalar>(plane);
      for (std::size_t j = 0; j < plane; ++j) gx[i * plane + j] = v;
    }
    x.node()->accumulate(gx);
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  check_rank(x, 2, "linear input");
  const int n = x.shape()[0], f = x.shape()[1];
  const int o = weight.shape()[0];
  if (weight.shape() != Shape{o, f}) throw ShapeError("linear: weight " + to_string(weight.shape()));
  if (bias.defined() && bias.shape() != Shape{o}) throw ShapeError("linear: bias " + to_string(bias.shape()));
  Tensor y({n, o});
  MapRM(y.data(), n, o).noalias() =
      ConstMapRM(x.value().data(), n, f) * ConstMapRM(weight.value().data(), o, f).transpose();
  if (bias.defined()) {
    for (int s = 0; s < n; ++s)
      for (int j = 0; j < o; ++j) y[static_cast<std::size_t>(s) * o + j] += bias.value()[j];
  }
  std::vector<Var> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_op_result(std::move(y), inputs, [x, weight, bias, n, f, o](const Tensor& g) {
    ConstMapRM gm(g.data(), n, o);
    if (x.requires_grad()) {
      Tensor gx(x.shape());
      MapRM(gx.data(), n, f).noalias() = gm * ConstMapRM(weight.value().data(), o, f);
      x.node()->accumulate(gx);
    }
    if (weight.requires_grad()) {
      Tensor gw(weight.shape());
      MapRM(gw.data(), o, f).noalias() = gm.transpose() * ConstMapRM(x.value().data(), n, f);
      weight.node()->accumulate(gw);
    }
    if (bias.defined() && bias.requires_grad()) {
      Tensor gb(bias.shape());
      for (int s = 0; s < n; ++s)
        for (int j = 0; j < o; ++j) gb[j] += g[static_cast<std::size_t>(s) * o + j];
      bias.node()->accumulate(gb);
    }
  });
}

namespace {

struct BilinearTap {
  int x0, x1, y0, y1;
  Scalar ax, ay;
  bool inside_x, inside_y;  // false where the coordinate was clamped
};

BilinearTap bilinear_tap(Scalar sx, Scalar sy, int width, int height) {
  BilinearTap t{};
  const Scalar max_x = width - 1, max_y = height - 1;
  t.inside_x = sx > 0 && sx < max_x;
  t.inside_y = sy > 0 && sy < max_y;
  sx = std::clamp(sx, Scalar{0}, max_x);
  sy = std::clamp(sy, Scalar{0}, max_y);
  t.x0 = static_cast<int>(std::floor(sx));
  t.y0 = static_cast<int>(std::floor(sy));
  t.x1 = std::min(t.x0 + 1, width - 1);
  t.y1 = std::min(t.y0 + 1, height - 1);
  t.ax = sx - t.x0;
  t.ay = sy - t.y0;
  return t;
}

}  // namespace

Var warp(const Var& source, const Var& flow) {
  check_rank(source, 4, "warp source");
  check_rank(flow, 4, "warp flow");
  const int n = source.shape()[0], c = source.shape()[1], h = source.shape()[2], w = source.shape()[3];
  if (flow.shape() != Shape{n, 2, h, w}) {
    throw ShapeError("warp: flow " + to_string(flow.shape()) + " does not match source " + to_string(source.shape()));
  }
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor y(source.shape());
  const Tensor& src = source.value();
  const Tensor& fl = flow.value();
  for (int s = 0; s < n; ++s) {
    const Scalar* u = fl.data() + (static_cast<std::size_t>(s) * 2) * plane;
    const Scalar* v = u + plane;
    for (int py = 0; py < h; ++py) {
      for (int px = 0; px < w; ++px) {
        const std::size_t pix = static_cast<std::size_t>(py) * w + px;
        const BilinearTap t = bilinear_tap(px + u[pix], py + v[pix], w, h);
        for (int ch = 0; ch < c; ++ch) {
          const Scalar* img = src.data() + (static_cast<std::size_t>(s) * c + ch) * plane;
          const Scalar top = (1 - t.ax) * img[t.y0 * w + t.x0] + t.ax * img[t.y0 * w + t.x1];
          const Scalar bot = (1 - t.ax) * img[t.y1 * w + t.x0] + t.ax * img[t.y1 * w + t.x1];
          y[(static_cast<std::size_t>(s) * c + ch) * plane + pix] = (1 - t.ay) * top + t.ay * bot;
        }
      }
    }
  }
  return make_op_result(std::move(y), {source, flow}, [source, flow, n, c, h, w, plane](const Tensor& g) {
    Tensor gs, gf;
    if (source.requires_grad()) gs = Tensor(source.shape());
    if (flow.requires_grad()) gf = Tensor(flow.shape());
    const Tensor& src = source.value();
    const Tensor& fl = flow.value();
    for (int s = 0; s < n; ++s) {
      const Scalar* u = fl.data() + (static_cast<std::size_t>(s) * 2) * plane;
      const Scalar* v = u + plane;
      for (int py = 0; py < h; ++py) {
        for (int px = 0; px < w; ++px) {
          const std::size_t pix = static_cast<std::size_t>(py) * w + px;
          const BilinearTap t = bilinear_tap(px + u[pix], py + v[pix], w, h);
          Scalar du = 0, dv = 0;
          for (int ch = 0; ch < c; ++ch) {
            const std::size_t base = (static_cast<std::size_t>(s) * c + ch) * plane;
            const Scalar go = g[base + pix];
            if (!gs.empty()) {
              Scalar* gi = gs.data() + base;
              gi[t.y0 * w + t.x0] += go * (1 - t.ax) * (1 - t.ay);
              gi[t.y0 * w + t.x1] += go * t.ax * (1 - t.ay);
              gi[t.y1 * w + t.x0] += go * (1 - t.ax) * t.ay;
              gi[t.y1 * w + t.x1] += go * t.ax * t.ay;
            }
            if (!gf.empty()) {
              const Scalar* img = src.data() + base;
              const Scalar i00 = img[t.y0 * w + t.x0], i01 = img[t.y0 * w + t.x1];
              const Scalar i10 = img[t.y1 * w + t.x0], i11 = img[t.y1 * w + t.x1];
              du += go * ((1 - t.ay) * (i01 - i00) + t.ay * (i11 - i10));
              dv += go * ((1 - t.ax) * (i10 - i00) + t.ax * (i11 - i01));
            }
          }
          if (!gf.empty()) {
            gf[(static_cast<std::size_t>(s) * 2) * plane + pix] = t.inside_x ? du : 0.0;
            gf[(static_cast<std::size_t>(s) * 2 + 1) * plane + pix] = t.inside_y ? dv : 0.0;
          }
        }
      }
    }
    if (!gs.empty()) source.node()->accumulate(gs);
    if (!gf.empty()) flow.node()->accumulate(gf);
  });
}

}  // namespace dualmotion::ops
