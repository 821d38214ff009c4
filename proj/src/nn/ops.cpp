#include "reenact/nn/ops.hpp"

#include <algorithm>
#include <cmath>

namespace reenact::nn {
namespace {

template <typename S>
using MatR = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using VecS = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <typename S>
bool wants(const Node<S>& self, std::size_t i) {
  return i < self.parents.size() && self.parents[i] && self.parents[i]->requires_grad;
}

template <typename S>
Tensor<S>& grad_of(Node<S>& self, std::size_t i) {
  return self.parents[i]->ensure_grad();
}

template <typename S>
const Tensor<S>& value_of(const Node<S>& self, std::size_t i) {
  return self.parents[i]->value;
}

void require(bool ok, const char* what, const Shape& a, const Shape& b) {
  if (!ok) throw std::invalid_argument(std::string(what) + ": " + a.str() + " vs " + b.str());
}

// Rows of cols are (c, ky, kx); columns are output positions.
template <typename S>
void im2col(const S* src, int C, int H, int W, int k, int s, int p, int Ho, int Wo, S* cols) {
  const Eigen::Index hw = Eigen::Index(Ho) * Wo;
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        S* dst = cols + (Eigen::Index(c * k + ky) * k + kx) * hw;
        const S* plane = src + Eigen::Index(c) * H * W;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * s - p + ky;
          S* row = dst + Eigen::Index(oy) * Wo;
          if (iy < 0 || iy >= H) {
            std::fill(row, row + Wo, S(0));
            continue;
          }
          const S* in = plane + Eigen::Index(iy) * W;
          if (s == 1) {
            const int lo = std::clamp(p - kx, 0, Wo);
            const int hi = std::clamp(W + p - kx, lo, Wo);
            std::fill(row, row + lo, S(0));
            std::copy(in + lo - p + kx, in + hi - p + kx, row + lo);
            std::fill(row + hi, row + Wo, S(0));
          } else {
            for (int ox = 0; ox < Wo; ++ox) {
              const int ix = ox * s - p + kx;
              row[ox] = (ix >= 0 && ix < W) ? in[ix] : S(0);
            }
          }
        }
      }
}

template <typename S>
void col2im(const S* cols, int C, int H, int W, int k, int s, int p, int Ho, int Wo, S* dst) {
  const Eigen::Index hw = Eigen::Index(Ho) * Wo;
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const S* src = cols + (Eigen::Index(c * k + ky) * k + kx) * hw;
        S* plane = dst + Eigen::Index(c) * H * W;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * s - p + ky;
          if (iy < 0 || iy >= H) continue;
          const S* row = src + Eigen::Index(oy) * Wo;
          S* out = plane + Eigen::Index(iy) * W;
          if (s == 1) {
            const int lo = std::clamp(p - kx, 0, Wo);
            const int hi = std::clamp(W + p - kx, lo, Wo);
            for (int ox = lo; ox < hi; ++ox) out[ox - p + kx] += row[ox];
          } else {
            for (int ox = 0; ox < Wo; ++ox) {
              const int ix = ox * s - p + kx;
              if (ix >= 0 && ix < W) out[ix] += row[ox];
            }
          }
        }
      }
}

template <typename S, typename F, typename G>
Var<S> unary(const Var<S>& x, F f, G df) {
  Tensor<S> out(x.shape());
  out.data = x.value().data.unaryExpr(f);
  return Var<S>::make(std::move(out), {x}, [df](Node<S>& self) {
    const auto& xv = value_of(self, 0);
    grad_of(self, 0).data += self.grad.data * xv.data.binaryExpr(self.value.data, df);
  });
}

Tensor<float> scalar_tensor(float v) { return Tensor<float>(Shape{1, 1, 1, 1}, v); }
Tensor<double> scalar_tensor(double v) { return Tensor<double>(Shape{1, 1, 1, 1}, v); }

}  // namespace

template <typename S>
Var<S> conv2d(const Var<S>& x, const Var<S>& w, const Var<S>& b, int stride, int pad) {
  const Shape xs = x.shape(), ws = w.shape();
  require(xs.c == ws.c && ws.h == ws.w, "conv2d channels", xs, ws);
  const int k = ws.h, Cout = ws.n;
  const int Ho = (xs.h + 2 * pad - k) / stride + 1;
  const int Wo = (xs.w + 2 * pad - k) / stride + 1;
  if (Ho <= 0 || Wo <= 0) throw std::invalid_argument("conv2d: input " + xs.str() + " too small");
  const Eigen::Index K = Eigen::Index(xs.c) * k * k, HW = Eigen::Index(Ho) * Wo;
  const bool pointwise = k == 1 && stride == 1 && pad == 0;
  Tensor<S> out(Shape{xs.n, Cout, Ho, Wo});
  Eigen::Map<const MatR<S>> Wm(w.value().data.data(), Cout, K);
  std::vector<S> buf(pointwise ? 0 : K * HW);
  for (int n = 0; n < xs.n; ++n) {
    const S* cols = x.value().ptr(n);
    if (!pointwise) {
      im2col(x.value().ptr(n), xs.c, xs.h, xs.w, k, stride, pad, Ho, Wo, buf.data());
      cols = buf.data();
    }
    Eigen::Map<MatR<S>> o(out.ptr(n), Cout, HW);
    o.noalias() = Wm * Eigen::Map<const MatR<S>>(cols, K, HW);
    if (b.defined()) o.colwise() += Eigen::Map<const VecS<S>>(b.value().data.data(), Cout);
  }
  return Var<S>::make(std::move(out), {x, w, b}, [=](Node<S>& self) {
    const Tensor<S>& xv = value_of(self, 0);
    const Tensor<S>& wv = value_of(self, 1);
    Eigen::Map<const MatR<S>> Wm(wv.data.data(), Cout, K);
    std::vector<S> cols(pointwise ? 0 : K * HW), dcols(pointwise ? 0 : K * HW);
    for (int n = 0; n < xs.n; ++n) {
      Eigen::Map<const MatR<S>> dout(self.grad.ptr(n), Cout, HW);
      if (wants(self, 1)) {
        const S* c = xv.ptr(n);
        if (!pointwise) {
          im2col(xv.ptr(n), xs.c, xs.h, xs.w, k, stride, pad, Ho, Wo, cols.data());
          c = cols.data();
        }
        Eigen::Map<MatR<S>> dW(grad_of(self, 1).data.data(), Cout, K);
        dW.noalias() += dout * Eigen::Map<const MatR<S>>(c, K, HW).transpose();
      }
      if (wants(self, 0)) {
        if (pointwise) {
          Eigen::Map<MatR<S>> dx(grad_of(self, 0).ptr(n), K, HW);
          dx.noalias() += Wm.transpose() * dout;
        } else {
          Eigen::Map<MatR<S>> dc(dcols.data(), K, HW);
          dc.noalias() = Wm.transpose() * dout;
          col2im(dcols.data(), xs.c, xs.h, xs.w, k, stride, pad, Ho, Wo, grad_of(self, 0).ptr(n));
        }
      }
      if (wants(self, 2)) {
        Eigen::Map<VecS<S>> db(grad_of(self, 2).data.data(), Cout);
        db += dout.rowwise().sum();
      }
    }
  });
}

template <typename S>
Var<S> conv_transpose2d(const Var<S>& x, const Var<S>& w, const Var<S>& b, int stride, int pad, int output_pad) {
  const Shape xs = x.shape(), ws = w.shape();
  require(xs.c == ws.n && ws.h == ws.w, "conv_transpose2d channels", xs, ws);
  const int k = ws.h, Cout = ws.c;
  const int Ho = (xs.h - 1) * stride - 2 * pad + k + output_pad;
  const int Wo = (xs.w - 1) * stride - 2 * pad + k + output_pad;
  const Eigen::Index K = Eigen::Index(Cout) * k * k, HW = Eigen::Index(xs.h) * xs.w;
  Tensor<S> out(Shape{xs.n, Cout, Ho, Wo});
  Eigen::Map<const MatR<S>> Wm(w.value().data.data(), xs.c, K);
  std::vector<S> cols(K * HW);
  for (int n = 0; n < xs.n; ++n) {
    Eigen::Map<MatR<S>> c(cols.data(), K, HW);
    c.noalias() = Wm.transpose() * Eigen::Map<const MatR<S>>(x.value().ptr(n), xs.c, HW);
    col2im(cols.data(), Cout, Ho, Wo, k, stride, pad, xs.h, xs.w, out.ptr(n));
    if (b.defined())
      for (int o = 0; o < Cout; ++o) out.plane(n, o) += b.value().data[o];
  }
  return Var<S>::make(std::move(out), {x, w, b}, [=](Node<S>& self) {
    const Tensor<S>& xv = value_of(self, 0);
    const Tensor<S>& wv = value_of(self, 1);
    Eigen::Map<const MatR<S>> Wm(wv.data.data(), xs.c, K);
    std::vector<S> dcols(K * HW);
    for (int n = 0; n < xs.n; ++n) {
      if (wants(self, 0) || wants(self, 1)) {
        im2col(self.grad.ptr(n), Cout, Ho, Wo, k, stride, pad, xs.h, xs.w, dcols.data());
        Eigen::Map<const MatR<S>> dc(dcols.data(), K, HW);
        if (wants(self, 0)) {
          Eigen::Map<MatR<S>> dx(grad_of(self, 0).ptr(n), xs.c, HW);
          dx.noalias() += Wm * dc;
        }
        if (wants(self, 1)) {
          Eigen::Map<MatR<S>> dW(grad_of(self, 1).data.data(), xs.c, K);
          dW.noalias() += Eigen::Map<const MatR<S>>(xv.ptr(n), xs.c, HW) * dc.transpose();
        }
      }
      if (wants(self, 2))
        for (int o = 0; o < Cout; ++o) grad_of(self, 2).data[o] += self.grad.plane(n, o).sum();
    }
  });
}

template <typename S>
Var<S> linear(const Var<S>& x, const Var<S>& w, const Var<S>& b) {
  const Shape xs = x.shape(), ws = w.shape();
  const Eigen::Index F = xs.sample();
  require(F == Eigen::Index(ws.c) * ws.h * ws.w, "linear features", xs, ws);
  const int Out = ws.n;
  Tensor<S> out(Shape{xs.n, Out, 1, 1});
  Eigen::Map<const MatR<S>> X(x.value().data.data(), xs.n, F);
  Eigen::Map<const MatR<S>> Wm(w.value().data.data(), Out, F);
  Eigen::Map<MatR<S>> Y(out.data.data(), xs.n, Out);
  Y.noalias() = X * Wm.transpose();
  if (b.defined()) Y.rowwise() += Eigen::Map<const VecS<S>>(b.value().data.data(), Out).transpose();
  return Var<S>::make(std::move(out), {x, w, b}, [=](Node<S>& self) {
    Eigen::Map<const MatR<S>> dY(self.grad.data.data(), xs.n, Out);
    if (wants(self, 0)) {
      Eigen::Map<const MatR<S>> Wv(value_of(self, 1).data.data(), Out, F);
      Eigen::Map<MatR<S>> dX(grad_of(self, 0).data.data(), xs.n, F);
      dX.noalias() += dY * Wv;
    }
    if (wants(self, 1)) {
      Eigen::Map<const MatR<S>> Xv(value_of(self, 0).data.data(), xs.n, F);
      Eigen::Map<MatR<S>> dW(grad_of(self, 1).data.data(), Out, F);
      dW.noalias() += dY.transpose() * Xv;
    }
    if (wants(self, 2)) {
      Eigen::Map<VecS<S>> db(grad_of(self, 2).data.data(), Out);
      db += dY.colwise().sum().transpose();
    }
  });
}

template <typename S>
Var<S> relu(const Var<S>& x) {
  return unary(x, [](S v) { return v > S(0) ? v : S(0); }, [](S v, S) { return v > S(0) ? S(1) : S(0); });
}

template <typename S>
Var<S> leaky_relu(const Var<S>& x, S slope) {
  return unary(
      x, [slope](S v) { return v > S(0) ? v : slope * v; },
      [slope](S v, S) { return v > S(0) ? S(1) : slope; });
}

template <typename S>
Var<S> sigmoid(const Var<S>& x) {
  return unary(x, [](S v) { return S(1) / (S(1) + std::exp(-v)); }, [](S, S y) { return y * (S(1) - y); });
}

template <typename S>
Var<S> tanh(const Var<S>& x) {
  return unary(x, [](S v) { return std::tanh(v); }, [](S, S y) { return S(1) - y * y; });
}

template <typename S>
Var<S> add(const Var<S>& a, const Var<S>& b) {
  require(a.shape() == b.shape(), "add", a.shape(), b.shape());
  Tensor<S> out(a.shape());
  out.data = a.value().data + b.value().data;
  return Var<S>::make(std::move(out), {a, b}, [](Node<S>& self) {
    if (wants(self, 0)) grad_of(self, 0).data += self.grad.data;
    if (wants(self, 1)) grad_of(self, 1).data += self.grad.data;
  });
}

template <typename S>
Var<S> sub(const Var<S>& a, const Var<S>& b) {
  require(a.shape() == b.shape(), "sub", a.shape(), b.shape());
  Tensor<S> out(a.shape());
  out.data = a.value().data - b.value().data;
  return Var<S>::make(std::move(out), {a, b}, [](Node<S>& self) {
    if (wants(self, 0)) grad_of(self, 0).data += self.grad.data;
    if (wants(self, 1)) grad_of(self, 1).data -= self.grad.data;
  });
}

template <typename S>
Var<S> mul(const Var<S>& a, const Var<S>& b) {
  require(a.shape() == b.shape(), "mul", a.shape(), b.shape());
  Tensor<S> out(a.shape());
  out.data = a.value().data * b.value().data;
  return Var<S>::make(std::move(out), {a, b}, [](Node<S>& self) {
    if (wants(self, 0)) grad_of(self, 0).data += self.grad.data * value_of(self, 1).data;
    if (wants(self, 1)) grad_of(self, 1).data += self.grad.data * value_of(self, 0).data;
  });
}

template <typename S>
Var<S> scale(const Var<S>& x, S factor) {
  Tensor<S> out(x.shape());
  out.data = x.value().data * factor;
  return Var<S>::make(std::move(out), {x}, [factor](Node<S>& self) {
    grad_of(self, 0).data += self.grad.data * factor;
  });
}

template <typename S>
Var<S> add_scalar(const Var<S>& x, S value) {
  Tensor<S> out(x.shape());
  out.data = x.value().data + value;
  return Var<S>::make(std::move(out), {x}, [](Node<S>& self) { grad_of(self, 0).data += self.grad.data; });
}

template <typename S>
Var<S> mul_channels(const Var<S>& x, const Var<S>& m) {
  const Shape xs = x.shape(), ms = m.shape();
  require(ms.c == 1 && ms.n == xs.n && ms.h == xs.h && ms.w == xs.w, "mul_channels", xs, ms);
  Tensor<S> out(xs);
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c) out.plane(n, c) = x.value().plane(n, c) * m.value().plane(n, 0);
  return Var<S>::make(std::move(out), {x, m}, [xs](Node<S>& self) {
    for (int n = 0; n < xs.n; ++n)
      for (int c = 0; c < xs.c; ++c) {
        if (wants(self, 0)) grad_of(self, 0).plane(n, c) += self.grad.plane(n, c) * value_of(self, 1).plane(n, 0);
        if (wants(self, 1)) grad_of(self, 1).plane(n, 0) += self.grad.plane(n, c) * value_of(self, 0).plane(n, c);
      }
  });
}

template <typename S>
Var<S> concat_channels(const std::vector<Var<S>>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat of nothing");
  Shape s = xs[0].shape();
  s.c = 0;
  for (const auto& x : xs) {
    require(x.shape().n == s.n && x.shape().h == s.h && x.shape().w == s.w, "concat", x.shape(), s);
    s.c += x.shape().c;
  }
  Tensor<S> out(s);
  std::vector<int> offsets;
  int off = 0;
  for (const auto& x : xs) {
    offsets.push_back(off);
    const Eigen::Index len = x.shape().sample();
    for (int n = 0; n < s.n; ++n) std::copy(x.value().ptr(n), x.value().ptr(n) + len, out.ptr(n, off));
    off += x.shape().c;
  }
  return Var<S>::make(std::move(out), xs, [offsets, s](Node<S>& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      if (!wants(self, i)) continue;
      Tensor<S>& g = grad_of(self, i);
      const Eigen::Index len = g.shape.sample();
      for (int n = 0; n < s.n; ++n)
        Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>(g.ptr(n), len) +=
            Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>(self.grad.ptr(n, offsets[i]), len);
    }
  });
}

template <typename S>
Var<S> slice_channels(const Var<S>& x, int first, int count) {
  const Shape xs = x.shape();
  if (first < 0 || count <= 0 || first + count > xs.c) throw std::invalid_argument("slice_channels out of range");
  Tensor<S> out(Shape{xs.n, count, xs.h, xs.w});
  const Eigen::Index len = out.shape.sample();
  for (int n = 0; n < xs.n; ++n) std::copy(x.value().ptr(n, first), x.value().ptr(n, first) + len, out.ptr(n));
  return Var<S>::make(std::move(out), {x}, [=](Node<S>& self) {
    Tensor<S>& g = grad_of(self, 0);
    for (int n = 0; n < xs.n; ++n)
      Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>(g.ptr(n, first), len) +=
          Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>(self.grad.ptr(n), len);
  });
}

template <typename S>
Var<S> select_batch(const Var<S>& x, const std::vector<int>& indices) {
  const Shape xs = x.shape();
  if (indices.empty()) throw std::invalid_argument("select_batch needs at least one index");
  for (int i : indices)
    if (i < 0 || i >= xs.n) throw std::invalid_argument("select_batch index out of range");
  Tensor<S> out(Shape{int(indices.size()), xs.c, xs.h, xs.w});
  const Eigen::Index len = xs.sample();
  for (std::size_t k = 0; k < indices.size(); ++k)
    std::copy(x.value().ptr(indices[k]), x.value().ptr(indices[k]) + len, out.ptr(int(k)));
  return Var<S>::make(std::move(out), {x}, [=](Node<S>& self) {
    Tensor<S>& g = grad_of(self, 0);
    for (std::size_t k = 0; k < indices.size(); ++k)
      Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>(g.ptr(indices[k]), len) +=
          Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>(self.grad.ptr(int(k)), len);
  });
}

template <typename S>
Var<S> reshape(const Var<S>& x, Shape shape) {
  require(shape.size() == x.shape().size(), "reshape", x.shape(), shape);
  Tensor<S> out(shape, x.value().data);
  return Var<S>::make(std::move(out), {x}, [](Node<S>& self) { grad_of(self, 0).data += self.grad.data; });
}

template <typename S>
Var<S> broadcast_spatial(const Var<S>& v, int h, int w) {
  const Shape vs = v.shape();
  const int F = int(vs.sample());
  Tensor<S> out(Shape{vs.n, F, h, w});
  for (int n = 0; n < vs.n; ++n)
    for (int f = 0; f < F; ++f) out.plane(n, f).setConstant(v.value().ptr(n)[f]);
  return Var<S>::make(std::move(out), {v}, [=](Node<S>& self) {
    Tensor<S>& g = grad_of(self, 0);
    for (int n = 0; n < vs.n; ++n)
      for (int f = 0; f < F; ++f) g.ptr(n)[f] += self.grad.plane(n, f).sum();
  });
}

template <typename S>
Var<S> avg_pool2(const Var<S>& x) {
  const Shape xs = x.shape();
  const int Ho = xs.h / 2, Wo = xs.w / 2;
  if (Ho == 0 || Wo == 0) throw std::invalid_argument("avg_pool2 on " + xs.str());
  Tensor<S> out(Shape{xs.n, xs.c, Ho, Wo});
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c) {
      auto in = x.value().plane(n, c);
      auto o = out.plane(n, c);
      for (int y = 0; y < Ho; ++y)
        for (int xx = 0; xx < Wo; ++xx)
          o(y, xx) = S(0.25) * (in(2 * y, 2 * xx) + in(2 * y, 2 * xx + 1) + in(2 * y + 1, 2 * xx) +
                                in(2 * y + 1, 2 * xx + 1));
    }
  return Var<S>::make(std::move(out), {x}, [=](Node<S>& self) {
    Tensor<S>& g = grad_of(self, 0);
    for (int n = 0; n < xs.n; ++n)
      for (int c = 0; c < xs.c; ++c) {
        auto gi = g.plane(n, c);
        auto go = self.grad.plane(n, c);
        for (int y = 0; y < Ho; ++y)
          for (int xx = 0; xx < Wo; ++xx) {
            const S v = S(0.25) * go(y, xx);
            gi(2 * y, 2 * xx) += v;
            gi(2 * y, 2 * xx + 1) += v;
            gi(2 * y + 1, 2 * xx) += v;
            gi(2 * y + 1, 2 * xx + 1) += v;
          }
      }
  });
}

template <typename S>
Var<S> resize_nearest(const Var<S>& x, int h, int w) {
  const Shape xs = x.shape();
  std::vector<int> ys(h), xsrc(w);
  for (int y = 0; y < h; ++y) ys[y] = std::min(xs.h - 1, int((std::int64_t(y) * xs.h) / h));
  for (int xx = 0; xx < w; ++xx) xsrc[xx] = std::min(xs.w - 1, int((std::int64_t(xx) * xs.w) / w));
  Tensor<S> out(Shape{xs.n, xs.c, h, w});
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c) {
      auto in = x.value().plane(n, c);
      auto o = out.plane(n, c);
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) o(y, xx) = in(ys[y], xsrc[xx]);
    }
  return Var<S>::make(std::move(out), {x}, [=](Node<S>& self) {
    Tensor<S>& g = grad_of(self, 0);
    for (int n = 0; n < xs.n; ++n)
      for (int c = 0; c < xs.c; ++c) {
        auto gi = g.plane(n, c);
        auto go = self.grad.plane(n, c);
        for (int y = 0; y < h; ++y)
          for (int xx = 0; xx < w; ++xx) gi(ys[y], xsrc[xx]) += go(y, xx);
      }
  });
}

template <typename S>
Var<S> upsample_nearest2(const Var<S>& x) {
  return resize_nearest(x, x.shape().h * 2, x.shape().w * 2);
}

template <typename S>
Var<S> crop(const Var<S>& x, int y0, int x0, int h, int w) {
  const Shape xs = x.shape();
  if (y0 < 0 || x0 < 0 || y0 + h > xs.h || x0 + w > xs.w || h <= 0 || w <= 0)
    throw std::invalid_argument("crop window outside " + xs.str());
  Tensor<S> out(Shape{xs.n, xs.c, h, w});
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c) out.plane(n, c) = x.value().plane(n, c).block(y0, x0, h, w);
  return Var<S>::make(std::move(out), {x}, [=](Node<S>& self) {
    Tensor<S>& g = grad_of(self, 0);
    for (int n = 0; n < xs.n; ++n)
      for (int c = 0; c < xs.c; ++c) g.plane(n, c).block(y0, x0, h, w) += self.grad.plane(n, c);
  });
}

template <typename S>
Var<S> crop_resize(const Var<S>& x, const std::vector<std::array<float, 4>>& boxes, int out_h, int out_w) {
  const Shape xs = x.shape();
  if (int(boxes.size()) != xs.n) throw std::invalid_argument("crop_resize needs one box per sample");
  struct Tap {
    int y0, y1, x0, x1;
    S wy, wx;
  };
  // Sample grid per sample: pixel centers of the box mapped back to input.
  std::vector<std::vector<Tap>> taps(xs.n);
  for (int n = 0; n < xs.n; ++n) {
    const auto& b = boxes[n];
    const double sy = double(b[3] - b[1]) / out_h, sx = double(b[2] - b[0]) / out_w;
    taps[n].reserve(std::size_t(out_h) * out_w);
    for (int oy = 0; oy < out_h; ++oy)
      for (int ox = 0; ox < out_w; ++ox) {
        double fy = b[1] + (oy + 0.5) * sy - 0.5, fx = b[0] + (ox + 0.5) * sx - 0.5;
        fy = std::clamp(fy, 0.0, double(xs.h - 1));
        fx = std::clamp(fx, 0.0, double(xs.w - 1));
        const int y0 = int(std::floor(fy)), x0 = int(std::floor(fx));
        const int y1 = std::min(y0 + 1, xs.h - 1), x1 = std::min(x0 + 1, xs.w - 1);
        taps[n].push_back(Tap{y0, y1, x0, x1, S(fy - y0), S(fx - x0)});
      }
  }
  Tensor<S> out(Shape{xs.n, xs.c, out_h, out_w});
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c) {
      auto in = x.value().plane(n, c);
      S* o = out.ptr(n, c);
      for (std::size_t i = 0; i < taps[n].size(); ++i) {
        const Tap& t = taps[n][i];
        o[i] = (S(1) - t.wy) * ((S(1) - t.wx) * in(t.y0, t.x0) + t.wx * in(t.y0, t.x1)) +
               t.wy * ((S(1) - t.wx) * in(t.y1, t.x0) + t.wx * in(t.y1, t.x1));
      }
    }
  return Var<S>::make(std::move(out), {x}, [xs, taps](Node<S>& self) {
    Tensor<S>& g = grad_of(self, 0);
    for (int n = 0; n < xs.n; ++n)
      for (int c = 0; c < xs.c; ++c) {
        auto gi = g.plane(n, c);
        const S* go = self.grad.ptr(n, c);
        for (std::size_t i = 0; i < taps[n].size(); ++i) {
          const Tap& t = taps[n][i];
          gi(t.y0, t.x0) += go[i] * (S(1) - t.wy) * (S(1) - t.wx);
          gi(t.y0, t.x1) += go[i] * (S(1) - t.wy) * t.wx;
          gi(t.y1, t.x0) += go[i] * t.wy * (S(1) - t.wx);
          gi(t.y1, t.x1) += go[i] * t.wy * t.wx;
        }
      }
  });
}

template <typename S>
Var<S> batch_norm(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta, RunningStats<S>& running,
                  bool training, S momentum, S eps) {
  const Shape xs = x.shape();
  const int C = xs.c;
  const Eigen::Index M = Eigen::Index(xs.n) * xs.h * xs.w;
  if (running.mean.empty()) {
    running.mean = Tensor<S>(Shape{1, C, 1, 1}, S(0));
    running.var = Tensor<S>(Shape{1, C, 1, 1}, S(1));
  }
  Eigen::Array<S, Eigen::Dynamic, 1> mu(C), inv_std(C);
  for (int c = 0; c < C; ++c) {
    if (training) {
      S s = 0, s2 = 0;
      for (int n = 0; n < xs.n; ++n) s += x.value().plane(n, c).sum();
      const S m = s / S(M);
      for (int n = 0; n < xs.n; ++n) s2 += (x.value().plane(n, c) - m).square().sum();
      const S var = s2 / S(M);
      mu[c] = m;
      inv_std[c] = S(1) / std::sqrt(var + eps);
      running.mean.data[c] = (S(1) - momentum) * running.mean.data[c] + momentum * m;
      const S unbiased = M > 1 ? s2 / S(M - 1) : var;
      running.var.data[c] = (S(1) - momentum) * running.var.data[c] + momentum * unbiased;
    } else {
      mu[c] = running.mean.data[c];
      inv_std[c] = S(1) / std::sqrt(running.var.data[c] + eps);
    }
  }
  Tensor<S> xhat(xs), out(xs);
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < C; ++c) {
      xhat.plane(n, c) = (x.value().plane(n, c) - mu[c]) * inv_std[c];
      out.plane(n, c) = xhat.plane(n, c) * gamma.value().data[c] + beta.value().data[c];
    }
  return Var<S>::make(std::move(out), {x, gamma, beta}, [=, xhat = std::move(xhat)](Node<S>& self) {
    const Tensor<S>& g = value_of(self, 1);
    for (int c = 0; c < C; ++c) {
      S sum_dy = 0, sum_dy_xhat = 0;
      for (int n = 0; n < xs.n; ++n) {
        sum_dy += self.grad.plane(n, c).sum();
        sum_dy_xhat += (self.grad.plane(n, c) * xhat.plane(n, c)).sum();
      }
      if (wants(self, 1)) grad_of(self, 1).data[c] += sum_dy_xhat;
      if (wants(self, 2)) grad_of(self, 2).data[c] += sum_dy;
      if (!wants(self, 0)) continue;
      const S gc = g.data[c];
      for (int n = 0; n < xs.n; ++n) {
        if (training) {
          grad_of(self, 0).plane(n, c) += gc * inv_std[c] / S(M) *
                                          (S(M) * self.grad.plane(n, c) - sum_dy - xhat.plane(n, c) * sum_dy_xhat);
        } else {
          grad_of(self, 0).plane(n, c) += gc * inv_std[c] * self.grad.plane(n, c);
        }
      }
    }
  });
}

template <typename S>
Var<S> instance_norm(const Var<S>& x, const Var<S>& gamma, const Var<S>& beta, S eps) {
  const Shape xs = x.shape();
  const S M = S(xs.plane());
  Tensor<S> xhat(xs), out(xs);
  std::vector<S> inv_std(std::size_t(xs.n) * xs.c);
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c) {
      auto in = x.value().plane(n, c);
      const S m = in.sum() / M;
      const S var = (in - m).square().sum() / M;
      const S is = S(1) / std::sqrt(var + eps);
      inv_std[n * xs.c + c] = is;
      xhat.plane(n, c) = (in - m) * is;
      const S gc = gamma.defined() ? gamma.value().data[c] : S(1);
      const S bc = beta.defined() ? beta.value().data[c] : S(0);
      out.plane(n, c) = xhat.plane(n, c) * gc + bc;
    }
  return Var<S>::make(std::move(out), {x, gamma, beta}, [=, xhat = std::move(xhat)](Node<S>& self) {
    for (int n = 0; n < xs.n; ++n)
      for (int c = 0; c < xs.c; ++c) {
        auto dy = self.grad.plane(n, c);
        auto xh = xhat.plane(n, c);
        const S sum_dy = dy.sum();
        const S sum_dy_xhat = (dy * xh).sum();
        if (wants(self, 1)) grad_of(self, 1).data[c] += sum_dy_xhat;
        if (wants(self, 2)) grad_of(self, 2).data[c] += sum_dy;
        if (!wants(self, 0)) continue;
        const S gc = self.parents[1] ? value_of(self, 1).data[c] : S(1);
        grad_of(self, 0).plane(n, c) +=
            gc * inv_std[n * xs.c + c] / M * (M * dy - sum_dy - xh * sum_dy_xhat);
      }
  });
}

template <typename S>
Var<S> sum(const Var<S>& x) {
  return Var<S>::make(scalar_tensor(S(x.value().data.sum())), {x}, [](Node<S>& self) {
    grad_of(self, 0).data += self.grad.data[0];
  });
}

template <typename S>
Var<S> mean(const Var<S>& x) {
  const S n = S(x.value().data.size());
  return Var<S>::make(scalar_tensor(S(x.value().data.sum() / n)), {x}, [n](Node<S>& self) {
    grad_of(self, 0).data += self.grad.data[0] / n;
  });
}

template <typename S>
Var<S> spatial_mean(const Var<S>& x) {
  const Shape xs = x.shape();
  const S inv = S(1) / S(xs.plane());
  Tensor<S> out(Shape{xs.n, xs.c, 1, 1});
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c) out.at(n, c, 0, 0) = x.value().plane(n, c).sum() * inv;
  return Var<S>::make(std::move(out), {x}, [xs, inv](Node<S>& self) {
    Tensor<S>& g = grad_of(self, 0);
    for (int n = 0; n < xs.n; ++n)
      for (int c = 0; c < xs.c; ++c) g.plane(n, c) += self.grad.at(n, c, 0, 0) * inv;
  });
}

template <typename S>
Var<S> mean_squared_to(const Var<S>& x, S target) {
  const S n = S(x.value().data.size());
  const S v = (x.value().data - target).square().sum() / n;
  return Var<S>::make(scalar_tensor(v), {x}, [n, target](Node<S>& self) {
    grad_of(self, 0).data += self.grad.data[0] * S(2) / n * (value_of(self, 0).data - target);
  });
}

template <typename S>
Var<S> mean_abs_diff(const Var<S>& a, const Var<S>& b) {
  require(a.shape() == b.shape(), "mean_abs_diff", a.shape(), b.shape());
  const S n = S(a.value().data.size());
  const S v = (a.value().data - b.value().data).abs().sum() / n;
  return Var<S>::make(scalar_tensor(v), {a, b}, [n](Node<S>& self) {
    const auto sgn = (value_of(self, 0).data - value_of(self, 1).data).sign() * (self.grad.data[0] / n);
    if (wants(self, 0)) grad_of(self, 0).data += sgn;
    if (wants(self, 1)) grad_of(self, 1).data -= sgn;
  });
}

template <typename S>
Var<S> mean_squared_diff(const Var<S>& a, const Var<S>& b) {
  require(a.shape() == b.shape(), "mean_squared_diff", a.shape(), b.shape());
  const S n = S(a.value().data.size());
  const S v = (a.value().data - b.value().data).square().sum() / n;
  return Var<S>::make(scalar_tensor(v), {a, b}, [n](Node<S>& self) {
    const auto d = (value_of(self, 0).data - value_of(self, 1).data) * (S(2) * self.grad.data[0] / n);
    if (wants(self, 0)) grad_of(self, 0).data += d;
    if (wants(self, 1)) grad_of(self, 1).data -= d;
  });
}

template <typename S>
Var<S> mean_hinge(const Var<S>& x, S sign) {
  const S n = S(x.value().data.size());
  const S v = (S(1) + sign * x.value().data).max(S(0)).sum() / n;
  return Var<S>::make(scalar_tensor(v), {x}, [n, sign](Node<S>& self) {
    const auto active = ((S(1) + sign * value_of(self, 0).data) > S(0)).template cast<S>();
    grad_of(self, 0).data += active * (sign * self.grad.data[0] / n);
  });
}

template <typename S>
Tensor<S> softmax_channels(const Tensor<S>& logits) {
  const Shape s = logits.shape;
  Tensor<S> p(s);
  for (int n = 0; n < s.n; ++n)
    for (Eigen::Index i = 0; i < s.plane(); ++i) {
      S mx = logits.ptr(n, 0)[i];
      for (int c = 1; c < s.c; ++c) mx = std::max(mx, logits.ptr(n, c)[i]);
      S z = 0;
      for (int c = 0; c < s.c; ++c) z += (p.ptr(n, c)[i] = std::exp(logits.ptr(n, c)[i] - mx));
      for (int c = 0; c < s.c; ++c) p.ptr(n, c)[i] /= z;
    }
  return p;
}

template <typename S>
Var<S> softmax_cross_entropy(const Var<S>& logits, const std::vector<int>& labels) {
  const Shape s = logits.shape();
  if (Eigen::Index(labels.size()) != Eigen::Index(s.n) * s.plane())
    throw std::invalid_argument("softmax_cross_entropy: label count mismatch");
  for (int l : labels)
    if (l < 0 || l >= s.c) throw std::out_of_range("softmax_cross_entropy: label outside channel range");
  Tensor<S> prob = softmax_channels(logits.value());
  const S count = S(labels.size());
  S loss = 0;
  for (int n = 0; n < s.n; ++n)
    for (Eigen::Index i = 0; i < s.plane(); ++i) {
      const int l = labels[n * s.plane() + i];
      // log-softmax evaluated directly for accuracy at saturated logits
      S mx = logits.value().ptr(n, 0)[i];
      for (int c = 1; c < s.c; ++c) mx = std::max(mx, logits.value().ptr(n, c)[i]);
      S z = 0;
      for (int c = 0; c < s.c; ++c) z += std::exp(logits.value().ptr(n, c)[i] - mx);
      loss += std::log(z) + mx - logits.value().ptr(n, l)[i];
    }
  return Var<S>::make(scalar_tensor(loss / count), {logits}, [=, prob = std::move(prob)](Node<S>& self) {
    Tensor<S>& g = grad_of(self, 0);
    const S k = self.grad.data[0] / count;
    g.data += prob.data * k;
    for (int n = 0; n < s.n; ++n)
      for (Eigen::Index i = 0; i < s.plane(); ++i) g.ptr(n, labels[n * s.plane() + i])[i] -= k;
  });
}

#define REENACT_INSTANTIATE_OPS(S)                                                                      \
  template Var<S> conv2d(const Var<S>&, const Var<S>&, const Var<S>&, int, int);                        \
  template Var<S> conv_transpose2d(const Var<S>&, const Var<S>&, const Var<S>&, int, int, int);         \
  template Var<S> linear(const Var<S>&, const Var<S>&, const Var<S>&);                                  \
  template Var<S> relu(const Var<S>&);                                                                  \
  template Var<S> leaky_relu(const Var<S>&, S);                                                         \
  template Var<S> sigmoid(const Var<S>&);                                                               \
  template Var<S> tanh(const Var<S>&);                                                                  \
  template Var<S> add(const Var<S>&, const Var<S>&);                                                    \
  template Var<S> sub(const Var<S>&, const Var<S>&);                                                    \
  template Var<S> mul(const Var<S>&, const Var<S>&);                                                    \
  template Var<S> scale(const Var<S>&, S);                                                              \
  template Var<S> add_scalar(const Var<S>&, S);                                                         \
  template Var<S> mul_channels(const Var<S>&, const Var<S>&);                                           \
  template Var<S> concat_channels(const std::vector<Var<S>>&);                                          \
  template Var<S> slice_channels(const Var<S>&, int, int);                                              \
  template Var<S> select_batch(const Var<S>&, const std::vector<int>&);                                 \
  template Var<S> reshape(const Var<S>&, Shape);                                                        \
  template Var<S> broadcast_spatial(const Var<S>&, int, int);                                           \
  template Var<S> avg_pool2(const Var<S>&);                                                             \
  template Var<S> upsample_nearest2(const Var<S>&);                                                     \
  template Var<S> resize_nearest(const Var<S>&, int, int);                                              \
  template Var<S> crop(const Var<S>&, int, int, int, int);                                              \
  template Var<S> crop_resize(const Var<S>&, const std::vector<std::array<float, 4>>&, int, int);       \
  template Var<S> batch_norm(const Var<S>&, const Var<S>&, const Var<S>&, RunningStats<S>&, bool, S, S); \
  template Var<S> instance_norm(const Var<S>&, const Var<S>&, const Var<S>&, S);                        \
  template Var<S> sum(const Var<S>&);                                                                   \
  template Var<S> mean(const Var<S>&);                                                                  \
  template Var<S> spatial_mean(const Var<S>&);                                                          \
  template Var<S> mean_squared_to(const Var<S>&, S);                                                    \
  template Var<S> mean_abs_diff(const Var<S>&, const Var<S>&);                                          \
  template Var<S> mean_squared_diff(const Var<S>&, const Var<S>&);                                      \
  template Var<S> mean_hinge(const Var<S>&, S);                                                         \
  template Var<S> softmax_cross_entropy(const Var<S>&, const std::vector<int>&);                        \
  template Tensor<S> softmax_channels(const Tensor<S>&);

REENACT_INSTANTIATE_OPS(float)
REENACT_INSTANTIATE_OPS(double)

}  // namespace reenact::nn
