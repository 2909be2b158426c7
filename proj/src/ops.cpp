#include "icgmvs/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "icgmvs/parallel.hpp"

namespace icgmvs {

using detail::grad_of;
using detail::make_result;

namespace {

struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  if (axis >= s.size())
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.n = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

// For every element of `out`, the flat offset of the element of `in` it reads
// under broadcasting. `in` is right-aligned against `out`.
std::vector<std::size_t> broadcast_offsets(const Shape& in, const Shape& out) {
  const std::size_t rank = out.size();
  const std::size_t lead = rank - in.size();
  std::vector<std::size_t> in_strides(rank, 0);
  auto st = strides_of(in);
  for (std::size_t i = 0; i < in.size(); ++i) in_strides[lead + i] = in[i] == 1 ? 0 : st[i];
  std::size_t n = shape_numel(out);
  std::vector<std::size_t> offsets(n);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t off = 0;
  for (std::size_t k = 0; k < n; ++k) {
    offsets[k] = off;
    for (std::size_t ax = rank; ax-- > 0;) {
      ++idx[ax];
      off += in_strides[ax];
      if (idx[ax] < out[ax]) break;
      off -= in_strides[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
  return offsets;
}

struct BinaryPlan {
  Shape out;
  bool same = true;
  std::shared_ptr<std::vector<std::size_t>> ia, ib;
};

BinaryPlan plan_binary(const Tensor& a, const Tensor& b) {
  BinaryPlan p;
  if (a.shape() == b.shape()) {
    p.out = a.shape();
    return p;
  }
  p.out = broadcast_shape(a.shape(), b.shape());
  p.same = false;
  p.ia = std::make_shared<std::vector<std::size_t>>(broadcast_offsets(a.shape(), p.out));
  p.ib = std::make_shared<std::vector<std::size_t>>(broadcast_offsets(b.shape(), p.out));
  return p;
}

// f(av, bv) -> value; da(av, bv, g) and db(av, bv, g) -> gradient contributions.
template <typename F, typename DA, typename DB>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, F f, DA da, DB db) {
  BinaryPlan plan = plan_binary(a, b);
  const std::size_t n = shape_numel(plan.out);
  std::vector<double> out(n);
  auto ad = a.data();
  auto bd = b.data();
  if (plan.same) {
    for (std::size_t k = 0; k < n; ++k) out[k] = f(ad[k], bd[k]);
  } else {
    const auto& ia = *plan.ia;
    const auto& ib = *plan.ib;
    for (std::size_t k = 0; k < n; ++k) out[k] = f(ad[ia[k]], bd[ib[k]]);
  }
  auto pa = a.impl();
  auto pb = b.impl();
  return make_result(name, plan.out, std::move(out), {a, b}, [pa, pb, plan, da, db](const TensorImpl& o) {
    const auto& g = o.grad;
    auto* ga = grad_of(pa);
    auto* gb = grad_of(pb);
    const auto& av = pa->data;
    const auto& bv = pb->data;
    const std::size_t n = g.size();
    for (std::size_t k = 0; k < n; ++k) {
      std::size_t i = plan.same ? k : (*plan.ia)[k];
      std::size_t j = plan.same ? k : (*plan.ib)[k];
      if (ga) (*ga)[i] += da(av[i], bv[j], g[k]);
      if (gb) (*gb)[j] += db(av[i], bv[j], g[k]);
    }
  });
}

// f(x) -> y; df(x, y) -> dy/dx.
template <typename F, typename DF>
Tensor unary_op(const char* name, const Tensor& x, F f, DF df) {
  auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t k = 0; k < xd.size(); ++k) out[k] = f(xd[k]);
  auto px = x.impl();
  return make_result(name, x.shape(), std::move(out), {x}, [px, df](const TensorImpl& o) {
    auto* gx = grad_of(px);
    if (!gx) return;
    for (std::size_t k = 0; k < o.grad.size(); ++k) (*gx)[k] += o.grad[k] * df(px->data[k], o.data[k]);
  });
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    std::size_t ea = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    std::size_t eb = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (ea != eb && ea != 1 && eb != 1)
      throw DimensionError("shapes " + shape_str(a) + " and " + shape_str(b) + " do not broadcast");
    out[i] = std::max(ea, eb);
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double g) { return g; }, [](double, double, double g) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double g) { return g; }, [](double, double, double g) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double g) { return g * y; }, [](double x, double, double g) { return g * x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y, double g) { return g / y; },
      [](double x, double y, double g) { return -g * x / (y * y); });
}

Tensor scale(const Tensor& x, double s) {
  return unary_op("scale", x, [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& x, double s) {
  return unary_op("add_scalar", x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      "sigmoid", x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& x) {
  return unary_op("exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary_op("log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor square(const Tensor& x) {
  return unary_op("square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor sum(const Tensor& x) {
  auto xd = x.data();
  double s = 0.0;
  for (double v : xd) s += v;
  auto px = x.impl();
  return make_result("sum", Shape{1}, {s}, {x}, [px](const TensorImpl& o) {
    auto* gx = grad_of(px);
    if (!gx) return;
    for (auto& g : *gx) g += o.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor sum_axis(const Tensor& x, std::size_t axis, bool keepdim) {
  const Shape& s = x.shape();
  AxisSplit sp = split_at(s, axis);
  Shape out_shape;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i == axis) {
      if (keepdim) out_shape.push_back(1);
    } else {
      out_shape.push_back(s[i]);
    }
  }
  if (out_shape.empty()) out_shape.push_back(1);
  std::vector<double> out(sp.outer * sp.inner, 0.0);
  auto xd = x.data();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t k = 0; k < sp.n; ++k) {
      const double* src = xd.data() + (o * sp.n + k) * sp.inner;
      double* dst = out.data() + o * sp.inner;
      for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
    }
  auto px = x.impl();
  return make_result("sum_axis", out_shape, std::move(out), {x}, [px, sp](const TensorImpl& o) {
    auto* gx = grad_of(px);
    if (!gx) return;
    for (std::size_t a = 0; a < sp.outer; ++a)
      for (std::size_t k = 0; k < sp.n; ++k) {
        double* dst = gx->data() + (a * sp.n + k) * sp.inner;
        const double* g = o.grad.data() + a * sp.inner;
        for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += g[i];
      }
  });
}

Tensor mean_axis(const Tensor& x, std::size_t axis, bool keepdim) {
  return scale(sum_axis(x, axis, keepdim), 1.0 / static_cast<double>(x.dim(axis)));
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw DimensionError("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  std::vector<double> out(x.data().begin(), x.data().end());
  auto px = x.impl();
  return make_result("reshape", std::move(shape), std::move(out), {x}, [px](const TensorImpl& o) {
    auto* gx = grad_of(px);
    if (!gx) return;
    for (std::size_t k = 0; k < o.grad.size(); ++k) (*gx)[k] += o.grad[k];
  });
}

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  if (broadcast_shape(x.shape(), shape) != shape)
    throw DimensionError("cannot broadcast " + shape_str(x.shape()) + " to " + shape_str(shape));
  auto offsets = std::make_shared<std::vector<std::size_t>>(broadcast_offsets(x.shape(), shape));
  auto xd = x.data();
  std::vector<double> out(offsets->size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = xd[(*offsets)[k]];
  auto px = x.impl();
  return make_result("broadcast_to", shape, std::move(out), {x}, [px, offsets](const TensorImpl& o) {
    auto* gx = grad_of(px);
    if (!gx) return;
    for (std::size_t k = 0; k < o.grad.size(); ++k) (*gx)[(*offsets)[k]] += o.grad[k];
  });
}

Tensor concat(const std::vector<Tensor>& xs, std::size_t axis) {
  if (xs.empty()) throw DimensionError("concat of zero tensors");
  if (xs.size() == 1) return xs[0];
  Shape out_shape = xs[0].shape();
  if (axis >= out_shape.size()) throw DimensionError("concat axis out of range");
  out_shape[axis] = 0;
  for (const auto& t : xs) {
    const Shape& s = t.shape();
    if (s.size() != out_shape.size()) throw DimensionError("concat rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i)
      if (i != axis && s[i] != out_shape[i])
        throw DimensionError("concat extent mismatch: " + shape_str(s) + " vs " + shape_str(xs[0].shape()));
    out_shape[axis] += s[axis];
  }
  AxisSplit sp = split_at(out_shape, axis);
  std::vector<double> out(shape_numel(out_shape));
  std::vector<std::size_t> widths;
  std::size_t base = 0;
  for (const auto& t : xs) {
    std::size_t w = t.dim(axis) * sp.inner;
    auto td = t.data();
    for (std::size_t o = 0; o < sp.outer; ++o)
      std::copy_n(td.data() + o * w, w, out.data() + o * sp.n * sp.inner + base);
    widths.push_back(w);
    base += w;
  }
  std::vector<std::shared_ptr<TensorImpl>> parents;
  for (const auto& t : xs) parents.push_back(t.impl());
  return make_result("concat", out_shape, std::move(out), xs, [parents, widths, sp](const TensorImpl& o) {
    std::size_t base = 0;
    for (std::size_t p = 0; p < parents.size(); ++p) {
      auto* g = grad_of(parents[p]);
      std::size_t w = widths[p];
      if (g) {
        for (std::size_t a = 0; a < sp.outer; ++a) {
          const double* src = o.grad.data() + a * sp.n * sp.inner + base;
          double* dst = g->data() + a * w;
          for (std::size_t i = 0; i < w; ++i) dst[i] += src[i];
        }
      }
      base += w;
    }
  });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  AxisSplit sp = split_at(x.shape(), axis);
  if (begin >= end || end > sp.n)
    throw DimensionError("invalid slice [" + std::to_string(begin) + "," + std::to_string(end) + ") of " +
                         shape_str(x.shape()));
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  const std::size_t w = (end - begin) * sp.inner;
  std::vector<double> out(sp.outer * w);
  auto xd = x.data();
  for (std::size_t o = 0; o < sp.outer; ++o)
    std::copy_n(xd.data() + (o * sp.n + begin) * sp.inner, w, out.data() + o * w);
  auto px = x.impl();
  return make_result("slice", out_shape, std::move(out), {x}, [px, sp, begin, w](const TensorImpl& o) {
    auto* gx = grad_of(px);
    if (!gx) return;
    for (std::size_t a = 0; a < sp.outer; ++a) {
      double* dst = gx->data() + (a * sp.n + begin) * sp.inner;
      const double* src = o.grad.data() + a * w;
      for (std::size_t i = 0; i < w; ++i) dst[i] += src[i];
    }
  });
}

Tensor pad(const Tensor& x, const std::vector<std::pair<std::size_t, std::size_t>>& pads) {
  const Shape& s = x.shape();
  if (pads.size() > s.size()) throw DimensionError("pad spec longer than tensor rank");
  Shape out_shape = s;
  std::vector<std::size_t> before(s.size(), 0);
  for (std::size_t i = 0; i < pads.size(); ++i) {
    before[i] = pads[i].first;
    out_shape[i] += pads[i].first + pads[i].second;
  }
  auto out_strides = strides_of(out_shape);
  // Offset in the output of each input element.
  auto map = std::make_shared<std::vector<std::size_t>>(x.numel());
  std::vector<std::size_t> idx(s.size(), 0);
  for (std::size_t k = 0; k < map->size(); ++k) {
    std::size_t off = 0;
    for (std::size_t ax = 0; ax < s.size(); ++ax) off += (idx[ax] + before[ax]) * out_strides[ax];
    (*map)[k] = off;
    for (std::size_t ax = s.size(); ax-- > 0;) {
      if (++idx[ax] < s[ax]) break;
      idx[ax] = 0;
    }
  }
  std::vector<double> out(shape_numel(out_shape), 0.0);
  auto xd = x.data();
  for (std::size_t k = 0; k < map->size(); ++k) out[(*map)[k]] = xd[k];
  auto px = x.impl();
  return make_result("pad", out_shape, std::move(out), {x}, [px, map](const TensorImpl& o) {
    auto* gx = grad_of(px);
    if (!gx) return;
    for (std::size_t k = 0; k < map->size(); ++k) (*gx)[k] += o.grad[(*map)[k]];
  });
}

Tensor softmax_axis(const Tensor& x, std::size_t axis) {
  AxisSplit sp = split_at(x.shape(), axis);
  auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.n * sp.inner + i;
      double m = xd[base];
      for (std::size_t k = 1; k < sp.n; ++k) m = std::max(m, xd[base + k * sp.inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < sp.n; ++k) {
        double e = std::exp(xd[base + k * sp.inner] - m);
        out[base + k * sp.inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < sp.n; ++k) out[base + k * sp.inner] /= z;
    }
  auto px = x.impl();
  return make_result("softmax", x.shape(), std::move(out), {x}, [px, sp](const TensorImpl& o) {
    auto* gx = grad_of(px);
    if (!gx) return;
    for (std::size_t a = 0; a < sp.outer; ++a)
      for (std::size_t i = 0; i < sp.inner; ++i) {
        const std::size_t base = a * sp.n * sp.inner + i;
        double dot = 0.0;
        for (std::size_t k = 0; k < sp.n; ++k) dot += o.grad[base + k * sp.inner] * o.data[base + k * sp.inner];
        for (std::size_t k = 0; k < sp.n; ++k) {
          std::size_t j = base + k * sp.inner;
          (*gx)[j] += o.data[j] * (o.grad[j] - dot);
        }
      }
  });
}

// ---- convolution ----------------------------------------------------------

namespace {

struct ConvGeom {
  std::size_t cin = 0, cout = 0;
  std::array<std::size_t, 3> in{}, out{}, k{}, stride{}, pad{};
  std::size_t in_plane() const { return in[0] * in[1] * in[2]; }
  std::size_t out_plane() const { return out[0] * out[1] * out[2]; }
  std::size_t kvol() const { return k[0] * k[1] * k[2]; }
};

// Range [lo, hi) of output positions o such that o*stride + kk - pad lies in [0, n_in).
inline void valid_range(std::size_t n_out, std::size_t n_in, std::size_t stride, std::size_t kk,
                        std::size_t pad, std::size_t& lo, std::size_t& hi) {
  long s = static_cast<long>(stride);
  long off = static_cast<long>(kk) - static_cast<long>(pad);
  long l = off >= 0 ? 0 : (-off + s - 1) / s;
  long h = (static_cast<long>(n_in) - 1 - off);
  h = h < 0 ? -1 : h / s;
  lo = static_cast<std::size_t>(std::max<long>(l, 0));
  hi = static_cast<std::size_t>(std::min<long>(h + 1, static_cast<long>(n_out)));
  if (hi < lo) hi = lo;
}

// out[o] (+)= sum_i w[o,i,k] * in[i, pos*stride + k - pad]; the innermost
// loop runs along the last spatial axis.
void conv_forward_channel(const ConvGeom& g, const double* in, const double* w, double* out, std::size_t o) {
  const std::size_t ip = g.in_plane(), op = g.out_plane(), kv = g.kvol();
  double* out_o = out + o * op;
  for (std::size_t i = 0; i < g.cin; ++i) {
    const double* in_i = in + i * ip;
    const double* w_oi = w + (o * g.cin + i) * kv;
    for (std::size_t kd = 0; kd < g.k[0]; ++kd) {
      std::size_t d_lo, d_hi;
      valid_range(g.out[0], g.in[0], g.stride[0], kd, g.pad[0], d_lo, d_hi);
      for (std::size_t kh = 0; kh < g.k[1]; ++kh) {
        std::size_t h_lo, h_hi;
        valid_range(g.out[1], g.in[1], g.stride[1], kh, g.pad[1], h_lo, h_hi);
        for (std::size_t kw = 0; kw < g.k[2]; ++kw) {
          std::size_t w_lo, w_hi;
          valid_range(g.out[2], g.in[2], g.stride[2], kw, g.pad[2], w_lo, w_hi);
          const double wv = w_oi[(kd * g.k[1] + kh) * g.k[2] + kw];
          for (std::size_t od = d_lo; od < d_hi; ++od) {
            std::size_t id = od * g.stride[0] + kd - g.pad[0];
            for (std::size_t oh = h_lo; oh < h_hi; ++oh) {
              std::size_t ih = oh * g.stride[1] + kh - g.pad[1];
              double* orow = out_o + (od * g.out[1] + oh) * g.out[2];
              const double* irow = in_i + (id * g.in[1] + ih) * g.in[2];
              const std::size_t s = g.stride[2];
              if (s == 1) {
                const double* src = irow + (w_lo + kw - g.pad[2]);
                for (std::size_t ow = w_lo; ow < w_hi; ++ow) orow[ow] += wv * src[ow - w_lo];
              } else {
                for (std::size_t ow = w_lo; ow < w_hi; ++ow) orow[ow] += wv * irow[ow * s + kw - g.pad[2]];
              }
            }
          }
        }
      }
    }
  }
}

// gin[i] += sum_o w[o,i,k] * gout[o, ...]  (adjoint of conv_forward_channel)
void conv_backward_input_channel(const ConvGeom& g, const double* gout, const double* w, double* gin,
                                 std::size_t i) {
  const std::size_t ip = g.in_plane(), op = g.out_plane(), kv = g.kvol();
  double* gin_i = gin + i * ip;
  for (std::size_t o = 0; o < g.cout; ++o) {
    const double* go = gout + o * op;
    const double* w_oi = w + (o * g.cin + i) * kv;
    for (std::size_t kd = 0; kd < g.k[0]; ++kd) {
      std::size_t d_lo, d_hi;
      valid_range(g.out[0], g.in[0], g.stride[0], kd, g.pad[0], d_lo, d_hi);
      for (std::size_t kh = 0; kh < g.k[1]; ++kh) {
        std::size_t h_lo, h_hi;
        valid_range(g.out[1], g.in[1], g.stride[1], kh, g.pad[1], h_lo, h_hi);
        for (std::size_t kw = 0; kw < g.k[2]; ++kw) {
          std::size_t w_lo, w_hi;
          valid_range(g.out[2], g.in[2], g.stride[2], kw, g.pad[2], w_lo, w_hi);
          const double wv = w_oi[(kd * g.k[1] + kh) * g.k[2] + kw];
          for (std::size_t od = d_lo; od < d_hi; ++od) {
            std::size_t id = od * g.stride[0] + kd - g.pad[0];
            for (std::size_t oh = h_lo; oh < h_hi; ++oh) {
              std::size_t ih = oh * g.stride[1] + kh - g.pad[1];
              const double* grow = go + (od * g.out[1] + oh) * g.out[2];
              double* irow = gin_i + (id * g.in[1] + ih) * g.in[2];
              const std::size_t s = g.stride[2];
              for (std::size_t ow = w_lo; ow < w_hi; ++ow) irow[ow * s + kw - g.pad[2]] += wv * grow[ow];
            }
          }
        }
      }
    }
  }
}

// gw[o,i,k] += sum_pos gout[o,pos] * in[i, pos*stride + k - pad]
void conv_backward_weight_channel(const ConvGeom& g, const double* gout, const double* in, double* gw,
                                  std::size_t o) {
  const std::size_t ip = g.in_plane(), op = g.out_plane(), kv = g.kvol();
  const double* go = gout + o * op;
  for (std::size_t i = 0; i < g.cin; ++i) {
    const double* in_i = in + i * ip;
    double* gw_oi = gw + (o * g.cin + i) * kv;
    for (std::size_t kd = 0; kd < g.k[0]; ++kd) {
      std::size_t d_lo, d_hi;
      valid_range(g.out[0], g.in[0], g.stride[0], kd, g.pad[0], d_lo, d_hi);
      for (std::size_t kh = 0; kh < g.k[1]; ++kh) {
        std::size_t h_lo, h_hi;
        valid_range(g.out[1], g.in[1], g.stride[1], kh, g.pad[1], h_lo, h_hi);
        for (std::size_t kw = 0; kw < g.k[2]; ++kw) {
          std::size_t w_lo, w_hi;
          valid_range(g.out[2], g.in[2], g.stride[2], kw, g.pad[2], w_lo, w_hi);
          double acc = 0.0;
          for (std::size_t od = d_lo; od < d_hi; ++od) {
            std::size_t id = od * g.stride[0] + kd - g.pad[0];
            for (std::size_t oh = h_lo; oh < h_hi; ++oh) {
              std::size_t ih = oh * g.stride[1] + kh - g.pad[1];
              const double* grow = go + (od * g.out[1] + oh) * g.out[2];
              const double* irow = in_i + (id * g.in[1] + ih) * g.in[2];
              const std::size_t s = g.stride[2];
              for (std::size_t ow = w_lo; ow < w_hi; ++ow) acc += grow[ow] * irow[ow * s + kw - g.pad[2]];
            }
          }
          gw_oi[(kd * g.k[1] + kh) * g.k[2] + kw] += acc;
        }
      }
    }
  }
}

std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  if (stride == 0) throw ParameterError("convolution stride must be >= 1");
  if (in + 2 * pad < k)
    throw DimensionError("kernel extent " + std::to_string(k) + " exceeds padded input " +
                         std::to_string(in + 2 * pad));
  return (in + 2 * pad - k) / stride + 1;
}

// Shared conv over three spatial axes; 2D ops lift to depth 1.
Tensor conv_core(const char* name, const Tensor& x, const Tensor& weight, const Tensor& bias, ConvGeom g,
                 Shape out_shape) {
  const std::size_t op = g.out_plane();
  std::vector<double> out(g.cout * op, 0.0);
  auto xd = x.data();
  auto wd = weight.data();
  if (bias.defined()) {
    auto bd = bias.data();
    for (std::size_t o = 0; o < g.cout; ++o) std::fill_n(out.data() + o * op, op, bd[o]);
  }
  parallel_for(0, g.cout, [&](std::size_t o) { conv_forward_channel(g, xd.data(), wd.data(), out.data(), o); });

  auto px = x.impl();
  auto pw = weight.impl();
  std::shared_ptr<TensorImpl> pb = bias.defined() ? bias.impl() : nullptr;
  std::vector<Tensor> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  return make_result(name, std::move(out_shape), std::move(out), parents, [px, pw, pb, g](const TensorImpl& o) {
    const double* go = o.grad.data();
    if (auto* gx = grad_of(px))
      parallel_for(0, g.cin, [&](std::size_t i) { conv_backward_input_channel(g, go, pw->data.data(), gx->data(), i); });
    if (auto* gw = grad_of(pw))
      parallel_for(0, g.cout,
                   [&](std::size_t c) { conv_backward_weight_channel(g, go, px->data.data(), gw->data(), c); });
    if (pb) {
      if (auto* gb = grad_of(pb)) {
        const std::size_t op = g.out_plane();
        for (std::size_t c = 0; c < g.cout; ++c) {
          double acc = 0.0;
          for (std::size_t k = 0; k < op; ++k) acc += go[c * op + k];
          (*gb)[c] += acc;
        }
      }
    }
  });
}

void check_bias(const ConvParams& p, std::size_t cout) {
  if (p.bias.defined() && p.bias.numel() != cout)
    throw DimensionError("bias length " + std::to_string(p.bias.numel()) + " != out channels " +
                         std::to_string(cout));
}

}  // namespace

Tensor conv2d(const Tensor& x, const ConvParams& p) {
  if (x.rank() != 3) throw DimensionError("conv2d expects (C,H,W), got " + shape_str(x.shape()));
  const Shape& ws = p.weight.shape();
  if (ws.size() != 4) throw DimensionError("conv2d weight must be (O,I,kh,kw), got " + shape_str(ws));
  if (ws[1] != x.dim(0))
    throw DimensionError("conv2d channel mismatch: input " + std::to_string(x.dim(0)) + ", weight expects " +
                         std::to_string(ws[1]));
  check_bias(p, ws[0]);
  ConvGeom g;
  g.cin = ws[1];
  g.cout = ws[0];
  g.in = {1, x.dim(1), x.dim(2)};
  g.k = {1, ws[2], ws[3]};
  g.stride = {1, p.stride[0], p.stride[1]};
  g.pad = {0, p.padding[0], p.padding[1]};
  for (int a = 0; a < 3; ++a) g.out[a] = conv_out_extent(g.in[a], g.k[a], g.stride[a], g.pad[a]);
  return conv_core("conv2d", x, p.weight, p.bias, g, Shape{g.cout, g.out[1], g.out[2]});
}

Tensor conv3d(const Tensor& x, const ConvParams& p) {
  if (x.rank() != 4) throw DimensionError("conv3d expects (C,D,H,W), got " + shape_str(x.shape()));
  const Shape& ws = p.weight.shape();
  if (ws.size() != 5) throw DimensionError("conv3d weight must be (O,I,kd,kh,kw), got " + shape_str(ws));
  if (ws[1] != x.dim(0))
    throw DimensionError("conv3d channel mismatch: input " + std::to_string(x.dim(0)) + ", weight expects " +
                         std::to_string(ws[1]));
  check_bias(p, ws[0]);
  ConvGeom g;
  g.cin = ws[1];
  g.cout = ws[0];
  g.in = {x.dim(1), x.dim(2), x.dim(3)};
  g.k = {ws[2], ws[3], ws[4]};
  g.stride = p.stride;
  g.pad = p.padding;
  for (int a = 0; a < 3; ++a) g.out[a] = conv_out_extent(g.in[a], g.k[a], g.stride[a], g.pad[a]);
  return conv_core("conv3d", x, p.weight, p.bias, g, Shape{g.cout, g.out[0], g.out[1], g.out[2]});
}

Tensor conv_transpose3d(const Tensor& x, const ConvParams& p) {
  if (x.rank() != 4) throw DimensionError("conv_transpose3d expects (C,D,H,W), got " + shape_str(x.shape()));
  const Shape& ws = p.weight.shape();
  if (ws.size() != 5) throw DimensionError("conv_transpose3d weight must be (I,O,kd,kh,kw), got " + shape_str(ws));
  if (ws[0] != x.dim(0))
    throw DimensionError("conv_transpose3d channel mismatch: input " + std::to_string(x.dim(0)) +
                         ", weight expects " + std::to_string(ws[0]));
  check_bias(p, ws[1]);
  // A transposed conv is the adjoint of a conv whose input is our output: in
  // that view "conv input" = our output and "conv output" = our input.
  ConvGeom g;
  g.cin = ws[1];   // conv-view input channels = transposed output channels
  g.cout = ws[0];  // conv-view output channels = transposed input channels
  g.out = {x.dim(1), x.dim(2), x.dim(3)};
  g.k = {ws[2], ws[3], ws[4]};
  g.stride = p.stride;
  g.pad = p.padding;
  for (int a = 0; a < 3; ++a) {
    if (p.stride[a] == 0) throw ParameterError("convolution stride must be >= 1");
    if (p.output_padding[a] >= p.stride[a] && p.output_padding[a] > 0)
      throw ParameterError("output_padding must be smaller than stride");
    long ext = static_cast<long>((g.out[a] - 1) * g.stride[a] + g.k[a] + p.output_padding[a]) -
               2 * static_cast<long>(g.pad[a]);
    if (ext <= 0) throw DimensionError("conv_transpose3d produces empty output");
    g.in[a] = static_cast<std::size_t>(ext);
  }
  // Weight layout (I_t, O_t, k) equals the conv-view layout (cout, cin, k).
  const std::size_t ip = g.in_plane();
  std::vector<double> out(g.cin * ip, 0.0);
  if (p.bias.defined()) {
    auto bd = p.bias.data();
    for (std::size_t c = 0; c < g.cin; ++c) std::fill_n(out.data() + c * ip, ip, bd[c]);
  }
  auto xd = x.data();
  auto wd = p.weight.data();
  parallel_for(0, g.cin, [&](std::size_t c) { conv_backward_input_channel(g, xd.data(), wd.data(), out.data(), c); });

  auto px = x.impl();
  auto pw = p.weight.impl();
  std::shared_ptr<TensorImpl> pb = p.bias.defined() ? p.bias.impl() : nullptr;
  std::vector<Tensor> parents{x, p.weight};
  if (p.bias.defined()) parents.push_back(p.bias);
  Shape out_shape{g.cin, g.in[0], g.in[1], g.in[2]};
  return make_result("conv_transpose3d", out_shape, std::move(out), parents, [px, pw, pb, g](const TensorImpl& o) {
    const double* go = o.grad.data();
    if (auto* gx = grad_of(px)) {
      // Adjoint of the scatter is the forward conv applied to the gradient.
      parallel_for(0, g.cout, [&](std::size_t c) { conv_forward_channel(g, go, pw->data.data(), gx->data(), c); });
    }
    if (auto* gw = grad_of(pw)) {
      // gw[c_t_in, c_t_out, k] = sum x[c_t_in, pos] * gout[c_t_out, pos*stride + k - pad]
      parallel_for(0, g.cout,
                   [&](std::size_t c) { conv_backward_weight_channel(g, px->data.data(), go, gw->data(), c); });
    }
    if (pb) {
      if (auto* gb = grad_of(pb)) {
        const std::size_t ip = g.in_plane();
        for (std::size_t c = 0; c < g.cin; ++c) {
          double acc = 0.0;
          for (std::size_t k = 0; k < ip; ++k) acc += go[c * ip + k];
          (*gb)[c] += acc;
        }
      }
    }
  });
}

// ---- sampling -------------------------------------------------------------

namespace {
struct BilinearTap {
  std::size_t i00 = 0, i01 = 0, i10 = 0, i11 = 0;
  double w00 = 0, w01 = 0, w10 = 0, w11 = 0;
  bool valid = false;
};
}  // namespace

Tensor grid_sample_bilinear(const Tensor& src, const Tensor& coords, std::vector<unsigned char>* valid_mask) {
  if (src.rank() != 3) throw DimensionError("grid_sample src must be (C,H,W), got " + shape_str(src.shape()));
  if (coords.rank() < 2 || coords.dim(0) != 2)
    throw DimensionError("grid_sample coords must be (2,...), got " + shape_str(coords.shape()));
  const std::size_t C = src.dim(0), H = src.dim(1), W = src.dim(2);
  const std::size_t M = coords.numel() / 2;
  auto cd = coords.data();
  auto taps = std::make_shared<std::vector<BilinearTap>>(M);
  if (valid_mask) valid_mask->assign(M, 0);
  for (std::size_t n = 0; n < M; ++n) {
    const double x = cd[n], y = cd[M + n];
    BilinearTap& t = (*taps)[n];
    if (!(x >= 0.0 && y >= 0.0 && x <= static_cast<double>(W - 1) && y <= static_cast<double>(H - 1))) continue;
    std::size_t x0 = static_cast<std::size_t>(std::floor(x));
    std::size_t y0 = static_cast<std::size_t>(std::floor(y));
    std::size_t x1 = std::min(x0 + 1, W - 1);
    std::size_t y1 = std::min(y0 + 1, H - 1);
    const double fx = x - static_cast<double>(x0), fy = y - static_cast<double>(y0);
    t.i00 = y0 * W + x0;
    t.i01 = y0 * W + x1;
    t.i10 = y1 * W + x0;
    t.i11 = y1 * W + x1;
    t.w00 = (1 - fx) * (1 - fy);
    t.w01 = fx * (1 - fy);
    t.w10 = (1 - fx) * fy;
    t.w11 = fx * fy;
    t.valid = true;
    if (valid_mask) (*valid_mask)[n] = 1;
  }
  Shape out_shape = coords.shape();
  out_shape[0] = C;
  std::vector<double> out(C * M, 0.0);
  auto sd = src.data();
  for (std::size_t c = 0; c < C; ++c) {
    const double* plane = sd.data() + c * H * W;
    double* o = out.data() + c * M;
    for (std::size_t n = 0; n < M; ++n) {
      const BilinearTap& t = (*taps)[n];
      if (!t.valid) continue;
      o[n] = t.w00 * plane[t.i00] + t.w01 * plane[t.i01] + t.w10 * plane[t.i10] + t.w11 * plane[t.i11];
    }
  }
  auto ps = src.impl();
  return make_result("grid_sample", out_shape, std::move(out), {src}, [ps, taps, C, H, W, M](const TensorImpl& o) {
    auto* gs = grad_of(ps);
    if (!gs) return;
    for (std::size_t c = 0; c < C; ++c) {
      double* plane = gs->data() + c * H * W;
      const double* g = o.grad.data() + c * M;
      for (std::size_t n = 0; n < M; ++n) {
        const BilinearTap& t = (*taps)[n];
        if (!t.valid) continue;
        plane[t.i00] += t.w00 * g[n];
        plane[t.i01] += t.w01 * g[n];
        plane[t.i10] += t.w10 * g[n];
        plane[t.i11] += t.w11 * g[n];
      }
    }
  });
}

namespace {
struct AxisTap {
  std::size_t lo, hi;
  double f;
};

std::vector<AxisTap> align_corner_taps(std::size_t n_in, std::size_t n_out) {
  std::vector<AxisTap> taps(n_out);
  for (std::size_t o = 0; o < n_out; ++o) {
    double s = n_out > 1 ? static_cast<double>(o) * static_cast<double>(n_in - 1) / static_cast<double>(n_out - 1)
                         : 0.0;
    std::size_t lo = std::min(static_cast<std::size_t>(std::floor(s)), n_in - 1);
    std::size_t hi = std::min(lo + 1, n_in - 1);
    taps[o] = {lo, hi, s - static_cast<double>(lo)};
  }
  return taps;
}
}  // namespace

Tensor upsample_bilinear2x(const Tensor& x) {
  if (x.rank() != 3) throw DimensionError("upsample_bilinear2x expects (C,H,W), got " + shape_str(x.shape()));
  const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const std::size_t H2 = 2 * H, W2 = 2 * W;
  auto ty = align_corner_taps(H, H2);
  auto tx = align_corner_taps(W, W2);
  std::vector<double> out(C * H2 * W2);
  auto xd = x.data();
  for (std::size_t c = 0; c < C; ++c) {
    const double* p = xd.data() + c * H * W;
    for (std::size_t oy = 0; oy < H2; ++oy) {
      const AxisTap& a = ty[oy];
      for (std::size_t ox = 0; ox < W2; ++ox) {
        const AxisTap& b = tx[ox];
        double top = (1 - b.f) * p[a.lo * W + b.lo] + b.f * p[a.lo * W + b.hi];
        double bot = (1 - b.f) * p[a.hi * W + b.lo] + b.f * p[a.hi * W + b.hi];
        out[(c * H2 + oy) * W2 + ox] = (1 - a.f) * top + a.f * bot;
      }
    }
  }
  auto px = x.impl();
  return make_result("upsample_bilinear2x", Shape{C, H2, W2}, std::move(out), {x},
                     [px, ty, tx, C, H, W, H2, W2](const TensorImpl& o) {
                       auto* gx = grad_of(px);
                       if (!gx) return;
                       for (std::size_t c = 0; c < C; ++c) {
                         double* p = gx->data() + c * H * W;
                         for (std::size_t oy = 0; oy < H2; ++oy) {
                           const AxisTap& a = ty[oy];
                           for (std::size_t ox = 0; ox < W2; ++ox) {
                             const AxisTap& b = tx[ox];
                             double g = o.grad[(c * H2 + oy) * W2 + ox];
                             p[a.lo * W + b.lo] += (1 - a.f) * (1 - b.f) * g;
                             p[a.lo * W + b.hi] += (1 - a.f) * b.f * g;
                             p[a.hi * W + b.lo] += a.f * (1 - b.f) * g;
                             p[a.hi * W + b.hi] += a.f * b.f * g;
                           }
                         }
                       }
                     });
}

// ---- normalization --------------------------------------------------------

namespace {
void check_bn(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
  if (x.rank() < 2) throw DimensionError("batch_norm expects (C, ...), got " + shape_str(x.shape()));
  if (gamma.numel() != x.dim(0) || beta.numel() != x.dim(0))
    throw DimensionError("batch_norm affine parameters do not match channel count");
}
}  // namespace

Tensor batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state) {
  check_bn(x, gamma, beta);
  const std::size_t C = x.dim(0);
  const std::size_t n = x.numel() / C;
  auto xd = x.data();
  auto gd = gamma.data();
  auto bd = beta.data();
  auto xhat = std::make_shared<std::vector<double>>(xd.size());
  auto inv_std = std::make_shared<std::vector<double>>(C);
  std::vector<double> out(xd.size());
  std::vector<double> means(C), vars(C);
  for (std::size_t c = 0; c < C; ++c) {
    const double* p = xd.data() + c * n;
    double m = 0.0;
    for (std::size_t k = 0; k < n; ++k) m += p[k];
    m /= static_cast<double>(n);
    double v = 0.0;
    for (std::size_t k = 0; k < n; ++k) v += (p[k] - m) * (p[k] - m);
    v /= static_cast<double>(n);
    means[c] = m;
    vars[c] = v;
    double is = 1.0 / std::sqrt(v + state.eps);
    (*inv_std)[c] = is;
    for (std::size_t k = 0; k < n; ++k) {
      double h = (p[k] - m) * is;
      (*xhat)[c * n + k] = h;
      out[c * n + k] = gd[c] * h + bd[c];
    }
  }
  if (state.running_mean.defined() && grad_enabled()) {
    auto rm = state.running_mean.mutable_data();
    auto rv = state.running_var.mutable_data();
    const double unbias = n > 1 ? static_cast<double>(n) / static_cast<double>(n - 1) : 1.0;
    for (std::size_t c = 0; c < C; ++c) {
      rm[c] = state.momentum * rm[c] + (1.0 - state.momentum) * means[c];
      rv[c] = state.momentum * rv[c] + (1.0 - state.momentum) * vars[c] * unbias;
    }
  }
  auto px = x.impl(), pg = gamma.impl(), pb = beta.impl();
  return make_result("batch_norm_train", x.shape(), std::move(out), {x, gamma, beta},
                     [px, pg, pb, xhat, inv_std, C, n](const TensorImpl& o) {
                       auto* gx = grad_of(px);
                       auto* gg = grad_of(pg);
                       auto* gb = grad_of(pb);
                       const double nn = static_cast<double>(n);
                       for (std::size_t c = 0; c < C; ++c) {
                         const double* g = o.grad.data() + c * n;
                         const double* h = xhat->data() + c * n;
                         double sg = 0.0, sgh = 0.0;
                         for (std::size_t k = 0; k < n; ++k) {
                           sg += g[k];
                           sgh += g[k] * h[k];
                         }
                         if (gg) (*gg)[c] += sgh;
                         if (gb) (*gb)[c] += sg;
                         if (gx) {
                           const double gam = pg->data[c];
                           const double coef = gam * (*inv_std)[c] / nn;
                           double* dx = gx->data() + c * n;
                           for (std::size_t k = 0; k < n; ++k) dx[k] += coef * (nn * g[k] - sg - h[k] * sgh);
                         }
                       }
                     });
}

Tensor batch_norm_infer(const Tensor& x, const Tensor& gamma, const Tensor& beta, const BatchNormState& state) {
  check_bn(x, gamma, beta);
  const std::size_t C = x.dim(0);
  const std::size_t n = x.numel() / C;
  auto xd = x.data();
  auto rm = state.running_mean.data();
  auto rv = state.running_var.data();
  auto gd = gamma.data();
  auto bd = beta.data();
  std::vector<double> inv_std(C);
  std::vector<double> out(xd.size());
  for (std::size_t c = 0; c < C; ++c) {
    inv_std[c] = 1.0 / std::sqrt(rv[c] + state.eps);
    for (std::size_t k = 0; k < n; ++k) out[c * n + k] = gd[c] * (xd[c * n + k] - rm[c]) * inv_std[c] + bd[c];
  }
  std::vector<double> means(rm.begin(), rm.end());
  auto px = x.impl(), pg = gamma.impl(), pb = beta.impl();
  return make_result("batch_norm_infer", x.shape(), std::move(out), {x, gamma, beta},
                     [px, pg, pb, inv_std, means, C, n](const TensorImpl& o) {
                       auto* gx = grad_of(px);
                       auto* gg = grad_of(pg);
                       auto* gb = grad_of(pb);
                       for (std::size_t c = 0; c < C; ++c) {
                         const double* g = o.grad.data() + c * n;
                         const double* xv = px->data.data() + c * n;
                         double sg = 0.0, sgh = 0.0;
                         for (std::size_t k = 0; k < n; ++k) {
                           sg += g[k];
                           sgh += g[k] * (xv[k] - means[c]) * inv_std[c];
                         }
                         if (gg) (*gg)[c] += sgh;
                         if (gb) (*gb)[c] += sg;
                         if (gx) {
                           const double coef = pg->data[c] * inv_std[c];
                           for (std::size_t k = 0; k < n; ++k) (*gx)[c * n + k] += coef * g[k];
                         }
                       }
                     });
}

// ---- loss -----------------------------------------------------------------

Tensor nll_loss(const Tensor& prob, const std::vector<int>& target, const std::vector<unsigned char>& mask) {
  if (prob.rank() != 3) throw DimensionError("nll_loss expects (D,H,W), got " + shape_str(prob.shape()));
  const std::size_t D = prob.dim(0), HW = prob.dim(1) * prob.dim(2);
  if (target.size() != HW || mask.size() != HW) throw DimensionError("nll_loss target/mask size mismatch");
  constexpr double kFloor = 1e-12;
  auto pd = prob.data();
  std::size_t count = 0;
  double total = 0.0;
  for (std::size_t k = 0; k < HW; ++k) {
    if (!mask[k]) continue;
    if (target[k] < 0 || static_cast<std::size_t>(target[k]) >= D)
      throw ParameterError("nll_loss target index out of range");
    total += -std::log(std::max(pd[target[k] * HW + k], kFloor));
    ++count;
  }
  if (count == 0) return Tensor::scalar(0.0);
  const double inv = 1.0 / static_cast<double>(count);
  auto pp = prob.impl();
  return make_result("nll_loss", Shape{1}, {total * inv}, {prob}, [pp, target, mask, HW, inv](const TensorImpl& o) {
    auto* gp = grad_of(pp);
    if (!gp) return;
    for (std::size_t k = 0; k < HW; ++k) {
      if (!mask[k]) continue;
      std::size_t j = target[k] * HW + k;
      double p = pp->data[j];
      if (p > kFloor) (*gp)[j] += -o.grad[0] * inv / p;
    }
  });
}

}  // namespace icgmvs
