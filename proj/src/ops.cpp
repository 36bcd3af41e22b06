#include "dysk/ops.hpp"

#include <cmath>
#include <stdexcept>

namespace dysk {

namespace {

using detail::Node;

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                      " vs " + shape_str(b.shape()));
}

void require_rank(const char* op, const Tensor& t, int rank) {
  require(t.rank() == rank, std::string(op) + ": expected rank " + std::to_string(rank) +
                                ", got " + shape_str(t.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  return detail::make_op(a.shape(), a.value() + b.value(), {a.node(), b.node()},
                         [pa = a.node(), pb = b.node()](Node& n) {
                           pa->accumulate(n.grad);
                           pb->accumulate(n.grad);
                         });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  return detail::make_op(a.shape(), a.value() - b.value(), {a.node(), b.node()},
                         [pa = a.node(), pb = b.node()](Node& n) {
                           pa->accumulate(n.grad);
                           pb->accumulate(-n.grad);
                         });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  return detail::make_op(a.shape(), a.value() * b.value(), {a.node(), b.node()},
                         [pa = a.node(), pb = b.node()](Node& n) {
                           pa->accumulate(n.grad * pb->value);
                           pb->accumulate(n.grad * pa->value);
                         });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape("div", a, b);
  return detail::make_op(a.shape(), a.value() / b.value(), {a.node(), b.node()},
                         [pa = a.node(), pb = b.node()](Node& n) {
                           pa->accumulate(n.grad / pb->value);
                           pb->accumulate(-n.grad * pa->value / (pb->value * pb->value));
                         });
}

Tensor scale(const Tensor& a, double factor) {
  return detail::make_op(a.shape(), a.value() * factor, {a.node()},
                         [pa = a.node(), factor](Node& n) { pa->accumulate(n.grad * factor); });
}

Tensor add_scalar(const Tensor& a, double constant) {
  return detail::make_op(a.shape(), a.value() + constant, {a.node()},
                         [pa = a.node()](Node& n) { pa->accumulate(n.grad); });
}

Tensor exp(const Tensor& a) {
  Array y = a.value().exp();
  return detail::make_op(a.shape(), y, {a.node()},
                         [pa = a.node(), y](Node& n) { pa->accumulate(n.grad * y); });
}

Tensor square(const Tensor& a) {
  return detail::make_op(a.shape(), a.value().square(), {a.node()},
                         [pa = a.node()](Node& n) { pa->accumulate(2.0 * n.grad * pa->value); });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  Array y = (a.value() > 0.0).select(a.value(), slope * a.value());
  return detail::make_op(a.shape(), std::move(y), {a.node()}, [pa = a.node(), slope](Node& n) {
    Array mask = (pa->value > 0.0).select(Array::Ones(pa->value.size()),
                                          Array::Constant(pa->value.size(), slope));
    pa->accumulate(n.grad * mask);
  });
}

Tensor sum(const Tensor& a) {
  return detail::make_op({1}, Array::Constant(1, a.value().sum()), {a.node()},
                         [pa = a.node()](Node& n) {
                           pa->accumulate(Array::Constant(pa->value.size(), n.grad[0]));
                         });
}

Tensor mean(const Tensor& a) {
  long count = a.size();
  return detail::make_op({1}, Array::Constant(1, a.value().mean()), {a.node()},
                         [pa = a.node(), count](Node& n) {
                           pa->accumulate(Array::Constant(pa->value.size(),
                                                          n.grad[0] / static_cast<double>(count)));
                         });
}

Tensor softmax(const Tensor& a, int axis) {
  require(axis >= 0 && axis < a.rank(),
          "softmax: axis " + std::to_string(axis) + " invalid for " + shape_str(a.shape()));
  const Shape& shape = a.shape();
  long outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= shape[i];
  for (int i = axis + 1; i < a.rank(); ++i) inner *= shape[i];
  const long extent = shape[axis];

  const Array& v = a.value();
  Array y(v.size());
  for (long o = 0; o < outer; ++o) {
    for (long i = 0; i < inner; ++i) {
      const long base = o * extent * inner + i;
      double hi = v[base];
      for (long k = 1; k < extent; ++k) hi = std::max(hi, v[base + k * inner]);
      double total = 0.0;
      for (long k = 0; k < extent; ++k) {
        double e = std::exp(v[base + k * inner] - hi);
        y[base + k * inner] = e;
        total += e;
      }
      for (long k = 0; k < extent; ++k) y[base + k * inner] /= total;
    }
  }

  return detail::make_op(shape, y, {a.node()},
                         [pa = a.node(), y, outer, inner, extent](Node& n) {
                           Array g(pa->value.size());
                           for (long o = 0; o < outer; ++o) {
                             for (long i = 0; i < inner; ++i) {
                               const long base = o * extent * inner + i;
                               double dot = 0.0;
                               for (long k = 0; k < extent; ++k)
                                 dot += n.grad[base + k * inner] * y[base + k * inner];
                               for (long k = 0; k < extent; ++k) {
                                 const long at = base + k * inner;
                                 g[at] = y[at] * (n.grad[at] - dot);
                               }
                             }
                           }
                           pa->accumulate(g);
                         });
}

Tensor reshape(const Tensor& a, Shape shape) {
  require(shape_size(shape) == a.size(), "reshape: cannot view " + shape_str(a.shape()) + " as " +
                                             shape_str(shape) + " (element count differs)");
  return detail::make_op(std::move(shape), a.value(), {a.node()},
                         [pa = a.node()](Node& n) { pa->accumulate(n.grad); });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank("concat_channels", a, 4);
  require_rank("concat_channels", b, 4);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  require(sa[0] == sb[0] && sa[2] == sb[2] && sa[3] == sb[3],
          "concat_channels: non-channel axes differ, " + shape_str(sa) + " vs " + shape_str(sb));
  const long batch = sa[0], ca = sa[1], cb = sb[1], plane = long(sa[2]) * sa[3];
  Shape out_shape{sa[0], sa[1] + sb[1], sa[2], sa[3]};
  Array out(shape_size(out_shape));
  for (long n = 0; n < batch; ++n) {
    out.segment(n * (ca + cb) * plane, ca * plane) = a.value().segment(n * ca * plane, ca * plane);
    out.segment(n * (ca + cb) * plane + ca * plane, cb * plane) =
        b.value().segment(n * cb * plane, cb * plane);
  }
  return detail::make_op(std::move(out_shape), std::move(out), {a.node(), b.node()},
                         [pa = a.node(), pb = b.node(), batch, ca, cb, plane](Node& n) {
                           Array ga(pa->value.size()), gb(pb->value.size());
                           for (long i = 0; i < batch; ++i) {
                             ga.segment(i * ca * plane, ca * plane) =
                                 n.grad.segment(i * (ca + cb) * plane, ca * plane);
                             gb.segment(i * cb * plane, cb * plane) =
                                 n.grad.segment(i * (ca + cb) * plane + ca * plane, cb * plane);
                           }
                           pa->accumulate(ga);
                           pb->accumulate(gb);
                         });
}

Tensor slice_channels(const Tensor& a, int start, int count) {
  require_rank("slice_channels", a, 4);
  const Shape& s = a.shape();
  require(start >= 0 && count >= 1 && start + count <= s[1],
          "slice_channels: range [" + std::to_string(start) + ", " +
              std::to_string(start + count) + ") invalid for " + std::to_string(s[1]) +
              " channels");
  const long batch = s[0], channels = s[1], plane = long(s[2]) * s[3];
  Shape out_shape{s[0], count, s[2], s[3]};
  Array out(shape_size(out_shape));
  for (long n = 0; n < batch; ++n)
    out.segment(n * count * plane, count * plane) =
        a.value().segment((n * channels + start) * plane, long(count) * plane);
  return detail::make_op(std::move(out_shape), std::move(out), {a.node()},
                         [pa = a.node(), start, count, batch, channels, plane](Node& n) {
                           Array g = Array::Zero(pa->value.size());
                           for (long i = 0; i < batch; ++i)
                             g.segment((i * channels + start) * plane, long(count) * plane) =
                                 n.grad.segment(i * count * plane, count * plane);
                           pa->accumulate(g);
                         });
}

Tensor mul_channel(const Tensor& x, const Tensor& channel_weights) {
  require_rank("mul_channel", x, 4);
  const Shape& s = x.shape();
  require(channel_weights.size() == s[1],
          "mul_channel: weight count " + std::to_string(channel_weights.size()) +
              " does not match " + std::to_string(s[1]) + " channels");
  const long batch = s[0], channels = s[1], plane = long(s[2]) * s[3];
  Array out(x.size());
  for (long n = 0; n < batch; ++n)
    for (long c = 0; c < channels; ++c)
      out.segment((n * channels + c) * plane, plane) =
          x.value().segment((n * channels + c) * plane, plane) * channel_weights.value()[c];
  return detail::make_op(s, std::move(out), {x.node(), channel_weights.node()},
                         [px = x.node(), pw = channel_weights.node(), batch, channels,
                          plane](Node& n) {
                           Array gx(px->value.size());
                           Array gw = Array::Zero(pw->value.size());
                           for (long i = 0; i < batch; ++i)
                             for (long c = 0; c < channels; ++c) {
                               const long at = (i * channels + c) * plane;
                               gx.segment(at, plane) = n.grad.segment(at, plane) * pw->value[c];
                               gw[c] += (n.grad.segment(at, plane) * px->value.segment(at, plane))
                                            .sum();
                             }
                           px->accumulate(gx);
                           pw->accumulate(gw);
                         });
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const std::optional<Tensor>& bias,
              int stride, int pad) {
  require_rank("conv2d", x, 4);
  require_rank("conv2d", weight, 4);
  require(stride >= 1 && pad >= 0, "conv2d: stride must be >= 1 and pad >= 0");
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  require(xs[1] == ws[1], "conv2d: input channels " + std::to_string(xs[1]) +
                              " do not match kernel channels " + std::to_string(ws[1]));
  const int batch = xs[0], cin = xs[1], height = xs[2], width = xs[3];
  const int cout = ws[0], kh = ws[2], kw = ws[3];
  if (bias) {
    require(bias->size() == cout, "conv2d: bias count " + std::to_string(bias->size()) +
                                      " does not match " + std::to_string(cout) + " filters");
  }
  const int oh = (height + 2 * pad - kh) / stride + 1;
  const int ow = (width + 2 * pad - kw) / stride + 1;
  require(height + 2 * pad >= kh && width + 2 * pad >= kw,
          "conv2d: kernel " + shape_str(ws) + " larger than padded input " + shape_str(xs));

  const double* xv = x.value().data();
  const double* wv = weight.value().data();
  Shape out_shape{batch, cout, oh, ow};
  Array out(shape_size(out_shape));
  double* ov = out.data();
  for (int b = 0; b < batch; ++b)
    for (int co = 0; co < cout; ++co) {
      const double b0 = bias ? bias->value()[co] : 0.0;
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = b0;
          for (int ci = 0; ci < cin; ++ci)
            for (int ky = 0; ky < kh; ++ky) {
              const int iy = oy * stride - pad + ky;
              if (iy < 0 || iy >= height) continue;
              const long xrow = ((long(b) * cin + ci) * height + iy) * width;
              const long wrow = ((long(co) * cin + ci) * kh + ky) * kw;
              for (int kx = 0; kx < kw; ++kx) {
                const int ix = ox * stride - pad + kx;
                if (ix < 0 || ix >= width) continue;
                acc += xv[xrow + ix] * wv[wrow + kx];
              }
            }
          ov[((long(b) * cout + co) * oh + oy) * ow + ox] = acc;
        }
    }

  std::vector<std::shared_ptr<Node>> parents{x.node(), weight.node()};
  if (bias) parents.push_back(bias->node());
  auto pbias = bias ? bias->node() : nullptr;
  return detail::make_op(
      std::move(out_shape), std::move(out), std::move(parents),
      [px = x.node(), pw = weight.node(), pbias, batch, cin, height, width, cout, kh, kw, oh, ow,
       stride, pad](Node& n) {
        Array gx = Array::Zero(px->value.size());
        Array gw = Array::Zero(pw->value.size());
        Array gb = pbias ? Array::Zero(pbias->value.size()) : Array(0);
        const double* xv = px->value.data();
        const double* wv = pw->value.data();
        const double* gv = n.grad.data();
        for (int b = 0; b < batch; ++b)
          for (int co = 0; co < cout; ++co)
            for (int oy = 0; oy < oh; ++oy)
              for (int ox = 0; ox < ow; ++ox) {
                const double g = gv[((long(b) * cout + co) * oh + oy) * ow + ox];
                if (pbias) gb[co] += g;
                for (int ci = 0; ci < cin; ++ci)
                  for (int ky = 0; ky < kh; ++ky) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= height) continue;
                    const long xrow = ((long(b) * cin + ci) * height + iy) * width;
                    const long wrow = ((long(co) * cin + ci) * kh + ky) * kw;
                    for (int kx = 0; kx < kw; ++kx) {
                      const int ix = ox * stride - pad + kx;
                      if (ix < 0 || ix >= width) continue;
                      gx[xrow + ix] += g * wv[wrow + kx];
                      gw[wrow + kx] += g * xv[xrow + ix];
                    }
                  }
              }
        px->accumulate(gx);
        pw->accumulate(gw);
        if (pbias) pbias->accumulate(gb);
      });
}

namespace {

struct CoordLayout {
  int batch, taps, height, width;
};

CoordLayout coord_layout(const char* op, const Tensor& coords) {
  require_rank(op, coords, 5);
  const Shape& s = coords.shape();
  require(s[2] == 2, std::string(op) + ": coordinate axis must have extent 2, got " +
                         shape_str(s));
  return {s[0], s[1], s[3], s[4]};
}

}  // namespace

Tensor grid_sample(const Tensor& field, const Tensor& coords) {
  require_rank("grid_sample", field, 4);
  const CoordLayout cl = coord_layout("grid_sample", coords);
  const Shape& fs = field.shape();
  require(fs[0] == cl.batch, "grid_sample: batch mismatch " + std::to_string(fs[0]) + " vs " +
                                 std::to_string(cl.batch));
  const int channels = fs[1], fh = fs[2], fw = fs[3];
  const int taps = cl.taps, oh = cl.height, ow = cl.width;

  Shape out_shape{cl.batch, channels, taps, oh, ow};
  Array out(shape_size(out_shape));
  const double* fv = field.value().data();
  const double* cv = coords.value().data();
  const long cplane = long(oh) * ow;

  auto corner = [](int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); };

  for (int b = 0; b < cl.batch; ++b)
    for (int j = 0; j < taps; ++j)
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
          const long cbase = (((long(b) * taps + j) * 2) * oh + y) * ow + x;
          const double px = cv[cbase];
          const double py = cv[cbase + cplane];
          const int x0 = static_cast<int>(std::floor(px));
          const int y0 = static_cast<int>(std::floor(py));
          const double fx = px - x0;
          const double fy = py - y0;
          const int x0c = corner(x0, 0, fw - 1), x1c = corner(x0 + 1, 0, fw - 1);
          const int y0c = corner(y0, 0, fh - 1), y1c = corner(y0 + 1, 0, fh - 1);
          for (int c = 0; c < channels; ++c) {
            const long frow = (long(b) * channels + c) * fh;
            const double v00 = fv[(frow + y0c) * fw + x0c];
            const double v10 = fv[(frow + y0c) * fw + x1c];
            const double v01 = fv[(frow + y1c) * fw + x0c];
            const double v11 = fv[(frow + y1c) * fw + x1c];
            out[((((long(b) * channels + c) * taps + j) * oh) + y) * ow + x] =
                (1 - fx) * (1 - fy) * v00 + fx * (1 - fy) * v10 + (1 - fx) * fy * v01 +
                fx * fy * v11;
          }
        }

  return detail::make_op(
      std::move(out_shape), std::move(out), {field.node(), coords.node()},
      [pf = field.node(), pc = coords.node(), batch = cl.batch, channels, fh, fw, taps, oh,
       ow](Node& n) {
        Array gf = Array::Zero(pf->value.size());
        Array gc = Array::Zero(pc->value.size());
        const double* fv = pf->value.data();
        const double* cv = pc->value.data();
        const double* gv = n.grad.data();
        const long cplane = long(oh) * ow;
        auto corner = [](int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); };
        for (int b = 0; b < batch; ++b)
          for (int j = 0; j < taps; ++j)
            for (int y = 0; y < oh; ++y)
              for (int x = 0; x < ow; ++x) {
                const long cbase = (((long(b) * taps + j) * 2) * oh + y) * ow + x;
                const double px = cv[cbase];
                const double py = cv[cbase + cplane];
                const int x0 = static_cast<int>(std::floor(px));
                const int y0 = static_cast<int>(std::floor(py));
                const double fx = px - x0;
                const double fy = py - y0;
                const int x0c = corner(x0, 0, fw - 1), x1c = corner(x0 + 1, 0, fw - 1);
                const int y0c = corner(y0, 0, fh - 1), y1c = corner(y0 + 1, 0, fh - 1);
                double gpx = 0.0, gpy = 0.0;
                for (int c = 0; c < channels; ++c) {
                  const long frow = (long(b) * channels + c) * fh;
                  const double v00 = fv[(frow + y0c) * fw + x0c];
                  const double v10 = fv[(frow + y0c) * fw + x1c];
                  const double v01 = fv[(frow + y1c) * fw + x0c];
                  const double v11 = fv[(frow + y1c) * fw + x1c];
                  const double g =
                      gv[((((long(b) * channels + c) * taps + j) * oh) + y) * ow + x];
                  gf[(frow + y0c) * fw + x0c] += g * (1 - fx) * (1 - fy);
                  gf[(frow + y0c) * fw + x1c] += g * fx * (1 - fy);
                  gf[(frow + y1c) * fw + x0c] += g * (1 - fx) * fy;
                  gf[(frow + y1c) * fw + x1c] += g * fx * fy;
                  gpx += g * ((1 - fy) * (v10 - v00) + fy * (v11 - v01));
                  gpy += g * ((1 - fx) * (v01 - v00) + fx * (v11 - v10));
                }
                gc[cbase] += gpx;
                gc[cbase + cplane] += gpy;
              }
        pf->accumulate(gf);
        pc->accumulate(gc);
      });
}

Tensor clamp_coords(const Tensor& coords, int width, int height) {
  const CoordLayout cl = coord_layout("clamp_coords", coords);
  require(width >= 1 && height >= 1, "clamp_coords: degenerate target extent");
  const long plane = long(cl.height) * cl.width;
  const double hix = width - 1, hiy = height - 1;
  Array out = coords.value();
  for (int b = 0; b < cl.batch; ++b)
    for (int j = 0; j < cl.taps; ++j) {
      const long base = ((long(b) * cl.taps + j) * 2) * plane;
      for (long i = 0; i < plane; ++i) {
        out[base + i] = std::min(std::max(out[base + i], 0.0), hix);
        out[base + plane + i] = std::min(std::max(out[base + plane + i], 0.0), hiy);
      }
    }
  return detail::make_op(coords.shape(), std::move(out), {coords.node()},
                         [pc = coords.node(), cl, plane, hix, hiy](Node& n) {
                           Array g = Array::Zero(pc->value.size());
                           for (int b = 0; b < cl.batch; ++b)
                             for (int j = 0; j < cl.taps; ++j) {
                               const long base = ((long(b) * cl.taps + j) * 2) * plane;
                               for (long i = 0; i < plane; ++i) {
                                 const double vx = pc->value[base + i];
                                 const double vy = pc->value[base + plane + i];
                                 if (vx >= 0.0 && vx <= hix) g[base + i] = n.grad[base + i];
                                 if (vy >= 0.0 && vy <= hiy)
                                   g[base + plane + i] = n.grad[base + plane + i];
                               }
                             }
                           pc->accumulate(g);
                         });
}

Tensor scaled_dot_taps(const Tensor& queries, const Tensor& keys) {
  require_rank("scaled_dot_taps", queries, 5);
  require_rank("scaled_dot_taps", keys, 6);
  const Shape& qs = queries.shape();
  const Shape& ks = keys.shape();
  require(qs[0] == ks[0] && qs[1] == ks[1] && qs[2] == ks[2] && qs[3] == ks[4] && qs[4] == ks[5],
          "scaled_dot_taps: query " + shape_str(qs) + " does not align with keys " +
              shape_str(ks));
  const int batch = qs[0], dim = qs[1], heads = qs[2], height = qs[3], width = qs[4];
  const int taps = ks[3];
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(dim));
  const long plane = long(height) * width;

  Shape out_shape{batch, heads, taps, height, width};
  Array out = Array::Zero(shape_size(out_shape));
  const double* qv = queries.value().data();
  const double* kv = keys.value().data();
  for (int b = 0; b < batch; ++b)
    for (int k = 0; k < dim; ++k)
      for (int hd = 0; hd < heads; ++hd) {
        const long qbase = ((long(b) * dim + k) * heads + hd) * plane;
        for (int j = 0; j < taps; ++j) {
          const long kbase = (((long(b) * dim + k) * heads + hd) * taps + j) * plane;
          const long obase = ((long(b) * heads + hd) * taps + j) * plane;
          for (long i = 0; i < plane; ++i)
            out[obase + i] += qv[qbase + i] * kv[kbase + i] * inv_sqrt_d;
        }
      }

  return detail::make_op(
      std::move(out_shape), std::move(out), {queries.node(), keys.node()},
      [pq = queries.node(), pk = keys.node(), batch, dim, heads, taps, plane,
       inv_sqrt_d](Node& n) {
        Array gq = Array::Zero(pq->value.size());
        Array gk = Array::Zero(pk->value.size());
        const double* qv = pq->value.data();
        const double* kv = pk->value.data();
        const double* gv = n.grad.data();
        for (int b = 0; b < batch; ++b)
          for (int k = 0; k < dim; ++k)
            for (int hd = 0; hd < heads; ++hd) {
              const long qbase = ((long(b) * dim + k) * heads + hd) * plane;
              for (int j = 0; j < taps; ++j) {
                const long kbase = (((long(b) * dim + k) * heads + hd) * taps + j) * plane;
                const long obase = ((long(b) * heads + hd) * taps + j) * plane;
                for (long i = 0; i < plane; ++i) {
                  const double g = gv[obase + i] * inv_sqrt_d;
                  gq[qbase + i] += g * kv[kbase + i];
                  gk[kbase + i] += g * qv[qbase + i];
                }
              }
            }
        pq->accumulate(gq);
        pk->accumulate(gk);
      });
}

Tensor weighted_tap_sum(const Tensor& weights, const Tensor& values) {
  require_rank("weighted_tap_sum", weights, 5);
  require_rank("weighted_tap_sum", values, 6);
  const Shape& rs = weights.shape();
  const Shape& vs = values.shape();
  require(rs[0] == vs[0] && rs[1] == vs[2] && rs[2] == vs[3] && rs[3] == vs[4] && rs[4] == vs[5],
          "weighted_tap_sum: weights " + shape_str(rs) + " do not align with values " +
              shape_str(vs));
  const int batch = vs[0], dim = vs[1], heads = vs[2], taps = vs[3], height = vs[4],
            width = vs[5];
  const long plane = long(height) * width;

  Shape out_shape{batch, dim, heads, height, width};
  Array out = Array::Zero(shape_size(out_shape));
  const double* rv = weights.value().data();
  const double* vv = values.value().data();
  for (int b = 0; b < batch; ++b)
    for (int k = 0; k < dim; ++k)
      for (int hd = 0; hd < heads; ++hd) {
        const long obase = ((long(b) * dim + k) * heads + hd) * plane;
        for (int j = 0; j < taps; ++j) {
          const long vbase = (((long(b) * dim + k) * heads + hd) * taps + j) * plane;
          const long rbase = ((long(b) * heads + hd) * taps + j) * plane;
          for (long i = 0; i < plane; ++i) out[obase + i] += rv[rbase + i] * vv[vbase + i];
        }
      }

  return detail::make_op(
      std::move(out_shape), std::move(out), {weights.node(), values.node()},
      [pr = weights.node(), pv = values.node(), batch, dim, heads, taps, plane](Node& n) {
        Array gr = Array::Zero(pr->value.size());
        Array gv = Array::Zero(pv->value.size());
        const double* rv = pr->value.data();
        const double* vv = pv->value.data();
        const double* ng = n.grad.data();
        for (int b = 0; b < batch; ++b)
          for (int k = 0; k < dim; ++k)
            for (int hd = 0; hd < heads; ++hd) {
              const long obase = ((long(b) * dim + k) * heads + hd) * plane;
              for (int j = 0; j < taps; ++j) {
                const long vbase = (((long(b) * dim + k) * heads + hd) * taps + j) * plane;
                const long rbase = ((long(b) * heads + hd) * taps + j) * plane;
                for (long i = 0; i < plane; ++i) {
                  gr[rbase + i] += ng[obase + i] * vv[vbase + i];
                  gv[vbase + i] += ng[obase + i] * rv[rbase + i];
                }
              }
            }
        pr->accumulate(gr);
        pv->accumulate(gv);
      });
}

Tensor spatial_diff(const Tensor& t, int axis) {
  require_rank("spatial_diff", t, 4);
  require(axis == 0 || axis == 1, "spatial_diff: axis must be 0 (height) or 1 (width)");
  const Shape& s = t.shape();
  const int batch = s[0], channels = s[1], height = s[2], width = s[3];
  require(axis == 0 ? height >= 2 : width >= 2,
          "spatial_diff: extent too small along axis in " + shape_str(s));
  const int oh = axis == 0 ? height - 1 : height;
  const int ow = axis == 1 ? width - 1 : width;
  Shape out_shape{batch, channels, oh, ow};
  Array out(shape_size(out_shape));
  const double* tv = t.value().data();
  const int step = axis == 0 ? width : 1;
  for (int b = 0; b < batch; ++b)
    for (int c = 0; c < channels; ++c)
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
          const long at = ((long(b) * channels + c) * height + y) * width + x;
          out[((long(b) * channels + c) * oh + y) * ow + x] = tv[at + step] - tv[at];
        }
  return detail::make_op(std::move(out_shape), std::move(out), {t.node()},
                         [pt = t.node(), batch, channels, height, width, oh, ow, step](Node& n) {
                           Array g = Array::Zero(pt->value.size());
                           const double* gv = n.grad.data();
                           for (int b = 0; b < batch; ++b)
                             for (int c = 0; c < channels; ++c)
                               for (int y = 0; y < oh; ++y)
                                 for (int x = 0; x < ow; ++x) {
                                   const long at =
                                       ((long(b) * channels + c) * height + y) * width + x;
                                   const double gg =
                                       gv[((long(b) * channels + c) * oh + y) * ow + x];
                                   g[at + step] += gg;
                                   g[at] -= gg;
                                 }
                           pt->accumulate(g);
                         });
}

Tensor forward_op(OpKind kind, const std::vector<Tensor>& inputs, const OpAttrs& attrs) {
  auto arity = [&](size_t n) {
    require(inputs.size() == n, std::string(op_kind_name(kind)) + ": expected " +
                                    std::to_string(n) + " inputs, got " +
                                    std::to_string(inputs.size()));
  };
  switch (kind) {
    case OpKind::Add: arity(2); return add(inputs[0], inputs[1]);
    case OpKind::Sub: arity(2); return sub(inputs[0], inputs[1]);
    case OpKind::Mul: arity(2); return mul(inputs[0], inputs[1]);
    case OpKind::Div: arity(2); return div(inputs[0], inputs[1]);
    case OpKind::Scale: arity(1); return scale(inputs[0], attrs.scalar);
    case OpKind::AddScalar: arity(1); return add_scalar(inputs[0], attrs.scalar);
    case OpKind::Exp: arity(1); return exp(inputs[0]);
    case OpKind::Square: arity(1); return square(inputs[0]);
    case OpKind::LeakyRelu: arity(1); return leaky_relu(inputs[0], attrs.slope);
    case OpKind::Sum: arity(1); return sum(inputs[0]);
    case OpKind::Mean: arity(1); return mean(inputs[0]);
    case OpKind::Softmax: arity(1); return softmax(inputs[0], attrs.axis);
    case OpKind::Reshape: arity(1); return reshape(inputs[0], attrs.shape);
    case OpKind::ConcatChannels: arity(2); return concat_channels(inputs[0], inputs[1]);
    case OpKind::SliceChannels: arity(1); return slice_channels(inputs[0], attrs.start, attrs.count);
    case OpKind::MulChannel: arity(2); return mul_channel(inputs[0], inputs[1]);
    case OpKind::Conv2d:
      if (inputs.size() == 2) return conv2d(inputs[0], inputs[1], std::nullopt, attrs.stride, attrs.pad);
      arity(3);
      return conv2d(inputs[0], inputs[1], inputs[2], attrs.stride, attrs.pad);
    case OpKind::GridSample: arity(2); return grid_sample(inputs[0], inputs[1]);
    case OpKind::ClampCoords: arity(1); return clamp_coords(inputs[0], attrs.width, attrs.height);
    case OpKind::ScaledDotTaps: arity(2); return scaled_dot_taps(inputs[0], inputs[1]);
    case OpKind::WeightedTapSum: arity(2); return weighted_tap_sum(inputs[0], inputs[1]);
    case OpKind::SpatialDiff: arity(1); return spatial_diff(inputs[0], attrs.axis);
  }
  throw std::invalid_argument("forward_op: unknown op kind");
}

const char* op_kind_name(OpKind kind) {
  switch (kind) {
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Div: return "div";
    case OpKind::Scale: return "scale";
    case OpKind::AddScalar: return "add_scalar";
    case OpKind::Exp: return "exp";
    case OpKind::Square: return "square";
    case OpKind::LeakyRelu: return "leaky_relu";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::Softmax: return "softmax";
    case OpKind::Reshape: return "reshape";
    case OpKind::ConcatChannels: return "concat_channels";
    case OpKind::SliceChannels: return "slice_channels";
    case OpKind::MulChannel: return "mul_channel";
    case OpKind::Conv2d: return "conv2d";
    case OpKind::GridSample: return "grid_sample";
    case OpKind::ClampCoords: return "clamp_coords";
    case OpKind::ScaledDotTaps: return "scaled_dot_taps";
    case OpKind::WeightedTapSum: return "weighted_tap_sum";
    case OpKind::SpatialDiff: return "spatial_diff";
  }
  return "?";
}

const std::vector<OpKind>& all_op_kinds() {
  static const std::vector<OpKind> kinds = {
      OpKind::Add,           OpKind::Sub,        OpKind::Mul,           OpKind::Div,
      OpKind::Scale,         OpKind::AddScalar,  OpKind::Exp,           OpKind::Square,
      OpKind::LeakyRelu,     OpKind::Sum,        OpKind::Mean,          OpKind::Softmax,
      OpKind::Reshape,       OpKind::ConcatChannels, OpKind::SliceChannels, OpKind::MulChannel,
      OpKind::Conv2d,        OpKind::GridSample, OpKind::ClampCoords,   OpKind::ScaledDotTaps,
      OpKind::WeightedTapSum, OpKind::SpatialDiff,
  };
  return kinds;
}

Tensor uniform_tensor(Shape shape, Rng& rng, double lo, double hi, bool requires_grad) {
  long n = shape_size(shape);
  Array data(n);
  for (long i = 0; i < n; ++i) data[i] = rng.uniform(lo, hi);
  return Tensor::from_array(std::move(shape), std::move(data), requires_grad);
}

Tensor normal_tensor(Shape shape, Rng& rng, double stddev, bool requires_grad) {
  long n = shape_size(shape);
  Array data(n);
  for (long i = 0; i < n; ++i) data[i] = stddev * rng.normal();
  return Tensor::from_array(std::move(shape), std::move(data), requires_grad);
}

}  // namespace dysk
