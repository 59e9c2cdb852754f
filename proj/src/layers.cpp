#include "convscope/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "convscope/errors.hpp"
#include "convscope/parallel.hpp"
#include "linalg.hpp"

namespace convscope {

namespace {

// Column buffer for one batch item: rows are (c,i,j) filter taps, columns are
// (y,x) output positions. Out-of-bounds input reads as zero.
void im2col(const Tensor& in, int64_t n, int k, int stride, int pad, int64_t ho,
            int64_t wo, double* col) {
  const Extent4& s = in.shape();
  const int64_t plane = ho * wo;
  int64_t row = 0;
  for (int64_t c = 0; c < s.c; ++c) {
    for (int i = 0; i < k; ++i) {
      for (int j = 0; j < k; ++j, ++row) {
        double* dst = col + row * plane;
        for (int64_t y = 0; y < ho; ++y) {
          int64_t iy = y * stride - pad + i;
          if (iy < 0 || iy >= s.h) {
            std::memset(dst + y * wo, 0, sizeof(double) * static_cast<size_t>(wo));
            continue;
          }
          const double* src = in.data() + in.offset(n, c, iy, 0);
          for (int64_t x = 0; x < wo; ++x) {
            int64_t ix = x * stride - pad + j;
            dst[y * wo + x] = (ix >= 0 && ix < s.w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void check_conv_args(const Tensor& in, const ConvParams& p) {
  if (p.stride < 1) throw InvalidArgumentError("conv: stride must be >= 1");
  if (p.pad < 0) throw InvalidArgumentError("conv: pad must be >= 0");
  const Extent4& fs = p.filters.shape();
  if (fs.h != fs.w) throw ShapeError("conv: filters must be square");
  if (in.shape().c != fs.c)
    throw ShapeError("conv: input has " + std::to_string(in.shape().c) +
                     " channels but filters expect " + std::to_string(fs.c));
  if (static_cast<int64_t>(p.bias.size()) != fs.n)
    throw ShapeError("conv: bias length must equal output channel count");
}

}  // namespace

int64_t conv_out_dim(int64_t in, int k, int stride, int pad, bool ceil_mode) {
  if (stride < 1) throw InvalidArgumentError("window stride must be >= 1");
  int64_t span = in + 2 * pad - k;
  if (span < 0)
    throw ShapeError("window of size " + std::to_string(k) +
                     " larger than padded input " + std::to_string(in + 2 * pad));
  if (ceil_mode) {
    int64_t out = (span + stride - 1) / stride + 1;
    // the last window must start inside the input
    if ((out - 1) * stride >= in + pad) --out;
    return out;
  }
  return span / stride + 1;
}

Extent4 conv_out_shape(const Extent4& in, int64_t out_c, int k, int stride, int pad,
                       bool ceil_mode) {
  return {in.n, out_c, conv_out_dim(in.h, k, stride, pad, ceil_mode),
          conv_out_dim(in.w, k, stride, pad, ceil_mode)};
}

Tensor conv_forward(const Tensor& in, const ConvParams& p) {
  check_conv_args(in, p);
  const Extent4& s = in.shape();
  const Extent4& fs = p.filters.shape();
  const int k = static_cast<int>(fs.h);
  Extent4 os = conv_out_shape(s, fs.n, k, p.stride, p.pad);
  Tensor out(os);
  const int64_t plane = os.h * os.w;
  const int64_t taps = fs.c * k * k;

  auto run_item = [&](int64_t n, bool parallel_gemm, std::vector<double>& col) {
    im2col(in, n, k, p.stride, p.pad, os.h, os.w, col.data());
    double* dst = out.data() + out.offset(n, 0, 0, 0);
    linalg::matmul_nn(p.filters.data(), col.data(), dst, fs.n, taps, plane,
                      /*accumulate=*/false, parallel_gemm);
    for (int64_t o = 0; o < fs.n; ++o) {
      double b = p.bias[static_cast<size_t>(o)];
      if (b == 0.0) continue;
      double* row = dst + o * plane;
      for (int64_t i = 0; i < plane; ++i) row[i] += b;
    }
  };

  if (s.n > 1) {
    parallel_for(static_cast<size_t>(s.n), [&](size_t lo, size_t hi) {
      std::vector<double> col(static_cast<size_t>(taps * plane));
      for (size_t n = lo; n < hi; ++n) run_item(static_cast<int64_t>(n), false, col);
    });
  } else if (s.n == 1) {
    std::vector<double> col(static_cast<size_t>(taps * plane));
    run_item(0, true, col);
  }
  return out;
}

ConvGrads conv_backward(const Tensor& in, const ConvParams& p, const Tensor& grad_out) {
  check_conv_args(in, p);
  const Extent4& s = in.shape();
  const Extent4& fs = p.filters.shape();
  const int k = static_cast<int>(fs.h);
  const int stride = p.stride;
  const int pad = p.pad;
  Extent4 os = conv_out_shape(s, fs.n, k, stride, pad);
  if (!(grad_out.shape() == os))
    throw ShapeError("conv_backward: grad_out shape does not match forward output");

  ConvGrads g;
  g.bias.assign(static_cast<size_t>(fs.n), 0.0);
  for (int64_t n = 0; n < os.n; ++n)
    for (int64_t o = 0; o < os.c; ++o) {
      const double* row = grad_out.data() + grad_out.offset(n, o, 0, 0);
      double acc = g.bias[static_cast<size_t>(o)];
      for (int64_t i = 0; i < os.h * os.w; ++i) acc += row[i];
      g.bias[static_cast<size_t>(o)] = acc;
    }

  // Filter gradient: accumulate g[n] * col[n]^T in batch order.
  g.filters = Tensor(fs, 0.0);
  const int64_t plane = os.h * os.w;
  const int64_t taps = fs.c * k * k;
  {
    std::vector<double> col(static_cast<size_t>(taps * plane));
    for (int64_t n = 0; n < s.n; ++n) {
      im2col(in, n, k, stride, pad, os.h, os.w, col.data());
      linalg::matmul_nt(grad_out.data() + grad_out.offset(n, 0, 0, 0), col.data(),
                        g.filters.data(), fs.n, plane, taps, /*accumulate=*/true,
                        /*parallel=*/true);
    }
  }

  // Input gradient, one (n, c) plane per worker. Each input element receives
  // its contributions ordered by output channel, then output row, then
  // column; the deconvnet filtering step reproduces this exact summation
  // order, which is what makes the two paths bit-comparable.
  g.input = Tensor(s, 0.0);
  auto scatter_plane = [&](int64_t n, int64_t c) {
    double* plane = g.input.data() + g.input.offset(n, c, 0, 0);
    for (int64_t o = 0; o < fs.n; ++o) {
      const double* fo = p.filters.data() + p.filters.offset(o, c, 0, 0);
      const double* go = grad_out.data() + grad_out.offset(n, o, 0, 0);
      for (int64_t y = 0; y < os.h; ++y) {
        int64_t iy0 = y * stride - pad;
        int64_t i_lo = std::max<int64_t>(0, -iy0);
        int64_t i_hi = std::min<int64_t>(k, s.h - iy0);
        for (int64_t x = 0; x < os.w; ++x) {
          double gv = go[y * os.w + x];
          if (gv == 0.0) continue;  // adding an exact zero cannot change bits
          int64_t ix0 = x * stride - pad;
          int64_t j_lo = std::max<int64_t>(0, -ix0);
          int64_t j_hi = std::min<int64_t>(k, s.w - ix0);
          for (int64_t i = i_lo; i < i_hi; ++i) {
            double* row = plane + (iy0 + i) * s.w + ix0;
            const double* frow = fo + i * k;
            for (int64_t j = j_lo; j < j_hi; ++j) row[j] += gv * frow[j];
          }
        }
      }
    }
  };
  parallel_for(static_cast<size_t>(s.n * s.c), [&](size_t lo, size_t hi) {
    for (size_t idx = lo; idx < hi; ++idx)
      scatter_plane(static_cast<int64_t>(idx) / s.c, static_cast<int64_t>(idx) % s.c);
  });
  return g;
}

Tensor relu_forward(const Tensor& in) {
  Tensor out(in.shape());
  const double* src = in.data();
  double* dst = out.data();
  for (int64_t i = 0; i < in.size(); ++i) dst[i] = src[i] > 0.0 ? src[i] : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& in, const Tensor& grad_out) {
  if (!in.same_shape(grad_out)) throw ShapeError("relu_backward: shape mismatch");
  Tensor out(in.shape());
  for (int64_t i = 0; i < in.size(); ++i)
    out.data()[i] = in.data()[i] > 0.0 ? grad_out.data()[i] : 0.0;
  return out;
}

PoolResult maxpool_forward(const Tensor& in, int window, int stride, bool ceil_mode) {
  const Extent4& s = in.shape();
  if (window < 1 || window > s.h || window > s.w)
    throw ShapeError("maxpool: window must fit inside the input");
  Extent4 os{s.n, s.c, conv_out_dim(s.h, window, stride, 0, ceil_mode),
             conv_out_dim(s.w, window, stride, 0, ceil_mode)};
  PoolResult r;
  r.out = Tensor(os);
  r.switches.in_shape = s;
  r.switches.out_shape = os;
  r.switches.window = window;
  r.switches.stride = stride;
  r.switches.ceil_mode = ceil_mode;
  r.switches.rows.resize(static_cast<size_t>(os.count()));
  r.switches.cols.resize(static_cast<size_t>(os.count()));

  int64_t idx = 0;
  for (int64_t n = 0; n < s.n; ++n)
    for (int64_t c = 0; c < s.c; ++c)
      for (int64_t oy = 0; oy < os.h; ++oy)
        for (int64_t ox = 0; ox < os.w; ++ox, ++idx) {
          int64_t y0 = oy * stride;
          int64_t x0 = ox * stride;
          int64_t y1 = std::min<int64_t>(y0 + window, s.h);  // ceil-mode windows clip
          int64_t x1 = std::min<int64_t>(x0 + window, s.w);
          double best = in.at(n, c, y0, x0);
          int64_t by = y0, bx = x0;
          for (int64_t y = y0; y < y1; ++y)
            for (int64_t x = x0; x < x1; ++x) {
              double v = in.at(n, c, y, x);
              if (v > best) {  // strict: first max in scan order wins ties
                best = v;
                by = y;
                bx = x;
              }
            }
          r.out.at(n, c, oy, ox) = best;
          r.switches.rows[static_cast<size_t>(idx)] = static_cast<int32_t>(by);
          r.switches.cols[static_cast<size_t>(idx)] = static_cast<int32_t>(bx);
        }
  return r;
}

Tensor maxpool_backward(const SwitchMap& switches, const Tensor& grad_out) {
  if (!(grad_out.shape() == switches.out_shape))
    throw ShapeError("maxpool_backward: grad_out shape does not match pooled shape");
  const Extent4& s = switches.in_shape;
  const Extent4& os = switches.out_shape;
  Tensor out(s, 0.0);
  int64_t idx = 0;
  for (int64_t n = 0; n < os.n; ++n)
    for (int64_t c = 0; c < os.c; ++c)
      for (int64_t oy = 0; oy < os.h; ++oy)
        for (int64_t ox = 0; ox < os.w; ++ox, ++idx) {
          int64_t iy = switches.rows[static_cast<size_t>(idx)];
          int64_t ix = switches.cols[static_cast<size_t>(idx)];
          int64_t wy0 = oy * switches.stride;
          int64_t wx0 = ox * switches.stride;
          if (iy < wy0 || iy >= wy0 + switches.window || iy >= s.h || ix < wx0 ||
              ix >= wx0 + switches.window || ix >= s.w)
            throw IntegrityError("switch coordinate outside its pooling window");
          out.at(n, c, iy, ix) += grad_out.at(n, c, oy, ox);
        }
  return out;
}

namespace {

void check_lrn_args(const LrnParams& p) {
  if (p.n_adj < 1 || p.n_adj % 2 == 0)
    throw InvalidArgumentError("lrn: neighborhood size must be odd and >= 1");
  if (p.k <= 0.0 || p.beta <= 0.0)
    throw InvalidArgumentError("lrn: k and beta must be positive");
}

// Clamped sliding window sum over the channel axis.
void channel_window_sums(const std::vector<double>& values, int r, std::vector<double>& out) {
  const int64_t c_count = static_cast<int64_t>(values.size());
  double acc = 0.0;
  for (int64_t c = 0; c <= std::min<int64_t>(r, c_count - 1); ++c) acc += values[static_cast<size_t>(c)];
  for (int64_t c = 0; c < c_count; ++c) {
    if (c > 0) {
      int64_t add = c + r;
      int64_t drop = c - 1 - r;
      if (add < c_count) acc += values[static_cast<size_t>(add)];
      if (drop >= 0) acc -= values[static_cast<size_t>(drop)];
    }
    out[static_cast<size_t>(c)] = acc;
  }
}

}  // namespace

Tensor lrn_forward(const Tensor& in, const LrnParams& p) {
  check_lrn_args(p);
  const Extent4& s = in.shape();
  Tensor out(s);
  const int r = (p.n_adj - 1) / 2;
  auto one_item = [&](int64_t n) {
    std::vector<double> v(static_cast<size_t>(s.c)), sq(static_cast<size_t>(s.c)),
        win(static_cast<size_t>(s.c));
    for (int64_t y = 0; y < s.h; ++y)
      for (int64_t x = 0; x < s.w; ++x) {
        for (int64_t c = 0; c < s.c; ++c) {
          v[static_cast<size_t>(c)] = in.at(n, c, y, x);
          sq[static_cast<size_t>(c)] = v[static_cast<size_t>(c)] * v[static_cast<size_t>(c)];
        }
        channel_window_sums(sq, r, win);
        for (int64_t c = 0; c < s.c; ++c)
          out.at(n, c, y, x) =
              v[static_cast<size_t>(c)] *
              std::pow(p.k + p.alpha * win[static_cast<size_t>(c)], -p.beta);
      }
  };
  parallel_for(static_cast<size_t>(s.n),
               [&](size_t lo, size_t hi) {
                 for (size_t n = lo; n < hi; ++n) one_item(static_cast<int64_t>(n));
               });
  return out;
}

Tensor lrn_backward(const Tensor& in, const LrnParams& p, const Tensor& grad_out) {
  check_lrn_args(p);
  if (!in.same_shape(grad_out)) throw ShapeError("lrn_backward: shape mismatch");
  const Extent4& s = in.shape();
  Tensor out(s);
  const int r = (p.n_adj - 1) / 2;
  // d out_c / d in_d = delta(c,d) * S_c^-beta - 2 alpha beta in_c in_d S_c^(-beta-1)
  // for d in N(c); the clamped window is symmetric, so N^-1(d) == N(d).
  auto one_item = [&](int64_t n) {
    const size_t c_count = static_cast<size_t>(s.c);
    std::vector<double> v(c_count), g(c_count), sq(c_count), win(c_count),
        scaled(c_count), scaled_win(c_count);
    for (int64_t y = 0; y < s.h; ++y)
      for (int64_t x = 0; x < s.w; ++x) {
        for (int64_t c = 0; c < s.c; ++c) {
          v[static_cast<size_t>(c)] = in.at(n, c, y, x);
          g[static_cast<size_t>(c)] = grad_out.at(n, c, y, x);
          sq[static_cast<size_t>(c)] = v[static_cast<size_t>(c)] * v[static_cast<size_t>(c)];
        }
        channel_window_sums(sq, r, win);
        for (size_t c = 0; c < c_count; ++c) {
          double scale = p.k + p.alpha * win[c];
          double powed = std::pow(scale, -p.beta);
          win[c] = powed;  // reuse as S^-beta
          scaled[c] = g[c] * v[c] * powed / scale;  // g * in * S^(-beta-1)
        }
        channel_window_sums(scaled, r, scaled_win);
        for (int64_t c = 0; c < s.c; ++c)
          out.at(n, c, y, x) =
              g[static_cast<size_t>(c)] * win[static_cast<size_t>(c)] -
              2.0 * p.alpha * p.beta * v[static_cast<size_t>(c)] *
                  scaled_win[static_cast<size_t>(c)];
      }
  };
  parallel_for(static_cast<size_t>(s.n),
               [&](size_t lo, size_t hi) {
                 for (size_t n = lo; n < hi; ++n) one_item(static_cast<int64_t>(n));
               });
  return out;
}

Tensor fc_forward(const Tensor& in, const Tensor& weights, const std::vector<double>& bias) {
  const Extent4& s = in.shape();
  const Extent4& ws = weights.shape();
  int64_t dim = s.c * s.h * s.w;
  if (dim != ws.c * ws.h * ws.w)
    throw ShapeError("fc: flattened input length " + std::to_string(dim) +
                     " does not match weight input dimension " +
                     std::to_string(ws.c * ws.h * ws.w));
  if (static_cast<int64_t>(bias.size()) != ws.n)
    throw ShapeError("fc: bias length must equal output dimension");
  Tensor out({s.n, ws.n, 1, 1});
  linalg::matmul_nt(in.data(), weights.data(), out.data(), s.n, dim, ws.n,
                    /*accumulate=*/false, /*parallel=*/true);
  for (int64_t n = 0; n < s.n; ++n)
    for (int64_t o = 0; o < ws.n; ++o) out.at(n, o, 0, 0) += bias[static_cast<size_t>(o)];
  return out;
}

FcGrads fc_backward(const Tensor& in, const Tensor& weights, const Tensor& grad_out) {
  const Extent4& s = in.shape();
  const Extent4& ws = weights.shape();
  int64_t dim = s.c * s.h * s.w;
  if (!(grad_out.shape() == Extent4{s.n, ws.n, 1, 1}))
    throw ShapeError("fc_backward: grad_out shape mismatch");
  FcGrads g;
  g.input = Tensor(s);
  g.weights = Tensor(ws, 0.0);
  g.bias.assign(static_cast<size_t>(ws.n), 0.0);
  // grad_in = g * W, grad_W = g^T * in, grad_b = column sums of g.
  linalg::matmul_nn(grad_out.data(), weights.data(), g.input.data(), s.n, ws.n, dim,
                    false, true);
  linalg::matmul_tn(grad_out.data(), in.data(), g.weights.data(), ws.n, s.n, dim,
                    false, true);
  for (int64_t n = 0; n < s.n; ++n)
    for (int64_t o = 0; o < ws.n; ++o)
      g.bias[static_cast<size_t>(o)] += grad_out.at(n, o, 0, 0);
  return g;
}

DropoutResult dropout_apply(const Tensor& in, double rate, Rng& rng, Mode mode) {
  if (rate < 0.0 || rate >= 1.0)
    throw InvalidArgumentError("dropout: rate must be in [0, 1)");
  DropoutResult r;
  if (mode == Mode::Eval || rate == 0.0) {
    r.out = in;
    r.mask = Tensor(in.shape(), 1.0);
    return r;
  }
  const double keep_scale = 1.0 / (1.0 - rate);
  r.out = Tensor(in.shape());
  r.mask = Tensor(in.shape());
  for (int64_t i = 0; i < in.size(); ++i) {
    double m = rng.uniform() < rate ? 0.0 : keep_scale;
    r.mask.data()[i] = m;
    r.out.data()[i] = in.data()[i] * m;
  }
  return r;
}

std::vector<double> softmax(std::span<const double> logits) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  std::vector<double> probs(logits.size());
  double z = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - mx);
    z += probs[i];
  }
  for (double& p : probs) p /= z;
  return probs;
}

SoftmaxXent softmax_xent(std::span<const double> logits, int label) {
  if (logits.empty()) throw InvalidArgumentError("softmax: empty logits");
  if (label < 0 || static_cast<size_t>(label) >= logits.size())
    throw InvalidArgumentError("softmax: label " + std::to_string(label) +
                               " out of range for " + std::to_string(logits.size()) +
                               " classes");
  SoftmaxXent r;
  r.probs = softmax(logits);
  r.loss = -std::log(std::max(r.probs[static_cast<size_t>(label)], 1e-300));
  r.grad_logits = r.probs;
  r.grad_logits[static_cast<size_t>(label)] -= 1.0;
  return r;
}

}  // namespace convscope
