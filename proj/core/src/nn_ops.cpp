#include "csda/nn_ops.hpp"

#include <algorithm>
#include <cstring>

namespace csda {

namespace {

void require_rank4(const char* op, const Tensor& x) {
  if (x.rank() != 4)
    throw std::invalid_argument(std::string("op ") + op + ": expected rank-4 NHWC, got " +
                                shape_str(x.dims));
}

// C (m x n) += A (m x k) * B (k x n), row-major.
void gemm_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * k;
    double* ci = c + static_cast<std::size_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      const double av = ai[l];
      if (av == 0.0) continue;
      const double* bl = b + static_cast<std::size_t>(l) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bl[j];
    }
  }
}

// C (k x n) += A^T (k x m as m x k) * B (m x n), row-major.
void gemm_tn_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * k;
    const double* bi = b + static_cast<std::size_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      const double av = ai[l];
      if (av == 0.0) continue;
      double* cl = c + static_cast<std::size_t>(l) * n;
      for (int j = 0; j < n; ++j) cl[j] += av * bi[j];
    }
  }
}

// Unpacks image n of x (NHWC) into col (H*W x kh*kw*Cin) with zero padding.
void im2col(const double* xn, int h, int w, int cin, int kh, int kw, double* col) {
  const int pad_h = kh / 2, pad_w = kw / 2;
  const int kcols = kh * kw * cin;
  std::size_t p = 0;
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j, ++p) {
      double* row = col + p * static_cast<std::size_t>(kcols);
      for (int dy = 0; dy < kh; ++dy) {
        const int y = i + dy - pad_h;
        for (int dx = 0; dx < kw; ++dx) {
          const int xx = j + dx - pad_w;
          double* dst = row + static_cast<std::size_t>(dy * kw + dx) * cin;
          if (y < 0 || y >= h || xx < 0 || xx >= w) {
            std::memset(dst, 0, sizeof(double) * static_cast<std::size_t>(cin));
          } else {
            std::memcpy(dst, xn + (static_cast<std::size_t>(y) * w + xx) * cin,
                        sizeof(double) * static_cast<std::size_t>(cin));
          }
        }
      }
    }
}

// Scatter-adds col-shaped gradients back into image n of dx.
void col2im_acc(const double* col, int h, int w, int cin, int kh, int kw, double* dxn) {
  const int pad_h = kh / 2, pad_w = kw / 2;
  const int kcols = kh * kw * cin;
  std::size_t p = 0;
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j, ++p) {
      const double* row = col + p * static_cast<std::size_t>(kcols);
      for (int dy = 0; dy < kh; ++dy) {
        const int y = i + dy - pad_h;
        if (y < 0 || y >= h) continue;
        for (int dx = 0; dx < kw; ++dx) {
          const int xx = j + dx - pad_w;
          if (xx < 0 || xx >= w) continue;
          const double* src = row + static_cast<std::size_t>(dy * kw + dx) * cin;
          double* dst = dxn + (static_cast<std::size_t>(y) * w + xx) * cin;
          for (int c = 0; c < cin; ++c) dst[c] += src[c];
        }
      }
    }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank4("conv2d", x);
  require_rank4("conv2d", w);
  if (b.rank() != 1)
    throw std::invalid_argument("op conv2d: bias must be rank-1, got " + shape_str(b.dims));
  const int n = x.dims[0], h = x.dims[1], wd = x.dims[2], cin = x.dims[3];
  const int kh = w.dims[0], kw = w.dims[1], cout = w.dims[3];
  if (w.dims[2] != cin || b.dims[0] != cout)
    throw std::invalid_argument("op conv2d: shape mismatch " + shape_str(x.dims) + " vs " +
                                shape_str(w.dims));
  if (kh % 2 == 0 || kw % 2 == 0)
    throw std::invalid_argument("op conv2d: kernel extents must be odd, got " +
                                shape_str(w.dims));

  const int p = h * wd;
  const int kcols = kh * kw * cin;
  std::vector<double> col(static_cast<std::size_t>(p) * kcols);
  std::vector<double> out(static_cast<std::size_t>(n) * p * cout);
  const std::size_t img_in = static_cast<std::size_t>(p) * cin;
  const std::size_t img_out = static_cast<std::size_t>(p) * cout;
  for (int im = 0; im < n; ++im) {
    im2col(x.data.data() + im * img_in, h, wd, cin, kh, kw, col.data());
    double* on = out.data() + im * img_out;
    for (int pp = 0; pp < p; ++pp)
      for (int co = 0; co < cout; ++co)
        on[static_cast<std::size_t>(pp) * cout + co] = b.data[co];
    gemm_acc(col.data(), w.data.data(), on, p, kcols, cout);
  }

  Tape* tape = x.tracked() ? x.tape : (w.tracked() ? w.tape : (b.tracked() ? b.tape : nullptr));
  if (!tape) return Tensor(Shape{n, h, wd, cout}, std::move(out));

  int nx = x.node, nw = w.node, nb = b.node;
  std::vector<double> xv = x.data, wv = w.data;
  return tape->record(
      Shape{n, h, wd, cout}, std::move(out),
      [nx, nw, nb, n, h, wd, cin, kh, kw, cout, xv = std::move(xv), wv = std::move(wv)](
          Tape& t, const std::vector<double>& g) {
        const int p = h * wd;
        const int kcols = kh * kw * cin;
        const std::size_t img_in = static_cast<std::size_t>(p) * cin;
        const std::size_t img_out = static_cast<std::size_t>(p) * cout;
        std::vector<double> col(static_cast<std::size_t>(p) * kcols);
        std::vector<double> dw(nw >= 0 ? wv.size() : 0, 0.0);
        std::vector<double> dx(nx >= 0 ? xv.size() : 0, 0.0);
        std::vector<double> dcol(nx >= 0 ? col.size() : 0);
        // w^T once for the input gradient
        std::vector<double> wt;
        if (nx >= 0) {
          wt.resize(wv.size());
          for (int l = 0; l < kcols; ++l)
            for (int j = 0; j < cout; ++j)
              wt[static_cast<std::size_t>(j) * kcols + l] =
                  wv[static_cast<std::size_t>(l) * cout + j];
        }
        for (int im = 0; im < n; ++im) {
          const double* gn = g.data() + im * img_out;
          if (nw >= 0 || nx >= 0)
            im2col(xv.data() + im * img_in, h, wd, cin, kh, kw, col.data());
          if (nw >= 0) gemm_tn_acc(col.data(), gn, dw.data(), p, kcols, cout);
          if (nx >= 0) {
            std::fill(dcol.begin(), dcol.end(), 0.0);
            gemm_acc(gn, wt.data(), dcol.data(), p, cout, kcols);
            col2im_acc(dcol.data(), h, wd, cin, kh, kw, dx.data() + im * img_in);
          }
        }
        if (nb >= 0) {
          std::vector<double> db(static_cast<std::size_t>(cout), 0.0);
          for (std::size_t i = 0; i < g.size(); ++i) db[i % cout] += g[i];
          t.accumulate(nb, db);
        }
        if (nw >= 0) t.accumulate(nw, dw);
        if (nx >= 0) t.accumulate(nx, dx);
      });
}

Tensor conv_transpose2d_x2(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank4("conv_transpose2d", x);
  require_rank4("conv_transpose2d", w);
  const int n = x.dims[0], h = x.dims[1], wd = x.dims[2], cin = x.dims[3];
  if (w.dims[0] != 2 || w.dims[1] != 2 || w.dims[2] != cin)
    throw std::invalid_argument("op conv_transpose2d: shape mismatch " + shape_str(x.dims) +
                                " vs " + shape_str(w.dims));
  const int cout = w.dims[3];
  if (b.rank() != 1 || b.dims[0] != cout)
    throw std::invalid_argument("op conv_transpose2d: bad bias " + shape_str(b.dims));
  const int oh = 2 * h, ow = 2 * wd;
  std::vector<double> out(static_cast<std::size_t>(n) * oh * ow * cout);
  // Kernel 2 / stride 2: each output pixel draws from exactly one input pixel.
  for (int im = 0; im < n; ++im)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        const int iy = oy / 2, ix = ox / 2;
        const int tap = (oy % 2) * 2 + (ox % 2);
        const double* xi =
            x.data.data() + ((static_cast<std::size_t>(im) * h + iy) * wd + ix) * cin;
        const double* wk = w.data.data() + static_cast<std::size_t>(tap) * cin * cout;
        double* o =
            out.data() + ((static_cast<std::size_t>(im) * oh + oy) * ow + ox) * cout;
        for (int co = 0; co < cout; ++co) o[co] = b.data[co];
        for (int ci = 0; ci < cin; ++ci) {
          const double xv = xi[ci];
          const double* wr = wk + static_cast<std::size_t>(ci) * cout;
          for (int co = 0; co < cout; ++co) o[co] += xv * wr[co];
        }
      }

  Tape* tape = x.tracked() ? x.tape : (w.tracked() ? w.tape : (b.tracked() ? b.tape : nullptr));
  if (!tape) return Tensor(Shape{n, oh, ow, cout}, std::move(out));

  int nx = x.node, nw = w.node, nb = b.node;
  std::vector<double> xv = x.data, wv = w.data;
  return tape->record(
      Shape{n, oh, ow, cout}, std::move(out),
      [nx, nw, nb, n, h, wd, cin, cout, xv = std::move(xv), wv = std::move(wv)](
          Tape& t, const std::vector<double>& g) {
        const int oh = 2 * h, ow = 2 * wd;
        std::vector<double> dx(nx >= 0 ? xv.size() : 0, 0.0);
        std::vector<double> dw(nw >= 0 ? wv.size() : 0, 0.0);
        std::vector<double> db(nb >= 0 ? static_cast<std::size_t>(cout) : 0, 0.0);
        for (int im = 0; im < n; ++im)
          for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
              const int iy = oy / 2, ix = ox / 2;
              const int tap = (oy % 2) * 2 + (ox % 2);
              const double* gp =
                  g.data() + ((static_cast<std::size_t>(im) * oh + oy) * ow + ox) * cout;
              const double* xi =
                  xv.data() + ((static_cast<std::size_t>(im) * h + iy) * wd + ix) * cin;
              if (nb >= 0)
                for (int co = 0; co < cout; ++co) db[co] += gp[co];
              for (int ci = 0; ci < cin; ++ci) {
                const double* wr =
                    wv.data() + (static_cast<std::size_t>(tap) * cin + ci) * cout;
                if (nx >= 0) {
                  double s = 0.0;
                  for (int co = 0; co < cout; ++co) s += gp[co] * wr[co];
                  dx[((static_cast<std::size_t>(im) * h + iy) * wd + ix) * cin + ci] += s;
                }
                if (nw >= 0) {
                  double* dwr =
                      dw.data() + (static_cast<std::size_t>(tap) * cin + ci) * cout;
                  const double xvv = xi[ci];
                  for (int co = 0; co < cout; ++co) dwr[co] += xvv * gp[co];
                }
              }
            }
        if (nx >= 0) t.accumulate(nx, dx);
        if (nw >= 0) t.accumulate(nw, dw);
        if (nb >= 0) t.accumulate(nb, db);
      });
}

Tensor maxpool2x2(const Tensor& x) {
  require_rank4("maxpool2x2", x);
  const int n = x.dims[0], h = x.dims[1], wd = x.dims[2], c = x.dims[3];
  if (h % 2 || wd % 2)
    throw std::invalid_argument("op maxpool2x2: extents must be even, got " +
                                shape_str(x.dims));
  const int oh = h / 2, ow = wd / 2;
  std::vector<double> out(static_cast<std::size_t>(n) * oh * ow * c);
  std::vector<std::size_t> argmax(out.size());
  for (int im = 0; im < n; ++im)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox)
        for (int ch = 0; ch < c; ++ch) {
          double best = -1e300;
          std::size_t best_idx = 0;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const std::size_t idx =
                  ((static_cast<std::size_t>(im) * h + 2 * oy + dy) * wd + 2 * ox + dx) * c +
                  ch;
              if (x.data[idx] > best) {
                best = x.data[idx];
                best_idx = idx;
              }
            }
          const std::size_t o =
              ((static_cast<std::size_t>(im) * oh + oy) * ow + ox) * c + ch;
          out[o] = best;
          argmax[o] = best_idx;
        }
  if (!x.tracked()) return Tensor(Shape{n, oh, ow, c}, std::move(out));
  int nx = x.node;
  return x.tape->record(Shape{n, oh, ow, c}, std::move(out),
                        [nx, argmax = std::move(argmax)](Tape& t,
                                                         const std::vector<double>& g) {
                          for (std::size_t i = 0; i < g.size(); ++i)
                            t.accumulate(nx, argmax[i], g[i]);
                        });
}

}  // namespace csda
