#include "fewshot/ndcore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Core>

#include "fewshot/error.hpp"

namespace fewshot::nd {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

Tape& tape_of(Var a) {
  if (!a.valid()) throw Error("operation on an unbound Var");
  return *a.tape();
}

Tape& tape_of(Var a, Var b) {
  if (a.tape() != b.tape()) throw Error("operands recorded on different tapes");
  return tape_of(a);
}

[[noreturn]] void shape_mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " + shape_string(b));
}

void require_rank(const char* op, const Shape& s, std::size_t rank) {
  if (s.size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_string(s));
  }
}

void add_into(Tensor& dst, const Tensor& src, double factor = 1.0) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += factor * s[i];
}

bool row_broadcast(const Shape& a, const Shape& b) {
  return b.size() == 1 && a.size() >= 1 && a.back() == b[0] && a != b;
}

Var add_impl(Var a, Var b, double sign, const char* op) {
  Tape& tape = tape_of(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  const bool broadcast = row_broadcast(sa, sb);
  if (sa != sb && !broadcast) shape_mismatch(op, sa, sb);

  Tensor out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  const std::size_t width = bv.size();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += sign * bv[broadcast ? i % width : i];

  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {a, b},
                     [ia, ib, sign, broadcast](Tape& t, const Tensor& g) {
                       if (t.requires_grad(ia)) add_into(t.grad_buffer(ia), g);
                       if (!t.requires_grad(ib)) return;
                       Tensor& gb = t.grad_buffer(ib);
                       if (!broadcast) {
                         add_into(gb, g, sign);
                         return;
                       }
                       const std::size_t w = gb.size();
                       auto gd = g.data();
                       for (std::size_t i = 0; i < gd.size(); ++i) gb[i % w] += sign * gd[i];
                     },
                     op);
}

// im2col over a group of images for a stride-1 KxK convolution.
// cols: [C*K*K, n*Ho*Wo]
void im2col(const double* x, std::size_t n, std::size_t C, std::size_t H, std::size_t W, std::size_t K,
            std::size_t pad, std::size_t Ho, std::size_t Wo, RowMat& cols) {
  const std::size_t plane = Ho * Wo;
  cols.resize(static_cast<Eigen::Index>(C * K * K), static_cast<Eigen::Index>(n * plane));
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t ki = 0; ki < K; ++ki) {
      for (std::size_t kj = 0; kj < K; ++kj) {
        double* row = cols.data() + ((c * K + ki) * K + kj) * n * plane;
        for (std::size_t img = 0; img < n; ++img) {
          const double* src = x + (img * C + c) * H * W;
          double* dst = row + img * plane;
          for (std::size_t oy = 0; oy < Ho; ++oy) {
            const long iy = static_cast<long>(oy + ki) - static_cast<long>(pad);
            double* drow = dst + oy * Wo;
            if (iy < 0 || iy >= static_cast<long>(H)) {
              std::fill(drow, drow + Wo, 0.0);
              continue;
            }
            const double* srow = src + static_cast<std::size_t>(iy) * W;
            for (std::size_t ox = 0; ox < Wo; ++ox) {
              const long ix = static_cast<long>(ox + kj) - static_cast<long>(pad);
              drow[ox] = (ix < 0 || ix >= static_cast<long>(W)) ? 0.0 : srow[ix];
            }
          }
        }
      }
    }
  }
}

void col2im_add(const RowMat& cols, std::size_t n, std::size_t C, std::size_t H, std::size_t W, std::size_t K,
                std::size_t pad, std::size_t Ho, std::size_t Wo, double* dx) {
  const std::size_t plane = Ho * Wo;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t ki = 0; ki < K; ++ki) {
      for (std::size_t kj = 0; kj < K; ++kj) {
        const double* row = cols.data() + ((c * K + ki) * K + kj) * n * plane;
        for (std::size_t img = 0; img < n; ++img) {
          double* dst = dx + (img * C + c) * H * W;
          const double* src = row + img * plane;
          for (std::size_t oy = 0; oy < Ho; ++oy) {
            const long iy = static_cast<long>(oy + ki) - static_cast<long>(pad);
            if (iy < 0 || iy >= static_cast<long>(H)) continue;
            double* drow = dst + static_cast<std::size_t>(iy) * W;
            const double* srow = src + oy * Wo;
            for (std::size_t ox = 0; ox < Wo; ++ox) {
              const long ix = static_cast<long>(ox + kj) - static_cast<long>(pad);
              if (ix >= 0 && ix < static_cast<long>(W)) drow[ix] += srow[ox];
            }
          }
        }
      }
    }
  }
}

struct ConvGeometry {
  std::size_t B, C, H, W, F, K, pad, Ho, Wo;
  std::size_t group;  // images per GEMM
};

// Rows of the per-row normalization used by l2_normalize_rows and
// pairwise_cosine.
std::vector<double> row_norms(const Tensor& a, const char* op) {
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += a[r * cols + c] * a[r * cols + c];
    norms[r] = std::sqrt(s);
    if (!(norms[r] > 1e-12)) {
      throw NumericError(std::string(op) + ": row " + std::to_string(r) + " has zero norm");
    }
  }
  return norms;
}

}  // namespace

Var add(Var a, Var b) { return add_impl(a, b, 1.0, "add"); }
Var sub(Var a, Var b) { return add_impl(a, b, -1.0, "sub"); }

Var scale(Var a, double factor) {
  Tape& tape = tape_of(a);
  Tensor out = a.value();
  for (double& v : out.data()) v *= factor;
  const std::size_t ia = a.id();
  return tape.record(std::move(out), {a},
                     [ia, factor](Tape& t, const Tensor& g) { add_into(t.grad_buffer(ia), g, factor); },
                     "scale");
}

Var mul(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  if (a.shape() != b.shape()) shape_mismatch("mul", a.shape(), b.shape());
  Tensor out = a.value();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {a, b},
                     [ia, ib](Tape& t, const Tensor& g) {
                       const Tensor& av = t.value(ia);
                       const Tensor& bv2 = t.value(ib);
                       if (t.requires_grad(ia)) {
                         Tensor& ga = t.grad_buffer(ia);
                         for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
                       }
                       if (t.requires_grad(ib)) {
                         Tensor& gb = t.grad_buffer(ib);
                         for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
                       }
                     },
                     "mul");
}

Var matmul(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) shape_mismatch("matmul", sa, sb);
  const auto m = static_cast<Eigen::Index>(sa[0]);
  const auto k = static_cast<Eigen::Index>(sa[1]);
  const auto n = static_cast<Eigen::Index>(sb[1]);

  Tensor out({sa[0], sb[1]});
  MapMat(out.data().data(), m, n).noalias() =
      ConstMapMat(a.value().data().data(), m, k) * ConstMapMat(b.value().data().data(), k, n);

  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {a, b},
                     [ia, ib, m, k, n](Tape& t, const Tensor& g) {
                       ConstMapMat G(g.data().data(), m, n);
                       if (t.requires_grad(ia)) {
                         MapMat(t.grad_buffer(ia).data().data(), m, k).noalias() +=
                             G * ConstMapMat(t.value(ib).data().data(), k, n).transpose();
                       }
                       if (t.requires_grad(ib)) {
                         MapMat(t.grad_buffer(ib).data().data(), k, n).noalias() +=
                             ConstMapMat(t.value(ia).data().data(), m, k).transpose() * G;
                       }
                     },
                     "matmul");
}

Var conv2d(Var x, Var weight, std::optional<Var> bias, std::size_t padding) {
  Tape& tape = tape_of(x, weight);
  const Shape& sx = x.shape();
  const Shape& sw = weight.shape();
  require_rank("conv2d input", sx, 4);
  require_rank("conv2d weight", sw, 4);
  if (sw[1] != sx[1] || sw[2] != sw[3]) shape_mismatch("conv2d", sx, sw);
  if (bias) {
    if (bias->tape() != &tape) throw Error("operands recorded on different tapes");
    if (bias->shape() != Shape{sw[0]}) shape_mismatch("conv2d bias", sw, bias->shape());
  }
  const std::size_t K = sw[2];
  if (sx[2] + 2 * padding < K || sx[3] + 2 * padding < K) shape_mismatch("conv2d", sx, sw);

  ConvGeometry geo{};
  geo.B = sx[0];
  geo.C = sx[1];
  geo.H = sx[2];
  geo.W = sx[3];
  geo.F = sw[0];
  geo.K = K;
  geo.pad = padding;
  geo.Ho = geo.H + 2 * padding - K + 1;
  geo.Wo = geo.W + 2 * padding - K + 1;
  geo.group = std::max<std::size_t>(1, 4096 / (geo.Ho * geo.Wo));

  const std::size_t plane = geo.Ho * geo.Wo;
  const std::size_t ck = geo.C * K * K;
  Tensor out({geo.B, geo.F, geo.Ho, geo.Wo});
  ConstMapMat Wm(weight.value().data().data(), static_cast<Eigen::Index>(geo.F), static_cast<Eigen::Index>(ck));
  RowMat cols, prod;
  for (std::size_t i0 = 0; i0 < geo.B; i0 += geo.group) {
    const std::size_t n = std::min(geo.group, geo.B - i0);
    im2col(x.value().data().data() + i0 * geo.C * geo.H * geo.W, n, geo.C, geo.H, geo.W, K, padding, geo.Ho,
           geo.Wo, cols);
    prod.noalias() = Wm * cols;
    for (std::size_t img = 0; img < n; ++img) {
      for (std::size_t f = 0; f < geo.F; ++f) {
        const double b = bias ? bias->value()[f] : 0.0;
        const double* src = prod.data() + f * n * plane + img * plane;
        double* dst = out.data().data() + ((i0 + img) * geo.F + f) * plane;
        for (std::size_t p = 0; p < plane; ++p) dst[p] = src[p] + b;
      }
    }
  }

  std::vector<Var> inputs{x, weight};
  const std::size_t ix = x.id(), iw = weight.id();
  const std::optional<std::size_t> ib = bias ? std::optional<std::size_t>(bias->id()) : std::nullopt;
  if (bias) inputs.push_back(*bias);
  return tape.record(
      std::move(out), inputs,
      [geo, ix, iw, ib, plane, ck](Tape& t, const Tensor& g) {
        const bool need_x = t.requires_grad(ix);
        const bool need_w = t.requires_grad(iw);
        const bool need_b = ib && t.requires_grad(*ib);
        if (need_b) {
          Tensor& gb = t.grad_buffer(*ib);
          for (std::size_t img = 0; img < geo.B; ++img) {
            for (std::size_t f = 0; f < geo.F; ++f) {
              const double* src = g.data().data() + (img * geo.F + f) * plane;
              double s = 0.0;
              for (std::size_t p = 0; p < plane; ++p) s += src[p];
              gb[f] += s;
            }
          }
        }
        if (!need_x && !need_w) return;
        ConstMapMat Wm(t.value(iw).data().data(), static_cast<Eigen::Index>(geo.F),
                       static_cast<Eigen::Index>(ck));
        RowMat cols, gout, dcols;
        for (std::size_t i0 = 0; i0 < geo.B; i0 += geo.group) {
          const std::size_t n = std::min(geo.group, geo.B - i0);
          gout.resize(static_cast<Eigen::Index>(geo.F), static_cast<Eigen::Index>(n * plane));
          for (std::size_t img = 0; img < n; ++img) {
            for (std::size_t f = 0; f < geo.F; ++f) {
              const double* src = g.data().data() + ((i0 + img) * geo.F + f) * plane;
              std::copy(src, src + plane, gout.data() + f * n * plane + img * plane);
            }
          }
          if (need_w) {
            im2col(t.value(ix).data().data() + i0 * geo.C * geo.H * geo.W, n, geo.C, geo.H, geo.W, geo.K,
                   geo.pad, geo.Ho, geo.Wo, cols);
            MapMat(t.grad_buffer(iw).data().data(), static_cast<Eigen::Index>(geo.F),
                   static_cast<Eigen::Index>(ck))
                .noalias() += gout * cols.transpose();
          }
          if (need_x) {
            dcols.noalias() = Wm.transpose() * gout;
            col2im_add(dcols, n, geo.C, geo.H, geo.W, geo.K, geo.pad, geo.Ho, geo.Wo,
                       t.grad_buffer(ix).data().data() + i0 * geo.C * geo.H * geo.W);
          }
        }
      },
      "conv2d");
}

Var relu(Var a) {
  Tape& tape = tape_of(a);
  Tensor out = a.value();
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  const std::size_t ia = a.id();
  return tape.record(std::move(out), {a},
                     [ia](Tape& t, const Tensor& g) {
                       const Tensor& in = t.value(ia);
                       Tensor& ga = t.grad_buffer(ia);
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         if (in[i] > 0.0) ga[i] += g[i];
                       }
                     },
                     "relu");
}

Var max_pool2x2(Var x) {
  Tape& tape = tape_of(x);
  const Shape& s = x.shape();
  require_rank("max_pool2x2", s, 4);
  if (s[2] < 2 || s[3] < 2) throw ShapeError("max_pool2x2: spatial extent below 2 in " + shape_string(s));
  const std::size_t maps = s[0] * s[1], H = s[2], W = s[3], Ho = H / 2, Wo = W / 2;
  Tensor out({s[0], s[1], Ho, Wo});
  std::vector<std::size_t> argmax(out.size());
  const auto& in = x.value();
  for (std::size_t m = 0; m < maps; ++m) {
    for (std::size_t oy = 0; oy < Ho; ++oy) {
      for (std::size_t ox = 0; ox < Wo; ++ox) {
        std::size_t best = m * H * W + 2 * oy * W + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = m * H * W + (2 * oy + dy) * W + 2 * ox + dx;
            if (in[idx] > in[best]) best = idx;
          }
        }
        const std::size_t o = (m * Ho + oy) * Wo + ox;
        out[o] = in[best];
        argmax[o] = best;
      }
    }
  }
  const std::size_t ix = x.id();
  return tape.record(std::move(out), {x},
                     [ix, argmax = std::move(argmax)](Tape& t, const Tensor& g) {
                       Tensor& gx = t.grad_buffer(ix);
                       for (std::size_t o = 0; o < g.size(); ++o) gx[argmax[o]] += g[o];
                     },
                     "max_pool2x2");
}

Var global_avg_pool(Var x) {
  Tape& tape = tape_of(x);
  const Shape& s = x.shape();
  require_rank("global_avg_pool", s, 4);
  const std::size_t maps = s[0] * s[1], plane = s[2] * s[3];
  Tensor out({s[0], s[1]});
  const auto& in = x.value();
  for (std::size_t m = 0; m < maps; ++m) {
    double sum = 0.0;
    for (std::size_t p = 0; p < plane; ++p) sum += in[m * plane + p];
    out[m] = sum / static_cast<double>(plane);
  }
  const std::size_t ix = x.id();
  return tape.record(std::move(out), {x},
                     [ix, maps, plane](Tape& t, const Tensor& g) {
                       Tensor& gx = t.grad_buffer(ix);
                       const double inv = 1.0 / static_cast<double>(plane);
                       for (std::size_t m = 0; m < maps; ++m) {
                         for (std::size_t p = 0; p < plane; ++p) gx[m * plane + p] += g[m] * inv;
                       }
                     },
                     "global_avg_pool");
}

Var flatten(Var x) {
  Tape& tape = tape_of(x);
  const Shape& s = x.shape();
  if (s.empty()) throw ShapeError("flatten: rank-0 input");
  Tensor out = x.value().reshaped({s[0], x.value().size() / s[0]});
  const std::size_t ix = x.id();
  return tape.record(std::move(out), {x},
                     [ix](Tape& t, const Tensor& g) { add_into(t.grad_buffer(ix), g); }, "flatten");
}

Var softmax_rows(Var a) {
  Tape& tape = tape_of(a);
  require_rank("softmax_rows", a.shape(), 2);
  const std::size_t rows = a.shape()[0], cols = a.shape()[1];
  Tensor out = a.value();
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = out.data().data() + r * cols;
    const double mx = *std::max_element(row, row + cols);
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) sum += (row[c] = std::exp(row[c] - mx));
    for (std::size_t c = 0; c < cols; ++c) row[c] /= sum;
  }
  Var result;
  const std::size_t ia = a.id();
  result = tape.record(out, {a},
                       [ia, rows, cols, y = out](Tape& t, const Tensor& g) {
                         Tensor& ga = t.grad_buffer(ia);
                         for (std::size_t r = 0; r < rows; ++r) {
                           double dot = 0.0;
                           for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * y[r * cols + c];
                           for (std::size_t c = 0; c < cols; ++c) {
                             ga[r * cols + c] += y[r * cols + c] * (g[r * cols + c] - dot);
                           }
                         }
                       },
                       "softmax_rows");
  return result;
}

Var l2_normalize_rows(Var a) {
  Tape& tape = tape_of(a);
  require_rank("l2_normalize_rows", a.shape(), 2);
  const std::size_t rows = a.shape()[0], cols = a.shape()[1];
  std::vector<double> norms = row_norms(a.value(), "l2_normalize_rows");
  Tensor out = a.value();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] /= norms[r];
  }
  const std::size_t ia = a.id();
  return tape.record(out, {a},
                     [ia, rows, cols, y = out, norms = std::move(norms)](Tape& t, const Tensor& g) {
                       Tensor& ga = t.grad_buffer(ia);
                       for (std::size_t r = 0; r < rows; ++r) {
                         double dot = 0.0;
                         for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * y[r * cols + c];
                         for (std::size_t c = 0; c < cols; ++c) {
                           ga[r * cols + c] += (g[r * cols + c] - y[r * cols + c] * dot) / norms[r];
                         }
                       }
                     },
                     "l2_normalize_rows");
}

Var pairwise_sq_euclidean(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[1]) shape_mismatch("pairwise_sq_euclidean", sa, sb);
  const std::size_t m = sa[0], n = sb[0], d = sa[1];
  Tensor out({m, n});
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = av[i * d + c] - bv[j * d + c];
        s += diff * diff;
      }
      out[i * n + j] = s;
    }
  }
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {a, b},
                     [ia, ib, m, n, d](Tape& t, const Tensor& g) {
                       const Tensor& av2 = t.value(ia);
                       const Tensor& bv2 = t.value(ib);
                       const bool need_a = t.requires_grad(ia), need_b = t.requires_grad(ib);
                       Tensor* ga = need_a ? &t.grad_buffer(ia) : nullptr;
                       Tensor* gb = need_b ? &t.grad_buffer(ib) : nullptr;
                       for (std::size_t i = 0; i < m; ++i) {
                         for (std::size_t j = 0; j < n; ++j) {
                           const double w = 2.0 * g[i * n + j];
                           for (std::size_t c = 0; c < d; ++c) {
                             const double diff = av2[i * d + c] - bv2[j * d + c];
                             if (ga) (*ga)[i * d + c] += w * diff;
                             if (gb) (*gb)[j * d + c] -= w * diff;
                           }
                         }
                       }
                     },
                     "pairwise_sq_euclidean");
}

Var pairwise_cosine(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[1]) shape_mismatch("pairwise_cosine", sa, sb);
  const std::size_t m = sa[0], n = sb[0], d = sa[1];
  std::vector<double> na = row_norms(a.value(), "pairwise_cosine");
  std::vector<double> nb = row_norms(b.value(), "pairwise_cosine");
  Tensor ua = a.value(), ub = b.value();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t c = 0; c < d; ++c) ua[i * d + c] /= na[i];
  }
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t c = 0; c < d; ++c) ub[j * d + c] /= nb[j];
  }
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += ua[i * d + c] * ub[j * d + c];
      out[i * n + j] = std::clamp(s, -1.0, 1.0);
    }
  }
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(out, {a, b},
                     [ia, ib, m, n, d, ua = std::move(ua), ub = std::move(ub), na = std::move(na),
                      nb = std::move(nb), S = out](Tape& t, const Tensor& g) {
                       // d cos / d a_i = (u_b - cos * u_a) / |a_i|
                       const bool need_a = t.requires_grad(ia), need_b = t.requires_grad(ib);
                       Tensor* ga = need_a ? &t.grad_buffer(ia) : nullptr;
                       Tensor* gb = need_b ? &t.grad_buffer(ib) : nullptr;
                       for (std::size_t i = 0; i < m; ++i) {
                         for (std::size_t j = 0; j < n; ++j) {
                           const double w = g[i * n + j];
                           const double s = S[i * n + j];
                           for (std::size_t c = 0; c < d; ++c) {
                             if (ga) (*ga)[i * d + c] += w * (ub[j * d + c] - s * ua[i * d + c]) / na[i];
                             if (gb) (*gb)[j * d + c] += w * (ua[i * d + c] - s * ub[j * d + c]) / nb[j];
                           }
                         }
                       }
                     },
                     "pairwise_cosine");
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
  Tape& tape = tape_of(logits);
  require_rank("softmax_cross_entropy", logits.shape(), 2);
  const std::size_t rows = logits.shape()[0], cols = logits.shape()[1];
  if (labels.size() != rows) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                     shape_string(logits.shape()));
  }
  std::vector<int> targets(labels.begin(), labels.end());
  for (int y : targets) {
    if (y < 0 || static_cast<std::size_t>(y) >= cols) {
      throw ShapeError("softmax_cross_entropy: label " + std::to_string(y) + " outside " +
                       std::to_string(cols) + " classes");
    }
  }
  const auto& z = logits.value();
  Tensor probs({rows, cols});
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = z.data().data() + r * cols;
    const double mx = *std::max_element(row, row + cols);
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) sum += (probs[r * cols + c] = std::exp(row[c] - mx));
    for (std::size_t c = 0; c < cols; ++c) probs[r * cols + c] /= sum;
    loss += (mx + std::log(sum)) - row[targets[r]];
  }
  loss /= static_cast<double>(rows);
  const std::size_t il = logits.id();
  return tape.record(Tensor::scalar(loss), {logits},
                     [il, rows, cols, probs = std::move(probs), targets = std::move(targets)](Tape& t,
                                                                                            const Tensor& g) {
                       Tensor& gl = t.grad_buffer(il);
                       const double w = g[0] / static_cast<double>(rows);
                       for (std::size_t r = 0; r < rows; ++r) {
                         for (std::size_t c = 0; c < cols; ++c) {
                           const double onehot = static_cast<int>(c) == targets[r] ? 1.0 : 0.0;
                           gl[r * cols + c] += w * (probs[r * cols + c] - onehot);
                         }
                       }
                     },
                     "softmax_cross_entropy");
}

Var mean(Var a) {
  Tape& tape = tape_of(a);
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const double n = static_cast<double>(a.value().size());
  const std::size_t ia = a.id();
  return tape.record(Tensor::scalar(s / n), {a},
                     [ia, n](Tape& t, const Tensor& g) {
                       Tensor& ga = t.grad_buffer(ia);
                       for (double& v : ga.data()) v += g[0] / n;
                     },
                     "mean");
}

}  // namespace fewshot::nd
