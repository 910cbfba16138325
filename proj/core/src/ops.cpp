#include "traitfuse/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>

#include "traitfuse/errors.hpp"

namespace traitfuse {

namespace {

Tape& same_tape(const Var& a, const Var& b, const char* op) {
  if (&a.tape() != &b.tape()) throw UsageError(std::string(op) + ": operands live on different tapes");
  return a.tape();
}

std::size_t product(const Shape& shape, std::size_t from, std::size_t to) {
  std::size_t n = 1;
  for (std::size_t i = from; i < to; ++i) n *= shape[i];
  return n;
}

// Row-major strides of a shape.
std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
  return strides;
}

// Offsets of every multi-index inside `extents`, weighted by `weights`.
std::vector<std::size_t> grid_offsets(const std::vector<std::size_t>& extents, const std::vector<std::size_t>& weights) {
  std::vector<std::size_t> offsets{0};
  for (std::size_t d = 0; d < extents.size(); ++d) {
    std::vector<std::size_t> next;
    next.reserve(offsets.size() * extents[d]);
    for (auto base : offsets) {
      for (std::size_t i = 0; i < extents[d]; ++i) next.push_back(base + i * weights[d]);
    }
    offsets = std::move(next);
  }
  return offsets;
}

std::size_t pooled_extent(std::size_t in, std::size_t kernel, std::size_t stride) { return (in - kernel) / stride + 1; }

}  // namespace

Var matmul(const Var& a, const Var& b) {
  Tape& tape = same_tape(a, b, "matmul");
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rank() != 2 || B.rank() != 2 || A.extent(1) != B.extent(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_string(A.shape()) + " by " + shape_string(B.shape()));
  }
  const std::size_t m = A.extent(0), k = A.extent(1), n = B.extent(1);
  Tensor C(Shape{m, n});
  const double* pa = A.data().data();
  const double* pb = B.data().data();
  double* pc = C.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = pc + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = pa[i * k + kk];
      if (av == 0.0) continue;
      const double* brow = pb + kk * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  const auto ia = a.id(), ib = b.id();
  return tape.record("matmul", std::move(C), {ia, ib}, [m, k, n, ia, ib](Tape& t, std::size_t self) {
    const double* g = t.grad_of(self).data().data();
    const double* pa = t.value(ia).data().data();
    const double* pb = t.value(ib).data().data();
    if (t.needs_grad(ia)) {
      double* da = t.grad_buffer(ia).data().data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t kk = 0; kk < k; ++kk) {
          const double* brow = pb + kk * n;
          const double* grow = g + i * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          da[i * k + kk] += acc;
        }
      }
    }
    if (t.needs_grad(ib)) {
      double* db = t.grad_buffer(ib).data().data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
          const double av = pa[i * k + kk];
          if (av == 0.0) continue;
          double* drow = db + kk * n;
          for (std::size_t j = 0; j < n; ++j) drow[j] += av * grow[j];
        }
      }
    }
  });
}

Var add(const Var& a, const Var& b) {
  Tape& tape = same_tape(a, b, "add");
  if (a.shape() != b.shape()) {
    throw DimensionError("add: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  Tensor out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const auto ia = a.id(), ib = b.id();
  return tape.record("add", std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    for (auto in : {ia, ib}) {
      if (!t.needs_grad(in)) continue;
      auto& d = t.grad_buffer(in);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  Tape& tape = same_tape(a, b, "mul");
  if (a.shape() != b.shape()) {
    throw DimensionError("mul: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  Tensor out = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const auto ia = a.id(), ib = b.id();
  return tape.record("mul", std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    const auto& av = t.value(ia);
    const auto& bv = t.value(ib);
    if (t.needs_grad(ia)) {
      auto& d = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * bv[i];
    }
    if (t.needs_grad(ib)) {
      auto& d = t.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * av[i];
    }
  });
}

Var scale(const Var& x, double factor) {
  Tensor out = x.value();
  for (auto& v : out.data()) v *= factor;
  const auto ix = x.id();
  return x.tape().record("scale", std::move(out), {ix}, [ix, factor](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    auto& d = t.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * factor;
  });
}

Var activation(const Var& x, Activation kind) {
  Tensor out = x.value();
  switch (kind) {
    case Activation::relu:
      for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
      break;
    case Activation::sigmoid:
      for (auto& v : out.data()) v = 1.0 / (1.0 + std::exp(-v));
      break;
    case Activation::tanh:
      for (auto& v : out.data()) v = std::tanh(v);
      break;
  }
  const auto ix = x.id();
  const char* name = kind == Activation::relu ? "relu" : kind == Activation::sigmoid ? "sigmoid" : "tanh";
  return x.tape().record(name, std::move(out), {ix}, [ix, kind](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    const auto& y = t.value(self);
    auto& d = t.grad_buffer(ix);
    switch (kind) {
      case Activation::relu:
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += y[i] > 0.0 ? g[i] : 0.0;
        break;
      case Activation::sigmoid:
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * y[i] * (1.0 - y[i]);
        break;
      case Activation::tanh:
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * (1.0 - y[i] * y[i]);
        break;
    }
  });
}

Var softmax(const Var& x, std::size_t axis) {
  const Tensor& in = x.value();
  if (axis >= in.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for shape " + shape_string(in.shape()));
  }
  const std::size_t outer = product(in.shape(), 0, axis);
  const std::size_t n = in.extent(axis);
  const std::size_t inner = product(in.shape(), axis + 1, in.rank());
  Tensor out(in.shape());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t j = 0; j < inner; ++j) {
      const std::size_t base = o * n * inner + j;
      double peak = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n; ++i) peak = std::max(peak, in[base + i * inner]);
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double e = std::exp(in[base + i * inner] - peak);
        out[base + i * inner] = e;
        total += e;
      }
      for (std::size_t i = 0; i < n; ++i) out[base + i * inner] /= total;
    }
  }
  const auto ix = x.id();
  return x.tape().record("softmax", std::move(out), {ix}, [ix, outer, n, inner](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    const auto& y = t.value(self);
    auto& d = t.grad_buffer(ix);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t j = 0; j < inner; ++j) {
        const std::size_t base = o * n * inner + j;
        double dot = 0.0;
        for (std::size_t i = 0; i < n; ++i) dot += g[base + i * inner] * y[base + i * inner];
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t at = base + i * inner;
          d[at] += y[at] * (g[at] - dot);
        }
      }
    }
  });
}

Var pool_max(const Var& x, std::span<const std::size_t> kernel, std::span<const std::size_t> stride) {
  const Tensor& in = x.value();
  const std::size_t r = in.rank();
  const std::size_t k = kernel.size();
  if (k == 0 || stride.size() != k || k > r) {
    throw DimensionError("pool_max: kernel/stride ranks " + std::to_string(k) + "/" + std::to_string(stride.size()) +
                         " invalid for input " + shape_string(in.shape()));
  }
  const std::size_t lead = r - k;
  Shape out_shape(in.shape().begin(), in.shape().begin() + static_cast<std::ptrdiff_t>(lead));
  std::vector<std::size_t> in_sp(in.shape().begin() + static_cast<std::ptrdiff_t>(lead), in.shape().end());
  std::vector<std::size_t> out_sp(k);
  for (std::size_t d = 0; d < k; ++d) {
    if (kernel[d] == 0 || stride[d] == 0 || in_sp[d] < kernel[d]) {
      throw DimensionError("pool_max: kernel larger than input (input " + shape_string(in.shape()) + ", kernel " +
                           shape_string(Shape(kernel.begin(), kernel.end())) + ")");
    }
    out_sp[d] = pooled_extent(in_sp[d], kernel[d], stride[d]);
    out_shape.push_back(out_sp[d]);
  }
  const auto in_strides = strides_of(in_sp);
  std::vector<std::size_t> step(k);
  for (std::size_t d = 0; d < k; ++d) step[d] = stride[d] * in_strides[d];
  const auto window = grid_offsets(std::vector<std::size_t>(kernel.begin(), kernel.end()), in_strides);
  const auto origins = grid_offsets(out_sp, step);
  const std::size_t outer = product(in.shape(), 0, lead);
  const std::size_t in_block = shape_numel(Shape(in_sp.begin(), in_sp.end()));

  Tensor out(out_shape);
  std::vector<std::size_t> argmax(out.size());
  std::size_t o = 0;
  for (std::size_t b = 0; b < outer; ++b) {
    const std::size_t base = b * in_block;
    for (auto origin : origins) {
      std::size_t best = base + origin + window[0];
      for (auto off : window) {
        const std::size_t at = base + origin + off;
        if (in[at] > in[best]) best = at;
      }
      out[o] = in[best];
      argmax[o] = best;
      ++o;
    }
  }
  const auto ix = x.id();
  return x.tape().record("pool_max", std::move(out), {ix}, [ix, argmax = std::move(argmax)](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    auto& d = t.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) d[argmax[i]] += g[i];
  });
}

Var convolve(const Var& x, const Var& kernels, const Var& bias, std::size_t stride, std::size_t spatial_rank) {
  Tape& tape = same_tape(x, kernels, "convolve");
  same_tape(x, bias, "convolve");
  const Tensor& in = x.value();
  const Tensor& w = kernels.value();
  const Tensor& b = bias.value();
  if (spatial_rank == 0 || stride == 0) throw DimensionError("convolve: spatial rank and stride must be positive");
  if (in.rank() != spatial_rank + 1 || w.rank() != spatial_rank + 2) {
    throw DimensionError("convolve: input " + shape_string(in.shape()) + " and kernels " + shape_string(w.shape()) +
                         " do not fit spatial rank " + std::to_string(spatial_rank));
  }
  const std::size_t channels = in.extent(0);
  const std::size_t count = w.extent(0);
  if (w.extent(1) != channels) {
    throw DimensionError("convolve: kernels " + shape_string(w.shape()) + " expect " + std::to_string(w.extent(1)) +
                         " channels, input " + shape_string(in.shape()) + " has " + std::to_string(channels));
  }
  if (b.rank() != 1 || b.extent(0) != count) {
    throw DimensionError("convolve: bias " + shape_string(b.shape()) + " does not match " + std::to_string(count) +
                         " kernels");
  }
  std::vector<std::size_t> in_sp(in.shape().begin() + 1, in.shape().end());
  std::vector<std::size_t> win(w.shape().begin() + 2, w.shape().end());
  Shape out_shape{count};
  std::vector<std::size_t> out_sp(spatial_rank);
  for (std::size_t d = 0; d < spatial_rank; ++d) {
    if (in_sp[d] < win[d]) {
      throw DimensionError("convolve: kernel window " + shape_string(Shape(win.begin(), win.end())) +
                           " larger than input " + shape_string(in.shape()));
    }
    out_sp[d] = pooled_extent(in_sp[d], win[d], stride);
    out_shape.push_back(out_sp[d]);
  }
  const auto in_strides = strides_of(in_sp);
  const std::size_t in_block = shape_numel(Shape(in_sp.begin(), in_sp.end()));
  std::vector<std::size_t> win_ext{channels};
  win_ext.insert(win_ext.end(), win.begin(), win.end());
  std::vector<std::size_t> win_weights{in_block};
  win_weights.insert(win_weights.end(), in_strides.begin(), in_strides.end());
  auto offsets = grid_offsets(win_ext, win_weights);
  std::vector<std::size_t> step(spatial_rank);
  for (std::size_t d = 0; d < spatial_rank; ++d) step[d] = stride * in_strides[d];
  auto origins = grid_offsets(out_sp, step);

  const std::size_t cols = offsets.size();
  const std::size_t positions = origins.size();
  Tensor out(out_shape);
  std::vector<double> col(cols);
  for (std::size_t p = 0; p < positions; ++p) {
    for (std::size_t j = 0; j < cols; ++j) col[j] = in[origins[p] + offsets[j]];
    for (std::size_t kk = 0; kk < count; ++kk) {
      const double* wrow = w.data().data() + kk * cols;
      double acc = b[kk];
      for (std::size_t j = 0; j < cols; ++j) acc += wrow[j] * col[j];
      out[kk * positions + p] = acc;
    }
  }
  const auto ix = x.id(), iw = kernels.id(), ib = bias.id();
  return tape.record(
      "convolve", std::move(out), {ix, iw, ib},
      [ix, iw, ib, cols, positions, count, offsets = std::move(offsets), origins = std::move(origins)](
          Tape& t, std::size_t self) {
        const auto& g = t.grad_of(self);
        const auto& in = t.value(ix);
        const auto& w = t.value(iw);
        const bool want_x = t.needs_grad(ix), want_w = t.needs_grad(iw), want_b = t.needs_grad(ib);
        double* dw = want_w ? t.grad_buffer(iw).data().data() : nullptr;
        double* db = want_b ? t.grad_buffer(ib).data().data() : nullptr;
        double* dx = want_x ? t.grad_buffer(ix).data().data() : nullptr;
        std::vector<double> col(cols), dcol(cols);
        for (std::size_t p = 0; p < positions; ++p) {
          if (want_w) {
            for (std::size_t j = 0; j < cols; ++j) col[j] = in[origins[p] + offsets[j]];
          }
          std::fill(dcol.begin(), dcol.end(), 0.0);
          for (std::size_t kk = 0; kk < count; ++kk) {
            const double gv = g[kk * positions + p];
            if (gv == 0.0) continue;
            if (want_b) db[kk] += gv;
            if (want_w) {
              double* dwrow = dw + kk * cols;
              for (std::size_t j = 0; j < cols; ++j) dwrow[j] += gv * col[j];
            }
            if (want_x) {
              const double* wrow = w.data().data() + kk * cols;
              for (std::size_t j = 0; j < cols; ++j) dcol[j] += gv * wrow[j];
            }
          }
          if (want_x) {
            for (std::size_t j = 0; j < cols; ++j) dx[origins[p] + offsets[j]] += dcol[j];
          }
        }
      });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  Tape& tape = same_tape(x, w, "linear");
  same_tape(x, b, "linear");
  const Tensor& in = x.value();
  const Tensor& W = w.value();
  const Tensor& B = b.value();
  if (in.rank() == 0 || W.rank() != 2 || B.rank() != 1 || in.shape().back() != W.extent(0) ||
      B.extent(0) != W.extent(1)) {
    throw DimensionError("linear: input " + shape_string(in.shape()) + ", weight " + shape_string(W.shape()) +
                         ", bias " + shape_string(B.shape()) + " do not fit");
  }
  const std::size_t n_in = W.extent(0), n_out = W.extent(1);
  const std::size_t rows = in.size() / n_in;
  Shape out_shape = in.shape();
  out_shape.back() = n_out;
  Tensor out(out_shape);
  const double* px = in.data().data();
  const double* pw = W.data().data();
  double* py = out.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    double* yrow = py + r * n_out;
    for (std::size_t o = 0; o < n_out; ++o) yrow[o] = B[o];
    for (std::size_t i = 0; i < n_in; ++i) {
      const double xv = px[r * n_in + i];
      if (xv == 0.0) continue;
      const double* wrow = pw + i * n_out;
      for (std::size_t o = 0; o < n_out; ++o) yrow[o] += xv * wrow[o];
    }
  }
  const auto ix = x.id(), iw = w.id(), ib = b.id();
  return tape.record("linear", std::move(out), {ix, iw, ib}, [ix, iw, ib, rows, n_in, n_out](Tape& t, std::size_t self) {
    const double* g = t.grad_of(self).data().data();
    const double* px = t.value(ix).data().data();
    const double* pw = t.value(iw).data().data();
    if (t.needs_grad(ib)) {
      double* db = t.grad_buffer(ib).data().data();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t o = 0; o < n_out; ++o) db[o] += g[r * n_out + o];
      }
    }
    if (t.needs_grad(iw)) {
      double* dw = t.grad_buffer(iw).data().data();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* grow = g + r * n_out;
        for (std::size_t i = 0; i < n_in; ++i) {
          const double xv = px[r * n_in + i];
          if (xv == 0.0) continue;
          double* dwrow = dw + i * n_out;
          for (std::size_t o = 0; o < n_out; ++o) dwrow[o] += xv * grow[o];
        }
      }
    }
    if (t.needs_grad(ix)) {
      double* dx = t.grad_buffer(ix).data().data();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* grow = g + r * n_out;
        for (std::size_t i = 0; i < n_in; ++i) {
          const double* wrow = pw + i * n_out;
          double acc = 0.0;
          for (std::size_t o = 0; o < n_out; ++o) acc += grow[o] * wrow[o];
          dx[r * n_in + i] += acc;
        }
      }
    }
  });
}

Var dropout(const Var& x, double p, bool training, std::mt19937_64& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ParameterError("dropout: probability must lie in [0, 1), got " + std::to_string(p));
  if (!training || p == 0.0) return x;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - p);
  Tensor mask(x.shape());
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = unit(rng) < p ? 0.0 : keep_scale;
    out[i] *= mask[i];
  }
  const auto ix = x.id();
  return x.tape().record("dropout", std::move(out), {ix}, [ix, mask = std::move(mask)](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    auto& d = t.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * mask[i];
  });
}

Var concat(std::span<const Var> xs, std::size_t axis) {
  if (xs.empty()) throw UsageError("concat: empty input list");
  Tape& tape = xs.front().tape();
  const Shape& first = xs.front().shape();
  if (axis >= first.size()) {
    throw DimensionError("concat: axis " + std::to_string(axis) + " invalid for shape " + shape_string(first));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& v : xs) {
    same_tape(xs.front(), v, "concat");
    const Shape& s = v.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    if (!ok) throw DimensionError("concat: extents " + shape_string(s) + " incompatible with " + shape_string(first));
    out_shape[axis] += s[axis];
  }
  const std::size_t outer = product(first, 0, axis);
  const std::size_t inner = product(first, axis + 1, first.size());
  const std::size_t out_row = out_shape[axis] * inner;
  Tensor out(out_shape);
  std::vector<std::size_t> ids, widths;
  std::size_t offset = 0;
  for (const auto& v : xs) {
    const auto& val = v.value();
    const std::size_t width = v.shape()[axis] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(val.data().begin() + static_cast<std::ptrdiff_t>(o * width), width,
                  out.data().begin() + static_cast<std::ptrdiff_t>(o * out_row + offset));
    }
    ids.push_back(v.id());
    widths.push_back(width);
    offset += width;
  }
  return tape.record("concat", std::move(out), ids, [ids, widths, outer, out_row](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    std::size_t offset = 0;
    for (std::size_t n = 0; n < ids.size(); ++n) {
      if (t.needs_grad(ids[n])) {
        auto& d = t.grad_buffer(ids[n]);
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t i = 0; i < widths[n]; ++i) d[o * widths[n] + i] += g[o * out_row + offset + i];
        }
      }
      offset += widths[n];
    }
  });
}

Var broadcast_concat(const Var& x, const Var& v) {
  Tape& tape = same_tape(x, v, "broadcast_concat");
  const Tensor& in = x.value();
  const Tensor& vec = v.value();
  if (vec.rank() != 1) throw DimensionError("broadcast_concat: expected a vector, got " + shape_string(vec.shape()));
  if (in.rank() == 0) throw DimensionError("broadcast_concat: input must have a channel axis");
  const std::size_t extra = vec.extent(0);
  if (extra == 0) return x;
  const std::size_t channels = in.extent(0);
  const std::size_t positions = in.size() / channels;
  Shape out_shape = in.shape();
  out_shape[0] = channels + extra;
  Tensor out(out_shape);
  std::copy(in.data().begin(), in.data().end(), out.data().begin());
  for (std::size_t l = 0; l < extra; ++l) {
    std::fill_n(out.data().begin() + static_cast<std::ptrdiff_t>((channels + l) * positions), positions, vec[l]);
  }
  const auto ix = x.id(), iv = v.id();
  return tape.record("broadcast_concat", std::move(out), {ix, iv},
                     [ix, iv, channels, positions, extra](Tape& t, std::size_t self) {
                       const auto& g = t.grad_of(self);
                       if (t.needs_grad(ix)) {
                         auto& d = t.grad_buffer(ix);
                         for (std::size_t i = 0; i < channels * positions; ++i) d[i] += g[i];
                       }
                       if (t.needs_grad(iv)) {
                         auto& d = t.grad_buffer(iv);
                         for (std::size_t l = 0; l < extra; ++l) {
                           const std::size_t base = (channels + l) * positions;
                           double acc = 0.0;
                           for (std::size_t p = 0; p < positions; ++p) acc += g[base + p];
                           d[l] += acc;
                         }
                       }
                     });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  const auto ix = x.id();
  return x.tape().record("reshape", std::move(out), {ix}, [ix](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    auto& d = t.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
  });
}

Var transpose(const Var& x) {
  const Tensor& in = x.value();
  if (in.rank() != 2) throw DimensionError("transpose: expected rank 2, got " + shape_string(in.shape()));
  const std::size_t rows = in.extent(0), cols = in.extent(1);
  Tensor out(Shape{cols, rows});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = in[r * cols + c];
  }
  const auto ix = x.id();
  return x.tape().record("transpose", std::move(out), {ix}, [ix, rows, cols](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    auto& d = t.grad_buffer(ix);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) d[r * cols + c] += g[c * rows + r];
    }
  });
}

Var mse(const Var& pred, const Var& target) {
  Tape& tape = same_tape(pred, target, "mse");
  if (pred.shape() != target.shape()) {
    throw DimensionError("mse: prediction " + shape_string(pred.shape()) + " vs target " +
                         shape_string(target.shape()));
  }
  const auto& p = pred.value();
  const auto& q = target.value();
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) total += (p[i] - q[i]) * (p[i] - q[i]);
  const double n = static_cast<double>(p.size());
  const auto ip = pred.id(), iq = target.id();
  return tape.record("mse", Tensor::scalar(total / n), {ip, iq}, [ip, iq, n](Tape& t, std::size_t self) {
    const double g = t.grad_of(self)[0];
    const auto& p = t.value(ip);
    const auto& q = t.value(iq);
    const bool want_p = t.needs_grad(ip), want_q = t.needs_grad(iq);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double d = 2.0 * (p[i] - q[i]) / n * g;
      if (want_p) t.grad_buffer(ip)[i] += d;
      if (want_q) t.grad_buffer(iq)[i] -= d;
    }
  });
}

Var sum(const Var& x) {
  const auto& v = x.value();
  const double total = std::accumulate(v.data().begin(), v.data().end(), 0.0);
  const auto ix = x.id();
  return x.tape().record("sum", Tensor::scalar(total), {ix}, [ix](Tape& t, std::size_t self) {
    const double g = t.grad_of(self)[0];
    auto& d = t.grad_buffer(ix);
    for (auto& e : d.data()) e += g;
  });
}

Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  Tape& tape = same_tape(x, gain, "layer_norm");
  same_tape(x, bias, "layer_norm");
  const Tensor& in = x.value();
  if (in.rank() == 0 || gain.shape() != Shape{in.shape().back()} || bias.shape() != Shape{in.shape().back()}) {
    throw DimensionError("layer_norm: input " + shape_string(in.shape()) + ", gain " + shape_string(gain.shape()) +
                         ", bias " + shape_string(bias.shape()) + " do not fit");
  }
  const std::size_t dim = in.shape().back();
  const std::size_t rows = in.size() / dim;
  const auto& g = gain.value();
  const auto& b = bias.value();
  Tensor out(in.shape());
  Tensor normalized(in.shape());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = in.data().data() + r * dim;
    double mu = 0.0;
    for (std::size_t i = 0; i < dim; ++i) mu += row[i];
    mu /= static_cast<double>(dim);
    double var = 0.0;
    for (std::size_t i = 0; i < dim; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= static_cast<double>(dim);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < dim; ++i) {
      const double h = (row[i] - mu) * inv_std[r];
      normalized[r * dim + i] = h;
      out[r * dim + i] = h * g[i] + b[i];
    }
  }
  const auto ix = x.id(), ig = gain.id(), ib = bias.id();
  return tape.record(
      "layer_norm", std::move(out), {ix, ig, ib},
      [ix, ig, ib, rows, dim, normalized = std::move(normalized), inv_std = std::move(inv_std)](Tape& t,
                                                                                             std::size_t self) {
        const auto& gy = t.grad_of(self);
        const auto& g = t.value(ig);
        if (t.needs_grad(ig)) {
          auto& dg = t.grad_buffer(ig);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t i = 0; i < dim; ++i) dg[i] += gy[r * dim + i] * normalized[r * dim + i];
          }
        }
        if (t.needs_grad(ib)) {
          auto& db = t.grad_buffer(ib);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t i = 0; i < dim; ++i) db[i] += gy[r * dim + i];
          }
        }
        if (t.needs_grad(ix)) {
          auto& dx = t.grad_buffer(ix);
          const double n = static_cast<double>(dim);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_dh = 0.0, mean_dh_h = 0.0;
            for (std::size_t i = 0; i < dim; ++i) {
              const double dh = gy[r * dim + i] * g[i];
              mean_dh += dh;
              mean_dh_h += dh * normalized[r * dim + i];
            }
            mean_dh /= n;
            mean_dh_h /= n;
            for (std::size_t i = 0; i < dim; ++i) {
              const double dh = gy[r * dim + i] * g[i];
              dx[r * dim + i] += inv_std[r] * (dh - mean_dh - normalized[r * dim + i] * mean_dh_h);
            }
          }
        }
      });
}

Var median_rows(const Var& x) {
  const Tensor& in = x.value();
  if (in.rank() != 2) throw DimensionError("median_rows: expected rank 2, got " + shape_string(in.shape()));
  const std::size_t rows = in.extent(0), cols = in.extent(1);
  Tensor out(Shape{cols});
  // (row index, weight) pairs that make up each column's median.
  std::vector<std::vector<std::pair<std::size_t, double>>> picks(cols);
  std::vector<std::size_t> order(rows);
  for (std::size_t c = 0; c < cols; ++c) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return in[a * cols + c] < in[b * cols + c]; });
    if (rows % 2 == 1) {
      picks[c] = {{order[rows / 2], 1.0}};
    } else {
      picks[c] = {{order[rows / 2 - 1], 0.5}, {order[rows / 2], 0.5}};
    }
    double v = 0.0;
    for (auto [r, wgt] : picks[c]) v += wgt * in[r * cols + c];
    out[c] = v;
  }
  const auto ix = x.id();
  return x.tape().record("median_rows", std::move(out), {ix}, [ix, cols, picks = std::move(picks)](Tape& t,
                                                                                                 std::size_t self) {
    const auto& g = t.grad_of(self);
    auto& d = t.grad_buffer(ix);
    for (std::size_t c = 0; c < cols; ++c) {
      for (auto [r, wgt] : picks[c]) d[r * cols + c] += wgt * g[c];
    }
  });
}

}  // namespace traitfuse
