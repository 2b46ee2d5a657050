#include "stgcn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "stgcn/errors.hpp"

namespace stgcn::ops {

namespace {

using Grads = std::vector<std::optional<Tensor>>;

Tape& same_tape(Var a, Var b, const char* op) {
  if (&a.tape() != &b.tape()) throw ContractError(std::string(op) + ": operands live on different tapes");
  return a.tape();
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

// Splits a shape around `axis` into (outer, extent, inner) strides.
struct AxisView {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis) {
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

// [m x k] * [k x n] with double accumulation; skips zeros of `a`.
Tensor matmul_raw(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out(Shape{m, n});
  std::vector<double> acc(n);
  const float* pa = a.data().data();
  const float* pb = b.data().data();
  float* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const float* row = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) acc[j] += av * row[j];
    }
    for (std::size_t j = 0; j < n; ++j) po[i * n + j] = static_cast<float>(acc[j]);
  }
  return out;
}

// g [m x n], b [k x n] -> g * b^T [m x k]
Tensor matmul_nt(const Tensor& g, const Tensor& b) {
  const std::size_t m = g.rows(), n = g.cols(), k = b.rows();
  Tensor out(Shape{m, k});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += static_cast<double>(g.at(i, j)) * b.at(p, j);
      out.at(i, p) = static_cast<float>(acc);
    }
  }
  return out;
}

// a [m x k], g [m x n] -> a^T * g [k x n]
Tensor matmul_tn(const Tensor& a, const Tensor& g) {
  const std::size_t m = a.rows(), k = a.cols(), n = g.cols();
  std::vector<double> acc(k * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a.at(i, p);
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) acc[p * n + j] += av * g.at(i, j);
    }
  }
  Tensor out(Shape{k, n});
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i]);
  return out;
}

Var finish(Tape& tape, Tensor value, std::vector<Var> inputs, BackwardFn fn, const char* op) {
  require_finite(value, op);
  return tape.record(std::move(value), std::move(inputs), std::move(fn));
}

// Views x as [T x N x d].
struct TrackView {
  std::size_t steps, tracks, channels;
};

TrackView track_view(const Tensor& x, const char* op) {
  if (x.rank() == 2) return {x.dim(0), 1, x.dim(1)};
  if (x.rank() == 3) return {x.dim(0), x.dim(1), x.dim(2)};
  throw DimensionError(std::string(op) + ": expected [T x d] or [T x N x d], got " + shape_string(x.shape()));
}

Shape track_shape(const Tensor& like, std::size_t steps, std::size_t channels) {
  if (like.rank() == 2) return {steps, channels};
  return {steps, like.dim(1), channels};
}

void check_kernel(const TrackView& xv, const Tensor& kernel, std::size_t stride, const char* op) {
  require_rank(kernel, 3, op);
  if (kernel.dim(1) != xv.channels) {
    throw DimensionError(std::string(op) + ": kernel input width " + std::to_string(kernel.dim(1)) +
                         " does not match input width " + std::to_string(xv.channels));
  }
  if (stride == 0) throw DimensionError(std::string(op) + ": stride must be positive");
}

}  // namespace

std::size_t conv_output_length(std::size_t length, std::size_t kernel, std::size_t stride) {
  if (length < kernel) {
    throw DimensionError("conv1d_temporal: temporal extent " + std::to_string(length) + " shorter than kernel " +
                         std::to_string(kernel));
  }
  return (length - kernel) / stride + 1;
}

std::size_t deconv_output_length(std::size_t length, std::size_t kernel, std::size_t stride) {
  return (length - 1) * stride + kernel;
}

Var matmul(Var a, Var b) {
  Tape& tape = same_tape(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank(av, 2, "matmul");
  require_rank(bv, 2, "matmul");
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: inner extents differ, " + shape_string(av.shape()) + " x " +
                         shape_string(bv.shape()));
  }
  return finish(tape, matmul_raw(av, bv), {a, b},
                [](const BackwardArgs& args) {
                  Grads g(2);
                  if (args.needs_grad[0]) g[0] = matmul_nt(args.grad_output, *args.inputs[1]);
                  if (args.needs_grad[1]) g[1] = matmul_tn(*args.inputs[0], args.grad_output);
                  return g;
                },
                "matmul");
}

Var add(Var a, Var b) {
  Tape& tape = same_tape(a, b, "add");
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
  return finish(tape, std::move(out), {a, b},
                [](const BackwardArgs& args) {
                  Grads g(2);
                  if (args.needs_grad[0]) g[0] = args.grad_output;
                  if (args.needs_grad[1]) g[1] = args.grad_output;
                  return g;
                },
                "add");
}

Var sub(Var a, Var b) {
  Tape& tape = same_tape(a, b, "sub");
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  return finish(tape, std::move(out), {a, b},
                [](const BackwardArgs& args) {
                  Grads g(2);
                  if (args.needs_grad[0]) g[0] = args.grad_output;
                  if (args.needs_grad[1]) {
                    Tensor neg = args.grad_output;
                    for (auto& v : neg.data()) v = -v;
                    g[1] = std::move(neg);
                  }
                  return g;
                },
                "sub");
}

Var add_row(Var a, Var bias) {
  Tape& tape = same_tape(a, bias, "add_row");
  const Tensor& av = a.value();
  require_rank(av, 2, "add_row");
  require_rank(bias.value(), 1, "add_row");
  if (bias.value().dim(0) != av.cols()) {
    throw DimensionError("add_row: bias " + shape_string(bias.shape()) + " vs matrix " + shape_string(av.shape()));
  }
  Tensor out = av;
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < av.cols(); ++j) out.at(i, j) += bias.value()[j];
  return finish(tape, std::move(out), {a, bias},
                [](const BackwardArgs& args) {
                  Grads g(2);
                  const Tensor& go = args.grad_output;
                  if (args.needs_grad[0]) g[0] = go;
                  if (args.needs_grad[1]) {
                    std::vector<double> acc(go.cols(), 0.0);
                    for (std::size_t i = 0; i < go.rows(); ++i)
                      for (std::size_t j = 0; j < go.cols(); ++j) acc[j] += go.at(i, j);
                    Tensor gb(Shape{go.cols()});
                    for (std::size_t j = 0; j < go.cols(); ++j) gb[j] = static_cast<float>(acc[j]);
                    g[1] = std::move(gb);
                  }
                  return g;
                },
                "add_row");
}

Var scale(Var a, float factor) {
  Tensor out = a.value();
  for (auto& v : out.data()) v *= factor;
  return finish(a.tape(), std::move(out), {a},
                [factor](const BackwardArgs& args) {
                  Tensor g = args.grad_output;
                  for (auto& v : g.data()) v *= factor;
                  return Grads{std::move(g)};
                },
                "scale");
}

Var mul(Var a, Var b) {
  Tape& tape = same_tape(a, b, "mul");
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  return finish(tape, std::move(out), {a, b},
                [](const BackwardArgs& args) {
                  Grads g(2);
                  for (std::size_t side = 0; side < 2; ++side) {
                    if (!args.needs_grad[side]) continue;
                    Tensor gi = args.grad_output;
                    auto other = args.inputs[1 - side]->data();
                    auto d = gi.data();
                    for (std::size_t i = 0; i < d.size(); ++i) d[i] *= other[i];
                    g[side] = std::move(gi);
                  }
                  return g;
                },
                "mul");
}

Var relu(Var x) {
  Tensor out = x.value();
  for (auto& v : out.data()) v = v > 0.0f ? v : 0.0f;
  return finish(x.tape(), std::move(out), {x},
                [](const BackwardArgs& args) {
                  Tensor g = args.grad_output;
                  auto in = args.inputs[0]->data();
                  auto d = g.data();
                  for (std::size_t i = 0; i < d.size(); ++i)
                    if (!(in[i] > 0.0f)) d[i] = 0.0f;
                  return Grads{std::move(g)};
                },
                "relu");
}

Var sigmoid(Var x) {
  Tensor out = x.value();
  for (auto& v : out.data()) {
    v = v >= 0.0f ? 1.0f / (1.0f + std::exp(-v)) : std::exp(v) / (1.0f + std::exp(v));
  }
  return finish(x.tape(), std::move(out), {x},
                [](const BackwardArgs& args) {
                  Tensor g = args.grad_output;
                  auto y = args.output.data();
                  auto d = g.data();
                  for (std::size_t i = 0; i < d.size(); ++i) d[i] *= y[i] * (1.0f - y[i]);
                  return Grads{std::move(g)};
                },
                "sigmoid");
}

Var mean_axis(Var x, std::size_t axis) {
  const Tensor& xv = x.value();
  if (axis >= xv.rank()) throw DimensionError("mean_axis: axis out of range for " + shape_string(xv.shape()));
  const auto v = axis_view(xv.shape(), axis);
  Shape out_shape = xv.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  Tensor out(out_shape);
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      double acc = 0.0;
      for (std::size_t e = 0; e < v.extent; ++e) acc += xv[(o * v.extent + e) * v.inner + i];
      out[o * v.inner + i] = static_cast<float>(acc / static_cast<double>(v.extent));
    }
  }
  Shape in_shape = xv.shape();
  return finish(x.tape(), std::move(out), {x},
                [v, in_shape](const BackwardArgs& args) {
                  Tensor g(in_shape);
                  const float inv = 1.0f / static_cast<float>(v.extent);
                  for (std::size_t o = 0; o < v.outer; ++o)
                    for (std::size_t e = 0; e < v.extent; ++e)
                      for (std::size_t i = 0; i < v.inner; ++i)
                        g[(o * v.extent + e) * v.inner + i] = args.grad_output[o * v.inner + i] * inv;
                  return Grads{std::move(g)};
                },
                "mean_axis");
}

Var sum(Var x) {
  double acc = 0.0;
  for (float v : x.value().data()) acc += v;
  Shape in_shape = x.value().shape();
  return finish(x.tape(), Tensor::scalar(static_cast<float>(acc)), {x},
                [in_shape](const BackwardArgs& args) { return Grads{Tensor(in_shape, args.grad_output[0])}; },
                "sum");
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no operands");
  Tape& tape = parts.front().tape();
  const Shape& first = parts.front().value().shape();
  if (axis >= first.size()) throw DimensionError("concat: axis out of range for " + shape_string(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::size_t> extents;
  for (const auto& p : parts) {
    same_tape(parts.front(), p, "concat");
    const Shape& s = p.value().shape();
    if (s.size() != first.size()) throw DimensionError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != first[i]) {
        throw DimensionError("concat: " + shape_string(s) + " incompatible with " + shape_string(first));
      }
    }
    extents.push_back(s[axis]);
    out_shape[axis] += s[axis];
  }
  const auto ov = axis_view(out_shape, axis);
  Tensor out(out_shape);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    for (std::size_t o = 0; o < ov.outer; ++o)
      for (std::size_t e = 0; e < extents[k]; ++e)
        for (std::size_t i = 0; i < ov.inner; ++i)
          out[(o * ov.extent + offset + e) * ov.inner + i] = pv[(o * extents[k] + e) * ov.inner + i];
    offset += extents[k];
  }
  return finish(tape, std::move(out), parts,
                [ov, extents](const BackwardArgs& args) {
                  Grads g(extents.size());
                  std::size_t off = 0;
                  for (std::size_t k = 0; k < extents.size(); ++k) {
                    if (args.needs_grad[k]) {
                      Tensor gk(args.inputs[k]->shape());
                      for (std::size_t o = 0; o < ov.outer; ++o)
                        for (std::size_t e = 0; e < extents[k]; ++e)
                          for (std::size_t i = 0; i < ov.inner; ++i)
                            gk[(o * extents[k] + e) * ov.inner + i] =
                                args.grad_output[(o * ov.extent + off + e) * ov.inner + i];
                      g[k] = std::move(gk);
                    }
                    off += extents[k];
                  }
                  return g;
                },
                "concat");
}

Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Tensor& xv = x.value();
  if (axis >= xv.rank()) throw DimensionError("slice: axis out of range for " + shape_string(xv.shape()));
  if (begin >= end || end > xv.dim(axis)) {
    throw DimensionError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid for extent " + std::to_string(xv.dim(axis)));
  }
  const auto iv = axis_view(xv.shape(), axis);
  Shape out_shape = xv.shape();
  out_shape[axis] = end - begin;
  const std::size_t len = end - begin;
  Tensor out(out_shape);
  for (std::size_t o = 0; o < iv.outer; ++o)
    for (std::size_t e = 0; e < len; ++e)
      for (std::size_t i = 0; i < iv.inner; ++i)
        out[(o * len + e) * iv.inner + i] = xv[(o * iv.extent + begin + e) * iv.inner + i];
  Shape in_shape = xv.shape();
  return finish(x.tape(), std::move(out), {x},
                [iv, in_shape, begin, len](const BackwardArgs& args) {
                  Tensor g(in_shape);
                  for (std::size_t o = 0; o < iv.outer; ++o)
                    for (std::size_t e = 0; e < len; ++e)
                      for (std::size_t i = 0; i < iv.inner; ++i)
                        g[(o * iv.extent + begin + e) * iv.inner + i] = args.grad_output[(o * len + e) * iv.inner + i];
                  return Grads{std::move(g)};
                },
                "slice");
}

Var reshape(Var x, Shape shape) {
  Shape in_shape = x.value().shape();
  return finish(x.tape(), x.value().reshaped(std::move(shape)), {x},
                [in_shape](const BackwardArgs& args) { return Grads{args.grad_output.reshaped(in_shape)}; },
                "reshape");
}

Var pad_axis0(Var x, std::size_t length) {
  const Tensor& xv = x.value();
  if (xv.rank() == 0) throw DimensionError("pad_axis0: scalar input");
  const std::size_t have = xv.dim(0);
  if (length < have) throw DimensionError("pad_axis0: target shorter than input");
  if (length == have) return x;
  Shape out_shape = xv.shape();
  out_shape[0] = length;
  Tensor out(out_shape);
  std::copy(xv.data().begin(), xv.data().end(), out.data().begin());
  const std::size_t n = xv.size();
  Shape in_shape = xv.shape();
  return finish(x.tape(), std::move(out), {x},
                [in_shape, n](const BackwardArgs& args) {
                  Tensor g(in_shape);
                  std::copy_n(args.grad_output.data().begin(), n, g.data().begin());
                  return Grads{std::move(g)};
                },
                "pad_axis0");
}

Var conv1d_temporal(Var x, Var kernel, std::size_t stride) {
  Tape& tape = same_tape(x, kernel, "conv1d_temporal");
  const Tensor& xv = x.value();
  const Tensor& kv = kernel.value();
  const TrackView tv = track_view(xv, "conv1d_temporal");
  check_kernel(tv, kv, stride, "conv1d_temporal");
  const std::size_t k = kv.dim(0), d_in = tv.channels, d_out = kv.dim(2), n = tv.tracks;
  const std::size_t steps = conv_output_length(tv.steps, k, stride);

  Tensor out(track_shape(xv, steps, d_out));
  std::vector<double> acc(d_out);
  for (std::size_t o = 0; o < steps; ++o) {
    for (std::size_t r = 0; r < n; ++r) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t q = 0; q < k; ++q) {
        const float* xrow = xv.data().data() + ((o * stride + q) * n + r) * d_in;
        for (std::size_t i = 0; i < d_in; ++i) {
          const double xi = xrow[i];
          if (xi == 0.0) continue;
          const float* krow = kv.data().data() + (q * d_in + i) * d_out;
          for (std::size_t j = 0; j < d_out; ++j) acc[j] += xi * krow[j];
        }
      }
      float* orow = out.data().data() + (o * n + r) * d_out;
      for (std::size_t j = 0; j < d_out; ++j) orow[j] = static_cast<float>(acc[j]);
    }
  }
  return finish(tape, std::move(out), {x, kernel},
                [stride, k, d_in, d_out, n, steps](const BackwardArgs& args) {
                  const Tensor& go = args.grad_output;
                  const Tensor& xin = *args.inputs[0];
                  const Tensor& kin = *args.inputs[1];
                  Grads g(2);
                  if (args.needs_grad[0]) {
                    std::vector<double> gx(xin.size(), 0.0);
                    for (std::size_t o = 0; o < steps; ++o)
                      for (std::size_t r = 0; r < n; ++r)
                        for (std::size_t q = 0; q < k; ++q)
                          for (std::size_t i = 0; i < d_in; ++i) {
                            double acc_i = 0.0;
                            for (std::size_t j = 0; j < d_out; ++j)
                              acc_i += static_cast<double>(go[(o * n + r) * d_out + j]) * kin[(q * d_in + i) * d_out + j];
                            gx[((o * stride + q) * n + r) * d_in + i] += acc_i;
                          }
                    Tensor gxt(xin.shape());
                    for (std::size_t i = 0; i < gx.size(); ++i) gxt[i] = static_cast<float>(gx[i]);
                    g[0] = std::move(gxt);
                  }
                  if (args.needs_grad[1]) {
                    std::vector<double> gk(kin.size(), 0.0);
                    for (std::size_t o = 0; o < steps; ++o)
                      for (std::size_t r = 0; r < n; ++r)
                        for (std::size_t q = 0; q < k; ++q)
                          for (std::size_t i = 0; i < d_in; ++i) {
                            const double xi = xin[((o * stride + q) * n + r) * d_in + i];
                            if (xi == 0.0) continue;
                            for (std::size_t j = 0; j < d_out; ++j)
                              gk[(q * d_in + i) * d_out + j] += xi * go[(o * n + r) * d_out + j];
                          }
                    Tensor gkt(kin.shape());
                    for (std::size_t i = 0; i < gk.size(); ++i) gkt[i] = static_cast<float>(gk[i]);
                    g[1] = std::move(gkt);
                  }
                  return g;
                },
                "conv1d_temporal");
}

Var deconv1d_temporal(Var x, Var kernel, std::size_t stride) {
  Tape& tape = same_tape(x, kernel, "deconv1d_temporal");
  const Tensor& xv = x.value();
  const Tensor& kv = kernel.value();
  const TrackView tv = track_view(xv, "deconv1d_temporal");
  check_kernel(tv, kv, stride, "deconv1d_temporal");
  const std::size_t k = kv.dim(0), d_in = tv.channels, d_out = kv.dim(2), n = tv.tracks;
  const std::size_t steps_in = tv.steps;
  const std::size_t steps = deconv_output_length(steps_in, k, stride);

  std::vector<double> acc(steps * n * d_out, 0.0);
  for (std::size_t o = 0; o < steps_in; ++o)
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t i = 0; i < d_in; ++i) {
        const double xi = xv[(o * n + r) * d_in + i];
        if (xi == 0.0) continue;
        for (std::size_t q = 0; q < k; ++q) {
          const float* krow = kv.data().data() + (q * d_in + i) * d_out;
          double* arow = acc.data() + ((o * stride + q) * n + r) * d_out;
          for (std::size_t j = 0; j < d_out; ++j) arow[j] += xi * krow[j];
        }
      }
  Tensor out(track_shape(xv, steps, d_out));
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i]);

  return finish(tape, std::move(out), {x, kernel},
                [stride, k, d_in, d_out, n, steps_in](const BackwardArgs& args) {
                  const Tensor& go = args.grad_output;
                  const Tensor& xin = *args.inputs[0];
                  const Tensor& kin = *args.inputs[1];
                  Grads g(2);
                  if (args.needs_grad[0]) {
                    Tensor gx(xin.shape());
                    for (std::size_t o = 0; o < steps_in; ++o)
                      for (std::size_t r = 0; r < n; ++r)
                        for (std::size_t i = 0; i < d_in; ++i) {
                          double a = 0.0;
                          for (std::size_t q = 0; q < k; ++q)
                            for (std::size_t j = 0; j < d_out; ++j)
                              a += static_cast<double>(go[((o * stride + q) * n + r) * d_out + j]) *
                                   kin[(q * d_in + i) * d_out + j];
                          gx[(o * n + r) * d_in + i] = static_cast<float>(a);
                        }
                    g[0] = std::move(gx);
                  }
                  if (args.needs_grad[1]) {
                    std::vector<double> gk(kin.size(), 0.0);
                    for (std::size_t o = 0; o < steps_in; ++o)
                      for (std::size_t r = 0; r < n; ++r)
                        for (std::size_t i = 0; i < d_in; ++i) {
                          const double xi = xin[(o * n + r) * d_in + i];
                          if (xi == 0.0) continue;
                          for (std::size_t q = 0; q < k; ++q)
                            for (std::size_t j = 0; j < d_out; ++j)
                              gk[(q * d_in + i) * d_out + j] += xi * go[((o * stride + q) * n + r) * d_out + j];
                        }
                    Tensor gkt(kin.shape());
                    for (std::size_t i = 0; i < gk.size(); ++i) gkt[i] = static_cast<float>(gk[i]);
                    g[1] = std::move(gkt);
                  }
                  return g;
                },
                "deconv1d_temporal");
}

}  // namespace stgcn::ops
