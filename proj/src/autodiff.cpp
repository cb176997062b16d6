#include "symcons/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "symcons/errors.hpp"
#include "symcons/rng.hpp"

namespace symcons {

const Tensor& Var::value() const {
  if (!tape_) throw ContractError("use of an empty Var");
  return tape_->value(id_);
}

void Tape::check(Var v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) throw ContractError("Var belongs to another tape");
}

Var Tape::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Tensor& param) {
  Node n;
  n.param = &param;
  n.needs_grad = grad_enabled_ && param.requires_grad;
  if (n.needs_grad) n.grad_sink = &param;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(const Tensor& param) {
  Node n;
  n.param = &param;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::span<const Var> inputs, Tensor value, BackwardFn backward) {
  Node n;
  n.owned = std::move(value);
  if (grad_enabled_) {
    for (const Var& in : inputs) {
      check(in);
      n.needs_grad = n.needs_grad || nodes_[in.id_].needs_grad;
    }
    if (n.needs_grad) n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.param ? *n.param : n.owned;
}

std::span<double> Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(value(id).size(), 0.0);
  return n.grad;
}

bool Tape::has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }

void Tape::backward(Var root) {
  check(root);
  if (value(root.id_).size() != 1) {
    throw ContractError("backward(root) needs a scalar root; got shape " +
                        shape_string(value(root.id_).shape));
  }
  const double one = 1.0;
  backward(root, std::span<const double>(&one, 1));
}

void Tape::backward(Var root, std::span<const double> seed) {
  check(root);
  if (!grad_enabled_) throw ContractError("backward on a tape recorded without gradients");
  if (seed.size() != value(root.id_).size()) throw ContractError("seed size mismatch in backward");
  auto g = grad(root.id_);
  for (std::size_t i = 0; i < seed.size(); ++i) g[i] += seed[i];

  for (std::size_t id = root.id_ + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.grad.empty() || !n.needs_grad) continue;
    if (n.backward) {
      n.backward(*this, id);
    } else if (n.grad_sink) {
      auto& pg = n.grad_sink->grad;
      for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += n.grad[i];
    }
  }
}

// ---------------------------------------------------------------------------

namespace {

void require(bool cond, const std::string& what) {
  if (!cond) throw ContractError(what);
}

struct MatmulDims {
  std::size_t groups, m, k, n;
  bool batched_b;
};

}  // namespace

Var matmul(Var a, Var b, bool transpose_b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  require(sa.size() == 2 || sa.size() == 3, "matmul: left operand must be rank 2 or 3");
  require(sb.size() == 2 || sb.size() == 3, "matmul: right operand must be rank 2 or 3");
  MatmulDims d{};
  d.groups = sa.size() == 3 ? sa[0] : 1;
  d.m = sa[sa.size() - 2];
  d.k = sa.back();
  d.batched_b = sb.size() == 3;
  if (d.batched_b) require(sa.size() == 3 && sb[0] == d.groups, "matmul: group count mismatch");
  const std::size_t bk = transpose_b ? sb.back() : sb[sb.size() - 2];
  d.n = transpose_b ? sb[sb.size() - 2] : sb.back();
  require(bk == d.k, "matmul: inner dimensions differ (" + shape_string(sa) + " x " +
                         shape_string(sb) + (transpose_b ? "^T)" : ")"));

  Shape out_shape = sa.size() == 3 ? Shape{d.groups, d.m, d.n} : Shape{d.m, d.n};
  Tensor out(out_shape);
  const auto& av = a.value().values;
  const auto& bv = b.value().values;
  const std::size_t a_stride = d.m * d.k, b_stride = d.batched_b ? d.k * d.n : 0,
                    c_stride = d.m * d.n;

  auto sub = [](const std::vector<double>& v, std::size_t off, std::size_t len) {
    return std::span<const double>(v.data() + off, len);
  };

  if (!transpose_b && !d.batched_b) {
    // One big GEMM over all groups: rows of a are independent.
    kernels::matmul_nn(av, bv, out.values, d.groups * d.m, d.k, d.n);
  } else {
    for (std::size_t g = 0; g < d.groups; ++g) {
      auto as = sub(av, g * a_stride, a_stride);
      auto bs = sub(bv, g * b_stride, d.k * d.n);
      std::span<double> cs(out.values.data() + g * c_stride, c_stride);
      if (transpose_b) {
        kernels::matmul_nt(as, bs, cs, d.m, d.k, d.n);
      } else {
        kernels::matmul_nn(as, bs, cs, d.m, d.k, d.n);
      }
    }
  }

  const Var inputs[] = {a, b};
  return a.tape()->record(inputs, std::move(out), [=, ia = a.id(), ib = b.id()](Tape& t, std::size_t self) {
    const auto& av = t.value(ia).values;
    const auto& bv = t.value(ib).values;
    std::span<const double> gc = t.grad(self);
    const bool need_a = t.needs_grad(ia);
    const bool need_b = t.needs_grad(ib);
    std::span<double> ga = need_a ? t.grad(ia) : std::span<double>();
    std::span<double> gb = need_b ? t.grad(ib) : std::span<double>();

    if (!d.batched_b && !transpose_b) {
      const std::size_t rows = d.groups * d.m;
      if (need_a) kernels::matmul_nt(gc, bv, ga, rows, d.n, d.k);   // dA = dC B^T
      if (need_b) kernels::matmul_tn(av, gc, gb, rows, d.k, d.n);   // dB = A^T dC
      return;
    }
    for (std::size_t g = 0; g < d.groups; ++g) {
      std::span<const double> as(av.data() + g * a_stride, a_stride);
      std::span<const double> bs(bv.data() + g * b_stride, d.k * d.n);
      std::span<const double> cs(gc.data() + g * c_stride, c_stride);
      if (transpose_b) {
        // C = A B^T with B stored [n,k]: dA = dC B, dB = dC^T A
        if (need_a) kernels::matmul_nn(cs, bs, ga.subspan(g * a_stride, a_stride), d.m, d.n, d.k);
        if (need_b) kernels::matmul_tn(cs, as, gb.subspan(g * b_stride, d.k * d.n), d.m, d.n, d.k);
      } else {
        if (need_a) kernels::matmul_nt(cs, bs, ga.subspan(g * a_stride, a_stride), d.m, d.n, d.k);
        if (need_b) kernels::matmul_tn(as, cs, gb.subspan(g * b_stride, d.k * d.n), d.m, d.k, d.n);
      }
    }
  });
}

Var add(Var a, Var b) {
  const Tensor& ta = a.value();
  const Tensor& tb = b.value();
  const bool broadcast = ta.shape != tb.shape;
  if (broadcast) {
    require(tb.rank() == 1 && tb.size() == ta.last_dim(),
            "add: shapes " + shape_string(ta.shape) + " and " + shape_string(tb.shape) +
                " are neither equal nor row-broadcastable");
  }
  Tensor out = ta;
  out.set_requires_grad(false);
  const std::size_t n = tb.size();
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] += tb.values[broadcast ? i % n : i];

  const Var inputs[] = {a, b};
  return a.tape()->record(inputs, std::move(out), [broadcast, n, ia = a.id(), ib = b.id()](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    if (t.needs_grad(ia)) {
      auto ga = t.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.needs_grad(ib)) {
      auto gb = t.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[broadcast ? i % n : i] += g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require(a.shape() == b.shape(), "mul: shape mismatch");
  Tensor out(a.shape());
  const auto& av = a.value().values;
  const auto& bv = b.value().values;
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = av[i] * bv[i];
  const Var inputs[] = {a, b};
  return a.tape()->record(inputs, std::move(out), [ia = a.id(), ib = b.id()](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    const auto& av = t.value(ia).values;
    const auto& bv = t.value(ib).values;
    if (t.needs_grad(ia)) {
      auto ga = t.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.needs_grad(ib)) {
      auto gb = t.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double factor) {
  Tensor out(a.shape());
  const auto& av = a.value().values;
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = av[i] * factor;
  const Var inputs[] = {a};
  return a.tape()->record(inputs, std::move(out), [factor, ia = a.id()](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    auto ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double x : a.value().values) s += x;
  const Var inputs[] = {a};
  return a.tape()->record(inputs, Tensor({1}, s), [ia = a.id()](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    for (double& x : t.grad(ia)) x += g;
  });
}

Var gather_rows(Var table, std::vector<std::size_t> indices) {
  const Tensor& tt = table.value();
  require(tt.rank() == 2, "gather_rows: table must be rank 2");
  const std::size_t rows = tt.shape[0], dim = tt.shape[1];
  Tensor out({indices.size(), dim});
  for (std::size_t r = 0; r < indices.size(); ++r) {
    require(indices[r] < rows, "gather_rows: index " + std::to_string(indices[r]) + " out of range");
    std::copy_n(tt.values.begin() + static_cast<std::ptrdiff_t>(indices[r] * dim), dim,
                out.values.begin() + static_cast<std::ptrdiff_t>(r * dim));
  }
  const Var inputs[] = {table};
  return table.tape()->record(inputs, std::move(out),
                              [dim, idx = std::move(indices), it = table.id()](Tape& t, std::size_t self) {
                                auto g = t.grad(self);
                                auto gt = t.grad(it);
                                for (std::size_t r = 0; r < idx.size(); ++r) {
                                  for (std::size_t j = 0; j < dim; ++j) gt[idx[r] * dim + j] += g[r * dim + j];
                                }
                              });
}

Var softmax(Var a) {
  const Tensor& ta = a.value();
  const std::size_t n = ta.last_dim();
  require(n >= 1, "softmax: empty last dimension");
  Tensor out(ta.shape);
  for (std::size_t r = 0; r < ta.rows(); ++r) {
    const double* x = ta.values.data() + r * n;
    double* y = out.values.data() + r * n;
    double mx = x[0];
    for (std::size_t j = 0; j < n; ++j) {
      if (!std::isfinite(x[j])) throw NumericalError("softmax: non-finite input");
      mx = std::max(mx, x[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < n; ++j) y[j] /= z;
  }
  const Var inputs[] = {a};
  return a.tape()->record(inputs, std::move(out), [n, ia = a.id()](Tape& t, std::size_t self) {
    const auto& y = t.value(self).values;
    auto g = t.grad(self);
    auto ga = t.grad(ia);
    for (std::size_t base = 0; base < y.size(); base += n) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[base + j] * y[base + j];
      for (std::size_t j = 0; j < n; ++j) ga[base + j] += y[base + j] * (g[base + j] - dot);
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  const Tensor& tx = x.value();
  const std::size_t n = tx.last_dim();
  require(gain.value().rank() == 1 && gain.value().size() == n, "layer_norm: gain must match last dim");
  require(bias.value().rank() == 1 && bias.value().size() == n, "layer_norm: bias must match last dim");
  const auto& gv = gain.value().values;
  const auto& bv = bias.value().values;

  const std::size_t rows = tx.rows();
  Tensor out(tx.shape);
  std::vector<double> xhat(tx.size());
  std::vector<double> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = tx.values.data() + r * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += xr[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(n);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (xr[j] - mean) * rstd[r];
      xhat[r * n + j] = h;
      out.values[r * n + j] = h * gv[j] + bv[j];
    }
  }

  const Var inputs[] = {x, gain, bias};
  return x.tape()->record(
      inputs, std::move(out),
      [n, rows, xhat = std::move(xhat), rstd = std::move(rstd), ix = x.id(), ig = gain.id(),
       ib = bias.id()](Tape& t, std::size_t self) {
        auto g = t.grad(self);
        const auto& gv = t.value(ig).values;
        if (t.needs_grad(ig) || t.needs_grad(ib)) {
          auto gg = t.grad(ig);
          auto gb = t.grad(ib);
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < n; ++j) {
              gg[j] += g[r * n + j] * xhat[r * n + j];
              gb[j] += g[r * n + j];
            }
          }
        }
        if (!t.needs_grad(ix)) return;
        auto gx = t.grad(ix);
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t r = 0; r < rows; ++r) {
          double s1 = 0.0, s2 = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            const double dh = g[r * n + j] * gv[j];
            s1 += dh;
            s2 += dh * xhat[r * n + j];
          }
          for (std::size_t j = 0; j < n; ++j) {
            const double dh = g[r * n + j] * gv[j];
            gx[r * n + j] += rstd[r] * (dh - inv_n * s1 - xhat[r * n + j] * inv_n * s2);
          }
        }
      });
}

Var gelu(Var a) {
  const auto& av = a.value().values;
  Tensor out(a.shape());
  for (std::size_t i = 0; i < av.size(); ++i) {
    out.values[i] = 0.5 * av[i] * (1.0 + std::erf(av[i] * std::numbers::sqrt2 / 2.0));
  }
  const Var inputs[] = {a};
  return a.tape()->record(inputs, std::move(out), [ia = a.id()](Tape& t, std::size_t self) {
    const auto& av = t.value(ia).values;
    auto g = t.grad(self);
    auto ga = t.grad(ia);
    const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    for (std::size_t i = 0; i < av.size(); ++i) {
      const double x = av[i];
      const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
      ga[i] += g[i] * (cdf + x * pdf);
    }
  });
}

Var relu(Var a) {
  const auto& av = a.value().values;
  Tensor out(a.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out.values[i] = av[i] > 0.0 ? av[i] : 0.0;
  const Var inputs[] = {a};
  return a.tape()->record(inputs, std::move(out), [ia = a.id()](Tape& t, std::size_t self) {
    const auto& av = t.value(ia).values;
    auto g = t.grad(self);
    auto ga = t.grad(ia);
    for (std::size_t i = 0; i < av.size(); ++i) {
      if (av[i] > 0.0) ga[i] += g[i];
    }
  });
}

Var dropout(Var a, double rate, Rng& rng) {
  require(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0, 1)");
  if (rate == 0.0) return a;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(a.value().size());
  for (double& m : mask) m = rng.uniform() < rate ? 0.0 : keep_scale;
  Tensor out(a.shape());
  const auto& av = a.value().values;
  for (std::size_t i = 0; i < av.size(); ++i) out.values[i] = av[i] * mask[i];
  const Var inputs[] = {a};
  return a.tape()->record(inputs, std::move(out), [mask = std::move(mask), ia = a.id()](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    auto ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
  });
}

Var concat_last(std::span<const Var> parts) {
  require(!parts.empty(), "concat_last: no inputs");
  const std::size_t rows = parts[0].value().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    require(p.value().rows() == rows, "concat_last: row counts differ");
    widths.push_back(p.value().last_dim());
    total += widths.back();
  }
  Shape shape = parts[0].shape();
  shape.back() = total;
  Tensor out(shape);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& pv = parts[k].value().values;
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(r * widths[k]), widths[k],
                  out.values.begin() + static_cast<std::ptrdiff_t>(r * total + offset));
    }
    offset += widths[k];
  }
  std::vector<std::size_t> ids;
  for (const Var& p : parts) ids.push_back(p.id());
  return parts[0].tape()->record(parts, std::move(out), [rows, total, widths, ids](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.needs_grad(ids[k])) {
        auto gp = t.grad(ids[k]);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < widths[k]; ++j) gp[r * widths[k] + j] += g[r * total + offset + j];
        }
      }
      offset += widths[k];
    }
  });
}

Var slice_last(Var a, std::size_t begin, std::size_t end) {
  const Tensor& ta = a.value();
  const std::size_t n = ta.last_dim();
  require(begin < end && end <= n, "slice_last: bad range");
  const std::size_t w = end - begin;
  const std::size_t rows = ta.rows();
  Shape shape = ta.shape;
  shape.back() = w;
  Tensor out(shape);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(ta.values.begin() + static_cast<std::ptrdiff_t>(r * n + begin), w,
                out.values.begin() + static_cast<std::ptrdiff_t>(r * w));
  }
  const Var inputs[] = {a};
  return a.tape()->record(inputs, std::move(out), [n, w, rows, begin, ia = a.id()](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    auto ga = t.grad(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < w; ++j) ga[r * n + begin + j] += g[r * w + j];
    }
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  const Tensor& ta = a.value();
  require(ta.rank() == 2, "slice_rows: operand must be rank 2");
  require(begin < end && end <= ta.shape[0], "slice_rows: bad range");
  const std::size_t n = ta.shape[1];
  Tensor out({end - begin, n});
  std::copy(ta.values.begin() + static_cast<std::ptrdiff_t>(begin * n),
            ta.values.begin() + static_cast<std::ptrdiff_t>(end * n), out.values.begin());
  const Var inputs[] = {a};
  return a.tape()->record(inputs, std::move(out), [n, begin, ia = a.id()](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    auto ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[begin * n + i] += g[i];
  });
}

Var reshape(Var a, Shape shape) {
  require(shape_size(shape) == a.value().size(),
          "reshape: " + shape_string(a.shape()) + " -> " + shape_string(shape));
  Tensor out(std::move(shape), a.value().values);
  const Var inputs[] = {a};
  return a.tape()->record(inputs, std::move(out), [ia = a.id()](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    auto ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var scaled_dot_attention(Var q, Var k, Var v, std::span<const int> key_mask) {
  const Shape& sq = q.shape();
  require(sq.size() == 3, "attention: q must be [G, L, d]");
  require(k.shape() == sq && v.shape() == sq, "attention: q, k, v shapes differ");
  const std::size_t groups = sq[0], len = sq[1], d = sq[2];
  require(d >= 1, "attention: head dim must be >= 1");
  require(key_mask.size() == groups * len || key_mask.size() == len, "attention: bad mask length");

  Tensor bias({groups, len, len});
  const bool shared = key_mask.size() == len && groups != 1;
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t i = 0; i < len; ++i) {
      for (std::size_t j = 0; j < len; ++j) {
        const int m = shared ? key_mask[j] : key_mask[g * len + j];
        bias.values[(g * len + i) * len + j] = m ? 0.0 : -1e9;
      }
    }
  }
  Tape& tape = *q.tape();
  Var scores = scale(matmul(q, k, /*transpose_b=*/true), 1.0 / std::sqrt(static_cast<double>(d)));
  Var weights = softmax(add(scores, tape.constant(std::move(bias))));
  return matmul(weights, v);
}

}  // namespace symcons
