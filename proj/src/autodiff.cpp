#include "uwe/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "uwe/error.hpp"

namespace uwe::ad {

namespace {

void same_size(const Tape& t, Var a, Var b) {
  require(t.size(a) == t.size(b), Errc::shape_mismatch, "operand sizes differ");
}

double sigmoid_of(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

}  // namespace

std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

Var Tape::input(std::vector<double> value, Shape shape) { return push(std::move(value), std::move(shape), nullptr); }

Var Tape::push(std::vector<double> value, Shape shape, Backward back) {
  require(numel(shape) == value.size(), Errc::shape_mismatch, "tensor shape does not match its data");
  nodes_.push_back({std::move(value), std::move(shape), std::move(back)});
  return Var{nodes_.size() - 1};
}

double Tape::item(Var v) const {
  require(size(v) == 1, Errc::shape_mismatch, "item() needs a single-element tensor");
  return nodes_[v.id].value[0];
}

void Tape::backward(Var out) {
  require(out.valid() && out.id < nodes_.size() && size(out) == 1, Errc::shape_mismatch,
          "backward() needs a scalar output");
  grads_.assign(nodes_.size(), {});
  for (std::size_t i = 0; i <= out.id; ++i) grads_[i].assign(nodes_[i].value.size(), 0.0);
  grads_[out.id][0] = 1.0;
  for (std::size_t i = out.id + 1; i-- > 0;)
    if (nodes_[i].back) nodes_[i].back(*this, i);
}

Var add(Tape& t, Var a, Var b) {
  same_size(t, a, b);
  std::vector<double> v(t.value(a));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += t.value(b)[i];
  return t.push(std::move(v), t.shape(a), [a, b](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    auto& ga = t.grad_mut(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    auto& gb = t.grad_mut(b.id);
    for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
  });
}

Var sub(Tape& t, Var a, Var b) { return lincomb(t, 1.0, a, -1.0, b); }

Var mul(Tape& t, Var a, Var b) {
  same_size(t, a, b);
  std::vector<double> v(t.value(a));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] *= t.value(b)[i];
  return t.push(std::move(v), t.shape(a), [a, b](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    const auto& va = t.value(a);
    const auto& vb = t.value(b);
    auto& ga = t.grad_mut(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
    auto& gb = t.grad_mut(b.id);
    for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
  });
}

Var affine(Tape& t, Var x, double a, double b) {
  std::vector<double> v(t.value(x));
  for (double& e : v) e = a * e + b;
  return t.push(std::move(v), t.shape(x), [x, a](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    auto& gx = t.grad_mut(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += a * g[i];
  });
}

Var lincomb(Tape& t, double a, Var x, double b, Var y) {
  same_size(t, x, y);
  std::vector<double> v(t.size(x));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a * t.value(x)[i] + b * t.value(y)[i];
  return t.push(std::move(v), t.shape(x), [=](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    auto& gx = t.grad_mut(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += a * g[i];
    auto& gy = t.grad_mut(y.id);
    for (std::size_t i = 0; i < g.size(); ++i) gy[i] += b * g[i];
  });
}

Var add_const(Tape& t, Var x, std::span<const double> c) {
  require(c.size() == t.size(x), Errc::shape_mismatch, "constant size differs from operand");
  std::vector<double> v(t.value(x));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += c[i];
  return t.push(std::move(v), t.shape(x), [x](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    auto& gx = t.grad_mut(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var silu(Tape& t, Var x) {
  std::vector<double> v(t.value(x));
  for (double& e : v) e *= sigmoid_of(e);
  return t.push(std::move(v), t.shape(x), [x](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    const auto& vx = t.value(x);
    auto& gx = t.grad_mut(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = sigmoid_of(vx[i]);
      gx[i] += g[i] * s * (1.0 + vx[i] * (1.0 - s));
    }
  });
}

Var sigmoid(Tape& t, Var x) {
  std::vector<double> v(t.value(x));
  for (double& e : v) e = sigmoid_of(e);
  return t.push(std::move(v), t.shape(x), [x](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    const auto& s = t.value(Var{self});
    auto& gx = t.grad_mut(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * s[i] * (1.0 - s[i]);
  });
}

Var exp(Tape& t, Var x) {
  std::vector<double> v(t.value(x));
  for (double& e : v) e = std::exp(e);
  return t.push(std::move(v), t.shape(x), [x](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    const auto& e = t.value(Var{self});
    auto& gx = t.grad_mut(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * e[i];
  });
}

Var sum(Tape& t, Var x) {
  double s = 0.0;
  for (double e : t.value(x)) s += e;
  return t.push({s}, {1}, [x](Tape& t, std::size_t self) {
    const double g = t.grad_of(self)[0];
    for (double& e : t.grad_mut(x.id)) e += g;
  });
}

Var mean(Tape& t, Var x) { return affine(t, sum(t, x), 1.0 / static_cast<double>(t.size(x))); }

Var mean_abs_diff(Tape& t, Var a, Var b) {
  same_size(t, a, b);
  const auto n = static_cast<double>(t.size(a));
  double s = 0.0;
  for (std::size_t i = 0; i < t.size(a); ++i) s += std::abs(t.value(a)[i] - t.value(b)[i]);
  return t.push({s / n}, {1}, [a, b, n](Tape& t, std::size_t self) {
    const double g = t.grad_of(self)[0] / n;
    const auto& va = t.value(a);
    const auto& vb = t.value(b);
    auto& ga = t.grad_mut(a.id);
    auto& gb = t.grad_mut(b.id);
    for (std::size_t i = 0; i < va.size(); ++i) {
      const double d = va[i] - vb[i];
      const double sg = d > 0 ? 1.0 : d < 0 ? -1.0 : 0.0;
      ga[i] += g * sg;
      gb[i] -= g * sg;
    }
  });
}

Var mean_sq_diff(Tape& t, Var a, Var b) {
  same_size(t, a, b);
  const auto n = static_cast<double>(t.size(a));
  double s = 0.0;
  for (std::size_t i = 0; i < t.size(a); ++i) s += std::pow(t.value(a)[i] - t.value(b)[i], 2);
  return t.push({s / n}, {1}, [a, b, n](Tape& t, std::size_t self) {
    const double g = 2.0 * t.grad_of(self)[0] / n;
    const auto& va = t.value(a);
    const auto& vb = t.value(b);
    auto& ga = t.grad_mut(a.id);
    auto& gb = t.grad_mut(b.id);
    for (std::size_t i = 0; i < va.size(); ++i) {
      ga[i] += g * (va[i] - vb[i]);
      gb[i] -= g * (va[i] - vb[i]);
    }
  });
}

Var dot(Tape& t, Var a, Var b) {
  same_size(t, a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < t.size(a); ++i) s += t.value(a)[i] * t.value(b)[i];
  return t.push({s}, {1}, [a, b](Tape& t, std::size_t self) {
    const double g = t.grad_of(self)[0];
    const auto& va = t.value(a);
    const auto& vb = t.value(b);
    auto& ga = t.grad_mut(a.id);
    for (std::size_t i = 0; i < va.size(); ++i) ga[i] += g * vb[i];
    auto& gb = t.grad_mut(b.id);
    for (std::size_t i = 0; i < va.size(); ++i) gb[i] += g * va[i];
  });
}

Var stack(Tape& t, std::span<const Var> scalars) {
  std::vector<double> v;
  std::vector<Var> ins(scalars.begin(), scalars.end());
  for (Var s : ins) v.push_back(t.item(s));
  return t.push(std::move(v), {ins.size()}, [ins](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    for (std::size_t i = 0; i < ins.size(); ++i) t.grad_mut(ins[i].id)[0] += g[i];
  });
}

Var pick(Tape& t, Var v, std::size_t i) {
  require(i < t.size(v), Errc::out_of_range, "pick index out of range");
  return t.push({t.value(v)[i]}, {1}, [v, i](Tape& t, std::size_t self) { t.grad_mut(v.id)[i] += t.grad_of(self)[0]; });
}

Var softmax(Tape& t, Var v) {
  const auto& x = t.value(v);
  require(!x.empty(), Errc::empty_input, "softmax of empty vector");
  const double m = *std::max_element(x.begin(), x.end());
  std::vector<double> p(x.size());
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) z += p[i] = std::exp(x[i] - m);
  for (double& e : p) e /= z;
  return t.push(std::move(p), t.shape(v), [v](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    const auto& p = t.value(Var{self});
    double gp = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) gp += g[i] * p[i];
    auto& gv = t.grad_mut(v.id);
    for (std::size_t i = 0; i < p.size(); ++i) gv[i] += p[i] * (g[i] - gp);
  });
}

Var binary_cross_entropy(Tape& t, Var p, double q, double eps) {
  const double raw = t.item(p);
  const double pc = std::clamp(raw, eps, 1.0 - eps);
  const double loss = -(q * std::log(pc) + (1.0 - q) * std::log(1.0 - pc));
  const bool clamped = raw < eps || raw > 1.0 - eps;
  return t.push({loss}, {1}, [p, q, pc, clamped](Tape& t, std::size_t self) {
    if (clamped) return;
    t.grad_mut(p.id)[0] += t.grad_of(self)[0] * (-q / pc + (1.0 - q) / (1.0 - pc));
  });
}

Var neg_log(Tape& t, Var x, double eps) {
  const double raw = t.item(x);
  const double xc = std::max(raw, eps);
  return t.push({-std::log(xc)}, {1}, [x, xc, clamped = raw < eps](Tape& t, std::size_t self) {
    if (!clamped) t.grad_mut(x.id)[0] -= t.grad_of(self)[0] / xc;
  });
}

Var l2_normalize(Tape& t, Var v) {
  const auto& x = t.value(v);
  double n2 = 0.0;
  for (double e : x) n2 += e * e;
  const double norm = std::sqrt(n2);
  std::vector<double> out(x.size(), 0.0);
  if (norm < kNormGuard) {
    if (!out.empty()) out[0] = 1.0;
    return t.push(std::move(out), t.shape(v), nullptr);
  }
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] / norm;
  return t.push(std::move(out), t.shape(v), [v, norm](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    const auto& u = t.value(Var{self});
    double gu = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) gu += g[i] * u[i];
    auto& gv = t.grad_mut(v.id);
    for (std::size_t i = 0; i < u.size(); ++i) gv[i] += (g[i] - u[i] * gu) / norm;
  });
}

Var conv2d(Tape& t, Var x, Var w, Var b, const kernels::ConvShape& s) {
  require(s.valid(), Errc::parameter, "invalid convolution shape");
  require(t.size(x) == s.in_c * s.in_h * s.in_w, Errc::shape_mismatch, "convolution input size mismatch");
  require(t.size(w) == s.out_c * s.in_c * s.kernel * s.kernel, Errc::shape_mismatch,
          "convolution weight size mismatch");
  require(!b.valid() || t.size(b) == s.out_c, Errc::shape_mismatch, "convolution bias size mismatch");
  std::vector<double> out(s.out_c * s.out_h() * s.out_w());
  const std::span<const double> bias = b.valid() ? std::span<const double>(t.value(b)) : std::span<const double>{};
  kernels::conv2d_forward(t.value(x), t.value(w), bias, out, s, t.exec());
  return t.push(std::move(out), {s.out_c, s.out_h(), s.out_w()}, [x, w, b, s](Tape& t, std::size_t self) {
    std::span<double> gb = b.valid() ? std::span<double>(t.grad_mut(b.id)) : std::span<double>{};
    kernels::conv2d_backward(t.value(x), t.value(w), t.grad_of(self), t.grad_mut(x.id), t.grad_mut(w.id), gb, s,
                             t.exec());
  });
}

Var mask_mul(Tape& t, Var f, Var a) {
  const Shape& fs = t.shape(f);
  require(fs.size() == 3, Errc::shape_mismatch, "feature map must be CHW");
  const std::size_t hw = fs[1] * fs[2];
  require(t.size(a) == hw, Errc::shape_mismatch, "mask size differs from feature map plane");
  std::vector<double> v(t.value(f));
  for (std::size_t c = 0; c < fs[0]; ++c)
    for (std::size_t i = 0; i < hw; ++i) v[c * hw + i] *= t.value(a)[i];
  return t.push(std::move(v), fs, [f, a, hw](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    const auto& vf = t.value(f);
    const auto& va = t.value(a);
    auto& gf = t.grad_mut(f.id);
    auto& ga = t.grad_mut(a.id);
    for (std::size_t c = 0; c < g.size() / hw; ++c)
      for (std::size_t i = 0; i < hw; ++i) {
        gf[c * hw + i] += g[c * hw + i] * va[i];
        ga[i] += g[c * hw + i] * vf[c * hw + i];
      }
  });
}

Var spatial_mean(Tape& t, Var f) {
  const Shape& fs = t.shape(f);
  require(fs.size() == 3, Errc::shape_mismatch, "feature map must be CHW");
  const std::size_t hw = fs[1] * fs[2];
  std::vector<double> v(fs[0], 0.0);
  for (std::size_t c = 0; c < fs[0]; ++c) {
    for (std::size_t i = 0; i < hw; ++i) v[c] += t.value(f)[c * hw + i];
    v[c] /= static_cast<double>(hw);
  }
  return t.push(std::move(v), {fs[0]}, [f, hw](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    auto& gf = t.grad_mut(f.id);
    for (std::size_t c = 0; c < g.size(); ++c)
      for (std::size_t i = 0; i < hw; ++i) gf[c * hw + i] += g[c] / static_cast<double>(hw);
  });
}

Var linear(Tape& t, Var x, Var w, Var b) {
  const std::size_t k = t.size(x);
  require(k > 0 && t.size(w) % k == 0, Errc::shape_mismatch, "linear weight size mismatch");
  Var xr{t.push(t.value(x), {1, k}, [x](Tape& t, std::size_t self) {
           const auto& g = t.grad_of(self);
           auto& gx = t.grad_mut(x.id);
           for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
         })};
  Var y = rows_linear(t, xr, w, b);
  const std::size_t n = t.size(y);
  return t.push(t.value(y), {n}, [y](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    auto& gy = t.grad_mut(y.id);
    for (std::size_t i = 0; i < g.size(); ++i) gy[i] += g[i];
  });
}

Var rows_linear(Tape& t, Var x, Var w, Var b) {
  const Shape& xs = t.shape(x);
  require(xs.size() == 2, Errc::shape_mismatch, "rows_linear input must be 2-D");
  const std::size_t n = xs[0], k = xs[1];
  require(k > 0 && t.size(w) % k == 0, Errc::shape_mismatch, "linear weight size mismatch");
  const std::size_t m = t.size(w) / k;
  require(!b.valid() || t.size(b) == m, Errc::shape_mismatch, "linear bias size mismatch");
  const auto& vx = t.value(x);
  const auto& vw = t.value(w);
  std::vector<double> out(n * m);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < m; ++j) {
      double s = b.valid() ? t.value(b)[j] : 0.0;
      for (std::size_t i = 0; i < k; ++i) s += vw[j * k + i] * vx[r * k + i];
      out[r * m + j] = s;
    }
  return t.push(std::move(out), {n, m}, [x, w, b, n, k, m](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    const auto& vx = t.value(x);
    const auto& vw = t.value(w);
    auto& gx = t.grad_mut(x.id);
    auto& gw = t.grad_mut(w.id);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < m; ++j) {
        const double gj = g[r * m + j];
        if (gj == 0.0) continue;
        for (std::size_t i = 0; i < k; ++i) {
          gx[r * k + i] += gj * vw[j * k + i];
          gw[j * k + i] += gj * vx[r * k + i];
        }
      }
    if (b.valid()) {
      auto& gb = t.grad_mut(b.id);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < m; ++j) gb[j] += g[r * m + j];
    }
  });
}

Var mean_rows(Tape& t, Var x) {
  const Shape& xs = t.shape(x);
  require(xs.size() == 2 && xs[0] > 0, Errc::shape_mismatch, "mean_rows input must be non-empty 2-D");
  const std::size_t n = xs[0], k = xs[1];
  std::vector<double> v(k, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t i = 0; i < k; ++i) v[i] += t.value(x)[r * k + i];
  for (double& e : v) e /= static_cast<double>(n);
  return t.push(std::move(v), {k}, [x, n, k](Tape& t, std::size_t self) {
    const auto& g = t.grad_of(self);
    auto& gx = t.grad_mut(x.id);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t i = 0; i < k; ++i) gx[r * k + i] += g[i] / static_cast<double>(n);
  });
}

}  // namespace uwe::ad
