#include "shadowstorm/autodiff.hpp"

#include <cmath>
#include <numeric>

#include "shadowstorm/error.hpp"

namespace shadowstorm::ad {

std::size_t element_count(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(std::vector<int> shape_, std::vector<double> data_) : shape(std::move(shape_)), data(std::move(data_)) {
  if (element_count(shape) != data.size()) {
    throw ShapeError("tensor shape " + shape_str(shape) + " does not match " + std::to_string(data.size()) +
                     " values");
  }
}

Tensor Tensor::zeros(std::vector<int> shape) {
  const std::size_t n = element_count(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

const Tensor& Var::value() const { return tape_->value(id_); }
std::span<const double> Var::grad() const { return tape_->grad(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, true, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
  bool needs = false;
  for (const Var& v : inputs) {
    if (&v.tape() != this) throw UsageError("operands recorded on different tapes");
    needs = needs || nodes_[v.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(backward) : nullptr});
  return Var(this, nodes_.size() - 1);
}

std::span<const double> Tape::grad(std::size_t id) const {
  const Node& n = nodes_[id];
  // Untouched nodes report zeros of the right length.
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

std::vector<double>& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw UsageError("backward: loss belongs to another tape");
  if (loss.value().size() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  }
  if (backward_done_) throw UsageError("backward called twice without reset_grad");
  backward_done_ = true;
  if (!nodes_[loss.id()].requires_grad) return;
  grad_buffer(loss.id())[0] += 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backward && !n.grad.empty()) n.backward(*this, i);
  }
}

void Tape::reset_grad() {
  for (Node& n : nodes_) n.grad.clear();
  backward_done_ = false;
}

namespace {

void require_same(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

template <typename F>
Var unary(Var a, F&& f, Tape::Backward backward) {
  const Tensor& x = a.value();
  Tensor out(x.shape, std::vector<double>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = f(x.data[i]);
  return a.tape().record(std::move(out), {a}, std::move(backward));
}

// Accumulates g_out[i] * local(i) into the input gradient of a unary node.
template <typename F>
Tape::Backward unary_rule(std::size_t in, F&& local) {
  return [in, local](Tape& t, std::size_t self) {
    if (!t.requires_grad(in)) return;
    const std::span<const double> g = t.grad(self);
    std::vector<double>& gi = t.grad_buffer(in);
    const std::vector<double>& x = t.value(in).data;
    const std::vector<double>& y = t.value(self).data;
    for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * local(x[i], y[i]);
  };
}

struct Hwc {
  int h, w, c;
};

Hwc as_hwc(const char* op, const std::vector<int>& shape) {
  if (shape.size() != 3) throw ShapeError(std::string(op) + ": expected {H, W, C} input, got " + shape_str(shape));
  return {shape[0], shape[1], shape[2]};
}

}  // namespace

Var add(Var a, Var b) {
  require_same("add", a, b);
  const auto& x = a.value().data;
  const auto& y = b.value().data;
  Tensor out(a.shape(), std::vector<double>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = x[i] + y[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const auto g = t.grad(self);
    for (std::size_t in : {ia, ib}) {
      if (!t.requires_grad(in)) continue;
      auto& gi = t.grad_buffer(in);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same("sub", a, b);
  const auto& x = a.value().data;
  const auto& y = b.value().data;
  Tensor out(a.shape(), std::vector<double>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = x[i] - y[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const auto g = t.grad(self);
    if (t.requires_grad(ia)) {
      auto& ga = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(ib)) {
      auto& gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same("mul", a, b);
  const auto& x = a.value().data;
  const auto& y = b.value().data;
  Tensor out(a.shape(), std::vector<double>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = x[i] * y[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const auto g = t.grad(self);
    const auto& xa = t.value(ia).data;
    const auto& xb = t.value(ib).data;
    if (t.requires_grad(ia)) {
      auto& ga = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * xb[i];
    }
    if (t.requires_grad(ib)) {
      auto& gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * xa[i];
    }
  });
}

Var div(Var a, Var b) {
  require_same("div", a, b);
  const auto& x = a.value().data;
  const auto& y = b.value().data;
  Tensor out(a.shape(), std::vector<double>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = x[i] / y[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const auto g = t.grad(self);
    const auto& xa = t.value(ia).data;
    const auto& xb = t.value(ib).data;
    if (t.requires_grad(ia)) {
      auto& ga = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / xb[i];
    }
    if (t.requires_grad(ib)) {
      auto& gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i] * xa[i] / (xb[i] * xb[i]);
    }
  });
}

Var scale(Var a, double s) {
  return unary(a, [s](double x) { return s * x; }, unary_rule(a.id(), [s](double, double) { return s; }));
}

Var add_scalar(Var a, double s) {
  return unary(a, [s](double x) { return x + s; }, unary_rule(a.id(), [](double, double) { return 1.0; }));
}

Var mul_const(Var a, std::span<const double> w) {
  if (w.size() != a.value().size()) {
    throw ShapeError("mul_const: " + std::to_string(w.size()) + " weights for shape " + shape_str(a.shape()));
  }
  std::vector<double> weights(w.begin(), w.end());
  Tensor out(a.shape(), std::vector<double>(w.size()));
  for (std::size_t i = 0; i < w.size(); ++i) out.data[i] = a.value().data[i] * weights[i];
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, weights = std::move(weights)](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const auto g = t.grad(self);
    auto& gi = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * weights[i];
  });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               unary_rule(a.id(), [](double x, double) { return x > 0.0 ? 1.0 : 0.0; }));
}

Var clamp(Var a, double lo, double hi) {
  if (!(lo < hi)) throw UsageError("clamp: lower bound must be below upper bound");
  return unary(a, [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); },
               unary_rule(a.id(), [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; }));
}

Var clamp01(Var a) { return clamp(a, 0.0, 1.0); }

Var sqrt(Var a) {
  for (double x : a.value().data) {
    if (x < 0.0) throw NumericError("sqrt: negative input");
  }
  return unary(a, [](double x) { return std::sqrt(x); },
               unary_rule(a.id(), [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; }));
}

Var sum(Var a) {
  const auto& x = a.value().data;
  const std::size_t ia = a.id();
  return a.tape().record(Tensor::scalar(std::accumulate(x.begin(), x.end(), 0.0)), {a},
                         [ia](Tape& t, std::size_t self) {
                           if (!t.requires_grad(ia)) return;
                           const double g = t.grad(self)[0];
                           for (double& gi : t.grad_buffer(ia)) gi += g;
                         });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var sq_l2norm(Var a) {
  const auto& x = a.value().data;
  double acc = 0.0;
  for (double v : x) acc += v * v;
  const std::size_t ia = a.id();
  return a.tape().record(Tensor::scalar(acc), {a}, [ia](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const double g = t.grad(self)[0];
    const auto& xv = t.value(ia).data;
    auto& gi = t.grad_buffer(ia);
    for (std::size_t i = 0; i < xv.size(); ++i) gi[i] += 2.0 * g * xv[i];
  });
}

Var l2norm(Var a) {
  const auto& x = a.value().data;
  double acc = 0.0;
  for (double v : x) acc += v * v;
  const double norm = std::sqrt(acc);
  const std::size_t ia = a.id();
  return a.tape().record(Tensor::scalar(norm), {a}, [ia](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const double n = t.value(self).data[0];
    if (n == 0.0) return;
    const double g = t.grad(self)[0] / n;
    const auto& xv = t.value(ia).data;
    auto& gi = t.grad_buffer(ia);
    for (std::size_t i = 0; i < xv.size(); ++i) gi[i] += g * xv[i];
  });
}

Var broadcast(Var scalar, const std::vector<int>& shape) {
  if (scalar.value().size() != 1) throw ShapeError("broadcast: expected scalar, got " + shape_str(scalar.shape()));
  const std::size_t n = element_count(shape);
  Tensor out(shape, std::vector<double>(n, scalar.value().data[0]));
  const std::size_t is = scalar.id();
  return scalar.tape().record(std::move(out), {scalar}, [is](Tape& t, std::size_t self) {
    if (!t.requires_grad(is)) return;
    const auto g = t.grad(self);
    t.grad_buffer(is)[0] += std::accumulate(g.begin(), g.end(), 0.0);
  });
}

Var channel_mean(Var image) {
  const Hwc s = as_hwc("channel_mean", image.shape());
  const auto& x = image.value().data;
  const std::size_t pixels = static_cast<std::size_t>(s.h) * s.w;
  const auto c = static_cast<std::size_t>(s.c);
  Tensor out({s.h, s.w, 1}, std::vector<double>(pixels));
  for (std::size_t p = 0; p < pixels; ++p) {
    double acc = 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) acc += x[p * c + ch];
    out.data[p] = acc / static_cast<double>(c);
  }
  const std::size_t ii = image.id();
  return image.tape().record(std::move(out), {image}, [ii, c](Tape& t, std::size_t self) {
    if (!t.requires_grad(ii)) return;
    const auto g = t.grad(self);
    auto& gi = t.grad_buffer(ii);
    const double inv = 1.0 / static_cast<double>(c);
    for (std::size_t p = 0; p < g.size(); ++p) {
      for (std::size_t ch = 0; ch < c; ++ch) gi[p * c + ch] += g[p] * inv;
    }
  });
}

Var expand_channels(Var plane, int channels) {
  const Hwc s = as_hwc("expand_channels", plane.shape());
  if (s.c != 1) throw ShapeError("expand_channels: expected one channel, got " + shape_str(plane.shape()));
  const auto& x = plane.value().data;
  const auto c = static_cast<std::size_t>(channels);
  Tensor out({s.h, s.w, channels}, std::vector<double>(x.size() * c));
  for (std::size_t p = 0; p < x.size(); ++p) {
    for (std::size_t ch = 0; ch < c; ++ch) out.data[p * c + ch] = x[p];
  }
  const std::size_t ip = plane.id();
  return plane.tape().record(std::move(out), {plane}, [ip, c](Tape& t, std::size_t self) {
    if (!t.requires_grad(ip)) return;
    const auto g = t.grad(self);
    auto& gi = t.grad_buffer(ip);
    for (std::size_t p = 0; p < gi.size(); ++p) {
      for (std::size_t ch = 0; ch < c; ++ch) gi[p] += g[p * c + ch];
    }
  });
}

namespace {

struct ConvGeom {
  int h, w, cin, kh, kw, cout;
};

void conv_forward(const ConvGeom& g, const double* in, const double* wt, const double* bias, double* out) {
  const int rh = g.kh / 2, rw = g.kw / 2;
  for (int y = 0; y < g.h; ++y) {
    for (int x = 0; x < g.w; ++x) {
      double* o = out + (static_cast<std::size_t>(y) * g.w + x) * g.cout;
      for (int co = 0; co < g.cout; ++co) o[co] = bias ? bias[co] : 0.0;
      for (int ky = 0; ky < g.kh; ++ky) {
        const int iy = y + ky - rh;
        if (iy < 0 || iy >= g.h) continue;
        for (int kx = 0; kx < g.kw; ++kx) {
          const int ix = x + kx - rw;
          if (ix < 0 || ix >= g.w) continue;
          const double* ip = in + (static_cast<std::size_t>(iy) * g.w + ix) * g.cin;
          const double* wp = wt + (static_cast<std::size_t>(ky) * g.kw + kx) * g.cin * g.cout;
          for (int ci = 0; ci < g.cin; ++ci) {
            const double v = ip[ci];
            const double* wr = wp + static_cast<std::size_t>(ci) * g.cout;
            for (int co = 0; co < g.cout; ++co) o[co] += v * wr[co];
          }
        }
      }
    }
  }
}

void conv_backward(const ConvGeom& g, const double* in, const double* wt, const double* gout, double* gin,
                   double* gwt, double* gbias) {
  const int rh = g.kh / 2, rw = g.kw / 2;
  for (int y = 0; y < g.h; ++y) {
    for (int x = 0; x < g.w; ++x) {
      const double* go = gout + (static_cast<std::size_t>(y) * g.w + x) * g.cout;
      if (gbias) {
        for (int co = 0; co < g.cout; ++co) gbias[co] += go[co];
      }
      for (int ky = 0; ky < g.kh; ++ky) {
        const int iy = y + ky - rh;
        if (iy < 0 || iy >= g.h) continue;
        for (int kx = 0; kx < g.kw; ++kx) {
          const int ix = x + kx - rw;
          if (ix < 0 || ix >= g.w) continue;
          const std::size_t ioff = (static_cast<std::size_t>(iy) * g.w + ix) * g.cin;
          const std::size_t woff = (static_cast<std::size_t>(ky) * g.kw + kx) * g.cin * g.cout;
          for (int ci = 0; ci < g.cin; ++ci) {
            const double* wr = wt + woff + static_cast<std::size_t>(ci) * g.cout;
            if (gin) {
              double acc = 0.0;
              for (int co = 0; co < g.cout; ++co) acc += go[co] * wr[co];
              gin[ioff + ci] += acc;
            }
            if (gwt) {
              const double v = in[ioff + ci];
              double* gw = gwt + woff + static_cast<std::size_t>(ci) * g.cout;
              for (int co = 0; co < g.cout; ++co) gw[co] += v * go[co];
            }
          }
        }
      }
    }
  }
}

Var conv2d_impl(Var input, Var weight, const Var* bias) {
  const Hwc s = as_hwc("conv2d", input.shape());
  const auto& ws = weight.shape();
  if (ws.size() != 4 || ws[2] != s.c || ws[0] % 2 == 0 || ws[1] % 2 == 0) {
    throw ShapeError("conv2d: weight " + shape_str(ws) + " incompatible with input " + shape_str(input.shape()));
  }
  const ConvGeom g{s.h, s.w, s.c, ws[0], ws[1], ws[3]};
  if (bias && (bias->shape().size() != 1 || bias->shape()[0] != g.cout)) {
    throw ShapeError("conv2d: bias " + shape_str(bias->shape()) + " incompatible with weight " + shape_str(ws));
  }
  Tensor out = Tensor::zeros({g.h, g.w, g.cout});
  conv_forward(g, input.value().data.data(), weight.value().data.data(),
               bias ? bias->value().data.data() : nullptr, out.data.data());

  const std::size_t ii = input.id(), iw = weight.id();
  const bool has_bias = bias != nullptr;
  const std::size_t ib = has_bias ? bias->id() : 0;
  auto rule = [g, ii, iw, ib, has_bias](Tape& t, std::size_t self) {
    const auto gout = t.grad(self);
    double* gin = t.requires_grad(ii) ? t.grad_buffer(ii).data() : nullptr;
    double* gwt = t.requires_grad(iw) ? t.grad_buffer(iw).data() : nullptr;
    double* gb = (has_bias && t.requires_grad(ib)) ? t.grad_buffer(ib).data() : nullptr;
    conv_backward(g, t.value(ii).data.data(), t.value(iw).data.data(), gout.data(), gin, gwt, gb);
  };
  if (bias) return input.tape().record(std::move(out), {input, weight, *bias}, rule);
  return input.tape().record(std::move(out), {input, weight}, rule);
}

}  // namespace

Var conv2d(Var input, Var weight, Var bias) { return conv2d_impl(input, weight, &bias); }
Var conv2d(Var input, Var weight) { return conv2d_impl(input, weight, nullptr); }

Var avg_pool2d(Var input, int k) {
  const Hwc s = as_hwc("avg_pool2d", input.shape());
  if (k < 1 || s.h < k || s.w < k) {
    throw ShapeError("avg_pool2d: window " + std::to_string(k) + " does not fit " + shape_str(input.shape()));
  }
  const int oh = s.h / k, ow = s.w / k;
  const auto& x = input.value().data;
  Tensor out = Tensor::zeros({oh, ow, s.c});
  const double inv = 1.0 / (static_cast<double>(k) * k);
  for (int y = 0; y < oh; ++y) {
    for (int xx = 0; xx < ow; ++xx) {
      for (int c = 0; c < s.c; ++c) {
        double acc = 0.0;
        for (int dy = 0; dy < k; ++dy) {
          for (int dx = 0; dx < k; ++dx) {
            acc += x[(static_cast<std::size_t>(y * k + dy) * s.w + (xx * k + dx)) * s.c + c];
          }
        }
        out.data[(static_cast<std::size_t>(y) * ow + xx) * s.c + c] = acc * inv;
      }
    }
  }
  const std::size_t ii = input.id();
  return input.tape().record(std::move(out), {input}, [ii, s, k, oh, ow, inv](Tape& t, std::size_t self) {
    if (!t.requires_grad(ii)) return;
    const auto g = t.grad(self);
    auto& gi = t.grad_buffer(ii);
    for (int y = 0; y < oh; ++y) {
      for (int xx = 0; xx < ow; ++xx) {
        for (int c = 0; c < s.c; ++c) {
          const double go = g[(static_cast<std::size_t>(y) * ow + xx) * s.c + c] * inv;
          for (int dy = 0; dy < k; ++dy) {
            for (int dx = 0; dx < k; ++dx) {
              gi[(static_cast<std::size_t>(y * k + dy) * s.w + (xx * k + dx)) * s.c + c] += go;
            }
          }
        }
      }
    }
  });
}

Kernel2D Kernel2D::box(int radius) {
  if (radius < 0) throw UsageError("box kernel radius must be non-negative");
  const int side = 2 * radius + 1;
  return {radius, std::vector<double>(static_cast<std::size_t>(side) * side, 1.0)};
}

Kernel2D Kernel2D::gaussian(int radius, double sigma) {
  if (radius < 0 || !(sigma > 0.0)) throw UsageError("gaussian kernel needs radius >= 0 and sigma > 0");
  const int side = 2 * radius + 1;
  std::vector<double> w(static_cast<std::size_t>(side) * side);
  double total = 0.0;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      w[static_cast<std::size_t>(dy + radius) * side + (dx + radius)] = v;
      total += v;
    }
  }
  for (double& v : w) v /= total;
  return {radius, std::move(w)};
}

namespace {

// Kernel mass inside the image for every pixel.
std::vector<double> blur_norm(int height, int width, const Kernel2D& k) {
  const int r = k.radius, side = 2 * r + 1;
  std::vector<double> norm(static_cast<std::size_t>(height) * width, 0.0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      for (int dy = -r; dy <= r; ++dy) {
        if (y + dy < 0 || y + dy >= height) continue;
        for (int dx = -r; dx <= r; ++dx) {
          if (x + dx < 0 || x + dx >= width) continue;
          acc += k.weights[static_cast<std::size_t>(dy + r) * side + (dx + r)];
        }
      }
      norm[static_cast<std::size_t>(y) * width + x] = acc;
    }
  }
  return norm;
}

void check_kernel(const Kernel2D& k) {
  const int side = 2 * k.radius + 1;
  if (k.radius < 0 || k.weights.size() != static_cast<std::size_t>(side) * side) {
    throw ShapeError("blur: kernel weights do not match radius " + std::to_string(k.radius));
  }
}

}  // namespace

std::vector<double> blur_values(std::span<const double> input, int height, int width, int channels,
                                const Kernel2D& k) {
  check_kernel(k);
  if (input.size() != static_cast<std::size_t>(height) * width * channels) {
    throw ShapeError("blur: input length does not match " + std::to_string(height) + "x" + std::to_string(width) +
                     "x" + std::to_string(channels));
  }
  const std::vector<double> norm = blur_norm(height, width, k);
  const int r = k.radius, side = 2 * r + 1;
  std::vector<double> out(input.size(), 0.0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double* o = out.data() + (static_cast<std::size_t>(y) * width + x) * channels;
      for (int dy = -r; dy <= r; ++dy) {
        if (y + dy < 0 || y + dy >= height) continue;
        for (int dx = -r; dx <= r; ++dx) {
          if (x + dx < 0 || x + dx >= width) continue;
          const double wv = k.weights[static_cast<std::size_t>(dy + r) * side + (dx + r)];
          const double* ip = input.data() + (static_cast<std::size_t>(y + dy) * width + (x + dx)) * channels;
          for (int c = 0; c < channels; ++c) o[c] += wv * ip[c];
        }
      }
      const double inv = 1.0 / norm[static_cast<std::size_t>(y) * width + x];
      for (int c = 0; c < channels; ++c) o[c] *= inv;
    }
  }
  return out;
}

Var blur(Var input, const Kernel2D& kernel) {
  const Hwc s = as_hwc("blur", input.shape());
  Tensor out(input.shape(), blur_values(input.value().data, s.h, s.w, s.c, kernel));
  const std::size_t ii = input.id();
  return input.tape().record(std::move(out), {input}, [ii, s, kernel](Tape& t, std::size_t self) {
    if (!t.requires_grad(ii)) return;
    const std::vector<double> norm = blur_norm(s.h, s.w, kernel);
    const auto g = t.grad(self);
    auto& gi = t.grad_buffer(ii);
    const int r = kernel.radius, side = 2 * r + 1;
    for (int y = 0; y < s.h; ++y) {
      for (int x = 0; x < s.w; ++x) {
        const double inv = 1.0 / norm[static_cast<std::size_t>(y) * s.w + x];
        const double* go = g.data() + (static_cast<std::size_t>(y) * s.w + x) * s.c;
        for (int dy = -r; dy <= r; ++dy) {
          if (y + dy < 0 || y + dy >= s.h) continue;
          for (int dx = -r; dx <= r; ++dx) {
            if (x + dx < 0 || x + dx >= s.w) continue;
            const double wv = kernel.weights[static_cast<std::size_t>(dy + r) * side + (dx + r)] * inv;
            double* gp = gi.data() + (static_cast<std::size_t>(y + dy) * s.w + (x + dx)) * s.c;
            for (int c = 0; c < s.c; ++c) gp[c] += wv * go[c];
          }
        }
      }
    }
  });
}

}  // namespace shadowstorm::ad
