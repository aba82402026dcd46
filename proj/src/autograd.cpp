#include "mea/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "mea/errors.hpp"

namespace mea::ag {

namespace {

thread_local bool t_grad_enabled = true;

Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> bw) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool needs = false;
  if (t_grad_enabled) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node());
    node->backward = std::move(bw);
  }
  return Var(std::move(node));
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (!(a.shape() == b.shape())) {
    throw InputError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
}

void accumulate(Node& target, const Tensor& delta, double factor = 1.0) {
  Tensor& g = target.grad_buffer();
  const std::size_t n = g.size();
  double* gd = g.data();
  const double* dd = delta.data();
  for (std::size_t i = 0; i < n; ++i) gd[i] += factor * dd[i];
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }
double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Tensor& Node::grad_buffer() {
  if (grad.empty()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

Var Var::constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var Var::leaf(Tensor value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return Var(std::move(node));
}

double Var::item() const {
  if (value().size() != 1) throw InputError("item() on non-scalar tensor " + shape().str());
  return value()[0];
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

void backward(const Var& root) {
  if (!root.defined() || !root.requires_grad()) return;
  if (root.value().size() != 1) throw InputError("backward() requires a scalar root");

  // Iterative post-order DFS gives a topological order (inputs before consumers).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

Var detach(const Var& x) { return Var::constant(x.value()); }

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    for (auto& in : self.inputs)
      if (in->requires_grad) accumulate(*in, self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    if (self.inputs[0]->requires_grad) accumulate(*self.inputs[0], self.grad);
    if (self.inputs[1]->requires_grad) accumulate(*self.inputs[1], self.grad, -1.0);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    Node& x = *self.inputs[0];
    Node& y = *self.inputs[1];
    if (x.requires_grad) {
      Tensor& g = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * y.value[i];
    }
    if (y.requires_grad) {
      Tensor& g = y.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x.value[i];
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a.value();
  for (auto& v : out.values()) v *= s;
  return make_result(std::move(out), {a}, [s](Node& self) { accumulate(*self.inputs[0], self.grad, s); });
}

Var add_tensor(const Var& a, const Tensor& t) {
  if (!(a.shape() == t.shape())) throw InputError("add_tensor: shape mismatch");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += t[i];
  return make_result(std::move(out), {a}, [](Node& self) { accumulate(*self.inputs[0], self.grad); });
}

Var mul_tensor(const Var& a, const Tensor& t) {
  if (!(a.shape() == t.shape())) throw InputError("mul_tensor: shape mismatch");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= t[i];
  return make_result(std::move(out), {a}, [t](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * t[i];
  });
}

Var conv2d(const Var& x, const Var& weight, const Var& bias) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (ws.c != xs.c || ws.h != ws.w || ws.h % 2 == 0 || bias.value().size() != static_cast<std::size_t>(ws.n)) {
    throw InputError("conv2d: incompatible input " + xs.str() + " / weight " + ws.str());
  }
  const kernels::ConvDims d{xs.n, xs.c, ws.n, xs.h, xs.w, ws.h};
  Tensor out(Shape{xs.n, ws.n, xs.h, xs.w});
  kernels::conv2d_forward(x.value().values(), weight.value().values(), bias.value().values(), out.values(), d);
  return make_result(std::move(out), {x, weight, bias}, [d](Node& self) {
    Node& in = *self.inputs[0];
    Node& w = *self.inputs[1];
    Node& b = *self.inputs[2];
    if (in.requires_grad) kernels::conv2d_backward_input(self.grad.values(), w.value.values(), in.grad_buffer().values(), d);
    if (w.requires_grad || b.requires_grad) {
      Tensor gw(w.value.shape(), 0.0);
      Tensor gb(b.value.shape(), 0.0);
      kernels::conv2d_backward_params(in.value.values(), self.grad.values(), gw.values(), gb.values(), d);
      if (w.requires_grad) accumulate(w, gw);
      if (b.requires_grad) accumulate(b, gb);
    }
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();  // {out, in, 1, 1}
  const int in_features = static_cast<int>(xs.per_sample());
  if (ws.c != in_features || bias.value().size() != static_cast<std::size_t>(ws.n)) {
    throw InputError("linear: incompatible input " + xs.str() + " / weight " + ws.str());
  }
  const kernels::LinearDims d{xs.n, in_features, ws.n};
  Tensor out(Shape{xs.n, ws.n, 1, 1});
  kernels::linear_forward(x.value().values(), weight.value().values(), bias.value().values(), out.values(), d);
  return make_result(std::move(out), {x, weight, bias}, [d](Node& self) {
    Node& in = *self.inputs[0];
    Node& w = *self.inputs[1];
    Node& b = *self.inputs[2];
    if (in.requires_grad) kernels::linear_backward_input(self.grad.values(), w.value.values(), in.grad_buffer().values(), d);
    if (w.requires_grad || b.requires_grad) {
      Tensor gw(w.value.shape(), 0.0);
      Tensor gb(b.value.shape(), 0.0);
      kernels::linear_backward_params(in.value.values(), self.grad.values(), gw.values(), gb.values(), d);
      if (w.requires_grad) accumulate(w, gw);
      if (b.requires_grad) accumulate(b, gb);
    }
  });
}

Var relu(const Var& x) { return leaky_relu(x, 0.0); }

Var leaky_relu(const Var& x, double slope) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = v > 0.0 ? v : slope * v;
  return make_result(std::move(out), {x}, [slope](Node& self) {
    Node& in = *self.inputs[0];
    Tensor& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += in.value[i] > 0.0 ? self.grad[i] : slope * self.grad[i];
  });
}

Var tanh(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = std::tanh(v);
  return make_result(std::move(out), {x}, [](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += (1.0 - self.value[i] * self.value[i]) * self.grad[i];
  });
}

Var avg_pool(const Var& x, int factor) {
  const Shape s = x.shape();
  if (factor < 1 || s.h % factor != 0 || s.w % factor != 0) {
    throw InputError("avg_pool: factor " + std::to_string(factor) + " does not divide " + s.str());
  }
  if (factor == 1) return x;
  const kernels::PlaneDims d{s.n * s.c, s.h, s.w, factor};
  Tensor out(Shape{s.n, s.c, s.h / factor, s.w / factor});
  kernels::avg_pool_forward(x.value().values(), out.values(), d);
  return make_result(std::move(out), {x}, [d](Node& self) {
    kernels::avg_pool_backward(self.grad.values(), self.inputs[0]->grad_buffer().values(), d);
  });
}

Var upsample(const Var& x, int factor) {
  const Shape s = x.shape();
  if (factor < 1) throw InputError("upsample: factor must be positive");
  if (factor == 1) return x;
  const kernels::PlaneDims d{s.n * s.c, s.h, s.w, factor};
  Tensor out(Shape{s.n, s.c, s.h * factor, s.w * factor});
  kernels::upsample_forward(x.value().values(), out.values(), d);
  return make_result(std::move(out), {x}, [d](Node& self) {
    kernels::upsample_backward(self.grad.values(), self.inputs[0]->grad_buffer().values(), d);
  });
}

Var global_avg_pool(const Var& x) {
  const Shape s = x.shape();
  const std::size_t plane = s.plane();
  Tensor out(Shape{s.n, s.c, 1, 1});
  for (std::size_t p = 0; p < static_cast<std::size_t>(s.n * s.c); ++p) {
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += x.value()[p * plane + i];
    out[p] = acc / static_cast<double>(plane);
  }
  return make_result(std::move(out), {x}, [plane](Node& self) {
    Tensor& g = self.inputs[0]->grad_buffer();
    const double inv = 1.0 / static_cast<double>(plane);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i / plane] * inv;
  });
}

Var concat_channels(const Var& a, const Var& b) {
  const Shape sa = a.shape();
  const Shape sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw InputError("concat_channels: incompatible " + sa.str() + " and " + sb.str());
  }
  const std::size_t pa = sa.per_sample();
  const std::size_t pb = sb.per_sample();
  Tensor out(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
  for (int n = 0; n < sa.n; ++n) {
    std::copy_n(a.value().data() + n * pa, pa, out.data() + n * (pa + pb));
    std::copy_n(b.value().data() + n * pb, pb, out.data() + n * (pa + pb) + pa);
  }
  return make_result(std::move(out), {a, b}, [pa, pb](Node& self) {
    Node& x = *self.inputs[0];
    Node& y = *self.inputs[1];
    const int batch = self.value.shape().n;
    if (x.requires_grad) {
      Tensor& g = x.grad_buffer();
      for (int n = 0; n < batch; ++n)
        for (std::size_t i = 0; i < pa; ++i) g[n * pa + i] += self.grad[n * (pa + pb) + i];
    }
    if (y.requires_grad) {
      Tensor& g = y.grad_buffer();
      for (int n = 0; n < batch; ++n)
        for (std::size_t i = 0; i < pb; ++i) g[n * pb + i] += self.grad[n * (pa + pb) + pa + i];
    }
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(shape);
  return make_result(std::move(out), {x}, [](Node& self) {
    Node& in = *self.inputs[0];
    accumulate(in, self.grad.reshaped(in.value.shape()));
  });
}

Var smooth_clamp(const Var& x, double k) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = v + softplus(-k * v) / k - softplus(k * (v - 1.0)) / k;
  return make_result(std::move(out), {x}, [k](Node& self) {
    Node& in = *self.inputs[0];
    Tensor& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = in.value[i];
      g[i] += self.grad[i] * (sigmoid(k * v) - sigmoid(k * (v - 1.0)));
    }
  });
}

Var hard_clamp(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = std::clamp(v, 0.0, 1.0);
  return make_result(std::move(out), {x}, [](Node& self) {
    Node& in = *self.inputs[0];
    Tensor& g = in.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = in.value[i];
      if (v >= 0.0 && v <= 1.0) g[i] += self.grad[i];
    }
  });
}

namespace {

std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(size);
  const int r = size / 2;
  double total = 0.0;
  for (int i = 0; i < size; ++i) {
    k[i] = std::exp(-0.5 * (i - r) * (i - r) / (sigma * sigma));
    total += k[i];
  }
  for (auto& v : k) v /= total;
  return k;
}

// One blur pass along rows (horizontal=true) or columns of every plane; out = K x.
void blur_pass(const double* x, double* out, int planes, int h, int w, const std::vector<double>& k, bool horizontal) {
  const int r = static_cast<int>(k.size()) / 2;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p)
    for (int y = 0; y < h; ++y)
      for (int c = 0; c < w; ++c) {
        double s = 0.0;
        for (int i = 0; i < static_cast<int>(k.size()); ++i) {
          const int yy = horizontal ? y : std::clamp(y + i - r, 0, h - 1);
          const int cc = horizontal ? std::clamp(c + i - r, 0, w - 1) : c;
          s += k[i] * x[(static_cast<std::size_t>(p) * h + yy) * w + cc];
        }
        out[(static_cast<std::size_t>(p) * h + y) * w + c] = s;
      }
}

// Transpose of blur_pass: g_in += K^T g_out.
void blur_pass_transpose(const double* g_out, double* g_in, int planes, int h, int w, const std::vector<double>& k,
                         bool horizontal) {
  const int r = static_cast<int>(k.size()) / 2;
#pragma omp parallel for schedule(static)
  for (int p = 0; p < planes; ++p)
    for (int y = 0; y < h; ++y)
      for (int c = 0; c < w; ++c) {
        const double g = g_out[(static_cast<std::size_t>(p) * h + y) * w + c];
        for (int i = 0; i < static_cast<int>(k.size()); ++i) {
          const int yy = horizontal ? y : std::clamp(y + i - r, 0, h - 1);
          const int cc = horizontal ? std::clamp(c + i - r, 0, w - 1) : c;
          g_in[(static_cast<std::size_t>(p) * h + yy) * w + cc] += k[i] * g;
        }
      }
}

}  // namespace

Var gaussian_blur(const Var& x, int kernel_size, double sigma) {
  const Shape s = x.shape();
  const auto k = gaussian_kernel(kernel_size, sigma);
  Tensor tmp(s);
  Tensor out(s);
  blur_pass(x.value().data(), tmp.data(), s.n * s.c, s.h, s.w, k, true);
  blur_pass(tmp.data(), out.data(), s.n * s.c, s.h, s.w, k, false);
  return make_result(std::move(out), {x}, [k](Node& self) {
    const Shape sh = self.value.shape();
    Tensor mid(sh, 0.0);
    blur_pass_transpose(self.grad.data(), mid.data(), sh.n * sh.c, sh.h, sh.w, k, false);
    blur_pass_transpose(mid.data(), self.inputs[0]->grad_buffer().data(), sh.n * sh.c, sh.h, sh.w, k, true);
  });
}

Var crop_resize(const Var& x, double top, double left, double box_h, double box_w) {
  const Shape s = x.shape();
  struct Tap {
    int i0, i1;
    double f;
  };
  auto taps = [](int n, double origin, double extent) {
    std::vector<Tap> t(n);
    for (int o = 0; o < n; ++o) {
      double src = origin + (o + 0.5) * extent / n - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(n - 1));
      const int i0 = static_cast<int>(std::floor(src));
      const int i1 = std::min(i0 + 1, n - 1);
      t[o] = Tap{i0, i1, src - i0};
    }
    return t;
  };
  const auto ty = taps(s.h, top, box_h);
  const auto tx = taps(s.w, left, box_w);
  Tensor out(s);
  const int planes = s.n * s.c;
  for (int p = 0; p < planes; ++p) {
    const double* in = x.value().data() + static_cast<std::size_t>(p) * s.plane();
    double* o = out.data() + static_cast<std::size_t>(p) * s.plane();
    for (int r = 0; r < s.h; ++r)
      for (int c = 0; c < s.w; ++c) {
        const Tap& a = ty[r];
        const Tap& b = tx[c];
        o[r * s.w + c] = (1 - a.f) * ((1 - b.f) * in[a.i0 * s.w + b.i0] + b.f * in[a.i0 * s.w + b.i1]) +
                         a.f * ((1 - b.f) * in[a.i1 * s.w + b.i0] + b.f * in[a.i1 * s.w + b.i1]);
      }
  }
  return make_result(std::move(out), {x}, [ty, tx](Node& self) {
    const Shape sh = self.value.shape();
    Tensor& g = self.inputs[0]->grad_buffer();
    for (int p = 0; p < sh.n * sh.c; ++p) {
      const double* go = self.grad.data() + static_cast<std::size_t>(p) * sh.plane();
      double* gi = g.data() + static_cast<std::size_t>(p) * sh.plane();
      for (int r = 0; r < sh.h; ++r)
        for (int c = 0; c < sh.w; ++c) {
          const Tap& a = ty[r];
          const Tap& b = tx[c];
          const double v = go[r * sh.w + c];
          gi[a.i0 * sh.w + b.i0] += (1 - a.f) * (1 - b.f) * v;
          gi[a.i0 * sh.w + b.i1] += (1 - a.f) * b.f * v;
          gi[a.i1 * sh.w + b.i0] += a.f * (1 - b.f) * v;
          gi[a.i1 * sh.w + b.i1] += a.f * b.f * v;
        }
    }
  });
}

Var jpeg_straight_through(const Var& x, const kernels::QuantTable& table) {
  const Shape s = x.shape();
  if (s.h % 8 != 0 || s.w % 8 != 0) throw InputError("jpeg: image extents must be multiples of 8, got " + s.str());
  Tensor out(s);
  kernels::jpeg_quantize(x.value().values(), out.values(), kernels::PlaneDims{s.n * s.c, s.h, s.w, 8}, table);
  return make_result(std::move(out), {x}, [](Node& self) { accumulate(*self.inputs[0], self.grad); });
}

Var mse(const Var& a, const Var& b) {
  require_same_shape(a, b, "mse");
  const std::size_t n = a.value().size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a.value()[i] - b.value()[i];
    acc += d * d;
  }
  return make_result(Tensor(Shape{1, 1, 1, 1}, acc / static_cast<double>(n)), {a, b}, [n](Node& self) {
    Node& x = *self.inputs[0];
    Node& y = *self.inputs[1];
    const double f = 2.0 * self.grad[0] / static_cast<double>(n);
    if (x.requires_grad) {
      Tensor& g = x.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i] += f * (x.value[i] - y.value[i]);
    }
    if (y.requires_grad) {
      Tensor& g = y.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i] -= f * (x.value[i] - y.value[i]);
    }
  });
}

Var mean_square(const Var& a) { return mse(a, Var::constant(Tensor(a.shape(), 0.0))); }

Var bce_with_logits(const Var& logits, double target) {
  const std::size_t n = logits.value().size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = logits.value()[i];
    acc += softplus(z) - target * z;
  }
  return make_result(Tensor(Shape{1, 1, 1, 1}, acc / static_cast<double>(n)), {logits}, [n, target](Node& self) {
    Node& in = *self.inputs[0];
    Tensor& g = in.grad_buffer();
    const double f = self.grad[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) g[i] += f * (sigmoid(in.value[i]) - target);
  });
}

}  // namespace mea::ag
