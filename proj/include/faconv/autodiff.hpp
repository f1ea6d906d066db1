#pragma once

// Tape-based reverse-mode automatic differentiation over Tensor4D values.
//
// A Tape records nodes in creation order, which is always a valid topological
// order. Each node owns its forward value and, when it depends on something
// that requires a gradient, a closure that scatters the incoming gradient to
// its inputs. Parameters are bound from a ParameterStore by path; one tape
// holds at most one leaf per path, so shared weights accumulate naturally.

#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "faconv/kernels.hpp"
#include "faconv/tensor.hpp"

namespace faconv {

class ParameterStore {
 public:
  struct Entry {
    Tensor4D value;
    Tensor4D grad;
  };

  Tensor4D& add(const std::string& path, Tensor4D value) {
    if (entries_.contains(path)) throw ConfigError("duplicate parameter path '" + path + "'");
    Tensor4D grad(value.shape());
    auto [it, _] = entries_.emplace(path, Entry{std::move(value), std::move(grad)});
    return it->second.value;
  }

  bool contains(const std::string& path) const { return entries_.contains(path); }

  Entry& entry(const std::string& path) {
    auto it = entries_.find(path);
    if (it == entries_.end()) throw ArgumentError("unknown parameter path '" + path + "'");
    return it->second;
  }
  const Entry& entry(const std::string& path) const {
    auto it = entries_.find(path);
    if (it == entries_.end()) throw ArgumentError("unknown parameter path '" + path + "'");
    return it->second;
  }

  Tensor4D& value(const std::string& path) { return entry(path).value; }
  const Tensor4D& value(const std::string& path) const { return entry(path).value; }
  Tensor4D& grad(const std::string& path) { return entry(path).grad; }
  const Tensor4D& grad(const std::string& path) const { return entry(path).grad; }

  void zero_grad() {
    for (auto& [_, e] : entries_) e.grad.fill(0.0);
  }

  // Number of learnable scalars.
  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& [_, e] : entries_) n += e.value.size();
    return n;
  }

  // Total scalars under paths starting with `prefix`.
  std::size_t size_under(const std::string& prefix) const {
    std::size_t n = 0;
    for (const auto& [path, e] : entries_) {
      if (path.starts_with(prefix)) n += e.value.size();
    }
    return n;
  }

  std::vector<std::string> paths() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [path, _] : entries_) out.push_back(path);
    return out;
  }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  std::size_t count() const { return entries_.size(); }

 private:
  std::map<std::string, Entry> entries_;
};

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor4D& value() const;
  const Shape& shape() const { return value().shape(); }
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor4D& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor4D value) { return push(std::move(value), false, {}); }

  // Differentiable input that is not a parameter (used by gradient checks).
  Var leaf(Tensor4D value) { return push(std::move(value), true, {}); }

  Var param(ParameterStore& store, const std::string& path) {
    if (auto it = param_nodes_.find(path); it != param_nodes_.end()) return Var{this, it->second};
    auto& entry = store.entry(path);
    Var v = push(entry.value, true, {});
    param_nodes_.emplace(path, v.id);
    bindings_.push_back({v.id, &entry});
    return v;
  }

  // Records an op. The closure is only kept when some input needs a gradient.
  Var record(Tensor4D value, std::initializer_list<Var> inputs, Backward backward) {
    bool needs = false;
    for (const auto& in : inputs) needs = needs || nodes_[in.id].requires_grad;
    return push(std::move(value), needs, needs ? std::move(backward) : Backward{});
  }
  Var record(Tensor4D value, const std::vector<Var>& inputs, Backward backward) {
    bool needs = false;
    for (const auto& in : inputs) needs = needs || nodes_[in.id].requires_grad;
    return push(std::move(value), needs, needs ? std::move(backward) : Backward{});
  }

  const Tensor4D& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  // Gradient slot for an input; nullptr when the input needs no gradient.
  Tensor4D* grad_slot(Var v) {
    auto& node = nodes_[v.id];
    if (!node.requires_grad) return nullptr;
    if (node.grad.size() != node.value.size()) node.grad = Tensor4D(node.value.shape());
    return &node.grad;
  }

  const Tensor4D& grad(Var v) const {
    const auto& node = nodes_.at(v.id);
    if (node.grad.size() != node.value.size()) {
      static thread_local Tensor4D empty;
      empty = Tensor4D(node.value.shape());
      return empty;
    }
    return node.grad;
  }

  // Propagates d(loss)/d(node) through the tape, then accumulates parameter
  // gradients into the bound store entries.
  void backward(Var loss) {
    if (loss.tape != this || nodes_.empty() || loss.id >= nodes_.size()) {
      throw StateError("backward called before a forward pass was recorded on this tape");
    }
    if (nodes_[loss.id].value.size() != 1) {
      throw DimensionError("backward needs a scalar loss, got " + nodes_[loss.id].value.shape().str());
    }
    for (auto& n : nodes_) n.grad = Tensor4D();
    if (!nodes_[loss.id].requires_grad) return;
    nodes_[loss.id].grad = Tensor4D(nodes_[loss.id].value.shape(), 1.0);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      auto& node = nodes_[i];
      if (!node.backward || node.grad.size() == 0) continue;
      // Copy so the closure may grow grad slots of earlier nodes safely.
      const Tensor4D g = node.grad;
      node.backward(*this, g);
    }
    for (const auto& b : bindings_) {
      const auto& g = nodes_[b.node].grad;
      if (g.size() == 0) continue;
      auto& dst = b.entry->grad;
      for (std::size_t k = 0; k < g.size(); ++k) dst[k] += g[k];
    }
  }

  std::size_t size() const { return nodes_.size(); }

  void clear() {
    nodes_.clear();
    param_nodes_.clear();
    bindings_.clear();
  }

 private:
  struct Node {
    Tensor4D value;
    Tensor4D grad;
    bool requires_grad = false;
    Backward backward;
  };
  struct Binding {
    std::size_t node;
    ParameterStore::Entry* entry;
  };

  Var push(Tensor4D value, bool requires_grad, Backward backward) {
    nodes_.push_back(Node{std::move(value), Tensor4D(), requires_grad, std::move(backward)});
    return Var{this, nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
  std::unordered_map<std::string, std::size_t> param_nodes_;
  std::vector<Binding> bindings_;
};

inline const Tensor4D& Var::value() const { return tape->value(id); }

// ---------------------------------------------------------------------------
// Differentiable ops.

namespace ad {

inline void require_same(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
}

inline Var add(Var a, Var b) {
  require_same(a, b, "add");
  Tensor4D out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor4D& g) {
    if (auto* da = t.grad_slot(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i];
    if (auto* db = t.grad_slot(b))
      for (std::size_t i = 0; i < g.size(); ++i) (*db)[i] += g[i];
  });
}

inline Var sub(Var a, Var b) {
  require_same(a, b, "sub");
  Tensor4D out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor4D& g) {
    if (auto* da = t.grad_slot(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i];
    if (auto* db = t.grad_slot(b))
      for (std::size_t i = 0; i < g.size(); ++i) (*db)[i] -= g[i];
  });
}

inline Var mul(Var a, Var b) {
  require_same(a, b, "mul");
  Tensor4D out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape& t, const Tensor4D& g) {
    const auto& av = t.value(a.id);
    const auto& bv = t.value(b.id);
    if (auto* da = t.grad_slot(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += g[i] * bv[i];
    if (auto* db = t.grad_slot(b))
      for (std::size_t i = 0; i < g.size(); ++i) (*db)[i] += g[i] * av[i];
  });
}

inline Var scale(Var a, double s) {
  Tensor4D out = a.value();
  for (auto& v : out.raw()) v *= s;
  return a.tape->record(std::move(out), {a}, [a, s](Tape& t, const Tensor4D& g) {
    if (auto* da = t.grad_slot(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*da)[i] += s * g[i];
  });
}

// x[n,h,w,c] * g broadcast over space; g is [n,1,1,c] or [1,1,1,c].
inline Var mul_channel(Var x, Var gate) {
  const auto& xs = x.shape();
  const auto& gs = gate.shape();
  if (gs.h != 1 || gs.w != 1 || gs.c != xs.c || (gs.n != 1 && gs.n != xs.n)) {
    throw DimensionError("mul_channel: gate " + gs.str() + " does not broadcast over " + xs.str());
  }
  const bool per_sample = gs.n == xs.n && xs.n != 1;
  const std::size_t S = xs.h * xs.w, C = xs.c;
  Tensor4D out = x.value();
  const auto& gv = gate.value();
  for (std::size_t b = 0; b < xs.n; ++b) {
    const double* gp = &gv[(per_sample ? b : 0) * C];
    for (std::size_t s = 0; s < S; ++s)
      for (std::size_t q = 0; q < C; ++q) out[(b * S + s) * C + q] *= gp[q];
  }
  return x.tape->record(std::move(out), {x, gate}, [x, gate, per_sample, S, C](Tape& t, const Tensor4D& g) {
    const auto& xv = t.value(x.id);
    const auto& gv2 = t.value(gate.id);
    auto* dx = t.grad_slot(x);
    auto* dg = t.grad_slot(gate);
    const std::size_t N = xv.n();
    for (std::size_t b = 0; b < N; ++b) {
      const std::size_t gb = (per_sample ? b : 0) * C;
      for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t q = 0; q < C; ++q) {
          const std::size_t idx = (b * S + s) * C + q;
          if (dx) (*dx)[idx] += g[idx] * gv2[gb + q];
          if (dg) (*dg)[gb + q] += g[idx] * xv[idx];
        }
      }
    }
  });
}

template <typename F, typename DF>
inline Var unary(Var x, F f, DF df_from_out) {
  Tensor4D out = x.value();
  for (auto& v : out.raw()) v = f(v);
  const std::size_t out_id = x.tape->size();
  return x.tape->record(std::move(out), {x}, [x, out_id, df_from_out](Tape& t, const Tensor4D& g) {
    auto* dx = t.grad_slot(x);
    if (!dx) return;
    const auto& xv = t.value(x.id);
    const auto& yv = t.value(out_id);
    for (std::size_t i = 0; i < g.size(); ++i) (*dx)[i] += g[i] * df_from_out(xv[i], yv[i]);
  });
}

inline Var sigmoid(Var x) {
  return unary(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

inline Var tanh(Var x) {
  return unary(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

inline Var relu(Var x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double xv, double) { return xv > 0.0 ? 1.0 : 0.0; });
}

inline Var concat_channels(Var a, Var b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (as.n != bs.n || as.h != bs.h || as.w != bs.w) {
    throw DimensionError("concat_channels: spatial mismatch " + as.str() + " vs " + bs.str());
  }
  const std::size_t sites = as.n * as.h * as.w, ca = as.c, cb = bs.c;
  Tensor4D out({as.n, as.h, as.w, ca + cb});
  for (std::size_t s = 0; s < sites; ++s) {
    for (std::size_t q = 0; q < ca; ++q) out[s * (ca + cb) + q] = a.value()[s * ca + q];
    for (std::size_t q = 0; q < cb; ++q) out[s * (ca + cb) + ca + q] = b.value()[s * cb + q];
  }
  return a.tape->record(std::move(out), {a, b}, [a, b, sites, ca, cb](Tape& t, const Tensor4D& g) {
    auto* da = t.grad_slot(a);
    auto* db = t.grad_slot(b);
    for (std::size_t s = 0; s < sites; ++s) {
      if (da)
        for (std::size_t q = 0; q < ca; ++q) (*da)[s * ca + q] += g[s * (ca + cb) + q];
      if (db)
        for (std::size_t q = 0; q < cb; ++q) (*db)[s * cb + q] += g[s * (ca + cb) + ca + q];
    }
  });
}

inline Var slice_channels(Var x, std::size_t start, std::size_t len) {
  const auto& xs = x.shape();
  if (start + len > xs.c) throw DimensionError("slice_channels: range exceeds channel axis of " + xs.str());
  const std::size_t sites = xs.n * xs.h * xs.w, C = xs.c;
  Tensor4D out({xs.n, xs.h, xs.w, len});
  for (std::size_t s = 0; s < sites; ++s)
    for (std::size_t q = 0; q < len; ++q) out[s * len + q] = x.value()[s * C + start + q];
  return x.tape->record(std::move(out), {x}, [x, sites, C, start, len](Tape& t, const Tensor4D& g) {
    if (auto* dx = t.grad_slot(x))
      for (std::size_t s = 0; s < sites; ++s)
        for (std::size_t q = 0; q < len; ++q) (*dx)[s * C + start + q] += g[s * len + q];
  });
}

// Stacks T tensors of shape [1,1,1,D] into one [1,1,T,D] matrix.
inline Var stack_rows(const std::vector<Var>& rows) {
  if (rows.empty()) throw ArgumentError("stack_rows: empty input");
  const std::size_t D = rows.front().shape().c;
  for (const auto& r : rows) {
    if (r.shape() != Shape{1, 1, 1, D}) throw DimensionError("stack_rows: row shape " + r.shape().str());
  }
  Tensor4D out = Tensor4D::matrix(rows.size(), D);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t q = 0; q < D; ++q) out.at(r, q) = rows[r].value()[q];
  return rows.front().tape->record(std::move(out), rows, [rows, D](Tape& t, const Tensor4D& g) {
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (auto* dr = t.grad_slot(rows[r]))
        for (std::size_t q = 0; q < D; ++q) (*dr)[q] += g[r * D + q];
    }
  });
}

inline Var pointwise(Var x, Var weight, std::optional<Var> bias = std::nullopt) {
  Tensor4D out = kernels::pointwise_forward(x.value(), weight.value(), bias ? &bias->value() : nullptr);
  std::vector<Var> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  return x.tape->record(std::move(out), inputs, [x, weight, bias](Tape& t, const Tensor4D& g) {
    kernels::pointwise_backward(t.value(x.id), t.value(weight.id), g, t.grad_slot(x), t.grad_slot(weight),
                                bias ? t.grad_slot(*bias) : nullptr);
  });
}

inline Var depthwise(Var x, Var kernel, std::size_t dilation) {
  Tensor4D out = kernels::depthwise_forward(x.value(), kernel.value(), dilation);
  return x.tape->record(std::move(out), {x, kernel}, [x, kernel, dilation](Tape& t, const Tensor4D& g) {
    kernels::depthwise_backward(t.value(x.id), t.value(kernel.id), dilation, g, t.grad_slot(x),
                                t.grad_slot(kernel));
  });
}

inline Var conv_full(Var x, Var kernel, std::optional<Var> bias = std::nullopt) {
  Tensor4D out = kernels::full_forward(x.value(), kernel.value(), bias ? &bias->value() : nullptr);
  std::vector<Var> inputs{x, kernel};
  if (bias) inputs.push_back(*bias);
  return x.tape->record(std::move(out), inputs, [x, kernel, bias](Tape& t, const Tensor4D& g) {
    kernels::full_backward(t.value(x.id), t.value(kernel.id), g, t.grad_slot(x), t.grad_slot(kernel),
                           bias ? t.grad_slot(*bias) : nullptr);
  });
}

inline Var global_avg_pool(Var x) {
  Tensor4D out = kernels::global_avg_pool(x.value());
  return x.tape->record(std::move(out), {x}, [x](Tape& t, const Tensor4D& g) {
    auto* dx = t.grad_slot(x);
    if (!dx) return;
    const auto& s = dx->shape();
    const double inv = 1.0 / static_cast<double>(s.h * s.w);
    for (std::size_t b = 0; b < s.n; ++b)
      for (std::size_t i = 0; i < s.h; ++i)
        for (std::size_t j = 0; j < s.w; ++j)
          for (std::size_t q = 0; q < s.c; ++q) (*dx)(b, i, j, q) += g[b * s.c + q] * inv;
  });
}

inline Var group_norm(Var x, Var gamma, Var beta, std::size_t groups, double eps) {
  Tensor4D xhat;
  std::vector<double> inv_std;
  Tensor4D out = kernels::group_norm_forward(x.value(), gamma.value(), beta.value(), groups, eps, &xhat, &inv_std);
  return x.tape->record(std::move(out), {x, gamma, beta},
                        [x, gamma, beta, groups, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                            Tape& t, const Tensor4D& g) {
                          kernels::group_norm_backward(xhat, inv_std, t.value(gamma.id), groups, g, t.grad_slot(x),
                                                       t.grad_slot(gamma), t.grad_slot(beta));
                        });
}

// Inverted dropout. Identity when `training` is false or rate is 0.
inline Var dropout(Var x, double rate, bool training, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must lie in [0,1)");
  if (!training || rate == 0.0) return x;
  Tensor4D mask(x.shape());
  std::bernoulli_distribution keep(1.0 - rate);
  const double s = 1.0 / (1.0 - rate);
  for (auto& m : mask.raw()) m = keep(rng) ? s : 0.0;
  Var m = x.tape->constant(std::move(mask));
  return mul(x, m);
}

inline Var axis_attention(Var q, Var k, Var v, std::size_t heads, kernels::Axis axis) {
  std::vector<double> weights;
  Tensor4D out = kernels::axis_attention_forward(q.value(), k.value(), v.value(), heads, axis, &weights);
  return q.tape->record(std::move(out), {q, k, v},
                        [q, k, v, heads, axis, weights = std::move(weights)](Tape& t, const Tensor4D& g) {
                          kernels::axis_attention_backward(t.value(q.id), t.value(k.id), t.value(v.id), heads, axis,
                                                           weights, g, t.grad_slot(q), t.grad_slot(k),
                                                           t.grad_slot(v));
                        });
}

inline Var attention_pool(Var features, Var scores) {
  std::vector<double> weights;
  Tensor4D out = kernels::attention_pool_forward(features.value(), scores.value(), &weights);
  return features.tape->record(std::move(out), {features, scores},
                               [features, scores, weights = std::move(weights)](Tape& t, const Tensor4D& g) {
                                 kernels::attention_pool_backward(t.value(features.id), weights, g,
                                                                  t.grad_slot(features), t.grad_slot(scores));
                               });
}

inline Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().raw()) s += v;
  return x.tape->record(Tensor4D::scalar(s), {x}, [x](Tape& t, const Tensor4D& g) {
    if (auto* dx = t.grad_slot(x))
      for (auto& v : dx->raw()) v += g[0];
  });
}

inline Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

inline Var mse(Var a, Var b) {
  require_same(a, b, "mse");
  const std::size_t n = a.value().size();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a.value()[i] - b.value()[i];
    s += d * d;
  }
  return a.tape->record(Tensor4D::scalar(s / static_cast<double>(n)), {a, b}, [a, b, n](Tape& t, const Tensor4D& g) {
    const auto& av = t.value(a.id);
    const auto& bv = t.value(b.id);
    const double f = 2.0 * g[0] / static_cast<double>(n);
    auto* da = t.grad_slot(a);
    auto* db = t.grad_slot(b);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = f * (av[i] - bv[i]);
      if (da) (*da)[i] += d;
      if (db) (*db)[i] -= d;
    }
  });
}

// Sum over valid vertical and horizontal neighbour pairs of the squared
// channel-vector difference.
inline double laplacian_energy_value(const Tensor4D& h) {
  double s = 0.0;
  for (std::size_t b = 0; b < h.n(); ++b)
    for (std::size_t i = 0; i < h.h(); ++i)
      for (std::size_t j = 0; j < h.w(); ++j)
        for (std::size_t q = 0; q < h.c(); ++q) {
          if (i + 1 < h.h()) {
            const double d = h(b, i, j, q) - h(b, i + 1, j, q);
            s += d * d;
          }
          if (j + 1 < h.w()) {
            const double d = h(b, i, j, q) - h(b, i, j + 1, q);
            s += d * d;
          }
        }
  return s;
}

inline Var laplacian_energy(Var h) {
  return h.tape->record(Tensor4D::scalar(laplacian_energy_value(h.value())), {h}, [h](Tape& t, const Tensor4D& g) {
    auto* dh = t.grad_slot(h);
    if (!dh) return;
    const auto& v = t.value(h.id);
    for (std::size_t b = 0; b < v.n(); ++b)
      for (std::size_t i = 0; i < v.h(); ++i)
        for (std::size_t j = 0; j < v.w(); ++j)
          for (std::size_t q = 0; q < v.c(); ++q) {
            if (i + 1 < v.h()) {
              const double d = 2.0 * g[0] * (v(b, i, j, q) - v(b, i + 1, j, q));
              (*dh)(b, i, j, q) += d;
              (*dh)(b, i + 1, j, q) -= d;
            }
            if (j + 1 < v.w()) {
              const double d = 2.0 * g[0] * (v(b, i, j, q) - v(b, i, j + 1, q));
              (*dh)(b, i, j, q) += d;
              (*dh)(b, i, j + 1, q) -= d;
            }
          }
  });
}

// Sum of squared first differences between consecutive rows of a [1,1,T,D]
// matrix.
inline Var row_difference_energy(Var s) {
  const auto& m = s.value();
  const std::size_t T = m.rows(), D = m.cols();
  double e = 0.0;
  for (std::size_t r = 0; r + 1 < T; ++r)
    for (std::size_t q = 0; q < D; ++q) {
      const double d = m.at(r + 1, q) - m.at(r, q);
      e += d * d;
    }
  return s.tape->record(Tensor4D::scalar(e), {s}, [s, T, D](Tape& t, const Tensor4D& g) {
    auto* ds = t.grad_slot(s);
    if (!ds) return;
    const auto& m2 = t.value(s.id);
    for (std::size_t r = 0; r + 1 < T; ++r)
      for (std::size_t q = 0; q < D; ++q) {
        const double d = 2.0 * g[0] * (m2.at(r + 1, q) - m2.at(r, q));
        ds->at(r + 1, q) += d;
        ds->at(r, q) -= d;
      }
  });
}

}  // namespace ad
}  // namespace faconv
