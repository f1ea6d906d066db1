#pragma once

// Forward and backward numerical kernels. These work on plain tensors and know
// nothing about the tape; the differentiable wrappers live in autodiff.hpp.
//
// Every contraction (convolutions, attention products, attention pooling)
// bumps a thread-local multiply-accumulate counter by its nominal dense count.
// Zero-padded taps are counted, so the totals match the closed forms in
// cost_model.hpp exactly. Elementwise work is not counted.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "faconv/tensor.hpp"

namespace faconv {

struct MacCounter {
  std::uint64_t macs = 0;
};

inline MacCounter& mac_counter() {
  thread_local MacCounter counter;
  return counter;
}

// RAII scope that reports the MACs issued while it was alive.
class MacScope {
 public:
  MacScope() : start_(mac_counter().macs) {}
  std::uint64_t elapsed() const { return mac_counter().macs - start_; }

 private:
  std::uint64_t start_;
};

namespace kernels {

inline void check_odd_kernel(std::size_t k, std::size_t dilation) {
  if (k == 0 || k % 2 == 0) throw ConfigError("kernel size must be odd, got " + std::to_string(k));
  if (dilation == 0) throw ConfigError("dilation must be >= 1");
}

// ---------------------------------------------------------------------------
// Pointwise (1x1) convolution: x[n,h,w,cin] * weight[1,1,cin,cout] + bias.

inline void check_pointwise(const Tensor4D& x, const Tensor4D& weight, const Tensor4D* bias) {
  if (weight.n() != 1 || weight.h() != 1) {
    throw DimensionError("pointwise weight must be a matrix, got " + weight.shape().str());
  }
  if (weight.rows() != x.c()) {
    throw DimensionError("pointwise weight rows (cin axis) " + std::to_string(weight.rows()) +
                         " != input channels " + std::to_string(x.c()));
  }
  if (bias && bias->size() != weight.cols()) {
    throw DimensionError("pointwise bias length (cout axis) " + std::to_string(bias->size()) +
                         " != output channels " + std::to_string(weight.cols()));
  }
}

inline Tensor4D pointwise_forward(const Tensor4D& x, const Tensor4D& weight, const Tensor4D* bias) {
  check_pointwise(x, weight, bias);
  const std::size_t cin = x.c(), cout = weight.cols();
  const std::size_t sites = x.n() * x.h() * x.w();
  Tensor4D out({x.n(), x.h(), x.w(), cout});
  const double* xp = x.data().data();
  const double* wp = weight.data().data();
  double* op = out.data().data();
  for (std::size_t s = 0; s < sites; ++s) {
    double* o = op + s * cout;
    if (bias) {
      for (std::size_t q = 0; q < cout; ++q) o[q] = (*bias)[q];
    }
    const double* xi = xp + s * cin;
    for (std::size_t p = 0; p < cin; ++p) {
      const double v = xi[p];
      const double* wr = wp + p * cout;
      for (std::size_t q = 0; q < cout; ++q) o[q] += v * wr[q];
    }
  }
  mac_counter().macs += static_cast<std::uint64_t>(sites) * cin * cout;
  return out;
}

// Accumulates into dx / dweight / dbias (any may be null).
inline void pointwise_backward(const Tensor4D& x, const Tensor4D& weight, const Tensor4D& dout,
                               Tensor4D* dx, Tensor4D* dweight, Tensor4D* dbias) {
  const std::size_t cin = x.c(), cout = weight.cols();
  const std::size_t sites = x.n() * x.h() * x.w();
  const double* xp = x.data().data();
  const double* wp = weight.data().data();
  const double* gp = dout.data().data();
  for (std::size_t s = 0; s < sites; ++s) {
    const double* g = gp + s * cout;
    const double* xi = xp + s * cin;
    if (dbias) {
      for (std::size_t q = 0; q < cout; ++q) (*dbias)[q] += g[q];
    }
    for (std::size_t p = 0; p < cin; ++p) {
      const double* wr = wp + p * cout;
      if (dx) {
        double acc = 0.0;
        for (std::size_t q = 0; q < cout; ++q) acc += g[q] * wr[q];
        (*dx)[s * cin + p] += acc;
      }
      if (dweight) {
        double* dw = dweight->data().data() + p * cout;
        const double v = xi[p];
        for (std::size_t q = 0; q < cout; ++q) dw[q] += v * g[q];
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Depthwise convolution (cross-correlation, zero same-padding).
// kernel shape [1,k,k,c].

inline void check_depthwise(const Tensor4D& x, const Tensor4D& kernel, std::size_t dilation) {
  if (kernel.n() != 1 || kernel.h() != kernel.w()) {
    throw DimensionError("depthwise kernel must be [1,k,k,c], got " + kernel.shape().str());
  }
  check_odd_kernel(kernel.h(), dilation);
  if (kernel.c() != x.c()) {
    throw DimensionError("depthwise kernel channel axis " + std::to_string(kernel.c()) +
                         " != input channels " + std::to_string(x.c()));
  }
}

inline Tensor4D depthwise_forward(const Tensor4D& x, const Tensor4D& kernel, std::size_t dilation) {
  check_depthwise(x, kernel, dilation);
  const std::size_t k = kernel.h(), C = x.c(), H = x.h(), W = x.w();
  const auto half = static_cast<std::ptrdiff_t>((k - 1) / 2 * dilation);
  Tensor4D out(x.shape());
  for (std::size_t b = 0; b < x.n(); ++b) {
    for (std::size_t i = 0; i < H; ++i) {
      for (std::size_t j = 0; j < W; ++j) {
        double* o = &out(b, i, j, 0);
        for (std::size_t a = 0; a < k; ++a) {
          const auto ii = static_cast<std::ptrdiff_t>(i) + static_cast<std::ptrdiff_t>(a * dilation) - half;
          if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(H)) continue;
          for (std::size_t e = 0; e < k; ++e) {
            const auto jj = static_cast<std::ptrdiff_t>(j) + static_cast<std::ptrdiff_t>(e * dilation) - half;
            if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(W)) continue;
            const double* xi = &x(b, static_cast<std::size_t>(ii), static_cast<std::size_t>(jj), 0);
            const double* kk = &kernel(0, a, e, 0);
            for (std::size_t q = 0; q < C; ++q) o[q] += xi[q] * kk[q];
          }
        }
      }
    }
  }
  mac_counter().macs += static_cast<std::uint64_t>(x.n()) * H * W * C * k * k;
  return out;
}

inline void depthwise_backward(const Tensor4D& x, const Tensor4D& kernel, std::size_t dilation,
                               const Tensor4D& dout, Tensor4D* dx, Tensor4D* dkernel) {
  const std::size_t k = kernel.h(), C = x.c(), H = x.h(), W = x.w();
  const auto half = static_cast<std::ptrdiff_t>((k - 1) / 2 * dilation);
  for (std::size_t b = 0; b < x.n(); ++b) {
    for (std::size_t i = 0; i < H; ++i) {
      for (std::size_t j = 0; j < W; ++j) {
        const double* g = &dout(b, i, j, 0);
        for (std::size_t a = 0; a < k; ++a) {
          const auto ii = static_cast<std::ptrdiff_t>(i) + static_cast<std::ptrdiff_t>(a * dilation) - half;
          if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(H)) continue;
          for (std::size_t e = 0; e < k; ++e) {
            const auto jj = static_cast<std::ptrdiff_t>(j) + static_cast<std::ptrdiff_t>(e * dilation) - half;
            if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(W)) continue;
            const auto ui = static_cast<std::size_t>(ii), uj = static_cast<std::size_t>(jj);
            const double* kk = &kernel(0, a, e, 0);
            if (dx) {
              double* d = &(*dx)(b, ui, uj, 0);
              for (std::size_t q = 0; q < C; ++q) d[q] += g[q] * kk[q];
            }
            if (dkernel) {
              const double* xi = &x(b, ui, uj, 0);
              double* dk = &(*dkernel)(0, a, e, 0);
              for (std::size_t q = 0; q < C; ++q) dk[q] += g[q] * xi[q];
            }
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Dense convolution, kernel [k,k,cin,cout], zero same-padding.

inline void check_full(const Tensor4D& x, const Tensor4D& kernel, const Tensor4D* bias) {
  if (kernel.n() != kernel.h()) {
    throw DimensionError("full conv kernel must be [k,k,cin,cout], got " + kernel.shape().str());
  }
  check_odd_kernel(kernel.n(), 1);
  if (kernel.w() != x.c()) {
    throw DimensionError("full conv kernel cin axis " + std::to_string(kernel.w()) +
                         " != input channels " + std::to_string(x.c()));
  }
  if (bias && bias->size() != kernel.c()) {
    throw DimensionError("full conv bias length (cout axis) " + std::to_string(bias->size()) +
                         " != output channels " + std::to_string(kernel.c()));
  }
}

inline Tensor4D full_forward(const Tensor4D& x, const Tensor4D& kernel, const Tensor4D* bias) {
  check_full(x, kernel, bias);
  const std::size_t k = kernel.n(), cin = x.c(), cout = kernel.c(), H = x.h(), W = x.w();
  const auto half = static_cast<std::ptrdiff_t>((k - 1) / 2);
  Tensor4D out({x.n(), H, W, cout});
  for (std::size_t b = 0; b < x.n(); ++b) {
    for (std::size_t i = 0; i < H; ++i) {
      for (std::size_t j = 0; j < W; ++j) {
        double* o = &out(b, i, j, 0);
        if (bias) {
          for (std::size_t q = 0; q < cout; ++q) o[q] = (*bias)[q];
        }
        for (std::size_t a = 0; a < k; ++a) {
          const auto ii = static_cast<std::ptrdiff_t>(i + a) - half;
          if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(H)) continue;
          for (std::size_t e = 0; e < k; ++e) {
            const auto jj = static_cast<std::ptrdiff_t>(j + e) - half;
            if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(W)) continue;
            const double* xi = &x(b, static_cast<std::size_t>(ii), static_cast<std::size_t>(jj), 0);
            const double* kk = &kernel(a, e, 0, 0);
            for (std::size_t p = 0; p < cin; ++p) {
              const double v = xi[p];
              const double* kr = kk + p * cout;
              for (std::size_t q = 0; q < cout; ++q) o[q] += v * kr[q];
            }
          }
        }
      }
    }
  }
  mac_counter().macs += static_cast<std::uint64_t>(x.n()) * H * W * k * k * cin * cout;
  return out;
}

inline void full_backward(const Tensor4D& x, const Tensor4D& kernel, const Tensor4D& dout, Tensor4D* dx,
                          Tensor4D* dkernel, Tensor4D* dbias) {
  const std::size_t k = kernel.n(), cin = x.c(), cout = kernel.c(), H = x.h(), W = x.w();
  const auto half = static_cast<std::ptrdiff_t>((k - 1) / 2);
  for (std::size_t b = 0; b < x.n(); ++b) {
    for (std::size_t i = 0; i < H; ++i) {
      for (std::size_t j = 0; j < W; ++j) {
        const double* g = &dout(b, i, j, 0);
        if (dbias) {
          for (std::size_t q = 0; q < cout; ++q) (*dbias)[q] += g[q];
        }
        for (std::size_t a = 0; a < k; ++a) {
          const auto ii = static_cast<std::ptrdiff_t>(i + a) - half;
          if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(H)) continue;
          for (std::size_t e = 0; e < k; ++e) {
            const auto jj = static_cast<std::ptrdiff_t>(j + e) - half;
            if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(W)) continue;
            const auto ui = static_cast<std::size_t>(ii), uj = static_cast<std::size_t>(jj);
            const double* xi = &x(b, ui, uj, 0);
            const double* kk = &kernel(a, e, 0, 0);
            for (std::size_t p = 0; p < cin; ++p) {
              const double* kr = kk + p * cout;
              if (dx) {
                double acc = 0.0;
                for (std::size_t q = 0; q < cout; ++q) acc += g[q] * kr[q];
                (*dx)(b, ui, uj, p) += acc;
              }
              if (dkernel) {
                double* dk = &(*dkernel)(a, e, p, 0);
                const double v = xi[p];
                for (std::size_t q = 0; q < cout; ++q) dk[q] += v * g[q];
              }
            }
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------

inline Tensor4D global_avg_pool(const Tensor4D& x) {
  if (x.h() * x.w() == 0) throw DimensionError("global_avg_pool needs h*w >= 1");
  Tensor4D out({x.n(), 1, 1, x.c()});
  const double inv = 1.0 / static_cast<double>(x.h() * x.w());
  for (std::size_t b = 0; b < x.n(); ++b) {
    for (std::size_t i = 0; i < x.h(); ++i) {
      for (std::size_t j = 0; j < x.w(); ++j) {
        for (std::size_t q = 0; q < x.c(); ++q) out(b, 0, 0, q) += x(b, i, j, q);
      }
    }
    for (std::size_t q = 0; q < x.c(); ++q) out(b, 0, 0, q) *= inv;
  }
  return out;
}

inline std::vector<double> softmax(std::span<const double> x) {
  std::vector<double> out(x.size());
  if (x.empty()) return out;
  const double m = *std::max_element(x.begin(), x.end());
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - m);
    z += out[i];
  }
  for (auto& v : out) v /= z;
  return out;
}

// Group normalization over the channel axis at every site. groups == 1 is
// LayerNorm over channels. Writes normalized values (before affine) and the
// per-(site,group) inverse std into the optional caches.
inline Tensor4D group_norm_forward(const Tensor4D& x, const Tensor4D& gamma, const Tensor4D& beta,
                                   std::size_t groups, double eps, Tensor4D* xhat_out = nullptr,
                                   std::vector<double>* inv_std_out = nullptr) {
  const std::size_t C = x.c();
  if (eps <= 0.0) throw ConfigError("normalization eps must be > 0");
  if (groups == 0 || C % groups != 0) {
    throw ConfigError("channel count " + std::to_string(C) + " not divisible by norm groups " +
                      std::to_string(groups));
  }
  if (gamma.size() != C || beta.size() != C) throw DimensionError("norm affine length != channels");
  const std::size_t m = C / groups;
  const std::size_t sites = x.n() * x.h() * x.w();
  Tensor4D out(x.shape());
  if (xhat_out) *xhat_out = Tensor4D(x.shape());
  if (inv_std_out) inv_std_out->assign(sites * groups, 0.0);
  for (std::size_t s = 0; s < sites; ++s) {
    for (std::size_t g = 0; g < groups; ++g) {
      const std::size_t base = s * C + g * m;
      double mean = 0.0;
      for (std::size_t q = 0; q < m; ++q) mean += x[base + q];
      mean /= static_cast<double>(m);
      double var = 0.0;
      for (std::size_t q = 0; q < m; ++q) {
        const double d = x[base + q] - mean;
        var += d * d;
      }
      var /= static_cast<double>(m);
      const double inv = 1.0 / std::sqrt(var + eps);
      for (std::size_t q = 0; q < m; ++q) {
        const double xh = (x[base + q] - mean) * inv;
        if (xhat_out) (*xhat_out)[base + q] = xh;
        out[base + q] = gamma[g * m + q] * xh + beta[g * m + q];
      }
      if (inv_std_out) (*inv_std_out)[s * groups + g] = inv;
    }
  }
  return out;
}

inline void group_norm_backward(const Tensor4D& xhat, const std::vector<double>& inv_std, const Tensor4D& gamma,
                                std::size_t groups, const Tensor4D& dout, Tensor4D* dx, Tensor4D* dgamma,
                                Tensor4D* dbeta) {
  const std::size_t C = xhat.c(), m = C / groups;
  const std::size_t sites = xhat.n() * xhat.h() * xhat.w();
  std::vector<double> dxh(m);
  for (std::size_t s = 0; s < sites; ++s) {
    for (std::size_t g = 0; g < groups; ++g) {
      const std::size_t base = s * C + g * m;
      double sum_d = 0.0, sum_dx = 0.0;
      for (std::size_t q = 0; q < m; ++q) {
        const double gy = dout[base + q];
        if (dgamma) (*dgamma)[g * m + q] += gy * xhat[base + q];
        if (dbeta) (*dbeta)[g * m + q] += gy;
        dxh[q] = gy * gamma[g * m + q];
        sum_d += dxh[q];
        sum_dx += dxh[q] * xhat[base + q];
      }
      if (dx) {
        const double inv = inv_std[s * groups + g];
        const double md = static_cast<double>(m);
        for (std::size_t q = 0; q < m; ++q) {
          (*dx)[base + q] += inv / md * (md * dxh[q] - sum_d - xhat[base + q] * sum_dx);
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Multi-head scaled dot-product attention along one spatial axis. Every
// line (a fixed (n,h) for Axis::Width, a fixed (n,w) for Axis::Height) is an
// independent token sequence; channels are split into `heads` contiguous
// slices.

enum class Axis { Height, Width };

struct AttentionLines {
  std::size_t count = 0;   // number of independent lines
  std::size_t length = 0;  // tokens per line
  std::size_t stride = 0;  // element distance between consecutive tokens
  std::vector<std::size_t> bases;
};

inline AttentionLines attention_lines(const Shape& s, Axis axis) {
  AttentionLines lines;
  if (axis == Axis::Width) {
    lines.length = s.w;
    lines.stride = s.c;
    for (std::size_t b = 0; b < s.n; ++b)
      for (std::size_t i = 0; i < s.h; ++i) lines.bases.push_back(((b * s.h + i) * s.w) * s.c);
  } else {
    lines.length = s.h;
    lines.stride = s.w * s.c;
    for (std::size_t b = 0; b < s.n; ++b)
      for (std::size_t j = 0; j < s.w; ++j) lines.bases.push_back((b * s.h * s.w + j) * s.c);
  }
  lines.count = lines.bases.size();
  return lines;
}

// Returns the attended values; `weights` receives the softmax matrices laid
// out as [line][head][query][key].
inline Tensor4D axis_attention_forward(const Tensor4D& q, const Tensor4D& k, const Tensor4D& v, std::size_t heads,
                                       Axis axis, std::vector<double>* weights) {
  if (q.shape() != k.shape() || q.shape() != v.shape()) {
    throw DimensionError("attention q/k/v shapes differ: " + q.shape().str() + " " + k.shape().str() + " " +
                         v.shape().str());
  }
  if (heads == 0 || q.c() % heads != 0) {
    throw ConfigError("channels " + std::to_string(q.c()) + " not divisible by heads " + std::to_string(heads));
  }
  const auto lines = attention_lines(q.shape(), axis);
  const std::size_t L = lines.length, dh = q.c() / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor4D out(q.shape());
  weights->assign(lines.count * heads * L * L, 0.0);
  std::vector<double> logits(L);
  for (std::size_t ln = 0; ln < lines.count; ++ln) {
    const std::size_t base = lines.bases[ln];
    for (std::size_t hd = 0; hd < heads; ++hd) {
      const std::size_t off = hd * dh;
      for (std::size_t a = 0; a < L; ++a) {
        const double* qa = &q[base + a * lines.stride + off];
        for (std::size_t e = 0; e < L; ++e) {
          const double* ke = &k[base + e * lines.stride + off];
          double acc = 0.0;
          for (std::size_t d = 0; d < dh; ++d) acc += qa[d] * ke[d];
          logits[e] = acc * scale;
        }
        const auto p = softmax(logits);
        double* wrow = &(*weights)[((ln * heads + hd) * L + a) * L];
        double* oa = &out[base + a * lines.stride + off];
        for (std::size_t e = 0; e < L; ++e) {
          wrow[e] = p[e];
          const double* ve = &v[base + e * lines.stride + off];
          for (std::size_t d = 0; d < dh; ++d) oa[d] += p[e] * ve[d];
        }
      }
    }
  }
  // QK^T and AV: two L x L x dh products per head per line.
  mac_counter().macs += static_cast<std::uint64_t>(2) * lines.count * L * L * q.c();
  return out;
}

inline void axis_attention_backward(const Tensor4D& q, const Tensor4D& k, const Tensor4D& v, std::size_t heads,
                                    Axis axis, const std::vector<double>& weights, const Tensor4D& dout,
                                    Tensor4D* dq, Tensor4D* dk, Tensor4D* dv) {
  const auto lines = attention_lines(q.shape(), axis);
  const std::size_t L = lines.length, dh = q.c() / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<double> dw(L), dlogit(L);
  for (std::size_t ln = 0; ln < lines.count; ++ln) {
    const std::size_t base = lines.bases[ln];
    for (std::size_t hd = 0; hd < heads; ++hd) {
      const std::size_t off = hd * dh;
      for (std::size_t a = 0; a < L; ++a) {
        const double* wrow = &weights[((ln * heads + hd) * L + a) * L];
        const double* ga = &dout[base + a * lines.stride + off];
        double dot = 0.0;
        for (std::size_t e = 0; e < L; ++e) {
          const double* ve = &v[base + e * lines.stride + off];
          double acc = 0.0;
          for (std::size_t d = 0; d < dh; ++d) acc += ga[d] * ve[d];
          dw[e] = acc;
          dot += wrow[e] * acc;
          if (dv) {
            double* dve = &(*dv)[base + e * lines.stride + off];
            for (std::size_t d = 0; d < dh; ++d) dve[d] += wrow[e] * ga[d];
          }
        }
        for (std::size_t e = 0; e < L; ++e) dlogit[e] = wrow[e] * (dw[e] - dot) * scale;
        const double* qa = &q[base + a * lines.stride + off];
        for (std::size_t e = 0; e < L; ++e) {
          const std::size_t eo = base + e * lines.stride + off;
          if (dq) {
            double* dqa = &(*dq)[base + a * lines.stride + off];
            for (std::size_t d = 0; d < dh; ++d) dqa[d] += dlogit[e] * k[eo + d];
          }
          if (dk) {
            for (std::size_t d = 0; d < dh; ++d) (*dk)[eo + d] += dlogit[e] * qa[d];
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Attention pooling: per-sample softmax of scores[n,h,w,1] over the h*w sites,
// then the weighted sum of features[n,h,w,c] -> [n,1,1,c].

inline Tensor4D attention_pool_forward(const Tensor4D& features, const Tensor4D& scores, std::vector<double>* weights) {
  if (scores.shape() != Shape{features.n(), features.h(), features.w(), 1}) {
    throw DimensionError("attention pool scores must be " +
                         Shape{features.n(), features.h(), features.w(), 1}.str() + ", got " + scores.shape().str());
  }
  const std::size_t S = features.h() * features.w(), C = features.c();
  Tensor4D out({features.n(), 1, 1, C});
  weights->assign(features.n() * S, 0.0);
  for (std::size_t b = 0; b < features.n(); ++b) {
    const auto p = softmax(std::span<const double>(&scores[b * S], S));
    for (std::size_t s = 0; s < S; ++s) {
      (*weights)[b * S + s] = p[s];
      const double* f = &features[(b * S + s) * C];
      for (std::size_t q = 0; q < C; ++q) out[b * C + q] += p[s] * f[q];
    }
  }
  mac_counter().macs += static_cast<std::uint64_t>(features.n()) * S * C;
  return out;
}

inline void attention_pool_backward(const Tensor4D& features, const std::vector<double>& weights, const Tensor4D& dout,
                                    Tensor4D* dfeatures, Tensor4D* dscores) {
  const std::size_t S = features.h() * features.w(), C = features.c();
  std::vector<double> dp(S);
  for (std::size_t b = 0; b < features.n(); ++b) {
    const double* g = &dout[b * C];
    double dot = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
      const double* f = &features[(b * S + s) * C];
      double acc = 0.0;
      for (std::size_t q = 0; q < C; ++q) acc += g[q] * f[q];
      dp[s] = acc;
      dot += weights[b * S + s] * acc;
      if (dfeatures) {
        double* df = &(*dfeatures)[(b * S + s) * C];
        for (std::size_t q = 0; q < C; ++q) df[q] += weights[b * S + s] * g[q];
      }
    }
    if (dscores) {
      for (std::size_t s = 0; s < S; ++s) (*dscores)[b * S + s] += weights[b * S + s] * (dp[s] - dot);
    }
  }
}

}  // namespace kernels
}  // namespace faconv
