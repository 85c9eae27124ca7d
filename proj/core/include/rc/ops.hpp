#pragma once

// Differentiable kernels: convolution (im2col + GEMM), transposed
// convolution, GDN, elementwise ops and the reductions used by the losses.

#include <Eigen/Dense>

#include "rc/tensor.hpp"

namespace rc {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatRM<T>>;
template <typename T>
using CMapRM = Eigen::Map<const MatRM<T>>;

namespace detail {

// src: [C,H,W] plane of one batch element -> col [C*kh*kw, Ho*Wo].
template <typename T>
void im2col(const T* src, int C, int H, int W, int kh, int kw, int stride,
            int pad, int Ho, int Wo, T* col) {
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        T* row = col + ((static_cast<std::size_t>(c) * kh + ky) * kw + kx) *
                           (static_cast<std::size_t>(Ho) * Wo);
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) {
            std::fill(row + static_cast<std::size_t>(oy) * Wo,
                      row + static_cast<std::size_t>(oy + 1) * Wo, T(0));
            continue;
          }
          const T* srow = src + (static_cast<std::size_t>(c) * H + iy) * W;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            row[static_cast<std::size_t>(oy) * Wo + ox] =
                (ix >= 0 && ix < W) ? srow[ix] : T(0);
          }
        }
      }
    }
  }
}

// Transpose of im2col: accumulates col [C*kh*kw, Ho*Wo] back into [C,H,W].
template <typename T>
void col2im_add(const T* col, int C, int H, int W, int kh, int kw, int stride,
                int pad, int Ho, int Wo, T* dst) {
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const T* row = col + ((static_cast<std::size_t>(c) * kh + ky) * kw + kx) *
                                 (static_cast<std::size_t>(Ho) * Wo);
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          T* drow = dst + (static_cast<std::size_t>(c) * H + iy) * W;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < W)
              drow[ix] += row[static_cast<std::size_t>(oy) * Wo + ox];
          }
        }
      }
    }
  }
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<std::shared_ptr<TensorNode<T>>> parents,
                      std::function<void(TensorNode<T>&)> backward_fn) {
  Tensor<T> out(std::move(shape));
  if (!parents.empty()) {
    out.node()->parents = std::move(parents);
    out.node()->backward_fn = std::move(backward_fn);
  }
  return out;
}

}  // namespace detail

// input [B,Cin,H,W] * kernel [Cout,Cin,kh,kw] (+bias [Cout]) -> [B,Cout,Ho,Wo].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel,
                 const Tensor<T>& bias, int stride, int pad) {
  if (input.rank() != 4 || kernel.rank() != 4)
    throw std::invalid_argument("conv2d expects 4-d input and kernel");
  const int B = input.dim(0), Cin = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int Cout = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(1) != Cin)
    throw std::invalid_argument("conv2d channel mismatch: input " +
                                shape_str(input.shape()) + " kernel " +
                                shape_str(kernel.shape()));
  if (bias.defined() && static_cast<int>(bias.size()) != Cout)
    throw std::invalid_argument("conv2d bias size mismatch");
  if (stride < 1) throw std::invalid_argument("conv2d stride must be >= 1");
  const int Ho = (H + 2 * pad - kh) / stride + 1;
  const int Wo = (W + 2 * pad - kw) / stride + 1;
  if (Ho <= 0 || Wo <= 0)
    throw std::invalid_argument("conv2d produces empty output");

  const std::size_t colsz = static_cast<std::size_t>(Cin) * kh * kw * Ho * Wo;
  std::vector<T> col(colsz);
  Tensor<T> out(Shape{B, Cout, Ho, Wo});

  CMapRM<T> wmat(kernel.data(), Cout, Cin * kh * kw);
  for (int b = 0; b < B; ++b) {
    detail::im2col(input.data() + static_cast<std::size_t>(b) * Cin * H * W,
                   Cin, H, W, kh, kw, stride, pad, Ho, Wo, col.data());
    CMapRM<T> cmat(col.data(), Cin * kh * kw, Ho * Wo);
    MapRM<T> omat(out.data() + static_cast<std::size_t>(b) * Cout * Ho * Wo,
                  Cout, Ho * Wo);
    omat.noalias() = wmat * cmat;
    if (bias.defined())
      for (int c = 0; c < Cout; ++c)
        omat.row(c).array() += bias.data()[c];
  }

  bool grad = graph_wanted(input) || graph_wanted(kernel) ||
              (bias.defined() && graph_wanted(bias));
  if (!grad) return out;

  auto in_node = input.node();
  auto k_node = kernel.node();
  auto b_node = bias.defined() ? bias.node() : nullptr;
  std::vector<std::shared_ptr<TensorNode<T>>> parents{in_node, k_node};
  if (b_node) parents.push_back(b_node);

  auto fn = [=](TensorNode<T>& self) {
    std::vector<T> colbuf(colsz);
    const bool need_dx = in_node->in_graph();
    const bool need_dw = k_node->in_graph();
    const bool need_db = b_node && b_node->in_graph();
    if (need_dx) in_node->ensure_grad();
    if (need_dw) k_node->ensure_grad();
    if (need_db) b_node->ensure_grad();
    CMapRM<T> wmat2(k_node->data.data(), Cout, Cin * kh * kw);
    std::vector<T> dcol(need_dx ? colsz : 0);
    for (int b = 0; b < B; ++b) {
      CMapRM<T> go(self.grad.data() + static_cast<std::size_t>(b) * Cout * Ho * Wo,
                   Cout, Ho * Wo);
      if (need_dw) {
        detail::im2col(in_node->data.data() + static_cast<std::size_t>(b) * Cin * H * W,
                       Cin, H, W, kh, kw, stride, pad, Ho, Wo, colbuf.data());
        CMapRM<T> cmat(colbuf.data(), Cin * kh * kw, Ho * Wo);
        MapRM<T> gw(k_node->grad.data(), Cout, Cin * kh * kw);
        gw.noalias() += go * cmat.transpose();
      }
      if (need_db) {
        for (int c = 0; c < Cout; ++c)
          b_node->grad[c] += go.row(c).sum();
      }
      if (need_dx) {
        MapRM<T> dc(dcol.data(), Cin * kh * kw, Ho * Wo);
        dc.noalias() = wmat2.transpose() * go;
        detail::col2im_add(dcol.data(), Cin, H, W, kh, kw, stride, pad, Ho, Wo,
                           in_node->grad.data() +
                               static_cast<std::size_t>(b) * Cin * H * W);
      }
    }
  };
  out.node()->parents = std::move(parents);
  out.node()->backward_fn = std::move(fn);
  return out;
}

// input [B,Cin,H,W] * kernel [Cin,Cout,kh,kw] -> [B,Cout,s*H,s*W].
// Configured for exact spatial doubling: stride 2, pad (kh-1)/2, output
// padding 2*pad - (kh - 1) + 1 ... validated below.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& kernel,
                           const Tensor<T>& bias, int stride) {
  if (input.rank() != 4 || kernel.rank() != 4)
    throw std::invalid_argument("conv_transpose2d expects 4-d tensors");
  const int B = input.dim(0), Cin = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int Cout = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(0) != Cin)
    throw std::invalid_argument("conv_transpose2d channel mismatch");
  if (kh % 2 == 0 || kw % 2 == 0)
    throw std::invalid_argument("conv_transpose2d requires odd kernels");
  const int pad = (kh - 1) / 2;
  const int out_pad = stride - 1;
  const int Ho = (H - 1) * stride - 2 * pad + kh + out_pad;
  const int Wo = (W - 1) * stride - 2 * pad + kw + out_pad;
  if (Ho != stride * H || Wo != stride * W)
    throw std::invalid_argument("conv_transpose2d cannot produce s*H x s*W");
  if (bias.defined() && static_cast<int>(bias.size()) != Cout)
    throw std::invalid_argument("conv_transpose2d bias size mismatch");

  const std::size_t colsz = static_cast<std::size_t>(Cout) * kh * kw * H * W;
  std::vector<T> col(colsz);
  Tensor<T> out(Shape{B, Cout, Ho, Wo});

  // Forward = scatter: col = K^T * x, then col2im with the conv geometry that
  // maps the output back onto the input grid.
  CMapRM<T> kmat(kernel.data(), Cin, Cout * kh * kw);
  for (int b = 0; b < B; ++b) {
    CMapRM<T> xmat(input.data() + static_cast<std::size_t>(b) * Cin * H * W,
                   Cin, H * W);
    MapRM<T> cmat(col.data(), Cout * kh * kw, H * W);
    cmat.noalias() = kmat.transpose() * xmat;
    T* optr = out.data() + static_cast<std::size_t>(b) * Cout * Ho * Wo;
    detail::col2im_add(col.data(), Cout, Ho, Wo, kh, kw, stride, pad, H, W, optr);
    if (bias.defined()) {
      for (int c = 0; c < Cout; ++c) {
        T* plane = optr + static_cast<std::size_t>(c) * Ho * Wo;
        const T bv = bias.data()[c];
        for (std::size_t i = 0; i < static_cast<std::size_t>(Ho) * Wo; ++i)
          plane[i] += bv;
      }
    }
  }

  bool grad = graph_wanted(input) || graph_wanted(kernel) ||
              (bias.defined() && graph_wanted(bias));
  if (!grad) return out;

  auto in_node = input.node();
  auto k_node = kernel.node();
  auto b_node = bias.defined() ? bias.node() : nullptr;
  std::vector<std::shared_ptr<TensorNode<T>>> parents{in_node, k_node};
  if (b_node) parents.push_back(b_node);

  auto fn = [=](TensorNode<T>& self) {
    const bool need_dx = in_node->in_graph();
    const bool need_dw = k_node->in_graph();
    const bool need_db = b_node && b_node->in_graph();
    if (need_dx) in_node->ensure_grad();
    if (need_dw) k_node->ensure_grad();
    if (need_db) b_node->ensure_grad();
    std::vector<T> colbuf(colsz);
    CMapRM<T> kmat2(k_node->data.data(), Cin, Cout * kh * kw);
    for (int b = 0; b < B; ++b) {
      const T* goptr = self.grad.data() + static_cast<std::size_t>(b) * Cout * Ho * Wo;
      // Gather grad-output patches on the input grid.
      detail::im2col(goptr, Cout, Ho, Wo, kh, kw, stride, pad, H, W, colbuf.data());
      CMapRM<T> gcol(colbuf.data(), Cout * kh * kw, H * W);
      if (need_dx) {
        MapRM<T> gx(in_node->grad.data() + static_cast<std::size_t>(b) * Cin * H * W,
                    Cin, H * W);
        gx.noalias() += kmat2 * gcol;
      }
      if (need_dw) {
        CMapRM<T> xmat(in_node->data.data() + static_cast<std::size_t>(b) * Cin * H * W,
                       Cin, H * W);
        MapRM<T> gk(k_node->grad.data(), Cin, Cout * kh * kw);
        gk.noalias() += xmat * gcol.transpose();
      }
      if (need_db) {
        for (int c = 0; c < Cout; ++c) {
          const T* plane = goptr + static_cast<std::size_t>(c) * Ho * Wo;
          T s = 0;
          for (std::size_t i = 0; i < static_cast<std::size_t>(Ho) * Wo; ++i)
            s += plane[i];
          b_node->grad[c] += s;
        }
      }
    }
  };
  out.node()->parents = std::move(parents);
  out.node()->backward_fn = std::move(fn);
  return out;
}

inline constexpr double kGdnBetaMin = 1e-6;

// y_i = x_i / sqrt(beta_i + sum_j gamma_ij x_j^2), per spatial position.
// beta_raw [C] and gamma_raw [C,C] are unconstrained; the effective values
// are max(beta_raw, beta_min) and max(gamma_raw, 0).
template <typename T>
Tensor<T> gdn(const Tensor<T>& input, const Tensor<T>& beta_raw,
              const Tensor<T>& gamma_raw) {
  if (input.rank() != 4) throw std::invalid_argument("gdn expects [B,C,H,W]");
  const int B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (static_cast<int>(beta_raw.size()) != C ||
      static_cast<int>(gamma_raw.size()) != C * C)
    throw std::invalid_argument("gdn parameter shape mismatch");
  const std::size_t plane = static_cast<std::size_t>(H) * W;

  std::vector<T> beta(C), gamma(static_cast<std::size_t>(C) * C);
  for (int i = 0; i < C; ++i)
    beta[i] = std::max(beta_raw.data()[i], static_cast<T>(kGdnBetaMin));
  for (std::size_t i = 0; i < gamma.size(); ++i)
    gamma[i] = std::max(gamma_raw.data()[i], T(0));

  Tensor<T> out(input.shape());
  // rdenom caches s^{-1/2}; backward reuses it.
  auto rdenom = std::make_shared<std::vector<T>>(input.size());

  for (int b = 0; b < B; ++b) {
    const T* x = input.data() + static_cast<std::size_t>(b) * C * plane;
    T* y = out.data() + static_cast<std::size_t>(b) * C * plane;
    T* rd = rdenom->data() + static_cast<std::size_t>(b) * C * plane;
    CMapRM<T> xm(x, C, plane);
    MatRM<T> xsq = xm.array().square().matrix();
    CMapRM<T> gm(gamma.data(), C, C);
    MatRM<T> s = gm * xsq;
    for (int c = 0; c < C; ++c)
      s.row(c).array() += beta[c];
    MapRM<T> rdm(rd, C, plane);
    rdm = s.array().rsqrt().matrix();
    MapRM<T> ym(y, C, plane);
    ym = xm.cwiseProduct(rdm);
  }

  bool grad = graph_wanted(input) || graph_wanted(beta_raw) || graph_wanted(gamma_raw);
  if (!grad) return out;

  auto in_node = input.node();
  auto beta_node = beta_raw.node();
  auto gamma_node = gamma_raw.node();

  auto fn = [=](TensorNode<T>& self) {
    const bool need_dx = in_node->in_graph();
    const bool need_db = beta_node->in_graph();
    const bool need_dg = gamma_node->in_graph();
    if (need_dx) in_node->ensure_grad();
    if (need_db) beta_node->ensure_grad();
    if (need_dg) gamma_node->ensure_grad();
    CMapRM<T> gm(gamma.data(), C, C);
    for (int b = 0; b < B; ++b) {
      const T* x = in_node->data.data() + static_cast<std::size_t>(b) * C * plane;
      const T* gy = self.grad.data() + static_cast<std::size_t>(b) * C * plane;
      const T* rd = rdenom->data() + static_cast<std::size_t>(b) * C * plane;
      CMapRM<T> xm(x, C, plane);
      CMapRM<T> gym(gy, C, plane);
      CMapRM<T> rdm(rd, C, plane);
      // t_i = gy_i * x_i * s_i^{-3/2}
      MatRM<T> tm = gym.cwiseProduct(xm).cwiseProduct(
          rdm.array().cube().matrix());
      if (need_dx) {
        // dx_j = gy_j / d_j - x_j * sum_i t_i gamma_ij
        MatRM<T> mix = gm.transpose() * tm;
        MapRM<T> gx(in_node->grad.data() + static_cast<std::size_t>(b) * C * plane,
                    C, plane);
        gx.noalias() += gym.cwiseProduct(rdm) - xm.cwiseProduct(mix);
      }
      if (need_db) {
        for (int c = 0; c < C; ++c) {
          if (beta_node->data[c] < static_cast<T>(kGdnBetaMin)) continue;
          beta_node->grad[c] += static_cast<T>(-0.5) * tm.row(c).sum();
        }
      }
      if (need_dg) {
        MatRM<T> xsq = xm.array().square().matrix();
        MatRM<T> dg = static_cast<T>(-0.5) * (tm * xsq.transpose());
        for (int i = 0; i < C; ++i)
          for (int j = 0; j < C; ++j)
            if (gamma_node->data[static_cast<std::size_t>(i) * C + j] >= T(0))
              gamma_node->grad[static_cast<std::size_t>(i) * C + j] += dg(i, j);
      }
    }
  };
  out.node()->parents = {in_node, beta_node, gamma_node};
  out.node()->backward_fn = std::move(fn);
  return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i)
    out.data()[i] = input.data()[i] > T(0) ? input.data()[i] : T(0);
  if (!graph_wanted(input)) return out;
  auto in_node = input.node();
  auto fn = [=](TensorNode<T>& self) {
    if (!in_node->in_graph()) return;
    in_node->ensure_grad();
    for (std::size_t i = 0; i < self.data.size(); ++i)
      if (in_node->data[i] > T(0)) in_node->grad[i] += self.grad[i];
  };
  out.node()->parents = {in_node};
  out.node()->backward_fn = std::move(fn);
  return out;
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    const T x = input.data()[i];
    out.data()[i] = x > T(0) ? x + std::log1p(std::exp(-x))
                             : std::log1p(std::exp(x));
  }
  if (!graph_wanted(input)) return out;
  auto in_node = input.node();
  auto fn = [=](TensorNode<T>& self) {
    if (!in_node->in_graph()) return;
    in_node->ensure_grad();
    for (std::size_t i = 0; i < self.data.size(); ++i) {
      const T x = in_node->data[i];
      const T s = T(1) / (T(1) + std::exp(-x));
      in_node->grad[i] += self.grad[i] * s;
    }
  };
  out.node()->parents = {in_node};
  out.node()->backward_fn = std::move(fn);
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("add shape mismatch");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i)
    out.data()[i] = a.data()[i] + b.data()[i];
  if (!graph_wanted(a) && !graph_wanted(b)) return out;
  auto an = a.node();
  auto bn = b.node();
  auto fn = [=](TensorNode<T>& self) {
    for (auto& n : {an, bn}) {
      if (!n->in_graph()) continue;
      n->ensure_grad();
      for (std::size_t i = 0; i < self.data.size(); ++i)
        n->grad[i] += self.grad[i];
    }
  };
  out.node()->parents = {an, bn};
  out.node()->backward_fn = std::move(fn);
  return out;
}

// Concatenate two [B,C,H,W] tensors along channels.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 4 || b.rank() != 4 || a.dim(0) != b.dim(0) ||
      a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
    throw std::invalid_argument("concat_channels shape mismatch");
  const int B = a.dim(0), Ca = a.dim(1), Cb = b.dim(1);
  const std::size_t plane = static_cast<std::size_t>(a.dim(2)) * a.dim(3);
  Tensor<T> out(Shape{B, Ca + Cb, a.dim(2), a.dim(3)});
  for (int bi = 0; bi < B; ++bi) {
    std::copy_n(a.data() + bi * Ca * plane, Ca * plane,
                out.data() + static_cast<std::size_t>(bi) * (Ca + Cb) * plane);
    std::copy_n(b.data() + bi * Cb * plane, Cb * plane,
                out.data() + (static_cast<std::size_t>(bi) * (Ca + Cb) + Ca) * plane);
  }
  if (!graph_wanted(a) && !graph_wanted(b)) return out;
  auto an = a.node();
  auto bn = b.node();
  auto fn = [=](TensorNode<T>& self) {
    for (int bi = 0; bi < B; ++bi) {
      const T* g = self.grad.data() + static_cast<std::size_t>(bi) * (Ca + Cb) * plane;
      if (an->in_graph()) {
        an->ensure_grad();
        T* ga = an->grad.data() + static_cast<std::size_t>(bi) * Ca * plane;
        for (std::size_t i = 0; i < Ca * plane; ++i) ga[i] += g[i];
      }
      if (bn->in_graph()) {
        bn->ensure_grad();
        T* gb = bn->grad.data() + static_cast<std::size_t>(bi) * Cb * plane;
        for (std::size_t i = 0; i < Cb * plane; ++i) gb[i] += g[Ca * plane + i];
      }
    }
  };
  out.node()->parents = {an, bn};
  out.node()->backward_fn = std::move(fn);
  return out;
}

// [B,C,H,W] -> [B,C] spatial mean.
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& input) {
  if (input.rank() != 4) throw std::invalid_argument("global_avg_pool expects 4-d");
  const int B = input.dim(0), C = input.dim(1);
  const std::size_t plane = static_cast<std::size_t>(input.dim(2)) * input.dim(3);
  Tensor<T> out(Shape{B, C});
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const T* p = input.data() + (static_cast<std::size_t>(b) * C + c) * plane;
      T s = 0;
      for (std::size_t i = 0; i < plane; ++i) s += p[i];
      out.data()[static_cast<std::size_t>(b) * C + c] = s / static_cast<T>(plane);
    }
  if (!graph_wanted(input)) return out;
  auto in_node = input.node();
  auto fn = [=](TensorNode<T>& self) {
    if (!in_node->in_graph()) return;
    in_node->ensure_grad();
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c) {
        const T g = self.grad[static_cast<std::size_t>(b) * C + c] /
                    static_cast<T>(plane);
        T* gp = in_node->grad.data() + (static_cast<std::size_t>(b) * C + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) gp[i] += g;
      }
  };
  out.node()->parents = {in_node};
  out.node()->backward_fn = std::move(fn);
  return out;
}

// [B,Cin] * weight [Cout,Cin] + bias [Cout] -> [B,Cout].
template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias) {
  if (input.rank() != 2 || weight.rank() != 2 || input.dim(1) != weight.dim(1))
    throw std::invalid_argument("linear shape mismatch");
  const int B = input.dim(0), Cin = input.dim(1), Cout = weight.dim(0);
  Tensor<T> out(Shape{B, Cout});
  CMapRM<T> xm(input.data(), B, Cin);
  CMapRM<T> wm(weight.data(), Cout, Cin);
  MapRM<T> om(out.data(), B, Cout);
  om.noalias() = xm * wm.transpose();
  if (bias.defined())
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < Cout; ++c)
        om(b, c) += bias.data()[c];
  bool grad = graph_wanted(input) || graph_wanted(weight) ||
              (bias.defined() && graph_wanted(bias));
  if (!grad) return out;
  auto in_node = input.node();
  auto w_node = weight.node();
  auto b_node = bias.defined() ? bias.node() : nullptr;
  std::vector<std::shared_ptr<TensorNode<T>>> parents{in_node, w_node};
  if (b_node) parents.push_back(b_node);
  auto fn = [=](TensorNode<T>& self) {
    CMapRM<T> go(self.grad.data(), B, Cout);
    if (in_node->in_graph()) {
      in_node->ensure_grad();
      CMapRM<T> wm2(w_node->data.data(), Cout, Cin);
      MapRM<T> gx(in_node->grad.data(), B, Cin);
      gx.noalias() += go * wm2;
    }
    if (w_node->in_graph()) {
      w_node->ensure_grad();
      CMapRM<T> xm2(in_node->data.data(), B, Cin);
      MapRM<T> gw(w_node->grad.data(), Cout, Cin);
      gw.noalias() += go.transpose() * xm2;
    }
    if (b_node && b_node->in_graph()) {
      b_node->ensure_grad();
      for (int b = 0; b < B; ++b)
        for (int c = 0; c < Cout; ++c)
          b_node->grad[c] += go(b, c);
    }
  };
  out.node()->parents = std::move(parents);
  out.node()->backward_fn = std::move(fn);
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& input) {
  Tensor<T> out(Shape{1});
  T s = 0;
  for (std::size_t i = 0; i < input.size(); ++i) s += input.data()[i];
  out.data()[0] = s;
  if (!graph_wanted(input)) return out;
  auto in_node = input.node();
  auto fn = [=](TensorNode<T>& self) {
    if (!in_node->in_graph()) return;
    in_node->ensure_grad();
    for (std::size_t i = 0; i < in_node->grad.size(); ++i)
      in_node->grad[i] += self.grad[0];
  };
  out.node()->parents = {in_node};
  out.node()->backward_fn = std::move(fn);
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& input, T factor) {
  Tensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i)
    out.data()[i] = input.data()[i] * factor;
  if (!graph_wanted(input)) return out;
  auto in_node = input.node();
  auto fn = [=](TensorNode<T>& self) {
    if (!in_node->in_graph()) return;
    in_node->ensure_grad();
    for (std::size_t i = 0; i < self.data.size(); ++i)
      in_node->grad[i] += self.grad[i] * factor;
  };
  out.node()->parents = {in_node};
  out.node()->backward_fn = std::move(fn);
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw std::invalid_argument("mul shape mismatch");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i)
    out.data()[i] = a.data()[i] * b.data()[i];
  if (!graph_wanted(a) && !graph_wanted(b)) return out;
  auto an = a.node();
  auto bn = b.node();
  auto fn = [=](TensorNode<T>& self) {
    if (an->in_graph()) {
      an->ensure_grad();
      for (std::size_t i = 0; i < self.data.size(); ++i)
        an->grad[i] += self.grad[i] * bn->data[i];
    }
    if (bn->in_graph()) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < self.data.size(); ++i)
        bn->grad[i] += self.grad[i] * an->data[i];
    }
  };
  out.node()->parents = {an, bn};
  out.node()->backward_fn = std::move(fn);
  return out;
}

// Mean cross-entropy in bits over a batch of logits [B,N] and integer labels.
template <typename T>
Tensor<T> cross_entropy_bits(const Tensor<T>& logits,
                             const std::vector<int>& labels) {
  if (logits.rank() != 2 || static_cast<int>(labels.size()) != logits.dim(0))
    throw std::invalid_argument("cross_entropy_bits shape mismatch");
  const int B = logits.dim(0), N = logits.dim(1);
  Tensor<T> out(Shape{1});
  auto probs = std::make_shared<std::vector<T>>(logits.size());
  T total = 0;
  for (int b = 0; b < B; ++b) {
    const T* l = logits.data() + static_cast<std::size_t>(b) * N;
    T* p = probs->data() + static_cast<std::size_t>(b) * N;
    T mx = l[0];
    for (int i = 1; i < N; ++i) mx = std::max(mx, l[i]);
    T z = 0;
    for (int i = 0; i < N; ++i) {
      p[i] = std::exp(l[i] - mx);
      z += p[i];
    }
    for (int i = 0; i < N; ++i) p[i] /= z;
    total += -std::log2(std::max(p[labels[b]], static_cast<T>(1e-30)));
  }
  out.data()[0] = total / static_cast<T>(B);
  if (!graph_wanted(logits)) return out;
  auto l_node = logits.node();
  auto fn = [=](TensorNode<T>& self) {
    if (!l_node->in_graph()) return;
    l_node->ensure_grad();
    const T g = self.grad[0] / (static_cast<T>(B) * static_cast<T>(std::log(2.0)));
    for (int b = 0; b < B; ++b) {
      const T* p = probs->data() + static_cast<std::size_t>(b) * N;
      T* gl = l_node->grad.data() + static_cast<std::size_t>(b) * N;
      for (int i = 0; i < N; ++i)
        gl[i] += g * (p[i] - (i == labels[b] ? T(1) : T(0)));
    }
  };
  out.node()->parents = {l_node};
  out.node()->backward_fn = std::move(fn);
  return out;
}

}  // namespace rc
