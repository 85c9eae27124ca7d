#pragma once

// Discrete mixture-of-logistics model over residual values in [-255, 255]:
// per-bin pmf with absorbed tails, weak RGB autoregression through the
// mixture means, NLL in bits, quantized CDF tables for the range coder,
// and sampling.

#include <cstdint>
#include <random>
#include <vector>

#include "rc/cdf.hpp"
#include "rc/tensor.hpp"

namespace rc {

inline constexpr int kResMin = -255;
inline constexpr int kResMax = 255;
inline constexpr int kResBins = kResMax - kResMin + 1;  // 511
inline constexpr double kSigmaMin = 1e-3;
inline constexpr double kPmfFloor = 1e-12;
inline constexpr int kDefaultK = 5;

// r = x - x_l, planar [3][H][W], int16.
struct Residual {
  int height = 0;
  int width = 0;
  std::vector<std::int16_t> values;  // 3*H*W

  static Residual zeros(int h, int w) {
    return Residual{h, w, std::vector<std::int16_t>(3ull * h * w, 0)};
  }
  std::int16_t at(int c, int y, int x) const {
    return values[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  std::int16_t& at(int c, int y, int x) {
    return values[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
};

// Per-subpixel mixture parameters for one image. pi is post-softmax,
// sigma post-softplus (>= kSigmaMin). Index order: (c, k, y, x).
// lambda holds (alpha, beta, gamma) coefficient groups in place of c.
struct MixtureParams {
  int k = kDefaultK;
  int height = 0;
  int width = 0;
  std::vector<float> pi;      // [3,K,H,W]
  std::vector<float> mu;      // [3,K,H,W]
  std::vector<float> sigma;   // [3,K,H,W]
  std::vector<float> lambda;  // [3,K,H,W], groups alpha/beta/gamma

  std::size_t idx(int c, int comp, int y, int x) const {
    return ((static_cast<std::size_t>(c) * k + comp) * height + y) * width + x;
  }
  static MixtureParams zeros(int k, int h, int w) {
    MixtureParams p;
    p.k = k;
    p.height = h;
    p.width = w;
    const std::size_t n = static_cast<std::size_t>(3) * k * h * w;
    p.pi.assign(n, 0.f);
    p.mu.assign(n, 0.f);
    p.sigma.assign(n, 1.f);
    p.lambda.assign(n, 0.f);
    return p;
  }
};

// p_L(r) = CDF(r+1/2) - CDF(r-1/2) with logistic CDF; the support edges
// absorb the tails. Throws if r is outside [rmin, rmax].
double discrete_logistic_pmf(int r, double mu, double sigma,
                             int rmin = kResMin, int rmax = kResMax);

// mu_tilde for channel c given the previous-channel residuals:
//   c=0: mu;  c=1: mu + lambda_alpha*r1;  c=2: mu + lambda_beta*r1 + lambda_gamma*r2
void conditional_means(const MixtureParams& p, int c, int y, int x, int r1,
                       int r2, double* mu_tilde /*K*/);

// Full-support pmf of channel c at (y, x): sum_k pi_k p_L(r | mu_tilde_k, sigma_k).
void pixel_pmf(const MixtureParams& p, int c, int y, int x, int r1, int r2,
               double* pmf /*kResBins*/);

// Total -log2 p over all subpixels. Underflows below kPmfFloor are clamped
// and counted into *underflows when given.
double nll_bits(const Residual& r, const MixtureParams& p,
                long* underflows = nullptr);

// Per-subpixel quantized CDF table for the range coder. Uses a per-component
// z-window; bins outside every window get the minimum count.
class CodingCdfBuilder {
 public:
  CodingCdfBuilder() : pmf_(kResBins, 0.0) {}
  void build(const MixtureParams& p, int c, int y, int x, int r1, int r2,
             CdfTable& out);

 private:
  std::vector<double> pmf_;
};

// Samples one residual image; channels in order, mu_tilde updated with the
// sampled previous channels.
Residual sample_residual(const MixtureParams& p, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Differentiable NLL of the mixture given raw network outputs, used for
// training. Layouts follow the network tails: [B, 3K, H, W] with channel
// index c*K + k (for lambda: group*K + k, groups alpha/beta/gamma).
// sigma is the post-softplus tensor (>= sigma_min). Returns total bits.
// ---------------------------------------------------------------------------

namespace detail {

struct LogisticBin {
  double p;        // probability of the bin
  double dp_dmu;   // d p / d mu_tilde
  double dp_dsig;  // d p / d sigma
};

inline double stable_sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline LogisticBin logistic_bin(int r, double mu, double sigma) {
  const double inv = 1.0 / sigma;
  const double a = (r + 0.5 - mu) * inv;
  const double b = (r - 0.5 - mu) * inv;
  const double fa = stable_sigmoid(a);
  const double fb = stable_sigmoid(b);
  const double fna = stable_sigmoid(-a);  // 1 - fa without cancellation
  const double fnb = stable_sigmoid(-b);
  const double da = fa * fna;
  const double db = fb * fnb;
  LogisticBin out;
  if (r <= kResMin) {
    out.p = fa;
    out.dp_dmu = -da * inv;
    out.dp_dsig = -a * da * inv;
  } else if (r >= kResMax) {
    out.p = fnb;
    out.dp_dmu = db * inv;
    out.dp_dsig = b * db * inv;
  } else {
    // sigmoid(a) - sigmoid(b) without cancellation:
    // = sigmoid(a) * sigmoid(-b) * (1 - exp(-(a-b)))
    out.p = fa * fnb * (-std::expm1(b - a));
    out.dp_dmu = (db - da) * inv;
    out.dp_dsig = (b * db - a * da) * inv;
  }
  return out;
}

}  // namespace detail

// Residual batch alongside [B,3K,H,W] parameter tensors.
struct ResidualBatch {
  int batch = 0;
  int height = 0;
  int width = 0;
  std::vector<std::int16_t> values;  // [B,3,H,W]

  std::int16_t at(int b, int c, int y, int x) const {
    return values[((static_cast<std::size_t>(b) * 3 + c) * height + y) * width + x];
  }
};

template <typename T>
Tensor<T> mixture_nll_bits(const Tensor<T>& pi_logits, const Tensor<T>& mu,
                           const Tensor<T>& sigma, const Tensor<T>& lambda,
                           const ResidualBatch& res,
                           long* underflows = nullptr) {
  const int B = pi_logits.dim(0), C3K = pi_logits.dim(1);
  const int H = pi_logits.dim(2), W = pi_logits.dim(3);
  const int K = C3K / 3;
  if (C3K % 3 != 0 || mu.shape() != pi_logits.shape() ||
      sigma.shape() != pi_logits.shape() || lambda.shape() != pi_logits.shape())
    throw std::invalid_argument("mixture_nll_bits: shape mismatch");
  if (res.batch != B || res.height != H || res.width != W)
    throw std::invalid_argument("mixture_nll_bits: residual shape mismatch");

  const std::size_t plane = static_cast<std::size_t>(H) * W;
  auto off = [&](int b, int c, int k, int y, int x) {
    return ((static_cast<std::size_t>(b) * C3K + c * K + k) * H + y) * W + x;
  };

  // forward + gradient in one pass; per-element work is cheap enough that
  // recomputation in backward would not pay off.
  const bool want_grad = grad_mode_flag() &&
                         (pi_logits.node()->in_graph() || mu.node()->in_graph() ||
                          sigma.node()->in_graph() || lambda.node()->in_graph());
  auto gpi = std::make_shared<std::vector<T>>();
  auto gmu = std::make_shared<std::vector<T>>();
  auto gsig = std::make_shared<std::vector<T>>();
  auto glam = std::make_shared<std::vector<T>>();
  if (want_grad) {
    gpi->assign(pi_logits.size(), T(0));
    gmu->assign(mu.size(), T(0));
    gsig->assign(sigma.size(), T(0));
    glam->assign(lambda.size(), T(0));
  }

  constexpr double kLn2 = 0.6931471805599453;
  double total_nats = 0;
  long uf = 0;
  std::vector<double> pik(K), pk(K), dmu(K), dsig(K);

  for (int b = 0; b < B; ++b) {
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const int r1 = res.at(b, 0, y, x);
        const int r2 = res.at(b, 1, y, x);
        const int rr[3] = {r1, r2, res.at(b, 2, y, x)};
        for (int c = 0; c < 3; ++c) {
          // softmax over K
          double mx = -1e300;
          for (int k = 0; k < K; ++k)
            mx = std::max(mx, static_cast<double>(
                                  pi_logits.data()[off(b, c, k, y, x)]));
          double z = 0;
          for (int k = 0; k < K; ++k) {
            pik[k] = std::exp(
                static_cast<double>(pi_logits.data()[off(b, c, k, y, x)]) - mx);
            z += pik[k];
          }
          double p = 0;
          for (int k = 0; k < K; ++k) {
            pik[k] /= z;
            double mt = mu.data()[off(b, c, k, y, x)];
            if (c == 1)
              mt += static_cast<double>(lambda.data()[off(b, 0, k, y, x)]) * r1;
            if (c == 2)
              mt += static_cast<double>(lambda.data()[off(b, 1, k, y, x)]) * r1 +
                    static_cast<double>(lambda.data()[off(b, 2, k, y, x)]) * r2;
            const auto bin = detail::logistic_bin(
                rr[c], mt, sigma.data()[off(b, c, k, y, x)]);
            pk[k] = bin.p;
            dmu[k] = bin.dp_dmu;
            dsig[k] = bin.dp_dsig;
            p += pik[k] * bin.p;
          }
          const bool floored = p < kPmfFloor;
          if (floored) {
            ++uf;
            p = kPmfFloor;
          }
          total_nats += -std::log(p);
          if (!want_grad) continue;
          const double gp = floored ? 0.0 : -1.0 / p;  // d(nats)/dP
          double dot = 0;
          for (int k = 0; k < K; ++k) dot += pik[k] * pk[k];
          for (int k = 0; k < K; ++k) {
            (*gpi)[off(b, c, k, y, x)] +=
                static_cast<T>(gp * pik[k] * (pk[k] - dot));
            const double gmt = gp * pik[k] * dmu[k];
            (*gmu)[off(b, c, k, y, x)] += static_cast<T>(gmt);
            (*gsig)[off(b, c, k, y, x)] +=
                static_cast<T>(gp * pik[k] * dsig[k]);
            if (c == 1)
              (*glam)[off(b, 0, k, y, x)] += static_cast<T>(gmt * r1);
            if (c == 2) {
              (*glam)[off(b, 1, k, y, x)] += static_cast<T>(gmt * r1);
              (*glam)[off(b, 2, k, y, x)] += static_cast<T>(gmt * r2);
            }
          }
        }
      }
    }
  }
  if (underflows) *underflows += uf;

  Tensor<T> out(Shape{1});
  out.data()[0] = static_cast<T>(total_nats / kLn2);
  if (!want_grad) return out;

  auto pn = pi_logits.node();
  auto mn = mu.node();
  auto sn = sigma.node();
  auto ln = lambda.node();
  auto fn = [=](TensorNode<T>& self) {
    const T g = self.grad[0] / static_cast<T>(kLn2);
    auto route = [&](const std::shared_ptr<TensorNode<T>>& n,
                     const std::vector<T>& cached) {
      if (!n->in_graph()) return;
      n->ensure_grad();
      for (std::size_t i = 0; i < cached.size(); ++i)
        n->grad[i] += g * cached[i];
    };
    route(pn, *gpi);
    route(mn, *gmu);
    route(sn, *gsig);
    route(ln, *glam);
  };
  out.node()->parents = {pn, mn, sn, ln};
  out.node()->backward_fn = std::move(fn);
  return out;
}

}  // namespace rc
