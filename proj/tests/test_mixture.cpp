#include <random>

#include "doctest.h"
#include "gradcheck.hpp"
#include "rc/mixture.hpp"
#include "rc/ops.hpp"
#include "rc/range_coder.hpp"

using rc::MixtureParams;
using rc::Residual;
using rc::Tensor;

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

MixtureParams random_params(int k, int h, int w, std::mt19937_64& rng,
                            double sigma_lo = 0.3, double sigma_hi = 3.0,
                            double mu_span = 20.0) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  MixtureParams p = MixtureParams::zeros(k, h, w);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double z = 0;
        std::vector<double> raw(k);
        for (int kk = 0; kk < k; ++kk) {
          raw[kk] = uni(rng) + 1e-3;
          z += raw[kk];
        }
        for (int kk = 0; kk < k; ++kk) {
          p.pi[p.idx(c, kk, y, x)] = static_cast<float>(raw[kk] / z);
          p.mu[p.idx(c, kk, y, x)] =
              static_cast<float>((uni(rng) * 2 - 1) * mu_span);
          p.sigma[p.idx(c, kk, y, x)] =
              static_cast<float>(sigma_lo + uni(rng) * (sigma_hi - sigma_lo));
          p.lambda[p.idx(c, kk, y, x)] = static_cast<float>(uni(rng) - 0.5);
        }
      }
  return p;
}

}  // namespace

TEST_CASE("discrete logistic pmf closed forms") {
  CHECK(rc::discrete_logistic_pmf(0, 0.0, 1.0) ==
        doctest::Approx(sigmoid(0.5) - sigmoid(-0.5)).epsilon(1e-12));
  CHECK(rc::discrete_logistic_pmf(0, 0.0, 1.0) ==
        doctest::Approx(0.2449187).epsilon(1e-6));
  // lower tail absorbed at rmin
  CHECK(rc::discrete_logistic_pmf(rc::kResMin, rc::kResMin, 1.0) ==
        doctest::Approx(sigmoid(0.5)).epsilon(1e-12));
  CHECK(rc::discrete_logistic_pmf(rc::kResMin, rc::kResMin, 1.0) ==
        doctest::Approx(0.6224593).epsilon(1e-6));
  CHECK_THROWS_AS(rc::discrete_logistic_pmf(300, 0.0, 1.0),
                  std::invalid_argument);
}

TEST_CASE("discrete logistic pmf sums to one") {
  for (double mu : {-40.0, 0.0, 3.7, 280.0})
    for (double sg : {1e-3, 0.5, 2.0, 40.0}) {
      double total = 0;
      for (int r = rc::kResMin; r <= rc::kResMax; ++r)
        total += rc::discrete_logistic_pmf(r, mu, sg);
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("discrete logistic symmetry in interior") {
  for (int r : {-100, -3, 0, 2, 117})
    CHECK(rc::discrete_logistic_pmf(r, 4.5, 1.7) ==
          doctest::Approx(rc::discrete_logistic_pmf(-r, -4.5, 1.7))
              .epsilon(1e-12));
}

TEST_CASE("pmf at round(mu) nonincreasing in sigma") {
  double prev = 2.0;
  for (double sg = rc::kSigmaMin; sg <= 10.0; sg *= 1.7) {
    const double v = rc::discrete_logistic_pmf(3, 3.0, sg);
    CHECK(v <= prev + 1e-15);
    prev = v;
  }
}

TEST_CASE("conditional means") {
  MixtureParams p = MixtureParams::zeros(2, 1, 1);
  double mt[2];

  SUBCASE("zero lambda leaves mu") {
    p.mu[p.idx(1, 0, 0, 0)] = 4.f;
    rc::conditional_means(p, 1, 0, 0, 7, 0, mt);
    CHECK(mt[0] == doctest::Approx(4.0));
  }
  SUBCASE("alpha shifts channel 2") {
    p.lambda[p.idx(0, 0, 0, 0)] = 1.f;  // alpha
    rc::conditional_means(p, 1, 0, 0, 3, 0, mt);
    CHECK(mt[0] == doctest::Approx(3.0));
  }
  SUBCASE("beta/gamma shift channel 3") {
    p.mu[p.idx(2, 0, 0, 0)] = 1.f;
    p.lambda[p.idx(1, 0, 0, 0)] = 0.5f;   // beta
    p.lambda[p.idx(2, 0, 0, 0)] = -0.5f;  // gamma
    rc::conditional_means(p, 2, 0, 0, 4, 2, mt);
    CHECK(mt[0] == doctest::Approx(1.0 + 2.0 - 1.0));
  }
}

TEST_CASE("pixel pmf degenerate mixtures") {
  std::vector<double> pmf(rc::kResBins), ref(rc::kResBins);

  SUBCASE("identical components equal the single component") {
    MixtureParams p = MixtureParams::zeros(3, 1, 1);
    for (int k = 0; k < 3; ++k) {
      p.pi[p.idx(0, k, 0, 0)] = 1.f / 3.f;
      p.mu[p.idx(0, k, 0, 0)] = 2.5f;
      p.sigma[p.idx(0, k, 0, 0)] = 1.3f;
    }
    rc::pixel_pmf(p, 0, 0, 0, 0, 0, pmf.data());
    for (int r = rc::kResMin; r <= rc::kResMax; ++r)
      CHECK(pmf[r - rc::kResMin] ==
            doctest::Approx(
                rc::discrete_logistic_pmf(r, 2.5, static_cast<double>(1.3f)))
                .epsilon(1e-9));
  }
  SUBCASE("one-hot pi picks that component") {
    MixtureParams p = MixtureParams::zeros(2, 1, 1);
    p.pi[p.idx(0, 1, 0, 0)] = 1.f;
    p.mu[p.idx(0, 1, 0, 0)] = -7.f;
    p.sigma[p.idx(0, 0, 0, 0)] = 9.f;
    p.sigma[p.idx(0, 1, 0, 0)] = 0.8f;
    rc::pixel_pmf(p, 0, 0, 0, 0, 0, pmf.data());
    for (int r : {-9, -7, 0})
      CHECK(pmf[r - rc::kResMin] ==
            doctest::Approx(
                rc::discrete_logistic_pmf(r, -7.0, static_cast<double>(0.8f)))
                .epsilon(1e-12));
  }
  SUBCASE("K=2 hand-evaluated mixture") {
    MixtureParams p = MixtureParams::zeros(2, 1, 1);
    p.pi[p.idx(0, 0, 0, 0)] = 0.3f;
    p.pi[p.idx(0, 1, 0, 0)] = 0.7f;
    p.mu[p.idx(0, 0, 0, 0)] = 1.f;
    p.mu[p.idx(0, 1, 0, 0)] = -2.f;
    p.sigma[p.idx(0, 0, 0, 0)] = 0.9f;
    p.sigma[p.idx(0, 1, 0, 0)] = 2.1f;
    rc::pixel_pmf(p, 0, 0, 0, 0, 0, pmf.data());
    // independent long-double evaluation through raw sigmoids
    for (int r = -20; r <= 20; ++r) {
      auto cdf = [](long double t, long double m, long double s) {
        return 1.0L / (1.0L + std::exp(-(t - m) / s));
      };
      const long double s0 = 0.9f, s1 = 2.1f;  // match float storage
      long double want =
          0.3f * (cdf(r + 0.5L, 1.0L, s0) - cdf(r - 0.5L, 1.0L, s0)) +
          0.7f * (cdf(r + 0.5L, -2.0L, s1) - cdf(r - 0.5L, -2.0L, s1));
      CHECK(pmf[r - rc::kResMin] ==
            doctest::Approx(static_cast<double>(want)).epsilon(1e-12));
    }
  }
}

TEST_CASE("pixel pmf normalization over random draws") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<double> pmf(rc::kResBins);
  for (int trial = 0; trial < 200; ++trial) {
    MixtureParams p = MixtureParams::zeros(5, 1, 1);
    for (int c = 0; c < 3; ++c) {
      double z = 0;
      std::vector<double> raw(5);
      for (int k = 0; k < 5; ++k) {
        raw[k] = uni(rng) + 1e-6;
        z += raw[k];
      }
      for (int k = 0; k < 5; ++k) {
        p.pi[p.idx(c, k, 0, 0)] = static_cast<float>(raw[k] / z);
        p.mu[p.idx(c, k, 0, 0)] = static_cast<float>(uni(rng) * 600 - 300);
        p.sigma[p.idx(c, k, 0, 0)] =
            static_cast<float>(rc::kSigmaMin + uni(rng) * 50);
        p.lambda[p.idx(c, k, 0, 0)] = static_cast<float>(uni(rng) * 2 - 1);
      }
    }
    for (int c = 0; c < 3; ++c) {
      rc::pixel_pmf(p, c, 0, 0, 3, -2, pmf.data());
      double total = 0;
      for (double v : pmf) total += v;
      CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("nll bits basics") {
  MixtureParams p = MixtureParams::zeros(1, 1, 1);
  for (int c = 0; c < 3; ++c) {
    p.pi[p.idx(c, 0, 0, 0)] = 1.f;
    p.sigma[p.idx(c, 0, 0, 0)] = 1.f;
  }
  Residual r = Residual::zeros(1, 1);
  const double per = -std::log2(sigmoid(0.5) - sigmoid(-0.5));
  CHECK(rc::nll_bits(r, p) == doctest::Approx(3 * per).epsilon(1e-9));
  CHECK(per == doctest::Approx(2.0296).epsilon(1e-4));
}

TEST_CASE("nll bits additivity and underflow counter") {
  std::mt19937_64 rng(77);
  MixtureParams p = random_params(3, 2, 2, rng);
  Residual r = Residual::zeros(2, 2);
  for (auto& v : r.values) v = static_cast<std::int16_t>(rng() % 11) - 5;
  double total = rc::nll_bits(r, p);
  // additivity: sum of single-position evaluations
  double acc = 0;
  std::vector<double> pmf(rc::kResBins);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) {
      const int r1 = r.at(0, y, x), r2 = r.at(1, y, x);
      for (int c = 0; c < 3; ++c) {
        rc::pixel_pmf(p, c, y, x, r1, r2, pmf.data());
        acc += -std::log2(pmf[r.at(c, y, x) - rc::kResMin]);
      }
    }
  CHECK(total == doctest::Approx(acc).epsilon(1e-9));

  // residual far outside every mode with tiny sigma -> underflow clamp
  MixtureParams tight = MixtureParams::zeros(1, 1, 1);
  for (int c = 0; c < 3; ++c) {
    tight.pi[tight.idx(c, 0, 0, 0)] = 1.f;
    tight.sigma[tight.idx(c, 0, 0, 0)] = static_cast<float>(rc::kSigmaMin);
    tight.mu[tight.idx(c, 0, 0, 0)] = -200.f;
  }
  Residual far = Residual::zeros(1, 1);
  for (auto& v : far.values) v = 200;
  long uf = 0;
  const double bits = rc::nll_bits(far, tight, &uf);
  CHECK(uf == 3);
  CHECK(bits == doctest::Approx(3 * -std::log2(rc::kPmfFloor)).epsilon(1e-9));
}

TEST_CASE("cdf table: uniform pmf") {
  std::vector<double> pmf(511, 1.0 / 511);
  rc::CdfTable t = rc::build_cdf_table(pmf);
  REQUIRE(t.valid());
  std::uint32_t mn = rc::kCdfTotal, mx = 0;
  for (int s = 0; s < 511; ++s) {
    mn = std::min(mn, t.freq(s));
    mx = std::max(mx, t.freq(s));
  }
  CHECK(mx - mn <= 1);
  CHECK(mn >= 128);
}

TEST_CASE("cdf table: one-hot pmf") {
  std::vector<double> pmf(511, 0.0);
  pmf[300] = 1.0;
  rc::CdfTable t = rc::build_cdf_table(pmf);
  REQUIRE(t.valid());
  CHECK(t.freq(300) == rc::kCdfTotal - 510);
  for (int s = 0; s < 511; ++s)
    if (s != 300) CHECK(t.freq(s) == 1);
}

TEST_CASE("cdf table tracks pmf within 511/65536") {
  std::mt19937_64 rng(4);
  MixtureParams p = random_params(5, 1, 1, rng);
  std::vector<double> pmf(rc::kResBins);
  rc::pixel_pmf(p, 0, 0, 0, 0, 0, pmf.data());
  rc::CdfTable t = rc::build_cdf_table(pmf);
  REQUIRE(t.valid());
  for (int s = 0; s < rc::kResBins; ++s) {
    const double q = static_cast<double>(t.freq(s)) / rc::kCdfTotal;
    CHECK(std::abs(q - pmf[s]) < 511.0 / rc::kCdfTotal);
  }
}

TEST_CASE("coding cdf builder matches generic quantizer") {
  std::mt19937_64 rng(12);
  MixtureParams p = random_params(5, 2, 2, rng, 0.1, 4.0, 60.0);
  rc::CodingCdfBuilder builder;
  std::vector<double> pmf(rc::kResBins);
  rc::CdfTable fast, slow;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 2; ++x) {
        builder.build(p, c, y, x, 2, -1, fast);
        REQUIRE(fast.valid());
        rc::pixel_pmf(p, c, y, x, 2, -1, pmf.data());
        slow = rc::build_cdf_table(pmf);
        // windowing moves < 1e-6 of mass, so per-symbol counts agree up to
        // largest-remainder tie reshuffling
        for (int s = 0; s < rc::kResBins; ++s)
          CHECK(std::abs(static_cast<long>(fast.freq(s)) -
                         static_cast<long>(slow.freq(s))) <= 2);
      }
}

TEST_CASE("sampling: near-deterministic at sigma_min") {
  MixtureParams p = MixtureParams::zeros(2, 4, 4);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) {
        p.pi[p.idx(c, 1, y, x)] = 1.f;
        p.mu[p.idx(c, 1, y, x)] = 6.f;
        p.sigma[p.idx(c, 1, y, x)] = static_cast<float>(rc::kSigmaMin);
      }
  int hits = 0, n = 0;
  for (int seed = 0; seed < 40; ++seed) {
    Residual r = rc::sample_residual(p, seed);
    for (auto v : r.values) {
      ++n;
      hits += (v == 6);
    }
  }
  CHECK(static_cast<double>(hits) / n > 0.999);
}

TEST_CASE("sampling: lambda couples channels one-to-one") {
  MixtureParams p = MixtureParams::zeros(1, 8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      for (int c = 0; c < 3; ++c) {
        p.pi[p.idx(c, 0, y, x)] = 1.f;
        p.sigma[p.idx(c, 0, y, x)] = 0.5f;
      }
      p.mu[p.idx(0, 0, y, x)] = 0.f;
      p.lambda[p.idx(0, 0, y, x)] = 1.f;  // alpha = 1
    }
  Residual r = rc::sample_residual(p, 9);
  // channel-2 mean tracks sampled r1; with mu2 = 0 the sample concentrates
  // near r1
  int close = 0;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      close += std::abs(r.at(1, y, x) - r.at(0, y, x)) <= 3;
  CHECK(close >= 60);
}

TEST_CASE("sampling frequencies match the pmf") {
  std::mt19937_64 rng(5);
  MixtureParams p = random_params(3, 1, 1, rng, 0.5, 2.0, 4.0);
  // isolate channel 0 statistics at the single position
  std::vector<double> pmf(rc::kResBins);
  rc::pixel_pmf(p, 0, 0, 0, 0, 0, pmf.data());
  std::vector<long> counts(rc::kResBins, 0);
  const int n = 100000;
  for (int seed = 0; seed < n; ++seed) {
    Residual r = rc::sample_residual(p, 1000 + seed);
    counts[r.at(0, 0, 0) - rc::kResMin]++;
  }
  for (int s = 0; s < rc::kResBins; ++s) {
    if (pmf[s] < 1e-4) continue;
    const double expect = n * pmf[s];
    const double sd = std::sqrt(n * pmf[s] * (1 - pmf[s]));
    CHECK(std::abs(counts[s] - expect) <= 4 * sd + 1);
  }
}

TEST_CASE("gradient check: mixture nll") {
  std::mt19937_64 rng(55);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  const int K = 3, H = 2, W = 2;
  auto mk = [&](double scale) {
    Tensor<double> t({1, 3 * K, H, W});
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = uni(rng) * scale;
    return t;
  };
  auto logits = mk(1.0);
  auto mu = mk(3.0);
  auto sigma_raw = mk(1.0);
  auto lambda = mk(0.5);
  rc::ResidualBatch res;
  res.batch = 1;
  res.height = H;
  res.width = W;
  res.values.resize(3 * H * W);
  for (auto& v : res.values)
    v = static_cast<std::int16_t>(static_cast<int>(rng() % 9) - 4);

  auto fn = [&]() {
    auto sigma = rc::softplus(sigma_raw);
    // shift to respect the sigma floor
    Tensor<double> floor_t(sigma.shape());
    for (std::size_t i = 0; i < floor_t.size(); ++i)
      floor_t.data()[i] = rc::kSigmaMin;
    auto sig = rc::add(sigma, floor_t);
    return rc::mixture_nll_bits(logits, mu, sig, lambda, res);
  };
  auto result = rctest::grad_check(fn, {logits, mu, sigma_raw, lambda}, 1e-4);
  CHECK(result.ok(1e-4));
}

TEST_CASE("mixture nll matches the reference evaluator") {
  std::mt19937_64 rng(66);
  MixtureParams p = random_params(4, 3, 3, rng);
  Residual r = Residual::zeros(3, 3);
  for (auto& v : r.values) v = static_cast<std::int16_t>(rng() % 13) - 6;

  // pack reference params into network-layout tensors
  const int K = 4, H = 3, W = 3;
  Tensor<double> logits({1, 3 * K, H, W}), mu({1, 3 * K, H, W}),
      sigma({1, 3 * K, H, W}), lambda({1, 3 * K, H, W});
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < K; ++k)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          const std::size_t src = p.idx(c, k, y, x);
          const std::size_t dst =
              ((static_cast<std::size_t>(c) * K + k) * H + y) * W + x;
          logits.data()[dst] = std::log(static_cast<double>(p.pi[src]));
          mu.data()[dst] = p.mu[src];
          sigma.data()[dst] = p.sigma[src];
          lambda.data()[dst] = p.lambda[src];
        }
  rc::ResidualBatch res{1, H, W, r.values};
  auto bits = rc::mixture_nll_bits(logits, mu, sigma, lambda, res);
  CHECK(bits.data()[0] == doctest::Approx(rc::nll_bits(r, p)).epsilon(1e-6));
}
