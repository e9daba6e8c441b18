#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "splatam/image.hpp"

namespace splatam {

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

namespace detail {

inline const std::vector<double>& ssim_kernel() {
  static const std::vector<double> k = [] {
    std::vector<double> w(kSsimWindow);
    const int r = kSsimWindow / 2;
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
      const double d = i - r;
      w[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
      sum += w[i];
    }
    for (double& v : w) v /= sum;
    return w;
  }();
  return k;
}

/// Separable windowed correlation with zero padding. The symmetric kernel
/// makes correlation and convolution identical, which the backward pass
/// relies on.
inline void ssim_blur(const std::vector<double>& src, int W, int H, std::vector<double>& tmp,
                      std::vector<double>& dst) {
  const auto& k = ssim_kernel();
  const int r = kSsimWindow / 2;
  tmp.assign(src.size(), 0.0);
  dst.assign(src.size(), 0.0);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) {
        const int xx = x + i;
        if (xx < 0 || xx >= W) continue;
        acc += k[i + r] * src[y * W + xx];
      }
      tmp[y * W + x] = acc;
    }
  }
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) {
        const int yy = y + i;
        if (yy < 0 || yy >= H) continue;
        acc += k[i + r] * tmp[yy * W + x];
      }
      dst[y * W + x] = acc;
    }
  }
}

}  // namespace detail

/// Mean structural similarity between two images of equal shape, channels
/// averaged. Statistics are only evaluated where the 11x11 window fits
/// entirely inside the image; images smaller than the window compare as 1.
/// With d_a non-null, also accumulates nothing: d_a is overwritten with
/// d(ssim)/d(a) per pixel and channel.
inline double ssim(const ImageD& a, const ImageD& b, ImageD* d_a = nullptr) {
  if (!a.same_shape(b)) throw std::invalid_argument("ssim: image shapes differ");
  const int W = a.width();
  const int H = a.height();
  const int C = a.channels();
  if (d_a) *d_a = ImageD(W, H, C, 0.0);
  const int r = kSsimWindow / 2;
  if (W < kSsimWindow || H < kSsimWindow) return 1.0;
  const int n_valid = (W - 2 * r) * (H - 2 * r);

  std::vector<double> pa(W * H), pb(W * H), paa(W * H), pbb(W * H), pab(W * H);
  std::vector<double> mu_a, mu_b, e_aa, e_bb, e_ab, tmp;
  std::vector<double> f1, f2, f3, c1, c2, c3;
  double total = 0.0;

  for (int ch = 0; ch < C; ++ch) {
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const double va = a.at(x, y, ch);
        const double vb = b.at(x, y, ch);
        pa[y * W + x] = va;
        pb[y * W + x] = vb;
        paa[y * W + x] = va * va;
        pbb[y * W + x] = vb * vb;
        pab[y * W + x] = va * vb;
      }
    detail::ssim_blur(pa, W, H, tmp, mu_a);
    detail::ssim_blur(pb, W, H, tmp, mu_b);
    detail::ssim_blur(paa, W, H, tmp, e_aa);
    detail::ssim_blur(pbb, W, H, tmp, e_bb);
    detail::ssim_blur(pab, W, H, tmp, e_ab);

    if (d_a) {
      f1.assign(W * H, 0.0);
      f2.assign(W * H, 0.0);
      f3.assign(W * H, 0.0);
    }
    for (int y = r; y < H - r; ++y) {
      for (int x = r; x < W - r; ++x) {
        const int p = y * W + x;
        const double ma = mu_a[p];
        const double mb = mu_b[p];
        const double va = e_aa[p] - ma * ma;
        const double vb = e_bb[p] - mb * mb;
        const double cov = e_ab[p] - ma * mb;
        const double A1 = 2.0 * ma * mb + kSsimC1;
        const double A2 = 2.0 * cov + kSsimC2;
        const double B1 = ma * ma + mb * mb + kSsimC1;
        const double B2 = va + vb + kSsimC2;
        const double s = (A1 * A2) / (B1 * B2);
        total += s;
        if (d_a) {
          const double u = 1.0 / (static_cast<double>(n_valid) * C);
          // partials of s in the (mean, variance, covariance) coordinates
          const double ds_dmu = 2.0 * mb * A2 / (B1 * B2) - 2.0 * ma * s / B1;
          const double ds_dva = -s / B2;
          const double ds_dcov = 2.0 * A1 / (B1 * B2);
          f1[p] = u * ds_dmu;
          f2[p] = u * ds_dva;
          f3[p] = u * ds_dcov;
        }
      }
    }

    if (d_a) {
      // dL/da = w*F1 + 2a (w*F2) - 2 w*(F2 mu_a) + b (w*F3) - w*(F3 mu_b)
      // with w* the same windowed correlation, fields zero off the valid set.
      std::vector<double> f2mu(W * H), f3mu(W * H);
      for (int p = 0; p < W * H; ++p) {
        f2mu[p] = f2[p] * mu_a[p];
        f3mu[p] = f3[p] * mu_b[p];
      }
      detail::ssim_blur(f1, W, H, tmp, c1);
      detail::ssim_blur(f2, W, H, tmp, c2);
      detail::ssim_blur(f3, W, H, tmp, c3);
      std::vector<double> c2mu, c3mu;
      detail::ssim_blur(f2mu, W, H, tmp, c2mu);
      detail::ssim_blur(f3mu, W, H, tmp, c3mu);
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          const int p = y * W + x;
          d_a->at(x, y, ch) =
              c1[p] + 2.0 * pa[p] * c2[p] - 2.0 * c2mu[p] + pb[p] * c3[p] - c3mu[p];
        }
    }
  }
  return total / (static_cast<double>(n_valid) * C);
}

}  // namespace splatam
