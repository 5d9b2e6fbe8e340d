#include <array>
#include <cmath>

#include "icogs/harness.hpp"

namespace icogs {

namespace {

constexpr int kRadius = 5;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

using Plane = std::vector<double>;

std::array<double, 2 * kRadius + 1> gaussian_taps() {
  std::array<double, 2 * kRadius + 1> g{};
  double s = 0.0;
  for (int k = -kRadius; k <= kRadius; ++k) s += g[k + kRadius] = std::exp(-0.5 * k * k / (kSigma * kSigma));
  for (auto& v : g) v /= s;
  return g;
}

/// Separable Gaussian filter whose taps are renormalized over in-bounds pixels.
class WindowFilter {
public:
  WindowFilter(int w, int h) : w_(w), h_(h), taps_(gaussian_taps()), nx_(w), ny_(h) {
    for (int x = 0; x < w; ++x) nx_[x] = tap_sum(x, w);
    for (int y = 0; y < h; ++y) ny_[y] = tap_sum(y, h);
  }

  Plane apply(const Plane& in) const {
    Plane tmp(in.size()), out(in.size());
    for (int y = 0; y < h_; ++y)
      for (int x = 0; x < w_; ++x) {
        double s = 0.0;
        for (int k = -kRadius; k <= kRadius; ++k) {
          const int xx = x + k;
          if (xx >= 0 && xx < w_) s += taps_[k + kRadius] * in[idx(xx, y)];
        }
        tmp[idx(x, y)] = s / nx_[x];
      }
    for (int y = 0; y < h_; ++y)
      for (int x = 0; x < w_; ++x) {
        double s = 0.0;
        for (int k = -kRadius; k <= kRadius; ++k) {
          const int yy = y + k;
          if (yy >= 0 && yy < h_) s += taps_[k + kRadius] * tmp[idx(x, yy)];
        }
        out[idx(x, y)] = s / ny_[y];
      }
    return out;
  }

  /// Adjoint of apply().
  Plane adjoint(const Plane& in) const {
    Plane scaled(in.size()), tmp(in.size()), out(in.size());
    for (int y = 0; y < h_; ++y)
      for (int x = 0; x < w_; ++x) scaled[idx(x, y)] = in[idx(x, y)] / ny_[y];
    for (int y = 0; y < h_; ++y)
      for (int x = 0; x < w_; ++x) {
        double s = 0.0;
        for (int k = -kRadius; k <= kRadius; ++k) {
          const int yy = y + k;
          if (yy >= 0 && yy < h_) s += taps_[k + kRadius] * scaled[idx(x, yy)];
        }
        tmp[idx(x, y)] = s;
      }
    for (int y = 0; y < h_; ++y)
      for (int x = 0; x < w_; ++x) scaled[idx(x, y)] = tmp[idx(x, y)] / nx_[x];
    for (int y = 0; y < h_; ++y)
      for (int x = 0; x < w_; ++x) {
        double s = 0.0;
        for (int k = -kRadius; k <= kRadius; ++k) {
          const int xx = x + k;
          if (xx >= 0 && xx < w_) s += taps_[k + kRadius] * scaled[idx(xx, y)];
        }
        out[idx(x, y)] = s;
      }
    return out;
  }

private:
  size_t idx(int x, int y) const { return static_cast<size_t>(y) * w_ + x; }
  double tap_sum(int p, int n) const {
    double s = 0.0;
    for (int k = -kRadius; k <= kRadius; ++k)
      if (p + k >= 0 && p + k < n) s += taps_[k + kRadius];
    return s;
  }

  int w_, h_;
  std::array<double, 2 * kRadius + 1> taps_;
  std::vector<double> nx_, ny_;
};

Plane channel_plane(const Image& img, int c) {
  Plane p(img.pixel_count());
  for (size_t i = 0; i < p.size(); ++i) p[i] = img.data[i * img.channels + c];
  return p;
}

SsimResult ssim_impl(const Image& a, const Image& b, bool want_grad) {
  if (!a.same_shape(b)) throw ContractError("ssim: shape mismatch");
  SsimResult r;
  if (a.empty()) return r;
  const WindowFilter F(a.width, a.height);
  const size_t n = a.pixel_count();
  const double norm = 1.0 / (static_cast<double>(n) * a.channels);
  if (want_grad) r.d_a = Image(a.width, a.height, a.channels);
  double total = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    const Plane pa = channel_plane(a, c), pb = channel_plane(b, c);
    Plane aa(n), bb(n), ab(n);
    for (size_t i = 0; i < n; ++i) {
      aa[i] = pa[i] * pa[i];
      bb[i] = pb[i] * pb[i];
      ab[i] = pa[i] * pb[i];
    }
    const Plane mu_a = F.apply(pa), mu_b = F.apply(pb);
    const Plane e_aa = F.apply(aa), e_bb = F.apply(bb), e_ab = F.apply(ab);
    Plane g_mu(n), g_aa(n), g_ab(n);
    for (size_t i = 0; i < n; ++i) {
      const double ma = mu_a[i], mb = mu_b[i];
      const double var_a = e_aa[i] - ma * ma, var_b = e_bb[i] - mb * mb, cov = e_ab[i] - ma * mb;
      const double A1 = 2 * ma * mb + kC1, A2 = 2 * cov + kC2;
      const double B1 = ma * ma + mb * mb + kC1, B2 = var_a + var_b + kC2;
      const double s = (A1 * A2) / (B1 * B2);
      total += s;
      if (!want_grad) continue;
      const double dA1 = A2 / (B1 * B2), dA2 = A1 / (B1 * B2), dB1 = -s / B1, dB2 = -s / B2;
      g_mu[i] = norm * (dA1 * 2 * mb - dA2 * 2 * mb + dB1 * 2 * ma - dB2 * 2 * ma);
      g_aa[i] = norm * dB2;
      g_ab[i] = norm * 2 * dA2;
    }
    if (!want_grad) continue;
    const Plane t_mu = F.adjoint(g_mu), t_aa = F.adjoint(g_aa), t_ab = F.adjoint(g_ab);
    for (size_t i = 0; i < n; ++i)
      r.d_a.data[i * a.channels + c] = t_mu[i] + 2 * pa[i] * t_aa[i] + pb[i] * t_ab[i];
  }
  r.value = total * norm;
  return r;
}

} // namespace

double psnr(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw ContractError("psnr: shape mismatch");
  if (a.data.empty()) return 99.0;
  double se = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.data.size());
  if (mse < 1e-10) return 99.0;
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Image& a, const Image& b) { return ssim_impl(a, b, false).value; }

SsimResult ssim_with_grad(const Image& a, const Image& b) { return ssim_impl(a, b, true); }

double mean_abs_depth_error(const Image& depth, const Image& gt) {
  if (!depth.same_shape(gt) || depth.channels != 1) throw ContractError("mean_abs_depth_error: shape mismatch");
  double s = 0.0;
  size_t n = 0;
  for (size_t i = 0; i < gt.pixel_count(); ++i) {
    if (!(gt.data[i] > 0.0)) continue;
    s += std::abs(depth.data[i] - gt.data[i]);
    ++n;
  }
  return n ? s / static_cast<double>(n) : 0.0;
}

} // namespace icogs
