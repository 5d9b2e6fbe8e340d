#include "icogs/gaussian_cloud.hpp"

#include <algorithm>
#include <cmath>

namespace icogs {

void GaussianCloud::resize(size_t n) {
  positions.resize(3 * n, 0.0);
  rotations.resize(4 * n, 0.0);
  log_scales.resize(3 * n, 0.0);
  opacity_logits.resize(n, 0.0);
  sh.resize(kShPerGaussian * n, 0.0);
}

void GaussianCloud::validate() const {
  const size_t n = size();
  if (positions.size() != 3 * n || rotations.size() != 4 * n || log_scales.size() != 3 * n ||
      sh.size() != kShPerGaussian * n)
    throw ContractError("GaussianCloud: parameter arrays have inconsistent lengths");
}

void GaussianCloud::set_position(size_t i, const Vec3& p) {
  positions[3 * i] = p.x();
  positions[3 * i + 1] = p.y();
  positions[3 * i + 2] = p.z();
}

void GaussianCloud::push_back(const Vec3& position, const Vec4& rotation, const Vec3& log_scale,
                              double opacity_logit, const Vec3& rgb) {
  for (int k = 0; k < 3; ++k) positions.push_back(position[k]);
  for (int k = 0; k < 4; ++k) rotations.push_back(rotation[k]);
  for (int k = 0; k < 3; ++k) log_scales.push_back(log_scale[k]);
  opacity_logits.push_back(opacity_logit);
  for (int c = 0; c < 3; ++c) {
    sh.push_back(rgb_to_sh0(rgb[c]));
    for (int k = 1; k < kShCoeffs; ++k) sh.push_back(0.0);
  }
}

void GaussianCloud::append_from(const GaussianCloud& other, size_t i) {
  positions.insert(positions.end(), other.positions.begin() + 3 * i, other.positions.begin() + 3 * i + 3);
  rotations.insert(rotations.end(), other.rotations.begin() + 4 * i, other.rotations.begin() + 4 * i + 4);
  log_scales.insert(log_scales.end(), other.log_scales.begin() + 3 * i, other.log_scales.begin() + 3 * i + 3);
  opacity_logits.push_back(other.opacity_logits[i]);
  sh.insert(sh.end(), other.sh.begin() + kShPerGaussian * i, other.sh.begin() + kShPerGaussian * (i + 1));
}

void GaussianCloud::enforce_invariants() {
  const double lo = std::log(kMinScale) + 1e-9;
  const double hi = std::log(kMaxScale) - 1e-9;
  for (size_t i = 0; i < size(); ++i) {
    double* q = &rotations[4 * i];
    const double n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    if (n > 0.0) {
      for (int k = 0; k < 4; ++k) q[k] /= n;
    } else {
      q[0] = 1.0;
      q[1] = q[2] = q[3] = 0.0;
    }
  }
  for (auto& s : log_scales) s = std::clamp(s, lo, hi);
}

void CloudGradients::resize(size_t n) {
  positions.assign(3 * n, 0.0);
  rotations.assign(4 * n, 0.0);
  log_scales.assign(3 * n, 0.0);
  opacity_logits.assign(n, 0.0);
  sh.assign(kShPerGaussian * n, 0.0);
}

void CloudGradients::set_zero() { resize(size()); }

namespace {
template <typename F>
void for_each_array(CloudGradients& a, const CloudGradients& b, F&& f) {
  f(a.positions, b.positions);
  f(a.rotations, b.rotations);
  f(a.log_scales, b.log_scales);
  f(a.opacity_logits, b.opacity_logits);
  f(a.sh, b.sh);
}
} // namespace

CloudGradients& CloudGradients::operator+=(const CloudGradients& o) {
  add_scaled(o, 1.0);
  return *this;
}

void CloudGradients::add_scaled(const CloudGradients& o, double s) {
  if (o.size() != size()) throw ContractError("CloudGradients: size mismatch");
  for_each_array(*this, o, [s](std::vector<double>& x, const std::vector<double>& y) {
    for (size_t i = 0; i < x.size(); ++i) x[i] += s * y[i];
  });
}

bool CloudGradients::all_finite() const {
  auto ok = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  return ok(positions) && ok(rotations) && ok(log_scales) && ok(opacity_logits) && ok(sh);
}

double CloudGradients::max_abs() const {
  double m = 0.0;
  for (const auto* v : {&positions, &rotations, &log_scales, &opacity_logits, &sh})
    for (double x : *v) m = std::max(m, std::abs(x));
  return m;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double logit(double p) { return std::log(p / (1.0 - p)); }

} // namespace icogs
