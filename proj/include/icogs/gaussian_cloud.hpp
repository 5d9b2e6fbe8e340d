#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "icogs/common.hpp"

namespace icogs {

inline constexpr int kShCoeffs = 4;               // degree 0 + degree 1
inline constexpr int kShPerGaussian = 3 * kShCoeffs;
inline constexpr double kShC0 = 0.28209479177387814;
inline constexpr double kShC1 = 0.4886025119029199;
inline constexpr double kMinScale = 1e-6;
inline constexpr double kMaxScale = 1e3;

/// Structure-of-arrays Gaussian scene. SH coefficients are stored channel-major:
/// sh[i*12 + c*4 + k] is coefficient k of channel c.
struct GaussianCloud {
  std::vector<double> positions;      // 3N
  std::vector<double> rotations;      // 4N, quaternion (w, x, y, z)
  std::vector<double> log_scales;     // 3N
  std::vector<double> opacity_logits; // N
  std::vector<double> sh;             // 12N

  size_t size() const { return opacity_logits.size(); }
  bool empty() const { return size() == 0; }
  void resize(size_t n);
  /// Throws ContractError when array lengths disagree.
  void validate() const;

  Vec3 position(size_t i) const { return {positions[3 * i], positions[3 * i + 1], positions[3 * i + 2]}; }
  void set_position(size_t i, const Vec3& p);
  Vec4 rotation(size_t i) const {
    return {rotations[4 * i], rotations[4 * i + 1], rotations[4 * i + 2], rotations[4 * i + 3]};
  }
  Vec3 log_scale(size_t i) const { return {log_scales[3 * i], log_scales[3 * i + 1], log_scales[3 * i + 2]}; }

  /// Appends one Gaussian with view-independent color `rgb` (degree-1 terms zero).
  void push_back(const Vec3& position, const Vec4& rotation, const Vec3& log_scale, double opacity_logit,
                 const Vec3& rgb);
  void append_from(const GaussianCloud& other, size_t i);

  /// Renormalizes quaternions and clamps scales into (kMinScale, kMaxScale).
  void enforce_invariants();
};

/// Gradient buffers mirroring GaussianCloud's layout.
struct CloudGradients {
  std::vector<double> positions;
  std::vector<double> rotations;
  std::vector<double> log_scales;
  std::vector<double> opacity_logits;
  std::vector<double> sh;

  CloudGradients() = default;
  explicit CloudGradients(size_t n) { resize(n); }
  void resize(size_t n);
  void set_zero();
  size_t size() const { return opacity_logits.size(); }
  CloudGradients& operator+=(const CloudGradients& o);
  void add_scaled(const CloudGradients& o, double s);
  bool all_finite() const;
  double max_abs() const;
};

double sigmoid(double x);
double logit(double p);

/// Degree-0 SH coefficient that evaluates to `rgb_value`.
inline double rgb_to_sh0(double rgb_value) { return (rgb_value - 0.5) / kShC0; }

} // namespace icogs
