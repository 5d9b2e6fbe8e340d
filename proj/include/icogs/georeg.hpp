#pragma once

#include <span>
#include <vector>

#include "icogs/image.hpp"
#include "icogs/warp.hpp"

namespace icogs {

inline constexpr int kFeatureChannels = 8;
/// Reference pixels whose rendered alpha is below this are excluded from
/// geometric regularization.
inline constexpr double kMinRegAlpha = 0.5;

/// Deterministic 8-channel descriptor, L2-normalized per pixel. Every channel
/// is invariant to a global additive brightness offset.
///   0  grayscale normalized by its 3x3 mean and std
///   1  Sobel d/dx of grayscale
///   2  Sobel d/dy of grayscale
///   3  Laplacian of grayscale
///   4  R-G opponent, minus its 3x3 mean
///   5  B-(R+G)/2 opponent, minus its 3x3 mean
///   6  3x3 std of grayscale
///   7  constant 0.1
/// All 3x3 windows use replicate padding.
Image extract_features(const Image& rgb);

/// 0.5 * (1 - cos(a, b)) clamped to [0, 1]; 1 when either vector is zero.
double cosine_distance(std::span<const double> a, std::span<const double> b);

/// ceil((n_views - 1) / 2); throws ContractError for n_views < 2.
int default_k(int n_views);

/// Per-pixel top-k choice over the source views. Slots beyond `count` hold -1.
struct TopKSelection {
  int width = 0;
  int height = 0;
  int k = 0;
  std::vector<int> indices;   // pixel * k + slot, ascending error
  std::vector<double> errors; // matching errors
  std::vector<int> count;     // number of selected views per pixel (min(k, valid))

  int index(size_t pixel, int slot) const { return indices[pixel * k + slot]; }
  double error(size_t pixel, int slot) const { return errors[pixel * k + slot]; }
};

/// Keeps, per pixel, the k valid views with the smallest error (ties by lower
/// view index). `errors` and `masks` hold one entry per source view.
TopKSelection topk_select(std::span<const Image> errors, std::span<const Mask> masks, int k);

/// Per-pixel cosine distance between reference features and one warped source.
Image feature_error_map(const Image& ref_features, const WarpedMap& warped);

/// Per-pixel channel-mean |I_ref - I_warped| (the RGB photometric residual).
Image rgb_error_map(const Image& ref_image, const WarpedMap& warped);

/// Mean over `include`d pixels with at least one selected view of the mean
/// selected error. Returns 0 when no pixel qualifies.
double topk_aggregate(const TopKSelection& sel, const Mask& include);

struct MpcResult {
  double value = 0.0;
  size_t pixels = 0;      // pixels contributing to the mean
  Image d_depth;          // dL/dD_ref
  TopKSelection selection;
};

/// Top-k feature-cosine multi-view consistency. `warped[j]` must be the
/// inverse warp of source j's features with the reference depth; gradients
/// flow only through those warps (selection and masks are constants).
/// Pixels outside `include` are ignored.
MpcResult mpc_feature_loss(const Image& ref_features, std::span<const WarpedMap> warped, int k,
                           const Mask& include);

/// All-view RGB consistency: mean over sources of masked_l1(I_{j->0}, I_0, M_j ∧ include).
double mpc_rgb_loss(const Image& ref_image, std::span<const WarpedMap> warped, const Mask& include);

struct SmoothnessResult {
  double value = 0.0;
  size_t pixels = 0;
  Image d_depth;
};

/// Mean over interior pixels of ||grad D||_1 * exp(-alpha ||grad I||_1) with
/// forward differences; ||grad I||_1 is averaged over image channels. A pixel
/// counts only if it and its right/lower neighbours are in `include` (an empty
/// mask includes everything).
SmoothnessResult edge_aware_smoothness(const Image& depth, const Image& image, double alpha_edge = 1.0,
                                       const Mask& include = {});

/// Mask of pixels whose alpha is at least kMinRegAlpha.
Mask alpha_mask(const Image& alpha, double threshold = kMinRegAlpha);

} // namespace icogs
