#include "icogs/georeg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace icogs {

namespace {

constexpr double kNormEps = 0.02;
constexpr double kBias = 0.1;

inline int clampi(int v, int lo, int hi) { return std::max(lo, std::min(v, hi)); }

/// 3x3 replicate-padded window sampler over a one-channel image.
struct Window {
  const Image& img;
  double at(int x, int y) const { return img.at(clampi(x, 0, img.width - 1), clampi(y, 0, img.height - 1)); }
  double mean(int x, int y) const {
    double s = 0.0;
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) s += at(x + dx, y + dy);
    return s / 9.0;
  }
  double stddev(int x, int y, double mu) const {
    double s = 0.0;
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const double d = at(x + dx, y + dy) - mu;
        s += d * d;
      }
    return std::sqrt(s / 9.0);
  }
};

void require_same_size(const Image& a, const Image& b, const char* what) {
  if (a.width != b.width || a.height != b.height) throw ContractError(std::string(what) + ": size mismatch");
}

} // namespace

Image extract_features(const Image& rgb) {
  if (rgb.channels != 3) throw ContractError("extract_features: expected a 3-channel image");
  const int W = rgb.width, H = rgb.height;
  Image gray(W, H, 1), rg(W, H, 1), by(W, H, 1);
  for (size_t i = 0; i < rgb.pixel_count(); ++i) {
    const double r = rgb.data[3 * i], g = rgb.data[3 * i + 1], b = rgb.data[3 * i + 2];
    gray.data[i] = (r + g + b) / 3.0;
    rg.data[i] = r - g;
    by.data[i] = b - 0.5 * (r + g);
  }
  const Window wg{gray}, wrg{rg}, wby{by};
  Image f(W, H, kFeatureChannels);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const double mu = wg.mean(x, y);
      const double sd = wg.stddev(x, y, mu);
      double v[kFeatureChannels];
      v[0] = (gray.at(x, y) - mu) / (sd + kNormEps);
      v[1] = (wg.at(x + 1, y - 1) + 2 * wg.at(x + 1, y) + wg.at(x + 1, y + 1)) -
             (wg.at(x - 1, y - 1) + 2 * wg.at(x - 1, y) + wg.at(x - 1, y + 1));
      v[2] = (wg.at(x - 1, y + 1) + 2 * wg.at(x, y + 1) + wg.at(x + 1, y + 1)) -
             (wg.at(x - 1, y - 1) + 2 * wg.at(x, y - 1) + wg.at(x + 1, y - 1));
      v[3] = wg.at(x + 1, y) + wg.at(x - 1, y) + wg.at(x, y + 1) + wg.at(x, y - 1) - 4 * wg.at(x, y);
      v[4] = rg.at(x, y) - wrg.mean(x, y);
      v[5] = by.at(x, y) - wby.mean(x, y);
      v[6] = sd;
      v[7] = kBias;
      double n2 = 0.0;
      for (double c : v) n2 += c * c;
      const double inv = n2 > 0.0 ? 1.0 / std::sqrt(n2) : 0.0;
      for (int c = 0; c < kFeatureChannels; ++c) f.at(x, y, c) = v[c] * inv;
    }
  }
  return f;
}

double cosine_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ContractError("cosine_distance: length mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 1.0;
  return std::clamp(0.5 * (1.0 - ab / std::sqrt(aa * bb)), 0.0, 1.0);
}

int default_k(int n_views) {
  if (n_views < 2) throw ContractError("default_k: need at least two views");
  return n_views / 2; // == ceil((n - 1) / 2)
}

TopKSelection topk_select(std::span<const Image> errors, std::span<const Mask> masks, int k) {
  const int sources = static_cast<int>(errors.size());
  if (sources < 1) throw ContractError("topk_select: need at least two views (one source)");
  if (static_cast<int>(masks.size()) != sources) throw ContractError("topk_select: one mask per source view");
  if (k < 1 || k > sources) throw ContractError("topk_select: k must lie in [1, n-1]");
  TopKSelection sel;
  sel.width = errors[0].width;
  sel.height = errors[0].height;
  sel.k = k;
  const size_t n = errors[0].pixel_count();
  for (int j = 0; j < sources; ++j) {
    if (errors[j].channels != 1 || !errors[j].same_size(sel.width, sel.height) ||
        masks[j].width != sel.width || masks[j].height != sel.height)
      throw ContractError("topk_select: error maps and masks must share one size");
  }
  sel.indices.assign(n * k, -1);
  sel.errors.assign(n * k, 0.0);
  sel.count.assign(n, 0);
  std::vector<int> cand;
  cand.reserve(sources);
  for (size_t p = 0; p < n; ++p) {
    cand.clear();
    for (int j = 0; j < sources; ++j)
      if (masks[j].data[p]) cand.push_back(j);
    const int take = std::min<int>(k, static_cast<int>(cand.size()));
    std::partial_sort(cand.begin(), cand.begin() + take, cand.end(), [&](int a, int b) {
      const double ea = errors[a].data[p], eb = errors[b].data[p];
      return ea < eb || (ea == eb && a < b);
    });
    sel.count[p] = take;
    for (int s = 0; s < take; ++s) {
      sel.indices[p * k + s] = cand[s];
      sel.errors[p * k + s] = errors[cand[s]].data[p];
    }
  }
  return sel;
}

Image feature_error_map(const Image& ref, const WarpedMap& warped) {
  if (!ref.same_shape(warped.values)) throw ContractError("feature_error_map: shape mismatch");
  Image e(ref.width, ref.height, 1);
  for (int y = 0; y < ref.height; ++y)
    for (int x = 0; x < ref.width; ++x)
      if (warped.mask.at(x, y)) e.at(x, y) = cosine_distance(ref.pixel(x, y), warped.values.pixel(x, y));
  return e;
}

Image rgb_error_map(const Image& ref, const WarpedMap& warped) {
  if (!ref.same_shape(warped.values)) throw ContractError("rgb_error_map: shape mismatch");
  Image e(ref.width, ref.height, 1);
  for (size_t i = 0; i < ref.pixel_count(); ++i) {
    if (!warped.mask.data[i]) continue;
    double s = 0.0;
    for (int c = 0; c < ref.channels; ++c)
      s += std::abs(ref.data[i * ref.channels + c] - warped.values.data[i * ref.channels + c]);
    e.data[i] = s / ref.channels;
  }
  return e;
}

double topk_aggregate(const TopKSelection& sel, const Mask& include) {
  double sum = 0.0;
  size_t pixels = 0;
  for (size_t p = 0; p < sel.count.size(); ++p) {
    if (sel.count[p] == 0 || (!include.data.empty() && !include.data[p])) continue;
    double s = 0.0;
    for (int i = 0; i < sel.count[p]; ++i) s += sel.error(p, i);
    sum += s / sel.count[p];
    ++pixels;
  }
  return pixels ? sum / static_cast<double>(pixels) : 0.0;
}

MpcResult mpc_feature_loss(const Image& ref, std::span<const WarpedMap> warped, int k, const Mask& include) {
  const int sources = static_cast<int>(warped.size());
  if (sources < 1) throw ContractError("mpc_feature_loss: need at least one source view");
  std::vector<Image> errors;
  std::vector<Mask> masks;
  errors.reserve(sources);
  masks.reserve(sources);
  for (const auto& w : warped) {
    errors.push_back(feature_error_map(ref, w));
    Mask m = w.mask;
    if (!include.data.empty()) {
      require_same_size(ref, w.values, "mpc_feature_loss");
      for (size_t i = 0; i < m.data.size(); ++i) m.data[i] &= include.data[i];
    }
    masks.push_back(std::move(m));
  }
  MpcResult r;
  r.selection = topk_select(errors, masks, k);
  r.d_depth = Image(ref.width, ref.height, 1);
  const int C = ref.channels;
  double sum = 0.0;
  for (size_t p = 0; p < ref.pixel_count(); ++p) {
    const int cnt = r.selection.count[p];
    if (cnt == 0) continue;
    double s = 0.0;
    for (int i = 0; i < cnt; ++i) s += r.selection.error(p, i);
    sum += s / cnt;
    ++r.pixels;
  }
  if (r.pixels == 0) return r;
  r.value = sum / static_cast<double>(r.pixels);

  const double norm = 1.0 / static_cast<double>(r.pixels);
  for (size_t p = 0; p < ref.pixel_count(); ++p) {
    const int cnt = r.selection.count[p];
    if (cnt == 0) continue;
    const double* f0 = &ref.data[p * C];
    double g = 0.0;
    for (int i = 0; i < cnt; ++i) {
      const WarpedMap& w = warped[r.selection.index(p, i)];
      const double* fw = &w.values.data[p * C];
      const double* dfw = &w.dvalues_ddepth.data[p * C];
      double ab = 0.0, aa = 0.0, bb = 0.0;
      for (int c = 0; c < C; ++c) {
        ab += f0[c] * fw[c];
        aa += f0[c] * f0[c];
        bb += fw[c] * fw[c];
      }
      if (aa == 0.0 || bb == 0.0) continue;
      const double na = std::sqrt(aa), nb = std::sqrt(bb);
      const double cosv = ab / (na * nb);
      const double e = 0.5 * (1.0 - cosv);
      if (e <= 0.0 || e >= 1.0) continue; // clamped
      // d e / d fw = -0.5 * (f0 / (|f0||fw|) - cos * fw / |fw|^2)
      double de = 0.0;
      for (int c = 0; c < C; ++c) de += -0.5 * (f0[c] / (na * nb) - cosv * fw[c] / bb) * dfw[c];
      g += de;
    }
    r.d_depth.data[p] = norm * g / cnt;
  }
  return r;
}

double mpc_rgb_loss(const Image& ref, std::span<const WarpedMap> warped, const Mask& include) {
  if (warped.empty()) throw ContractError("mpc_rgb_loss: need at least one source view");
  double sum = 0.0;
  for (const auto& w : warped) {
    Mask m = w.mask;
    if (!include.data.empty())
      for (size_t i = 0; i < m.data.size(); ++i) m.data[i] &= include.data[i];
    sum += masked_l1(w.values, ref, m).value;
  }
  return sum / static_cast<double>(warped.size());
}

SmoothnessResult edge_aware_smoothness(const Image& depth, const Image& image, double alpha_edge,
                                       const Mask& include) {
  if (depth.channels != 1) throw ContractError("edge_aware_smoothness: depth must have one channel");
  require_same_size(depth, image, "edge_aware_smoothness");
  const int W = depth.width, H = depth.height;
  const bool masked = !include.data.empty();
  if (masked && (include.width != W || include.height != H))
    throw ContractError("edge_aware_smoothness: mask size mismatch");
  SmoothnessResult r;
  r.d_depth = Image(W, H, 1);
  if (W < 2 || H < 2) return r;
  auto sgn = [](double v) { return static_cast<double>((v > 0.0) - (v < 0.0)); };
  struct Term {
    int x, y;
    double weight, sx, sy;
  };
  std::vector<Term> terms;
  double sum = 0.0;
  const int C = image.channels;
  for (int y = 0; y + 1 < H; ++y) {
    for (int x = 0; x + 1 < W; ++x) {
      if (masked && !(include.at(x, y) && include.at(x + 1, y) && include.at(x, y + 1))) continue;
      double gi = 0.0;
      for (int c = 0; c < C; ++c)
        gi += std::abs(image.at(x + 1, y, c) - image.at(x, y, c)) + std::abs(image.at(x, y + 1, c) - image.at(x, y, c));
      gi /= C;
      const double weight = std::exp(-alpha_edge * gi);
      const double ddx = depth.at(x + 1, y) - depth.at(x, y);
      const double ddy = depth.at(x, y + 1) - depth.at(x, y);
      sum += (std::abs(ddx) + std::abs(ddy)) * weight;
      terms.push_back({x, y, weight, sgn(ddx), sgn(ddy)});
    }
  }
  r.pixels = terms.size();
  if (terms.empty()) return r;
  r.value = sum / static_cast<double>(terms.size());
  const double norm = 1.0 / static_cast<double>(terms.size());
  for (const Term& t : terms) {
    const double w = norm * t.weight;
    r.d_depth.at(t.x + 1, t.y) += w * t.sx;
    r.d_depth.at(t.x, t.y + 1) += w * t.sy;
    r.d_depth.at(t.x, t.y) -= w * (t.sx + t.sy);
  }
  return r;
}

Mask alpha_mask(const Image& alpha, double threshold) {
  Mask m(alpha.width, alpha.height);
  for (size_t i = 0; i < alpha.pixel_count(); ++i) m.data[i] = alpha.data[i] >= threshold;
  return m;
}

} // namespace icogs
