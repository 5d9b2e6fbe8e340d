#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "icogs/appearance.hpp"
#include "icogs/gaussian_cloud.hpp"
#include "icogs/harness.hpp"
#include "icogs/image.hpp"

namespace icogs {

namespace fs = std::filesystem;

/// "ICOGS01\0", u32 N, u32 4, then N records of 23 little-endian float32.
void write_checkpoint(const fs::path& path, const GaussianCloud& cloud);
GaussianCloud read_checkpoint(const fs::path& path);

/// "ICODPTH\0", u32 W, u32 H, then W*H little-endian float32.
void write_depth(const fs::path& path, const Image& depth);
Image read_depth(const fs::path& path);

/// "ICOFEAT\0", u32 W, u32 H, u32 C, then W*H*C little-endian float32.
void write_features(const fs::path& path, const Image& features);
Image read_features(const fs::path& path);

/// 8-bit PNG of a 1- or 3-channel image; values are clamped to [0, 1].
void write_png(const fs::path& path, const Image& img);
void write_png(const fs::path& path, const Mask& mask);
/// Reads an 8-bit gray, RGB or RGBA PNG as a 3-channel image in [0, 1].
Image read_png_rgb(const fs::path& path);

/// A dataset as stored on disk, plus the optional scene.json metadata.
struct DatasetOnDisk {
  Dataset dataset;
  std::optional<BoundingSphere> bounds;
};

/// Writes cameras.json, split.json, scene.json, images/ and depth/.
void save_dataset(const fs::path& dir, const Dataset& ds, const std::string& preset);
/// Throws ConfigError naming the path when the directory or a required file is missing.
DatasetOnDisk load_dataset(const fs::path& dir);

/// Scene bounds from scene.json, else the bounding sphere of the training
/// views' depth-lifted points. Throws ConfigError when neither is available.
BoundingSphere dataset_bounds(const DatasetOnDisk& d);

} // namespace icogs
