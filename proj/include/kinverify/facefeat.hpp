// Copyright (c) 2026 kinverify contributors
// Licensed under the Apache License 2.0.

#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace kinverify::facefeat {

inline constexpr int kImageSize = 64;
inline constexpr int kPatchSize = 16;
inline constexpr int kGridDim = 7;  // 7x7 patch layout
inline constexpr int kPatchCount = kGridDim * kGridDim;
inline constexpr int kPatchStride = (kImageSize - kPatchSize) / (kGridDim - 1);
inline constexpr int kCellGrid = 4;
inline constexpr int kOrientationBins = 8;
inline constexpr int kDescriptorDim = kCellGrid * kCellGrid * kOrientationBins;
inline constexpr int kFaceDim = kPatchCount * kDescriptorDim;

/// A pre-aligned 64x64 8-bit grayscale face crop, row-major.
struct FaceImage {
  std::array<std::uint8_t, kImageSize * kImageSize> pixels{};

  std::uint8_t at(int row, int col) const {
    return pixels[static_cast<std::size_t>(row) * kImageSize + col];
  }
  std::uint8_t& at(int row, int col) {
    return pixels[static_cast<std::size_t>(row) * kImageSize + col];
  }
};

/// 49 patch descriptors, one column per patch, row-major patch order over
/// the 7x7 layout. Every non-zero column has unit L2 norm.
struct PatchGrid {
  Eigen::MatrixXd descriptors;  // kDescriptorDim x kPatchCount
};

/// Concatenation of selected patch descriptors, with the patch indices
/// that produced it.
struct FeatureVector {
  Eigen::VectorXd values;
  std::vector<int> patch_ids;
};

/// Reads a binary ("P5") PGM file; the image must be 64x64 with an 8-bit
/// max value.
FaceImage load_pgm(const std::filesystem::path& path);

/// Writes a FaceImage as binary PGM.
void save_pgm(const std::filesystem::path& path, const FaceImage& image);

/// Gradient-orientation descriptor of one 16x16 patch of raw intensities:
/// 4x4 spatial cells, 8 orientation bins with bilinear orientation
/// weighting, L2 normalized, clipped at 0.2 and renormalized. Returns the
/// zero vector when the total gradient energy is below 1e-12.
Eigen::VectorXd patch_descriptor(
    const Eigen::Matrix<double, kPatchSize, kPatchSize>& patch);

/// Slices the 49 overlapping 16x16 patches (stride 8) and describes each.
PatchGrid extract_patch_grid(const FaceImage& image);

/// Concatenates all 49 descriptors in patch order.
FeatureVector face_feature(const PatchGrid& grid);

/// Concatenates the selected descriptors; indices must be strictly
/// increasing and within [0, 48].
FeatureVector face_feature(const PatchGrid& grid, const std::vector<int>& selection);

}  // namespace kinverify::facefeat
