// Copyright (c) 2026 kinverify contributors
// Licensed under the Apache License 2.0.

#include "kinverify/facefeat.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>

namespace kinverify::facefeat {

namespace {

int next_pgm_token(std::istream& in, std::string& token) {
  token.clear();
  int c = in.get();
  // skip whitespace and '#' comment lines
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  while (c != EOF && !std::isspace(c)) {
    token.push_back(static_cast<char>(c));
    c = in.get();
  }
  return c;
}

int parse_pgm_int(std::istream& in, const std::filesystem::path& path) {
  std::string token;
  next_pgm_token(in, token);
  try {
    return std::stoi(token);
  } catch (const std::exception&) {
    throw std::runtime_error("malformed PGM header in " + path.string());
  }
}

}  // namespace

FaceImage load_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open image " + path.string());
  }
  std::string magic;
  next_pgm_token(in, magic);
  if (magic != "P5") {
    throw std::runtime_error("not a binary PGM (P5) file: " + path.string());
  }
  const int width = parse_pgm_int(in, path);
  const int height = parse_pgm_int(in, path);
  const int maxval = parse_pgm_int(in, path);
  if (width != kImageSize || height != kImageSize) {
    throw std::runtime_error("image " + path.string() + " is " +
                             std::to_string(width) + "x" + std::to_string(height) +
                             ", expected 64x64");
  }
  if (maxval < 1 || maxval > 255) {
    throw std::runtime_error("image " + path.string() +
                             " is not 8-bit (maxval " + std::to_string(maxval) + ")");
  }
  FaceImage image;
  in.read(reinterpret_cast<char*>(image.pixels.data()),
          static_cast<std::streamsize>(image.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(image.pixels.size())) {
    throw std::runtime_error("truncated PGM payload in " + path.string());
  }
  return image;
}

void save_pgm(const std::filesystem::path& path, const FaceImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write image " + path.string());
  }
  out << "P5\n" << kImageSize << " " << kImageSize << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
}

Eigen::VectorXd patch_descriptor(
    const Eigen::Matrix<double, kPatchSize, kPatchSize>& patch) {
  Eigen::VectorXd desc = Eigen::VectorXd::Zero(kDescriptorDim);
  constexpr double kScale = 1.0 / (2.0 * 255.0);
  constexpr double kBinWidth = 2.0 * std::numbers::pi / kOrientationBins;

  double energy = 0.0;
  for (int y = 0; y < kPatchSize; ++y) {
    for (int x = 0; x < kPatchSize; ++x) {
      // central differences with replicated borders; intensities are
      // differenced before scaling so a constant offset cancels exactly
      const double gx =
          (patch(y, std::min(x + 1, kPatchSize - 1)) -
           patch(y, std::max(x - 1, 0))) * kScale;
      const double gy =
          (patch(std::min(y + 1, kPatchSize - 1), x) -
           patch(std::max(y - 1, 0), x)) * kScale;
      const double mag2 = gx * gx + gy * gy;
      if (mag2 == 0.0) {
        continue;
      }
      energy += mag2;
      const double mag = std::sqrt(mag2);
      double angle = std::atan2(gy, gx);
      if (angle < 0.0) {
        angle += 2.0 * std::numbers::pi;
      }
      double pos = angle / kBinWidth;
      if (pos >= kOrientationBins) {
        pos -= kOrientationBins;
      }
      const int bin = static_cast<int>(pos);
      const double frac = pos - bin;
      const int cell = (y / kCellGrid) * kCellGrid + (x / kCellGrid);
      desc(cell * kOrientationBins + bin) += (1.0 - frac) * mag;
      desc(cell * kOrientationBins + (bin + 1) % kOrientationBins) += frac * mag;
    }
  }

  if (energy < 1e-12) {
    return Eigen::VectorXd::Zero(kDescriptorDim);
  }
  desc /= desc.norm();
  bool clipped = false;
  for (Eigen::Index i = 0; i < desc.size(); ++i) {
    if (desc(i) > 0.2) {
      desc(i) = 0.2;
      clipped = true;
    }
  }
  if (clipped) {
    desc /= desc.norm();
  }
  return desc;
}

PatchGrid extract_patch_grid(const FaceImage& image) {
  PatchGrid grid;
  grid.descriptors.resize(kDescriptorDim, kPatchCount);
  Eigen::Matrix<double, kPatchSize, kPatchSize> patch;
  for (int pr = 0; pr < kGridDim; ++pr) {
    for (int pc = 0; pc < kGridDim; ++pc) {
      const int y0 = pr * kPatchStride;
      const int x0 = pc * kPatchStride;
      for (int y = 0; y < kPatchSize; ++y) {
        for (int x = 0; x < kPatchSize; ++x) {
          patch(y, x) = static_cast<double>(image.at(y0 + y, x0 + x));
        }
      }
      grid.descriptors.col(pr * kGridDim + pc) = patch_descriptor(patch);
    }
  }
  return grid;
}

FeatureVector face_feature(const PatchGrid& grid) {
  std::vector<int> all(kPatchCount);
  for (int k = 0; k < kPatchCount; ++k) {
    all[k] = k;
  }
  return face_feature(grid, all);
}

FeatureVector face_feature(const PatchGrid& grid, const std::vector<int>& selection) {
  if (selection.empty()) {
    throw std::invalid_argument("face_feature: empty patch selection");
  }
  int prev = -1;
  for (int id : selection) {
    if (id < 0 || id >= kPatchCount) {
      throw std::invalid_argument("face_feature: patch index " +
                                  std::to_string(id) + " out of range");
    }
    if (id <= prev) {
      throw std::invalid_argument(
          "face_feature: patch indices must be strictly increasing");
    }
    prev = id;
  }
  FeatureVector fv;
  fv.patch_ids = selection;
  fv.values.resize(static_cast<Eigen::Index>(selection.size()) * kDescriptorDim);
  for (std::size_t i = 0; i < selection.size(); ++i) {
    fv.values.segment(static_cast<Eigen::Index>(i) * kDescriptorDim,
                      kDescriptorDim) = grid.descriptors.col(selection[i]);
  }
  return fv;
}

}  // namespace kinverify::facefeat
