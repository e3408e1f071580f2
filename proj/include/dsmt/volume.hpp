#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>

#include "dsmt/tensor.hpp"

namespace dsmt {

// One preprocessed 3D scan plus subject labels. Voxels are rank-3 (D,H,W);
// after preprocessing they are S^3 with values in [0,1]. Sex encoding:
// female=0, male=1.
struct VolumeSample {
  Tensor voxels;
  double age = 0.0;
  int sex = 0;
  std::string subject_id;
  std::string site_id;
};

struct AugmentationConfig {
  double flip_prob_per_axis = 0.5;
  std::array<double, 2> rotation_range_deg = {-20.0, 20.0};
  std::array<double, 2> zoom_range = {0.9, 1.1};
  bool erase_enabled = true;
  std::array<double, 2> erase_side_fraction_range = {0.1, 0.3};
  std::uint64_t rng_seed = 0;
};

struct CropResult {
  Tensor voxels;
  bool all_background = false;   // degenerate input: returned uncropped
  std::array<int, 3> lo{0, 0, 0};  // inclusive box start per axis
  std::array<int, 3> hi{0, 0, 0};  // exclusive box end per axis
};

// Tight bounding box of strictly positive voxels, expanded by `margin` and
// clamped to the volume bounds. An all-background volume comes back
// unchanged with the warning flag set.
CropResult crop_to_content(const Tensor& v, int margin);

// Trilinear resample to side^3 using half-voxel-centre coordinates with
// edge clamping. Output range stays within [min(v), max(v)].
Tensor resample_to_cube(const Tensor& v, int side);

// Per-volume min-max normalization to [0,1]; constant volumes map to zeros.
Tensor normalize_volume(const Tensor& v);

// crop -> resample -> normalize.
Tensor preprocess_volume(const Tensor& raw, int side, int margin = 2);

// Random flips, single-axis rotation, zoom, and cube erasure, in that
// order, with a trailing clamp to [0,1]. Labels are untouched.
Tensor augment_volume(const Tensor& v, const AugmentationConfig& cfg,
                      std::mt19937_64& rng);
VolumeSample augment(const VolumeSample& s, const AugmentationConfig& cfg,
                     std::mt19937_64& rng);

// Trilinear lookup at a fractional (d,h,w) coordinate; out-of-range
// coordinates read as `fill`.
double sample_trilinear(const Tensor& v, double d, double h, double w,
                        double fill);

}  // namespace dsmt
