#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "dsmt/volume.hpp"

namespace dsmt {

// Parametric head phantom: an ellipsoidal "cortex" shell whose thickness
// shrinks with age around tissue with a central "ventricle" ellipsoid that
// grows with age; sex applies a uniform geometric scale. Serves as a
// learnable, fully controlled stand-in dataset.
struct PhantomConfig {
  int side = 32;
  std::array<double, 2> age_range = {20.0, 80.0};
  double ventricle_growth_rate = 0.055;  // voxels/year
  double cortex_thinning_rate = 0.03;    // voxels/year
  double sex_scale_delta = 0.10;         // relative scale offset for sex=1
  double noise_sigma = 0.02;             // intensity units, inside the head
  std::uint64_t rng_seed = 0;
};

// Closed-form morphology parameters; the generator and the tests share them.
double phantom_ventricle_radius(const PhantomConfig& cfg, double age);
double phantom_shell_thickness(const PhantomConfig& cfg, double age);

// Deterministic given (age, sex, seed). Voxels are already rounded through
// f32 so a container round-trip is bit-identical.
VolumeSample generate_phantom(double age, int sex, const PhantomConfig& cfg,
                              std::uint64_t seed);

// Self-describing phantom container: magic "DSMT", version u32, side u32,
// age f64, sex u8, then side^3 little-endian f32 voxels.
void write_phantom(const std::string& path, const VolumeSample& s);
VolumeSample read_phantom(const std::string& path);
bool is_phantom_file(const std::string& path);

}  // namespace dsmt
