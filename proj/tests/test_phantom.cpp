#include "dsmt/phantom.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace dsmt;
namespace fs = std::filesystem;

namespace {

std::size_t count_if_voxels(const Tensor& v, double lo, double hi) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < v.numel(); ++i)
    if (v[i] > lo && v[i] <= hi) ++n;
  return n;
}

std::size_t mask_count(const Tensor& v) { return count_if_voxels(v, 0.0, 2.0); }

fs::path temp_file(const std::string& name) {
  return fs::path(testing::TempDir()) / name;
}

}  // namespace

TEST(Phantom, DeterministicGivenAgeSexSeed) {
  PhantomConfig cfg;
  auto a = generate_phantom(42.0, 1, cfg, 7);
  auto b = generate_phantom(42.0, 1, cfg, 7);
  ASSERT_EQ(a.voxels.numel(), b.voxels.numel());
  for (std::size_t i = 0; i < a.voxels.numel(); ++i)
    EXPECT_EQ(a.voxels[i], b.voxels[i]);
  auto c = generate_phantom(42.0, 1, cfg, 8);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.voxels.numel(); ++i)
    if (a.voxels[i] != c.voxels[i]) any_diff = true;
  EXPECT_TRUE(any_diff);
}

TEST(Phantom, AgeOutsideRangeRejected) {
  PhantomConfig cfg;
  EXPECT_THROW(generate_phantom(5.0, 0, cfg, 1), ParameterError);
  EXPECT_THROW(generate_phantom(120.0, 0, cfg, 1), ParameterError);
}

TEST(Phantom, MorphologyParametersMonotoneInAge) {
  PhantomConfig cfg;
  EXPECT_GT(phantom_ventricle_radius(cfg, 80.0),
            phantom_ventricle_radius(cfg, 20.0));
  EXPECT_LT(phantom_shell_thickness(cfg, 80.0),
            phantom_shell_thickness(cfg, 20.0));
  double prev_r = -1.0, prev_t = 1e9;
  for (int k = 0; k < 12; ++k) {
    const double age = 20.0 + k * 5.0;
    const double r = phantom_ventricle_radius(cfg, age);
    const double t = phantom_shell_thickness(cfg, age);
    EXPECT_GT(r, prev_r);
    EXPECT_LT(t, prev_t);
    prev_r = r;
    prev_t = t;
  }
}

// Measured mask geometry across >= 10 ages: ventricle voxels (dark interior)
// strictly grow, shell voxels (bright rim) strictly shrink.
TEST(Phantom, MeasuredMorphologyMonotoneInAge) {
  PhantomConfig cfg;
  cfg.noise_sigma = 0.01;
  std::size_t prev_vent = 0, prev_shell = SIZE_MAX;
  for (int k = 0; k < 11; ++k) {
    const double age = 20.0 + k * 6.0;
    auto s = generate_phantom(age, 0, cfg, 5);
    const std::size_t vent = count_if_voxels(s.voxels, 0.0, 0.32);
    const std::size_t shell = count_if_voxels(s.voxels, 0.80, 2.0);
    EXPECT_GT(vent, prev_vent) << "age " << age;
    EXPECT_LT(shell, prev_shell) << "age " << age;
    prev_vent = vent;
    prev_shell = shell;
  }
}

TEST(Phantom, SexScalesMaskVolume) {
  PhantomConfig cfg;
  auto female = generate_phantom(50.0, 0, cfg, 3);
  auto male = generate_phantom(50.0, 1, cfg, 3);
  const double ratio = static_cast<double>(mask_count(male.voxels)) /
                       static_cast<double>(mask_count(female.voxels));
  const double expected = std::pow(1.0 + cfg.sex_scale_delta, 3.0);
  EXPECT_NEAR(ratio, expected, expected * 0.02);
}

TEST(Phantom, LabelsAndRangeContract) {
  PhantomConfig cfg;
  auto s = generate_phantom(33.0, 1, cfg, 11);
  EXPECT_DOUBLE_EQ(s.age, 33.0);
  EXPECT_EQ(s.sex, 1);
  for (std::size_t i = 0; i < s.voxels.numel(); ++i) {
    EXPECT_GE(s.voxels[i], 0.0);
    EXPECT_LE(s.voxels[i], 1.0);
  }
}

TEST(PhantomFormat, RoundTripBitIdentical) {
  PhantomConfig cfg;
  auto s = generate_phantom(61.0, 0, cfg, 21);
  s.subject_id = "phantom_test";
  const auto path = temp_file("roundtrip.dsmt");
  write_phantom(path.string(), s);
  auto loaded = read_phantom(path.string());
  EXPECT_DOUBLE_EQ(loaded.age, s.age);
  EXPECT_EQ(loaded.sex, s.sex);
  ASSERT_EQ(loaded.voxels.numel(), s.voxels.numel());
  for (std::size_t i = 0; i < s.voxels.numel(); ++i)
    EXPECT_EQ(loaded.voxels[i], s.voxels[i]);
  fs::remove(path);
}

TEST(PhantomFormat, TruncatedFileRejected) {
  PhantomConfig cfg;
  cfg.side = 16;
  auto s = generate_phantom(40.0, 0, cfg, 2);
  const auto path = temp_file("truncated.dsmt");
  write_phantom(path.string(), s);
  const auto full = fs::file_size(path);
  fs::resize_file(path, full / 2);
  EXPECT_THROW(read_phantom(path.string()), FormatError);
  fs::remove(path);
}

TEST(PhantomFormat, BadMagicRejected) {
  const auto path = temp_file("badmagic.dsmt");
  std::ofstream f(path, std::ios::binary);
  f << "NOPEnope this is not a phantom";
  f.close();
  EXPECT_THROW(read_phantom(path.string()), FormatError);
  fs::remove(path);
}
