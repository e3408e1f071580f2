#include "dsmt/phantom.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <vector>

#include "dsmt/rng.hpp"

namespace dsmt {

namespace {

constexpr char kMagic[4] = {'D', 'S', 'M', 'T'};
constexpr std::uint32_t kVersion = 1;

// Intensity palette; background stays exactly zero so content cropping and
// mask-volume measurements are well defined.
constexpr double kTissue = 0.55;
constexpr double kShell = 0.95;
constexpr double kVentricle = 0.15;
constexpr double kMaskFloor = 0.01;

// Outer semi-axis fractions of the cube side (before sex scaling).
constexpr double kAxisFracD = 0.40;
constexpr double kAxisFracH = 0.33;
constexpr double kAxisFracW = 0.36;

// Ventricle shape: mildly anisotropic ellipsoid.
constexpr double kVentAnisoH = 0.80;
constexpr double kVentAnisoW = 0.90;

}  // namespace

double phantom_ventricle_radius(const PhantomConfig& cfg, double age) {
  return 0.05 * cfg.side + cfg.ventricle_growth_rate * age;
}

double phantom_shell_thickness(const PhantomConfig& cfg, double age) {
  const double t = 0.11 * cfg.side - cfg.cortex_thinning_rate * age;
  return std::max(t, 0.5);
}

VolumeSample generate_phantom(double age, int sex, const PhantomConfig& cfg,
                              std::uint64_t seed) {
  if (cfg.side < 4) throw ParameterError("phantom side too small");
  if (sex != 0 && sex != 1) throw ParameterError("phantom sex must be 0 or 1");
  if (age < cfg.age_range[0] || age > cfg.age_range[1])
    throw ParameterError("phantom age outside configured range");

  const int n = cfg.side;
  const double c = (n - 1) / 2.0;
  const double scale = 1.0 + (sex == 1 ? cfg.sex_scale_delta : 0.0);
  const double ad = kAxisFracD * n * scale;
  const double ah = kAxisFracH * n * scale;
  const double aw = kAxisFracW * n * scale;
  const double thick = phantom_shell_thickness(cfg, age) * scale;
  const double vr = phantom_ventricle_radius(cfg, age) * scale;
  const double vd = vr, vh = vr * kVentAnisoH, vw = vr * kVentAnisoW;

  auto rng = make_rng(seed, 0x70686eULL);
  std::normal_distribution<double> noise(0.0, cfg.noise_sigma);

  VolumeSample s;
  s.age = age;
  s.sex = sex;
  s.voxels = Tensor({n, n, n});
  for (int d = 0; d < n; ++d)
    for (int h = 0; h < n; ++h)
      for (int w = 0; w < n; ++w) {
        const double zd = (d - c) / ad;
        const double zh = (h - c) / ah;
        const double zw = (w - c) / aw;
        const double outer = zd * zd + zh * zh + zw * zw;
        double value = 0.0;
        if (outer <= 1.0) {
          // Inner boundary of the cortical shell: outer ellipsoid with each
          // semi-axis reduced by the shell thickness.
          const double id = (d - c) / std::max(ad - thick, 1.0);
          const double ih = (h - c) / std::max(ah - thick, 1.0);
          const double iw = (w - c) / std::max(aw - thick, 1.0);
          const bool in_core = id * id + ih * ih + iw * iw <= 1.0;
          const double ud = (d - c) / vd;
          const double uh = (h - c) / vh;
          const double uw = (w - c) / vw;
          const bool in_ventricle = ud * ud + uh * uh + uw * uw <= 1.0;
          value = !in_core ? kShell : (in_ventricle ? kVentricle : kTissue);
          value += noise(rng);
          value = std::clamp(value, kMaskFloor, 1.0);
        }
        // Round through f32 so the on-disk format reproduces us exactly.
        s.voxels.at(d, h, w) = static_cast<double>(static_cast<float>(value));
      }
  return s;
}

namespace {

void put_u32(std::ofstream& f, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  f.write(reinterpret_cast<char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& f) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_phantom(const std::string& path, const VolumeSample& s) {
  if (s.voxels.rank() != 3 || s.voxels.dim(0) != s.voxels.dim(1) ||
      s.voxels.dim(1) != s.voxels.dim(2))
    throw ParameterError("write_phantom: voxels must be a cube");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("write_phantom: cannot open " + path);
  f.write(kMagic, 4);
  put_u32(f, kVersion);
  put_u32(f, static_cast<std::uint32_t>(s.voxels.dim(0)));
  static_assert(sizeof(double) == 8);
  double age = s.age;
  f.write(reinterpret_cast<const char*>(&age), 8);
  unsigned char sex = static_cast<unsigned char>(s.sex);
  f.write(reinterpret_cast<const char*>(&sex), 1);
  std::vector<float> buf(s.voxels.numel());
  for (std::size_t i = 0; i < buf.size(); ++i)
    buf[i] = static_cast<float>(s.voxels[i]);
  f.write(reinterpret_cast<const char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!f) throw IoError("write_phantom: short write to " + path);
}

bool is_phantom_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return false;
  char magic[4];
  f.read(magic, 4);
  return f && std::memcmp(magic, kMagic, 4) == 0;
}

VolumeSample read_phantom(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("read_phantom: cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("read_phantom: bad magic in " + path);
  const std::uint32_t version = get_u32(f);
  if (version != kVersion)
    throw FormatError("read_phantom: unsupported version in " + path);
  const std::uint32_t side = get_u32(f);
  if (!f || side == 0 || side > 4096)
    throw FormatError("read_phantom: bad side in " + path);
  VolumeSample s;
  double age = 0.0;
  f.read(reinterpret_cast<char*>(&age), 8);
  unsigned char sex = 0;
  f.read(reinterpret_cast<char*>(&sex), 1);
  if (!f || (sex != 0 && sex != 1))
    throw FormatError("read_phantom: bad header in " + path);
  s.age = age;
  s.sex = sex;
  const std::size_t count =
      static_cast<std::size_t>(side) * side * side;
  std::vector<float> buf(count);
  f.read(reinterpret_cast<char*>(buf.data()),
         static_cast<std::streamsize>(count * sizeof(float)));
  if (!f) throw FormatError("read_phantom: truncated voxel data in " + path);
  s.voxels = Tensor({static_cast<int>(side), static_cast<int>(side),
                     static_cast<int>(side)});
  for (std::size_t i = 0; i < count; ++i)
    s.voxels[i] = static_cast<double>(buf[i]);
  return s;
}

}  // namespace dsmt
