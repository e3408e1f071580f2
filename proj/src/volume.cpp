#include "dsmt/volume.hpp"

#include <algorithm>
#include <cmath>

namespace dsmt {

namespace {

void require_volume(const Tensor& v, const char* what) {
  if (v.rank() != 3) throw ShapeError(std::string(what) + ": expected rank-3");
  if (v.empty()) throw ParameterError(std::string(what) + ": empty volume");
}

double uniform_in(std::mt19937_64& rng, double lo, double hi) {
  if (hi <= lo) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace

CropResult crop_to_content(const Tensor& v, int margin) {
  require_volume(v, "crop_to_content");
  if (margin < 0) throw ParameterError("crop_to_content: negative margin");
  const int nd = v.dim(0), nh = v.dim(1), nw = v.dim(2);
  int lo[3] = {nd, nh, nw};
  int hi[3] = {-1, -1, -1};
  for (int d = 0; d < nd; ++d)
    for (int h = 0; h < nh; ++h)
      for (int w = 0; w < nw; ++w) {
        if (v.at(d, h, w) > 0.0) {
          lo[0] = std::min(lo[0], d);
          lo[1] = std::min(lo[1], h);
          lo[2] = std::min(lo[2], w);
          hi[0] = std::max(hi[0], d);
          hi[1] = std::max(hi[1], h);
          hi[2] = std::max(hi[2], w);
        }
      }

  CropResult res;
  if (hi[0] < 0) {
    res.voxels = v;
    res.all_background = true;
    res.lo = {0, 0, 0};
    res.hi = {nd, nh, nw};
    return res;
  }
  const int dims[3] = {nd, nh, nw};
  for (int a = 0; a < 3; ++a) {
    res.lo[a] = std::max(0, lo[a] - margin);
    res.hi[a] = std::min(dims[a], hi[a] + 1 + margin);
  }
  res.voxels = Tensor({res.hi[0] - res.lo[0], res.hi[1] - res.lo[1],
                       res.hi[2] - res.lo[2]});
  for (int d = res.lo[0]; d < res.hi[0]; ++d)
    for (int h = res.lo[1]; h < res.hi[1]; ++h)
      for (int w = res.lo[2]; w < res.hi[2]; ++w)
        res.voxels.at(d - res.lo[0], h - res.lo[1], w - res.lo[2]) =
            v.at(d, h, w);
  return res;
}

double sample_trilinear(const Tensor& v, double d, double h, double w,
                        double fill) {
  const int nd = v.dim(0), nh = v.dim(1), nw = v.dim(2);
  if (d < -0.5 || h < -0.5 || w < -0.5 || d > nd - 0.5 || h > nh - 0.5 ||
      w > nw - 0.5)
    return fill;
  const double dc = std::clamp(d, 0.0, static_cast<double>(nd - 1));
  const double hc = std::clamp(h, 0.0, static_cast<double>(nh - 1));
  const double wc = std::clamp(w, 0.0, static_cast<double>(nw - 1));
  const int d0 = static_cast<int>(std::floor(dc));
  const int h0 = static_cast<int>(std::floor(hc));
  const int w0 = static_cast<int>(std::floor(wc));
  const int d1 = std::min(d0 + 1, nd - 1);
  const int h1 = std::min(h0 + 1, nh - 1);
  const int w1 = std::min(w0 + 1, nw - 1);
  const double fd = dc - d0, fh = hc - h0, fw = wc - w0;

  auto lerp = [](double a, double b, double t) { return a + (b - a) * t; };
  const double c00 = lerp(v.at(d0, h0, w0), v.at(d0, h0, w1), fw);
  const double c01 = lerp(v.at(d0, h1, w0), v.at(d0, h1, w1), fw);
  const double c10 = lerp(v.at(d1, h0, w0), v.at(d1, h0, w1), fw);
  const double c11 = lerp(v.at(d1, h1, w0), v.at(d1, h1, w1), fw);
  return lerp(lerp(c00, c01, fh), lerp(c10, c11, fh), fd);
}

Tensor resample_to_cube(const Tensor& v, int side) {
  require_volume(v, "resample_to_cube");
  if (side < 2) throw ParameterError("resample_to_cube: side must be >= 2");
  const double sd = static_cast<double>(v.dim(0)) / side;
  const double sh = static_cast<double>(v.dim(1)) / side;
  const double sw = static_cast<double>(v.dim(2)) / side;
  Tensor out({side, side, side});
  for (int d = 0; d < side; ++d)
    for (int h = 0; h < side; ++h)
      for (int w = 0; w < side; ++w) {
        const double src_d = (d + 0.5) * sd - 0.5;
        const double src_h = (h + 0.5) * sh - 0.5;
        const double src_w = (w + 0.5) * sw - 0.5;
        out.at(d, h, w) = sample_trilinear(v, src_d, src_h, src_w, 0.0);
      }
  return out;
}

Tensor normalize_volume(const Tensor& v) {
  require_volume(v, "normalize_volume");
  const double lo = v.min();
  const double hi = v.max();
  Tensor out(v.shape());
  if (hi <= lo) return out;  // constant volume -> zeros
  const double inv = 1.0 / (hi - lo);
  for (std::size_t i = 0; i < v.numel(); ++i) out[i] = (v[i] - lo) * inv;
  return out;
}

Tensor preprocess_volume(const Tensor& raw, int side, int margin) {
  return normalize_volume(resample_to_cube(crop_to_content(raw, margin).voxels,
                                           side));
}

namespace {

Tensor flip_axis(const Tensor& v, int axis) {
  const int nd = v.dim(0), nh = v.dim(1), nw = v.dim(2);
  Tensor out(v.shape());
  for (int d = 0; d < nd; ++d)
    for (int h = 0; h < nh; ++h)
      for (int w = 0; w < nw; ++w) {
        const int sd = axis == 0 ? nd - 1 - d : d;
        const int sh = axis == 1 ? nh - 1 - h : h;
        const int sw = axis == 2 ? nw - 1 - w : w;
        out.at(d, h, w) = v.at(sd, sh, sw);
      }
  return out;
}

// Rotation about one axis through the volume centre; inverse-mapped with
// trilinear sampling, zero outside.
Tensor rotate_about_axis(const Tensor& v, int axis, double angle_deg) {
  const int nd = v.dim(0), nh = v.dim(1), nw = v.dim(2);
  const double cd = (nd - 1) / 2.0, ch = (nh - 1) / 2.0, cw = (nw - 1) / 2.0;
  const double a = -angle_deg * M_PI / 180.0;  // inverse rotation
  const double ca = std::cos(a), sa = std::sin(a);
  Tensor out(v.shape());
  for (int d = 0; d < nd; ++d)
    for (int h = 0; h < nh; ++h)
      for (int w = 0; w < nw; ++w) {
        const double pd = d - cd, ph = h - ch, pw = w - cw;
        double sd = pd, sh = ph, sw = pw;
        if (axis == 0) {  // rotate in (h,w) plane
          sh = ca * ph - sa * pw;
          sw = sa * ph + ca * pw;
        } else if (axis == 1) {  // (d,w) plane
          sd = ca * pd - sa * pw;
          sw = sa * pd + ca * pw;
        } else {  // (d,h) plane
          sd = ca * pd - sa * ph;
          sh = sa * pd + ca * ph;
        }
        out.at(d, h, w) =
            sample_trilinear(v, sd + cd, sh + ch, sw + cw, 0.0);
      }
  return out;
}

Tensor zoom_about_center(const Tensor& v, double factor) {
  const int nd = v.dim(0), nh = v.dim(1), nw = v.dim(2);
  const double cd = (nd - 1) / 2.0, ch = (nh - 1) / 2.0, cw = (nw - 1) / 2.0;
  const double inv = 1.0 / factor;
  Tensor out(v.shape());
  for (int d = 0; d < nd; ++d)
    for (int h = 0; h < nh; ++h)
      for (int w = 0; w < nw; ++w)
        out.at(d, h, w) = sample_trilinear(v, cd + (d - cd) * inv,
                                           ch + (h - ch) * inv,
                                           cw + (w - cw) * inv, 0.0);
  return out;
}

}  // namespace

Tensor augment_volume(const Tensor& v, const AugmentationConfig& cfg,
                      std::mt19937_64& rng) {
  require_volume(v, "augment_volume");
  Tensor out = v;

  // Flips, one independent draw per axis.
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int axis = 0; axis < 3; ++axis)
    if (uni(rng) < cfg.flip_prob_per_axis) out = flip_axis(out, axis);

  // Rotation about one randomly chosen axis.
  const int rot_axis = static_cast<int>(rng() % 3);
  const double angle =
      uniform_in(rng, cfg.rotation_range_deg[0], cfg.rotation_range_deg[1]);
  if (angle != 0.0) out = rotate_about_axis(out, rot_axis, angle);

  const double zoom = uniform_in(rng, cfg.zoom_range[0], cfg.zoom_range[1]);
  if (zoom != 1.0) out = zoom_about_center(out, zoom);

  if (cfg.erase_enabled) {
    const double frac = uniform_in(rng, cfg.erase_side_fraction_range[0],
                                   cfg.erase_side_fraction_range[1]);
    const int dims[3] = {out.dim(0), out.dim(1), out.dim(2)};
    int len[3], lo[3];
    for (int a = 0; a < 3; ++a) {
      len[a] = std::clamp(static_cast<int>(std::lround(frac * dims[a])), 1,
                          dims[a]);
      lo[a] = static_cast<int>(rng() % (dims[a] - len[a] + 1));
    }
    for (int d = lo[0]; d < lo[0] + len[0]; ++d)
      for (int h = lo[1]; h < lo[1] + len[1]; ++h)
        for (int w = lo[2]; w < lo[2] + len[2]; ++w) out.at(d, h, w) = 0.0;
  }

  for (std::size_t i = 0; i < out.numel(); ++i)
    out[i] = std::clamp(out[i], 0.0, 1.0);
  return out;
}

VolumeSample augment(const VolumeSample& s, const AugmentationConfig& cfg,
                     std::mt19937_64& rng) {
  VolumeSample out = s;
  out.voxels = augment_volume(s.voxels, cfg, rng);
  return out;
}

}  // namespace dsmt
