#include "dsmt/nifti.hpp"

#include <zlib.h>

#include <cstring>
#include <vector>

namespace dsmt {

namespace {

constexpr int kHeaderSize = 348;

struct Nifti1Header {
  std::int32_t sizeof_hdr;
  char pad0[36];
  std::int16_t dim[8];
  char pad1[14];
  std::int16_t datatype;
  std::int16_t bitpix;
  char pad2[34];
  float vox_offset;
  float scl_slope;
  float scl_inter;
  char pad3[224];
  char magic[4];
};
static_assert(sizeof(Nifti1Header) == kHeaderSize);

void swap2(void* p) {
  auto* b = static_cast<unsigned char*>(p);
  std::swap(b[0], b[1]);
}
void swap4(void* p) {
  auto* b = static_cast<unsigned char*>(p);
  std::swap(b[0], b[3]);
  std::swap(b[1], b[2]);
}
void swap8(void* p) {
  auto* b = static_cast<unsigned char*>(p);
  std::swap(b[0], b[7]);
  std::swap(b[1], b[6]);
  std::swap(b[2], b[5]);
  std::swap(b[3], b[4]);
}

class GzReader {
 public:
  explicit GzReader(const std::string& path) : f_(gzopen(path.c_str(), "rb")) {
    if (!f_) throw FormatError("cannot open " + path);
  }
  ~GzReader() {
    if (f_) gzclose(f_);
  }
  void read_exact(void* dst, std::size_t n, const std::string& path) {
    const int got = gzread(f_, dst, static_cast<unsigned>(n));
    if (got < 0 || static_cast<std::size_t>(got) != n)
      throw FormatError("truncated file: " + path);
  }
  void skip(std::size_t n, const std::string& path) {
    std::vector<char> junk(std::min<std::size_t>(n, 1 << 16));
    while (n > 0) {
      const std::size_t chunk = std::min(n, junk.size());
      read_exact(junk.data(), chunk, path);
      n -= chunk;
    }
  }

 private:
  gzFile f_;
};

}  // namespace

bool has_nifti_extension(const std::string& path) {
  auto ends_with = [&](const char* suf) {
    const std::size_t n = std::strlen(suf);
    return path.size() >= n &&
           path.compare(path.size() - n, n, suf) == 0;
  };
  return ends_with(".nii") || ends_with(".nii.gz");
}

Tensor read_nifti(const std::string& path) {
  GzReader f(path);
  Nifti1Header hdr{};
  f.read_exact(&hdr, sizeof(hdr), path);

  bool swapped = false;
  if (hdr.sizeof_hdr != kHeaderSize) {
    swap4(&hdr.sizeof_hdr);
    if (hdr.sizeof_hdr != kHeaderSize)
      throw FormatError("not a NIfTI-1 file: " + path);
    swapped = true;
  }
  if (std::memcmp(hdr.magic, "n+1", 3) != 0) {
    if (std::memcmp(hdr.magic, "ni1", 3) == 0)
      throw FormatError("two-file NIfTI (.hdr/.img) not supported: " + path);
    throw FormatError("bad NIfTI magic: " + path);
  }
  if (swapped) {
    for (auto& d : hdr.dim) swap2(&d);
    swap2(&hdr.datatype);
    swap2(&hdr.bitpix);
    swap4(&hdr.vox_offset);
    swap4(&hdr.scl_slope);
    swap4(&hdr.scl_inter);
  }

  const int ndim = hdr.dim[0];
  if (ndim < 3 || ndim > 7) throw FormatError("unsupported NIfTI rank: " + path);
  for (int i = 4; i <= ndim; ++i)
    if (hdr.dim[i] > 1)
      throw FormatError("multi-volume NIfTI not supported: " + path);
  const int nd = hdr.dim[3], nh = hdr.dim[2], nw = hdr.dim[1];
  if (nd <= 0 || nh <= 0 || nw <= 0)
    throw FormatError("bad NIfTI dimensions: " + path);

  const std::size_t count = static_cast<std::size_t>(nd) * nh * nw;
  const std::size_t offset = static_cast<std::size_t>(hdr.vox_offset);
  if (offset < kHeaderSize) throw FormatError("bad vox_offset: " + path);
  f.skip(offset - kHeaderSize, path);

  const double slope = hdr.scl_slope == 0.0f ? 1.0 : hdr.scl_slope;
  const double inter = hdr.scl_slope == 0.0f ? 0.0 : hdr.scl_inter;

  // Voxel order in the file is x fastest; we store (d,h,w) = (z,y,x).
  Tensor out({nd, nh, nw});
  auto fill = [&](auto convert, std::size_t elem_size) {
    std::vector<unsigned char> buf(count * elem_size);
    f.read_exact(buf.data(), buf.size(), path);
    for (std::size_t i = 0; i < count; ++i)
      out[i] = slope * convert(buf.data() + i * elem_size) + inter;
  };

  switch (hdr.datatype) {
    case 2:  // uint8
      fill([](const unsigned char* p) { return static_cast<double>(*p); }, 1);
      break;
    case 4:  // int16
      fill(
          [swapped](const unsigned char* p) {
            std::int16_t v;
            std::memcpy(&v, p, 2);
            if (swapped) swap2(&v);
            return static_cast<double>(v);
          },
          2);
      break;
    case 512:  // uint16
      fill(
          [swapped](const unsigned char* p) {
            std::uint16_t v;
            std::memcpy(&v, p, 2);
            if (swapped) swap2(&v);
            return static_cast<double>(v);
          },
          2);
      break;
    case 8:  // int32
      fill(
          [swapped](const unsigned char* p) {
            std::int32_t v;
            std::memcpy(&v, p, 4);
            if (swapped) swap4(&v);
            return static_cast<double>(v);
          },
          4);
      break;
    case 16:  // float32
      fill(
          [swapped](const unsigned char* p) {
            float v;
            std::memcpy(&v, p, 4);
            if (swapped) swap4(&v);
            return static_cast<double>(v);
          },
          4);
      break;
    case 64:  // float64
      fill(
          [swapped](const unsigned char* p) {
            double v;
            std::memcpy(&v, p, 8);
            if (swapped) swap8(&v);
            return v;
          },
          8);
      break;
    default:
      throw FormatError("unsupported NIfTI datatype " +
                        std::to_string(hdr.datatype) + ": " + path);
  }
  return out;
}

void write_nifti(const std::string& path, const Tensor& volume) {
  if (volume.rank() != 3) throw ParameterError("write_nifti: rank-3 expected");
  Nifti1Header hdr{};
  hdr.sizeof_hdr = kHeaderSize;
  hdr.dim[0] = 3;
  hdr.dim[1] = static_cast<std::int16_t>(volume.dim(2));
  hdr.dim[2] = static_cast<std::int16_t>(volume.dim(1));
  hdr.dim[3] = static_cast<std::int16_t>(volume.dim(0));
  for (int i = 4; i < 8; ++i) hdr.dim[i] = 1;
  hdr.datatype = 16;  // float32
  hdr.bitpix = 32;
  hdr.vox_offset = 352.0f;
  hdr.scl_slope = 1.0f;
  hdr.scl_inter = 0.0f;
  std::memcpy(hdr.magic, "n+1", 4);

  const bool gz = path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
  std::vector<float> buf(volume.numel());
  for (std::size_t i = 0; i < buf.size(); ++i)
    buf[i] = static_cast<float>(volume[i]);
  const char extender[4] = {0, 0, 0, 0};

  gzFile f = gzopen(path.c_str(), gz ? "wb" : "wbT");  // T: no compression wrapper
  if (!f) throw IoError("write_nifti: cannot open " + path);
  bool ok = gzwrite(f, &hdr, sizeof(hdr)) == static_cast<int>(sizeof(hdr));
  ok = ok && gzwrite(f, extender, 4) == 4;
  ok = ok && gzwrite(f, buf.data(),
                     static_cast<unsigned>(buf.size() * sizeof(float))) ==
                 static_cast<int>(buf.size() * sizeof(float));
  gzclose(f);
  if (!ok) throw IoError("write_nifti: short write to " + path);
}

}  // namespace dsmt
