#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "pd/data.hpp"

namespace pd {

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& img, int out_w, int out_h) {
  const Shape s = img.shape;
  if (out_w < 1 || out_h < 1)
    throw ConfigError("resize_bilinear: target extents must be positive");
  if (out_w == s.w && out_h == s.h) return img.clone();
  Tensor<T> out = Tensor<T>::zeros({s.n, s.c, out_h, out_w});
  const double sx = double(s.w) / out_w;
  const double sy = double(s.h) / out_h;
  const T* pi = img.data->data();
  T* po = out.data->data();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T* plane = pi + (std::int64_t(n) * s.c + c) * s.h * s.w;
      T* oplane = po + (std::int64_t(n) * s.c + c) * std::int64_t(out_h) * out_w;
      for (int y = 0; y < out_h; ++y) {
        // pixel-center alignment
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, double(s.h - 1));
        const int y0 = int(fy);
        const int y1 = std::min(y0 + 1, s.h - 1);
        const double ay = fy - y0;
        for (int x = 0; x < out_w; ++x) {
          const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, double(s.w - 1));
          const int x0 = int(fx);
          const int x1 = std::min(x0 + 1, s.w - 1);
          const double ax = fx - x0;
          const double v =
              (1 - ay) * ((1 - ax) * plane[y0 * s.w + x0] + ax * plane[y0 * s.w + x1]) +
              ay * ((1 - ax) * plane[y1 * s.w + x0] + ax * plane[y1 * s.w + x1]);
          oplane[std::int64_t(y) * out_w + x] = T(v);
        }
      }
    }
  return out;
}

namespace {

bool has_suffix(const std::string& s, const std::string& suf) {
  return s.size() >= suf.size() &&
         std::equal(suf.rbegin(), suf.rend(), s.rbegin(),
                    [](char a, char b) { return std::tolower(a) == std::tolower(b); });
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// 8-bit interleaved RGB rows
struct Image8 {
  int w = 0, h = 0;
  std::vector<unsigned char> rgb;
};

Image8 read_png_rgb(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw IoError("cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng init failed for " + path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("corrupt PNG: " + path);
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
      png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  Image8 img;
  img.w = int(png_get_image_width(png, info));
  img.h = int(png_get_image_height(png, info));
  img.rgb.resize(std::size_t(img.w) * img.h * 3);
  std::vector<png_bytep> rows(img.h);
  for (int y = 0; y < img.h; ++y) rows[y] = img.rgb.data() + std::size_t(y) * img.w * 3;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png_rgb(const std::string& path, const Image8& img) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("cannot create " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng init failed for " + path);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG write failed: " + path);
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, img.w, img.h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(img.h);
  for (int y = 0; y < img.h; ++y)
    rows[y] = const_cast<png_bytep>(img.rgb.data() + std::size_t(y) * img.w * 3);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image8 read_ppm_rgb(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::string magic;
  f >> magic;
  if (magic != "P6") throw IoError("not a binary PPM (P6): " + path);
  int w, h, maxval;
  f >> w >> h >> maxval;
  if (!f || w < 1 || h < 1 || maxval != 255)
    throw IoError("malformed PPM header: " + path);
  f.get();  // single whitespace after maxval
  Image8 img;
  img.w = w;
  img.h = h;
  img.rgb.resize(std::size_t(w) * h * 3);
  f.read(reinterpret_cast<char*>(img.rgb.data()), std::streamsize(img.rgb.size()));
  if (!f) throw IoError("truncated PPM data: " + path);
  return img;
}

void write_ppm_rgb(const std::string& path, const Image8& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot create " + path);
  f << "P6\n" << img.w << " " << img.h << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.rgb.data()), std::streamsize(img.rgb.size()));
  if (!f) throw IoError("PPM write failed: " + path);
}

template <typename T>
Image8 to_image8(const Tensor<T>& img) {
  const Shape s = img.shape;
  if (s.n != 1 || (s.c != 1 && s.c != 3))
    throw ConfigError("image write expects [1,1|3,H,W], got " + s.str());
  Image8 out;
  out.w = s.w;
  out.h = s.h;
  out.rgb.resize(std::size_t(s.w) * s.h * 3);
  const T* p = img.data->data();
  const std::int64_t HW = std::int64_t(s.h) * s.w;
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x)
      for (int c = 0; c < 3; ++c) {
        const T v = p[(s.c == 3 ? c : 0) * HW + std::int64_t(y) * s.w + x];
        const double q = std::clamp(double(v), 0.0, 1.0) * 255.0;
        out.rgb[(std::size_t(y) * s.w + x) * 3 + c] =
            static_cast<unsigned char>(std::lround(q));
      }
  return out;
}

template <typename T>
Tensor<T> from_image8(const Image8& img) {
  Tensor<T> out = Tensor<T>::zeros({1, 3, img.h, img.w});
  T* p = out.data->data();
  const std::int64_t HW = std::int64_t(img.h) * img.w;
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int c = 0; c < 3; ++c)
        p[c * HW + std::int64_t(y) * img.w + x] =
            T(img.rgb[(std::size_t(y) * img.w + x) * 3 + c] / 255.0);
  return out;
}

bool host_is_little_endian() {
  const std::uint16_t one = 1;
  return *reinterpret_cast<const unsigned char*>(&one) == 1;
}

}  // namespace

template <typename T>
void write_image8(const std::string& path, const Tensor<T>& img) {
  if (has_suffix(path, ".png"))
    write_png_rgb(path, to_image8(img));
  else if (has_suffix(path, ".ppm"))
    write_ppm_rgb(path, to_image8(img));
  else
    throw ConfigError("write_image8: unsupported extension (want .png or .ppm): " + path);
}

template <typename T>
Tensor<T> read_image8(const std::string& path) {
  if (has_suffix(path, ".png")) return from_image8<T>(read_png_rgb(path));
  if (has_suffix(path, ".ppm")) return from_image8<T>(read_ppm_rgb(path));
  throw ConfigError("read_image8: unsupported extension (want .png or .ppm): " + path);
}

template <typename T>
void write_pfm(const std::string& path, const Tensor<T>& map) {
  const Shape s = map.shape;
  if (s.n != 1 || s.c != 1)
    throw ConfigError("write_pfm: expected [1,1,H,W], got " + s.str());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot create " + path);
  // negative scale declares little-endian payload
  f << "Pf\n" << s.w << " " << s.h << "\n" << (host_is_little_endian() ? "-1.0" : "1.0")
    << "\n";
  const T* p = map.data->data();
  std::vector<float> row(s.w);
  for (int y = s.h - 1; y >= 0; --y) {  // bottom-up rows
    for (int x = 0; x < s.w; ++x) row[x] = float(p[std::int64_t(y) * s.w + x]);
    f.write(reinterpret_cast<const char*>(row.data()),
            std::streamsize(row.size() * sizeof(float)));
  }
  if (!f) throw IoError("PFM write failed: " + path);
}

template <typename T>
Tensor<T> read_pfm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::string magic;
  f >> magic;
  if (magic != "Pf" && magic != "PF") throw IoError("not a PFM file: " + path);
  const int channels = magic == "PF" ? 3 : 1;
  int w, h;
  double scale;
  f >> w >> h >> scale;
  if (!f || w < 1 || h < 1 || scale == 0) throw IoError("malformed PFM header: " + path);
  f.get();
  const bool file_le = scale < 0;
  std::vector<float> buf(std::size_t(w) * h * channels);
  f.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size() * sizeof(float)));
  if (!f) throw IoError("truncated PFM data: " + path);
  if (file_le != host_is_little_endian()) {
    for (float& v : buf) {
      char* b = reinterpret_cast<char*>(&v);
      std::swap(b[0], b[3]);
      std::swap(b[1], b[2]);
    }
  }
  Tensor<T> out = Tensor<T>::zeros({1, channels, h, w});
  T* p = out.data->data();
  const std::int64_t HW = std::int64_t(h) * w;
  for (int y = 0; y < h; ++y) {
    const float* row = buf.data() + std::size_t(h - 1 - y) * w * channels;
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        p[c * HW + std::int64_t(y) * w + x] = T(row[x * channels + c]);
  }
  return out;
}

template <typename T>
void write_pgm16(const std::string& path, const Tensor<T>& disparity) {
  const Shape s = disparity.shape;
  if (s.n != 1 || s.c != 1)
    throw ConfigError("write_pgm16: expected [1,1,H,W], got " + s.str());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot create " + path);
  f << "P5\n" << s.w << " " << s.h << "\n65535\n";
  const T* p = disparity.data->data();
  std::vector<unsigned char> row(std::size_t(s.w) * 2);
  for (int y = 0; y < s.h; ++y) {
    for (int x = 0; x < s.w; ++x) {
      const double v = std::clamp(double(p[std::int64_t(y) * s.w + x]) * 256.0, 0.0, 65535.0);
      const std::uint16_t q = static_cast<std::uint16_t>(std::lround(v));
      row[2 * x] = static_cast<unsigned char>(q >> 8);  // big-endian
      row[2 * x + 1] = static_cast<unsigned char>(q & 0xff);
    }
    f.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size()));
  }
  if (!f) throw IoError("PGM write failed: " + path);
}

template <typename T>
GtDisparity<T> load_gt_disparity(const std::string& path) {
  GtDisparity<T> out;
  if (has_suffix(path, ".pfm")) {
    Tensor<T> raw = read_pfm<T>(path);
    if (raw.shape.c != 1) throw IoError("disparity PFM must be grayscale: " + path);
    out.map = DisparityMap<T>{raw, Side::left};
    out.mask = Tensor<T>::zeros(raw.shape);
    const T* p = raw.data->data();
    T* m = out.mask.data->data();
    for (std::int64_t i = 0; i < raw.numel(); ++i) m[i] = p[i] > T(0) ? T(1) : T(0);
    return out;
  }
  if (has_suffix(path, ".pgm")) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::string magic;
    f >> magic;
    if (magic != "P5") throw IoError("not a binary PGM (P5): " + path);
    int w, h, maxval;
    f >> w >> h >> maxval;
    if (!f || w < 1 || h < 1 || maxval != 65535)
      throw IoError("malformed 16-bit PGM header: " + path);
    f.get();
    std::vector<unsigned char> buf(std::size_t(w) * h * 2);
    f.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size()));
    if (!f) throw IoError("truncated PGM data: " + path);
    Tensor<T> vals = Tensor<T>::zeros({1, 1, h, w});
    out.mask = Tensor<T>::zeros({1, 1, h, w});
    T* p = vals.data->data();
    T* m = out.mask.data->data();
    for (std::int64_t i = 0; i < std::int64_t(w) * h; ++i) {
      const std::uint16_t raw =
          std::uint16_t(buf[2 * i]) << 8 | std::uint16_t(buf[2 * i + 1]);
      p[i] = T(raw) / T(256);  // KITTI-style fixed point
      m[i] = raw > 0 ? T(1) : T(0);
    }
    out.map = DisparityMap<T>{vals, Side::left};
    return out;
  }
  throw ConfigError("load_gt_disparity: unsupported extension (want .pfm or .pgm): " +
                    path);
}

template <typename T>
StereoSample<T> load_stereo_pair(const std::string& left_path,
                                 const std::string& right_path, int target_w,
                                 int target_h) {
  StereoSample<T> s;
  s.left = read_image8<T>(left_path);
  s.right = read_image8<T>(right_path);
  if (!(s.left.shape == s.right.shape))
    throw ConfigError("load_stereo_pair: extents differ, " + s.left.shape.str() +
                      " vs " + s.right.shape.str());
  if (target_w > 0 && target_h > 0) {
    s.left = resize_bilinear(s.left, target_w, target_h);
    s.right = resize_bilinear(s.right, target_w, target_h);
  }
  s.id = left_path;
  return s;
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open manifest " + path);
  std::vector<ManifestEntry> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    ManifestEntry e;
    if (!(ss >> e.left)) continue;  // blank line
    if (!(ss >> e.right))
      throw ConfigError("manifest " + path + ":" + std::to_string(lineno) +
                        ": expected 'left right [gt]'");
    ss >> e.gt;
    entries.push_back(std::move(e));
  }
  return entries;
}

#define PD_INSTANTIATE_DATA_IO(T)                                                     \
  template Tensor<T> resize_bilinear<T>(const Tensor<T>&, int, int);                 \
  template void write_image8<T>(const std::string&, const Tensor<T>&);               \
  template Tensor<T> read_image8<T>(const std::string&);                             \
  template void write_pfm<T>(const std::string&, const Tensor<T>&);                  \
  template Tensor<T> read_pfm<T>(const std::string&);                                \
  template void write_pgm16<T>(const std::string&, const Tensor<T>&);                \
  template GtDisparity<T> load_gt_disparity<T>(const std::string&);                  \
  template StereoSample<T> load_stereo_pair<T>(const std::string&, const std::string&, \
                                               int, int);

PD_INSTANTIATE_DATA_IO(float)
PD_INSTANTIATE_DATA_IO(double)

}  // namespace pd
