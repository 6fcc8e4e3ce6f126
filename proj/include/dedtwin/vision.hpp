#pragma once

// Melt-pool geometry from coaxial camera frames: crop, threshold at the mean
// intensity, keep the dominant blob, then measure the largest inscribed circle
// (melt-pool width) and the smallest enclosing circle (melt-pool length).

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "dedtwin/errors.hpp"

namespace dedtwin::vision {

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {
    if (w < 1 || h < 1) throw InvalidArgument("GrayImage: dimensions must be >= 1");
  }

  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

struct CropRect {
  int x0 = 0, y0 = 0, w = 0, h = 0;

  static CropRect full(const GrayImage& img) { return {0, 0, img.width, img.height}; }

  bool fits(const GrayImage& img) const {
    return w >= 1 && h >= 1 && x0 >= 0 && y0 >= 0 && x0 + w <= img.width && y0 + h <= img.height;
  }
};

/// Binary image; nonzero entries are foreground.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0) {
    if (w < 1 || h < 1) throw InvalidArgument("Mask: dimensions must be >= 1");
  }

  bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v = true) { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  std::size_t count() const {
    return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](auto b) { return b != 0; }));
  }
  bool empty() const { return count() == 0; }
  friend bool operator==(const Mask&, const Mask&) = default;
};

struct MeltPoolGeometry {
  double mpw = 0.0;  // mm
  double mpl = 0.0;  // mm
  std::size_t area_px = 0;
  bool valid = false;
};

struct Circle {
  double cx = 0.0, cy = 0.0, r = 0.0;
  double diameter() const { return 2.0 * r; }
};

/// Foreground iff the pixel is strictly brighter than the mean of the crop.
inline Mask binarize_mean(const GrayImage& img, const CropRect& crop) {
  if (!crop.fits(img)) throw InvalidArgument("binarize_mean: crop lies outside the image");
  std::uint64_t sum = 0;
  for (int y = 0; y < crop.h; ++y)
    for (int x = 0; x < crop.w; ++x) sum += img.at(crop.x0 + x, crop.y0 + y);
  const double mean = static_cast<double>(sum) / (static_cast<double>(crop.w) * crop.h);
  Mask m(crop.w, crop.h);
  for (int y = 0; y < crop.h; ++y)
    for (int x = 0; x < crop.w; ++x)
      if (static_cast<double>(img.at(crop.x0 + x, crop.y0 + y)) > mean) m.set(x, y);
  return m;
}

/// Keeps the largest 4-connected foreground component. On equal sizes the
/// component met first in row-major scan order wins.
inline Mask largest_connected_component(const Mask& mask) {
  const int w = mask.width, h = mask.height;
  std::vector<int> label(mask.bits.size(), -1);
  std::vector<std::size_t> sizes;
  std::vector<int> stack;
  for (int start = 0; start < w * h; ++start) {
    if (!mask.bits[start] || label[start] >= 0) continue;
    const int id = static_cast<int>(sizes.size());
    std::size_t size = 0;
    stack.push_back(start);
    label[start] = id;
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      ++size;
      const int x = p % w, y = p / w;
      const std::array<std::pair<int, int>, 4> nb{{{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}}};
      for (auto [nx, ny] : nb) {
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        const int q = ny * w + nx;
        if (mask.bits[q] && label[q] < 0) {
          label[q] = id;
          stack.push_back(q);
        }
      }
    }
    sizes.push_back(size);
  }
  if (sizes.empty()) throw EmptyPool("largest_connected_component: mask has no foreground");
  int best = 0;
  for (int i = 1; i < static_cast<int>(sizes.size()); ++i)
    if (sizes[i] > sizes[best]) best = i;
  Mask out(w, h);
  for (std::size_t p = 0; p < label.size(); ++p) out.bits[p] = label[p] == best ? 1 : 0;
  return out;
}

namespace detail {

// 1-D squared distance transform of a sampled function (lower envelope of
// parabolas).
inline void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
                   std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  constexpr double inf = std::numeric_limits<double>::infinity();
  int k = 0;
  v[0] = 0;
  z[0] = -inf;
  z[1] = inf;
  for (int q = 1; q < n; ++q) {
    double s = 0.0;
    while (true) {
      const int p = v[k];
      s = ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * q - 2.0 * p);
      if (s <= z[k] && k > 0) {
        --k;
        continue;
      }
      break;
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
}

}  // namespace detail

/// Exact squared Euclidean distance from every pixel centre to the nearest
/// background pixel centre, with everything outside the mask counted as
/// background. Returned row-major with the mask's dimensions.
inline std::vector<double> squared_distance_to_background(const Mask& mask) {
  const int w = mask.width + 2, h = mask.height + 2;
  const double big = 4.0 * (double(w) * w + double(h) * h) + 1.0;
  std::vector<double> grid(static_cast<std::size_t>(w) * h, 0.0);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(x, y)) grid[static_cast<std::size_t>(y + 1) * w + (x + 1)] = big;

  const int len = std::max(w, h);
  std::vector<double> f(len), d(len), z(len + 1);
  std::vector<int> v(len);
  for (int x = 0; x < w; ++x) {
    f.resize(h);
    d.resize(h);
    for (int y = 0; y < h; ++y) f[y] = grid[static_cast<std::size_t>(y) * w + x];
    detail::edt_1d(f, d, v, z);
    for (int y = 0; y < h; ++y) grid[static_cast<std::size_t>(y) * w + x] = d[y];
  }
  for (int y = 0; y < h; ++y) {
    f.assign(grid.begin() + static_cast<std::ptrdiff_t>(y) * w, grid.begin() + static_cast<std::ptrdiff_t>(y + 1) * w);
    d.resize(w);
    detail::edt_1d(f, d, v, z);
    std::copy(d.begin(), d.end(), grid.begin() + static_cast<std::ptrdiff_t>(y) * w);
  }
  std::vector<double> out(static_cast<std::size_t>(mask.width) * mask.height);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      out[static_cast<std::size_t>(y) * mask.width + x] = grid[static_cast<std::size_t>(y + 1) * w + (x + 1)];
  return out;
}

/// Diameter (pixels) of the largest inscribed circle: twice the largest
/// distance from a foreground pixel to the background.
inline double largest_inscribed_circle(const Mask& mask) {
  if (mask.empty()) throw EmptyPool("largest_inscribed_circle: mask has no foreground");
  const auto d2 = squared_distance_to_background(mask);
  double best = 0.0;
  for (std::size_t p = 0; p < d2.size(); ++p)
    if (mask.bits[p]) best = std::max(best, d2[p]);
  return 2.0 * std::sqrt(best);
}

namespace detail {

struct Pt {
  std::int64_t x, y;
};

inline std::int64_t cross(const Pt& o, const Pt& a, const Pt& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

// Andrew's monotone chain; collinear points dropped.
inline std::vector<Pt> convex_hull(std::vector<Pt> pts) {
  std::sort(pts.begin(), pts.end(), [](const Pt& a, const Pt& b) { return a.x != b.x ? a.x < b.x : a.y < b.y; });
  if (pts.size() < 3) return pts;
  std::vector<Pt> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

inline Circle circle_from(const Pt& a, const Pt& b) {
  const double cx = 0.5 * double(a.x + b.x), cy = 0.5 * double(a.y + b.y);
  return {cx, cy, 0.5 * std::hypot(double(a.x - b.x), double(a.y - b.y))};
}

inline bool covers(const Circle& c, const Pt& p) {
  return std::hypot(double(p.x) - c.cx, double(p.y) - c.cy) <= c.r * (1.0 + 1e-12) + 1e-9;
}

inline Circle circle_from(const Pt& a, const Pt& b, const Pt& c) {
  const double bx = double(b.x - a.x), by = double(b.y - a.y);
  const double cx = double(c.x - a.x), cy = double(c.y - a.y);
  const double d = 2.0 * (bx * cy - by * cx);
  if (d == 0.0) {
    // collinear: the farthest pair spans the other point
    Circle best = circle_from(a, b);
    for (const Circle& cand : {circle_from(a, c), circle_from(b, c)})
      if (cand.r > best.r) best = cand;
    return best;
  }
  const double b2 = bx * bx + by * by, c2 = cx * cx + cy * cy;
  const double ux = (cy * b2 - by * c2) / d;
  const double uy = (bx * c2 - cx * b2) / d;
  return {double(a.x) + ux, double(a.y) + uy, std::hypot(ux, uy)};
}

}  // namespace detail

/// Exact minimum enclosing circle of the foreground pixel centres (Welzl's
/// incremental algorithm over the convex hull, fixed shuffle seed).
inline Circle minimum_enclosing_circle(const Mask& mask) {
  std::vector<detail::Pt> pts;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(x, y)) pts.push_back({x, y});
  if (pts.empty()) throw EmptyPool("smallest_enclosing_circle: mask has no foreground");
  auto hull = detail::convex_hull(std::move(pts));
  std::mt19937 rng(0x5eed);
  std::shuffle(hull.begin(), hull.end(), rng);
  Circle c{double(hull[0].x), double(hull[0].y), 0.0};
  for (std::size_t i = 1; i < hull.size(); ++i) {
    if (detail::covers(c, hull[i])) continue;
    c = {double(hull[i].x), double(hull[i].y), 0.0};
    for (std::size_t j = 0; j < i; ++j) {
      if (detail::covers(c, hull[j])) continue;
      c = detail::circle_from(hull[i], hull[j]);
      for (std::size_t k = 0; k < j; ++k)
        if (!detail::covers(c, hull[k])) c = detail::circle_from(hull[i], hull[j], hull[k]);
    }
  }
  return c;
}

inline double smallest_enclosing_circle(const Mask& mask) {
  return minimum_enclosing_circle(mask).diameter();
}

inline MeltPoolGeometry extract_geometry(const GrayImage& img, const CropRect& crop, double mm_per_px) {
  if (!(mm_per_px > 0.0)) throw InvalidArgument("extract_geometry: mm_per_px must be positive");
  const Mask bin = binarize_mean(img, crop);
  MeltPoolGeometry g;
  if (bin.empty()) return g;
  const Mask pool = largest_connected_component(bin);
  g.area_px = pool.count();
  g.mpw = largest_inscribed_circle(pool) * mm_per_px;
  g.mpl = smallest_enclosing_circle(pool) * mm_per_px;
  g.valid = true;
  return g;
}

// ---- binary PGM (P5, maxval 255) -------------------------------------------

inline GrayImage read_pgm(std::istream& in) {
  auto token = [&in]() {
    std::string tok;
    char ch = 0;
    while (in.get(ch)) {
      if (ch == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(ch))) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(ch);
    }
    return tok;
  };
  if (token() != "P5") throw InvalidArgument("pgm: expected magic P5");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw InvalidArgument("pgm: malformed header");
  }
  if (maxval != 255) throw InvalidArgument("pgm: only maxval 255 is supported");
  GrayImage img(w, h);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size()))
    throw InvalidArgument("pgm: truncated pixel data");
  return img;
}

inline GrayImage read_pgm_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("pgm: cannot open " + path);
  return read_pgm(in);
}

inline void write_pgm_file(const std::string& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("pgm: cannot write " + path);
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
}

/// Filled ellipse of intensity `fg` on `bg`, centred at (cx, cy) in pixel
/// coordinates (pixel centres sit on integers).
inline GrayImage synthetic_ellipse(int width, int height, double cx, double cy, double a, double b,
                                   std::uint8_t fg = 230, std::uint8_t bg = 20) {
  GrayImage img(width, height, bg);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double u = (x - cx) / a, v = (y - cy) / b;
      if (u * u + v * v <= 1.0) img.at(x, y) = fg;
    }
  return img;
}

}  // namespace dedtwin::vision
