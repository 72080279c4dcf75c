#pragma once

// Deterministic handwritten-digit lookalike corpus written in genuine IDX
// files; the stand-in used when no real MNIST copy is available
// (QNTK_MNIST_DIR unset).
//
// Each example is a digit skeleton under a random affine warp plus smooth
// wave deformations, rendered through a distance falloff at 28x28. Two extra
// mechanisms shape the corpus like real handwriting data:
//   - organic examples are re-drawn until they keep a minimum separability
//     floor from earlier examples of their own and their partner digit, and
//   - every fourth example is a "twin": a parameter blend toward a recent
//     example of the same digit whose blend factor is bisected until the
//     rendered pair hits a target separability A (2k)^{-0.43}.
// The twins give the dataset the dense near-duplicate tail real digits
// have, so its separability delta(n) follows a clean power law.

#include "qntk/rng.hpp"

#include <unistd.h>

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace testsupport {

struct Point {
  double x, y;
};

// Sampled skeleton strokes per digit, glyph frame 28x28, y down.
inline std::vector<Point> digit_skeleton(int digit) {
  std::vector<Point> pts;
  auto line = [&](Point a, Point b, int samples = 60) {
    for (int k = 0; k <= samples; ++k) {
      const double t = static_cast<double>(k) / samples;
      pts.push_back({a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)});
    }
  };
  auto arc = [&](Point c, double rx, double ry, double a0, double a1, int samples = 90) {
    for (int k = 0; k <= samples; ++k) {
      const double t = a0 + (a1 - a0) * static_cast<double>(k) / samples;
      pts.push_back({c.x + rx * std::cos(t), c.y + ry * std::sin(t)});
    }
  };
  const double tau = 6.283185307179586;
  switch (digit) {
    case 0: arc({14, 14}, 5.0, 7.5, 0, tau); break;
    case 1: line({14.5, 6}, {14.5, 21.5}); line({14.5, 6}, {11.5, 9}); break;
    case 2:
      arc({14, 10}, 4.5, 4.0, -3.3, 0.6);
      line({17.8, 11.5}, {10, 21});
      line({10, 21}, {18.5, 21});
      break;
    case 3:
      arc({13.5, 10}, 4.2, 3.8, -2.6, 1.4);
      arc({13.5, 17.7}, 4.6, 4.2, -1.4, 2.6);
      break;
    case 4: line({16.5, 6}, {9.5, 16}); line({9.5, 16}, {19.5, 16}); line({16.5, 6}, {16.5, 22}); break;
    case 5:
      line({17.5, 7}, {10.5, 7});
      line({10.5, 7}, {10.5, 13});
      arc({13.8, 17}, 4.5, 4.4, -1.9, 1.9);
      break;
    case 6:
      line({16.5, 6.5}, {11.8, 14.5});
      arc({14, 17.5}, 4.2, 4.2, 0, tau);
      break;
    case 7: line({10, 7}, {18.5, 7}); line({18.5, 7}, {12.5, 21.5}); break;
    case 8: arc({14, 10}, 3.7, 3.6, 0, tau); arc({14, 18}, 4.3, 4.2, 0, tau); break;
    case 9:
      arc({13.8, 10.5}, 3.9, 3.9, 0, tau);
      line({17.6, 11}, {16.2, 21.5});
      break;
    default: throw std::invalid_argument("digit_skeleton: digit outside 0..9");
  }
  return pts;
}

inline constexpr int kWaves = 3;
inline constexpr double kSeparabilityFloor = 0.15;   // organic examples
inline constexpr double kTwinAmplitude = 0.33;       // target = A (2k)^{-0.43}
inline constexpr double kTwinExponent = 0.43;

struct GlyphParams {
  double rot, sx, sy, shear, tx, ty, width, gain;
  std::array<std::array<double, 3>, kWaves> warp_x, warp_y;  // amp, freq, phase
};

inline GlyphParams draw_glyph_params(qntk::CounterRng& rng) {
  GlyphParams p;
  p.rot = rng.uniform(-0.30, 0.30);
  p.sx = rng.uniform(0.75, 1.25);
  p.sy = rng.uniform(0.75, 1.25);
  p.shear = rng.uniform(-0.22, 0.22);
  p.tx = rng.uniform(-2.6, 2.6);
  p.ty = rng.uniform(-2.6, 2.6);
  p.width = rng.uniform(0.95, 2.0);
  p.gain = rng.uniform(0.7, 1.0);
  for (int k = 0; k < kWaves; ++k) {
    p.warp_x[k] = {rng.uniform(-1.0, 1.0), rng.uniform(0.15, 0.55), rng.uniform(0.0, 6.28)};
    p.warp_y[k] = {rng.uniform(-1.0, 1.0), rng.uniform(0.15, 0.55), rng.uniform(0.0, 6.28)};
  }
  return p;
}

inline GlyphParams blend_glyph_params(const GlyphParams& base, const GlyphParams& fresh,
                                      double t) {
  auto mix = [t](double a, double b) { return a + t * (b - a); };
  GlyphParams p;
  p.rot = mix(base.rot, fresh.rot);
  p.sx = mix(base.sx, fresh.sx);
  p.sy = mix(base.sy, fresh.sy);
  p.shear = mix(base.shear, fresh.shear);
  p.tx = mix(base.tx, fresh.tx);
  p.ty = mix(base.ty, fresh.ty);
  p.width = mix(base.width, fresh.width);
  p.gain = mix(base.gain, fresh.gain);
  for (int k = 0; k < kWaves; ++k)
    for (int c = 0; c < 3; ++c) {
      p.warp_x[k][c] = mix(base.warp_x[k][c], fresh.warp_x[k][c]);
      p.warp_y[k][c] = mix(base.warp_y[k][c], fresh.warp_y[k][c]);
    }
  return p;
}

inline std::array<std::uint8_t, 784> render_digit(int digit, const GlyphParams& p) {
  const double cr = std::cos(p.rot), sr = std::sin(p.rot);
  std::array<double, 784> dist2;
  dist2.fill(1e30);

  for (const Point& s : digit_skeleton(digit)) {
    double px_g = s.x, py_g = s.y;
    for (int k = 0; k < kWaves; ++k) {
      px_g += p.warp_x[k][0] * std::sin(p.warp_x[k][1] * s.y + p.warp_x[k][2]);
      py_g += p.warp_y[k][0] * std::sin(p.warp_y[k][1] * s.x + p.warp_y[k][2]);
    }
    const double gx = px_g - 14.0, gy = py_g - 14.0;
    const double wx = p.sx * gx + p.shear * gy;
    const double wy = p.sy * gy;
    const double x = cr * wx - sr * wy + 14.0 + p.tx;
    const double y = sr * wx + cr * wy + 14.0 + p.ty;
    const int px0 = std::max(0, static_cast<int>(std::floor(x - 3 * p.width)));
    const int px1 = std::min(27, static_cast<int>(std::ceil(x + 3 * p.width)));
    const int py0 = std::max(0, static_cast<int>(std::floor(y - 3 * p.width)));
    const int py1 = std::min(27, static_cast<int>(std::ceil(y + 3 * p.width)));
    for (int py = py0; py <= py1; ++py)
      for (int px = px0; px <= px1; ++px) {
        const double dx = px - x, dy = py - y;
        const double d2 = dx * dx + dy * dy;
        auto& cell = dist2[py * 28 + px];
        if (d2 < cell) cell = d2;
      }
  }

  std::array<std::uint8_t, 784> image{};
  for (int k = 0; k < 784; ++k) {
    const double v = p.gain * std::exp(-dist2[k] / (p.width * p.width));
    const int q = static_cast<int>(std::lround(255.0 * v));
    image[k] = static_cast<std::uint8_t>(q < 8 ? 0 : std::min(q, 255));
  }
  return image;
}

namespace corpus_detail {

using UnitImage = std::array<float, 784>;

inline UnitImage unit_image(const std::array<std::uint8_t, 784>& raw) {
  UnitImage u{};
  double norm2 = 0.0;
  for (int k = 0; k < 784; ++k) norm2 += double(raw[k]) * double(raw[k]);
  const double inv = (norm2 > 0.0) ? 1.0 / std::sqrt(norm2) : 0.0;
  for (int k = 0; k < 784; ++k) u[k] = static_cast<float>(raw[k] * inv);
  return u;
}

inline double separability_between(const UnitImage& a, const UnitImage& b) {
  double dot = 0.0;
  for (int k = 0; k < 784; ++k) dot += double(a[k]) * double(b[k]);
  return 1.0 - std::abs(dot);
}

// Partner digit sharing a criterion pair; the separability floor is enforced
// inside these groups (the pairs the experiments load).
inline int partner_digit(int digit) {
  switch (digit) {
    case 0: return 1;
    case 1: return 0;
    case 8: return 9;
    case 9: return 8;
    default: return -1;
  }
}

struct SplitBuilder {
  std::uint64_t seed;
  int per_digit;
  bool shifted;  // mild domain shift for the held-out split
  std::vector<std::vector<std::array<std::uint8_t, 784>>> images;  // [digit][k]
  std::vector<std::vector<GlyphParams>> params;
  std::vector<std::vector<UnitImage>> units;

  explicit SplitBuilder(std::uint64_t split_seed, int count, bool shift = false)
      : seed(split_seed), per_digit(count), shifted(shift), images(10), params(10), units(10) {}

  GlyphParams draw(qntk::CounterRng& rng) const {
    GlyphParams p = draw_glyph_params(rng);
    if (shifted) {
      p.rot += 0.06;
      p.sx *= 1.03;
      p.ty += 0.35;
      p.width *= 1.05;
    }
    return p;
  }

  double min_separability_to_group(int digit, const UnitImage& candidate) const {
    double best = 1.0;
    auto scan = [&](int d) {
      if (d < 0) return;
      for (const UnitImage& prev : units[d])
        best = std::min(best, separability_between(candidate, prev));
    };
    scan(digit);
    scan(partner_digit(digit));
    return best;
  }

  void add(int digit, const GlyphParams& p) {
    images[digit].push_back(render_digit(digit, p));
    params[digit].push_back(p);
    units[digit].push_back(unit_image(images[digit].back()));
  }

  void build_digit(int digit) {
    for (int k = 0; k < per_digit; ++k) {
      const std::uint64_t stream = (static_cast<std::uint64_t>(digit) << 32) |
                                   static_cast<std::uint32_t>(k);
      const bool twin = (k >= 4) && (k % 4 == 0);
      if (twin) {
        add(digit, twin_params(digit, k, stream));
        continue;
      }
      // Organic example: redraw until the separability floor holds.
      for (std::uint64_t attempt = 0;; ++attempt) {
        qntk::CounterRng rng(seed ^ (attempt * 0x9e3779b97f4a7c15ULL), stream);
        const GlyphParams p = draw(rng);
        const UnitImage u = unit_image(render_digit(digit, p));
        if (min_separability_to_group(digit, u) >= kSeparabilityFloor || attempt >= 64) {
          add(digit, p);
          break;
        }
      }
    }
  }

  // Blend toward example k-2 until the rendered pair sits at the target
  // separability A (2k)^{-0.43}; bisection on the blend factor.
  GlyphParams twin_params(int digit, int k, std::uint64_t stream) {
    const double target =
        kTwinAmplitude * std::pow(2.0 * static_cast<double>(k), -kTwinExponent);
    qntk::CounterRng rng(seed ^ 0x7311f5ULL, stream);
    const GlyphParams fresh = draw(rng);
    const GlyphParams& base = params[digit][static_cast<std::size_t>(k - 2)];
    const UnitImage& base_unit = units[digit][static_cast<std::size_t>(k - 2)];
    auto delta_at = [&](double t) {
      const GlyphParams blended = blend_glyph_params(base, fresh, t);
      return separability_between(unit_image(render_digit(digit, blended)), base_unit);
    };
    double lo = 0.004, hi = 0.95;
    if (delta_at(hi) <= target) return blend_glyph_params(base, fresh, hi);
    if (delta_at(lo) >= target) return blend_glyph_params(base, fresh, lo);
    for (int it = 0; it < 22; ++it) {
      const double mid = 0.5 * (lo + hi);
      (delta_at(mid) < target ? lo : hi) = mid;
    }
    return blend_glyph_params(base, fresh, 0.5 * (lo + hi));
  }
};

}  // namespace corpus_detail

inline void write_u32_be(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_idx_pair(const std::filesystem::path& image_path,
                           const std::filesystem::path& label_path,
                           const std::vector<std::array<std::uint8_t, 784>>& images,
                           const std::vector<std::uint8_t>& labels) {
  std::ofstream img(image_path, std::ios::binary);
  if (!img) throw std::runtime_error("cannot open " + image_path.string());
  write_u32_be(img, 2051);
  write_u32_be(img, static_cast<std::uint32_t>(images.size()));
  write_u32_be(img, 28);
  write_u32_be(img, 28);
  for (const auto& image : images)
    img.write(reinterpret_cast<const char*>(image.data()), 784);

  std::ofstream lab(label_path, std::ios::binary);
  if (!lab) throw std::runtime_error("cannot open " + label_path.string());
  write_u32_be(lab, 2049);
  write_u32_be(lab, static_cast<std::uint32_t>(labels.size()));
  lab.write(reinterpret_cast<const char*>(labels.data()),
            static_cast<std::streamsize>(labels.size()));
}

// Writes train/t10k IDX pairs with `per_digit` examples of every digit,
// cycling 0..9 so any digit pair alternates classes. Reuses existing files
// (the corpus is a pure function of the seed).
inline void generate_digit_corpus(const std::filesystem::path& dir, int train_per_digit,
                                  int test_per_digit, std::uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  if (fs::exists(dir / "train-images-idx3-ubyte") && fs::exists(dir / "t10k-images-idx3-ubyte"))
    return;
  auto make_split = [&](int per_digit, std::uint64_t salt, const char* img_name,
                        const char* lab_name) {
    corpus_detail::SplitBuilder builder(seed ^ salt, per_digit, salt == 0x7e57);
    for (int digit = 0; digit < 10; ++digit) builder.build_digit(digit);
    std::vector<std::array<std::uint8_t, 784>> images;
    std::vector<std::uint8_t> labels;
    images.reserve(static_cast<std::size_t>(per_digit) * 10);
    for (int k = 0; k < per_digit; ++k)
      for (int digit = 0; digit < 10; ++digit) {
        images.push_back(builder.images[digit][static_cast<std::size_t>(k)]);
        labels.push_back(static_cast<std::uint8_t>(digit));
      }
    // write-then-rename so concurrent test binaries never see partial files
    const auto pid_suffix = ".tmp" + std::to_string(::getpid());
    write_idx_pair(dir / (std::string(img_name) + pid_suffix),
                   dir / (std::string(lab_name) + pid_suffix), images, labels);
    fs::rename(dir / (img_name + pid_suffix), dir / img_name);
    fs::rename(dir / (lab_name + pid_suffix), dir / lab_name);
  };
  make_split(train_per_digit, 0x7261, "train-images-idx3-ubyte", "train-labels-idx1-ubyte");
  make_split(test_per_digit, 0x7e57, "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte");
}

}  // namespace testsupport
