#include "fewshot/datastore/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>

#include "fewshot/error.hpp"
#include "fewshot/rng.hpp"

namespace fewshot::data {

namespace {

using Rgb = std::array<double, 3>;
constexpr double kPi = std::numbers::pi;

// Per-pixel Gaussian noise and per-record brightness jitter.
constexpr double kPixelNoise = 0.06;
constexpr double kBrightnessJitter = 0.06;

Rgb hsv(double h, double s, double v) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  Rgb rgb{};
  switch (static_cast<int>(hp) % 6) {
    case 0: rgb = {c, x, 0}; break;
    case 1: rgb = {x, c, 0}; break;
    case 2: rgb = {0, c, x}; break;
    case 3: rgb = {0, x, c}; break;
    case 4: rgb = {x, 0, c}; break;
    default: rgb = {c, 0, x}; break;
  }
  const double m = v - c;
  for (double& ch : rgb) ch += m;
  return rgb;
}

Rgb mix(const Rgb& a, const Rgb& b, double t) {
  return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
}

double smoothstep_edge(double signed_distance, double softness) {
  return 1.0 / (1.0 + std::exp(-signed_distance / softness));
}

// Class-level parameters; `t` in (0, 1) is spread evenly across classes so
// every dataset covers its primary axis. Classes differ only in structure:
// colours are drawn per record.
struct ClassParams {
  double t = 0.0;
  double a = 0.0, b = 0.0, c = 0.0;
  int count = 1;
};

ClassParams draw_class(Family family, double t, RngStream& rng) {
  ClassParams p;
  p.t = t;
  switch (family) {
    case Family::gratings:
      p.a = t * kPi;                  // orientation
      p.b = rng.uniform(2.0, 6.0);    // cycles per image
      break;
    case Family::blobs:
      p.a = 0.06 + 0.14 * t;          // radius
      p.count = 1 + static_cast<int>(rng.index(3));
      break;
    case Family::checkers:
      p.a = 2.0 + 7.0 * t;            // cells per side
      p.b = rng.uniform(0.0, kPi / 2);  // grid rotation
      break;
    case Family::radial:
      p.a = 1.0 + 5.0 * t;            // ring frequency
      p.b = rng.uniform(0.6, 2.0);    // falloff exponent
      break;
    case Family::spectral_noise:
      p.a = 1.5 + 8.0 * t;            // band centre
      p.b = rng.uniform(0.0, kPi);    // preferred orientation
      p.c = rng.uniform(0.0, 1.0);    // anisotropy
      break;
    case Family::polygons:
      p.count = 3 + static_cast<int>(std::floor(t * 6.0));  // sides
      p.a = rng.uniform(0.55, 1.0);   // inner/outer radius ratio
      break;
  }
  return p;
}

template <typename PixelFn>
Image render(std::size_t side, PixelFn&& pixel) {
  Image img({side, side, 3});
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) {
      const double u = (static_cast<double>(x) + 0.5) / static_cast<double>(side);
      const double v = (static_cast<double>(y) + 0.5) / static_cast<double>(side);
      const Rgb rgb = pixel(u, v);
      for (std::size_t ch = 0; ch < 3; ++ch) img[(y * side + x) * 3 + ch] = rgb[ch];
    }
  }
  return img;
}

Image draw_record(Family family, const ClassParams& p, std::size_t classes, std::size_t side, RngStream& rng) {
  const double spacing = 1.0 / static_cast<double>(classes);
  const Rgb fg = hsv(rng.uniform(), rng.uniform(0.3, 0.9), rng.uniform(0.6, 1.0));
  const Rgb bg = hsv(rng.uniform(), rng.uniform(0.1, 0.7), rng.uniform(0.05, 0.45));
  Image img;
  switch (family) {
    case Family::gratings: {
      const double theta = p.a + rng.normal() * 0.25 * spacing * kPi;
      const double freq = p.b * (1.0 + 0.08 * rng.normal());
      const double phase = rng.uniform(0.0, 2.0 * kPi);
      const double contrast = rng.uniform(0.6, 1.0);
      const double ct = std::cos(theta), st = std::sin(theta);
      img = render(side, [&](double u, double v) {
        const double s = 0.5 + 0.5 * contrast * std::sin(2.0 * kPi * freq * (u * ct + v * st) + phase);
        return mix(bg, fg, s);
      });
      break;
    }
    case Family::blobs: {
      std::vector<std::array<double, 3>> blobs(static_cast<std::size_t>(p.count));
      for (auto& b : blobs) {
        b = {rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), p.a * (1.0 + 0.2 * spacing * rng.normal())};
      }
      img = render(side, [&](double u, double v) {
        double alpha = 0.0;
        for (const auto& b : blobs) {
          const double dist = std::hypot(u - b[0], v - b[1]);
          alpha = std::max(alpha, smoothstep_edge(b[2] - dist, 0.015));
        }
        return mix(bg, fg, alpha);
      });
      break;
    }
    case Family::checkers: {
      const double cells = p.a * (1.0 + 0.2 * spacing * rng.normal());
      const double ox = rng.uniform(), oy = rng.uniform();
      const double rot = p.b + 0.1 * rng.normal();
      const double cr = std::cos(rot), sr = std::sin(rot);
      img = render(side, [&](double u, double v) {
        const double ru = cr * (u - 0.5) - sr * (v - 0.5);
        const double rv = sr * (u - 0.5) + cr * (v - 0.5);
        const long ix = static_cast<long>(std::floor(ru * cells + ox));
        const long iy = static_cast<long>(std::floor(rv * cells + oy));
        return ((ix + iy) & 1) ? fg : bg;
      });
      break;
    }
    case Family::radial: {
      const double cx = rng.uniform(0.3, 0.7), cy = rng.uniform(0.3, 0.7);
      const double freq = p.a * (1.0 + 0.2 * spacing * rng.normal());
      const double reach = rng.uniform(0.6, 0.9);
      const double phase = rng.uniform(0.0, 2.0 * kPi);
      img = render(side, [&](double u, double v) {
        const double rho = std::hypot(u - cx, v - cy);
        const double m = std::pow(std::clamp(rho / reach, 0.0, 1.0), p.b);
        const double ring = 0.5 + 0.5 * std::cos(2.0 * kPi * freq * rho + phase);
        return mix(fg, bg, std::clamp(0.6 * ring + 0.4 * m, 0.0, 1.0));
      });
      break;
    }
    case Family::spectral_noise: {
      constexpr int kWaves = 10;
      std::array<std::array<double, 3>, kWaves> waves{};
      for (auto& w : waves) {
        const double f = p.a * (1.0 + 0.15 * rng.normal());
        const double ang = p.b + (1.0 - p.c) * rng.uniform(-kPi / 2, kPi / 2) + p.c * 0.15 * rng.normal();
        w = {f * std::cos(ang), f * std::sin(ang), rng.uniform(0.0, 2.0 * kPi)};
      }
      img = render(side, [&](double u, double v) {
        double s = 0.0;
        for (const auto& w : waves) s += std::sin(2.0 * kPi * (w[0] * u + w[1] * v) + w[2]);
        s /= std::sqrt(static_cast<double>(kWaves));
        return mix(bg, fg, std::clamp(0.5 + 0.35 * s, 0.0, 1.0));
      });
      break;
    }
    case Family::polygons: {
      const double rot = rng.uniform(0.0, 2.0 * kPi);
      const double radius = rng.uniform(0.28, 0.4);
      const double cx = rng.uniform(0.38, 0.62), cy = rng.uniform(0.38, 0.62);
      const double n = static_cast<double>(p.count);
      img = render(side, [&](double u, double v) {
        const double dx = u - cx, dy = v - cy;
        const double rho = std::hypot(dx, dy);
        double ang = std::atan2(dy, dx) - rot;
        const double sector = 2.0 * kPi / n;
        ang = std::fmod(std::fmod(ang, sector) + sector, sector) - sector / 2.0;
        // Regular n-gon boundary, pinched towards the star ratio mid-edge.
        const double edge = radius * std::cos(kPi / n) / std::cos(ang);
        const double pinch = 1.0 - (1.0 - p.a) * (1.0 - std::abs(ang) / (sector / 2.0));
        return mix(bg, fg, smoothstep_edge(edge * pinch - rho, 0.012));
      });
      break;
    }
  }
  const double brightness = kBrightnessJitter * rng.normal();
  for (double& v : img.data()) v = std::clamp(v + brightness + kPixelNoise * rng.normal(), 0.0, 1.0);
  return img;
}

}  // namespace

const char* family_name(Family family) {
  switch (family) {
    case Family::gratings: return "gratings";
    case Family::blobs: return "blobs";
    case Family::checkers: return "checkers";
    case Family::radial: return "radial";
    case Family::spectral_noise: return "spectral-noise";
    case Family::polygons: return "polygons";
  }
  return "?";
}

MetaDataset synth_meta_dataset(const SynthSpec& spec, Role role) {
  if (spec.domains < 1) throw ConfigError("synthetic meta-dataset needs at least 1 domain");
  if (spec.classes < 2) throw ConfigError("synthetic datasets need at least 2 classes");
  if (spec.images_per_class < 21) {
    throw ConfigError("synthetic datasets need at least 21 images per class (k=1 plus 20 queries)");
  }
  if (spec.image_side < 16) throw ConfigError("synthetic image side must be at least 16");

  MetaDataset meta{{}, role};
  for (std::size_t d = 0; d < spec.domains; ++d) {
    const auto family = static_cast<Family>((spec.family_offset + d) % kFamilyCount);
    RngStream rng(spec.seed, {"synth", spec.id_prefix, d});

    std::vector<std::size_t> slot(spec.classes);
    std::iota(slot.begin(), slot.end(), 0);
    RngStream spread = rng.child("spread");
    spread.shuffle(std::span(slot));

    std::vector<std::string> names;
    std::vector<std::vector<ImageRecord>> records(spec.classes);
    for (std::size_t c = 0; c < spec.classes; ++c) {
      RngStream class_rng = rng.child("class", c);
      const double t = (static_cast<double>(slot[c]) + class_rng.uniform(0.2, 0.8)) /
                       static_cast<double>(spec.classes);
      const ClassParams params = draw_class(family, t, class_rng);
      names.push_back("class_" + std::to_string(c));
      for (std::size_t i = 0; i < spec.images_per_class; ++i) {
        RngStream rec_rng = rng.child("record", c * spec.images_per_class + i);
        auto image = std::make_shared<const Image>(draw_record(family, params, spec.classes, spec.image_side, rec_rng));
        records[c].push_back({std::move(image), c, {}});
      }
    }
    const std::string id = spec.id_prefix + "-" + std::to_string(d) + "-" + family_name(family);
    meta.datasets.emplace_back(id, family_name(family), std::move(names), std::move(records));
  }
  return meta;
}

}  // namespace fewshot::data
