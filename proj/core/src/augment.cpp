#include "cladnet/augment.hpp"

#include <algorithm>
#include <cmath>

namespace cladnet {

std::string to_string(AugmentKind kind) {
  switch (kind) {
    case AugmentKind::kNoise: return "noise";
    case AugmentKind::kZeroMask: return "zero_mask";
    case AugmentKind::kTimeWarp: return "time_warp";
    case AugmentKind::kCropResize: return "crop_resize";
  }
  return "?";
}

AugmentKind augment_kind_from_string(const std::string& s) {
  if (s == "noise") return AugmentKind::kNoise;
  if (s == "zero_mask") return AugmentKind::kZeroMask;
  if (s == "time_warp") return AugmentKind::kTimeWarp;
  if (s == "crop_resize") return AugmentKind::kCropResize;
  throw std::invalid_argument("unknown augmentation kind '" + s + "'");
}

namespace {

// Linear interpolation of all channels at fractional row position.
void sample_at(const Tensor& x, double pos, std::size_t row_out, Tensor& out) {
  const std::size_t len = x.rows(), d = x.cols();
  pos = std::clamp(pos, 0.0, static_cast<double>(len - 1));
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, len - 1);
  const double frac = pos - static_cast<double>(lo);
  for (std::size_t k = 0; k < d; ++k) {
    out(row_out, k) = (1.0 - frac) * x(lo, k) + frac * x(hi, k);
  }
}

}  // namespace

Tensor random_noise(const Tensor& x, double sigma, std::mt19937_64& rng) {
  if (sigma < 0.0) throw std::invalid_argument("noise sigma must be >= 0");
  Tensor out = x;
  if (sigma == 0.0) return out;
  std::normal_distribution<double> noise(0.0, sigma);
  for (double& v : out.values()) v += noise(rng);
  return out;
}

Tensor zero_masking(const Tensor& x, double fraction, std::mt19937_64& rng) {
  if (fraction < 0.0 || fraction >= 1.0)
    throw std::invalid_argument("mask fraction must be in [0, 1)");
  Tensor out = x;
  const std::size_t len = x.rows(), d = x.cols();
  const auto span =
      static_cast<std::size_t>(std::llround(fraction * static_cast<double>(len)));
  if (span == 0) return out;
  std::uniform_int_distribution<std::size_t> start_dist(0, len - span);
  const std::size_t start = start_dist(rng);
  for (std::size_t t = start; t < start + span; ++t)
    for (std::size_t k = 0; k < d; ++k) out(t, k) = 0.0;
  return out;
}

Tensor time_warp(const Tensor& x, std::size_t knots, double strength, std::mt19937_64& rng) {
  if (knots == 0) throw std::invalid_argument("time_warp needs at least 1 knot");
  if (strength <= 0.0) throw std::invalid_argument("warp strength must be > 0");
  const std::size_t len = x.rows();
  if (len < 2) return x;

  // Control grid: fixed endpoints, jittered interior sources. Offsets stay
  // below half the gap so the map is strictly increasing.
  const std::size_t points = knots + 2;
  const double gap = static_cast<double>(len - 1) / static_cast<double>(knots + 1);
  std::vector<double> grid(points), source(points);
  std::uniform_real_distribution<double> jitter(-0.45, 0.45);
  for (std::size_t j = 0; j < points; ++j) {
    grid[j] = gap * static_cast<double>(j);
    source[j] = grid[j];
    if (j > 0 && j + 1 < points) {
      source[j] += std::min(strength, 1.0) * jitter(rng) * gap;
    }
  }

  Tensor out({len, x.cols()});
  std::size_t seg = 0;
  for (std::size_t t = 0; t < len; ++t) {
    const double pos = static_cast<double>(t);
    while (seg + 2 < points && pos > grid[seg + 1]) ++seg;
    const double frac = (pos - grid[seg]) / (grid[seg + 1] - grid[seg]);
    const double src = source[seg] + frac * (source[seg + 1] - source[seg]);
    sample_at(x, src, t, out);
  }
  return out;
}

Tensor crop_and_resize(const Tensor& x, std::mt19937_64& rng) {
  const std::size_t len = x.rows();
  if (len < 4) throw std::invalid_argument("crop_and_resize needs window length >= 4");
  const std::size_t crop = len / 2;
  std::uniform_int_distribution<std::size_t> start_dist(0, len - crop);
  const std::size_t start = start_dist(rng);

  Tensor out({len, x.cols()});
  const double scale = static_cast<double>(crop - 1) / static_cast<double>(len - 1);
  for (std::size_t t = 0; t < len; ++t) {
    const double src = static_cast<double>(start) + static_cast<double>(t) * scale;
    sample_at(x, src, t, out);
  }
  return out;
}

Tensor apply_augment(const Tensor& x, const AugmentSpec& spec, std::mt19937_64& rng) {
  switch (spec.kind) {
    case AugmentKind::kNoise: return random_noise(x, spec.noise_sigma, rng);
    case AugmentKind::kZeroMask: return zero_masking(x, spec.mask_fraction, rng);
    case AugmentKind::kTimeWarp: return time_warp(x, spec.warp_knots, spec.warp_strength, rng);
    case AugmentKind::kCropResize: return crop_and_resize(x, rng);
  }
  throw std::invalid_argument("unhandled augmentation kind");
}

}  // namespace cladnet
