#pragma once

#include <random>
#include <string>

#include "cladnet/tensor.hpp"

namespace cladnet {

enum class AugmentKind { kNoise, kZeroMask, kTimeWarp, kCropResize };

std::string to_string(AugmentKind kind);
AugmentKind augment_kind_from_string(const std::string& s);

struct AugmentSpec {
  AugmentKind kind = AugmentKind::kCropResize;
  double noise_sigma = 0.1;      // in post-standardization units
  double mask_fraction = 0.25;
  std::size_t warp_knots = 4;
  double warp_strength = 0.2;
};

// All augmentations are pure functions of (input, rng state), keep the
// [len x channels] shape and share their randomness across channels.

Tensor random_noise(const Tensor& x, double sigma, std::mt19937_64& rng);

// Zeroes one contiguous run of round(fraction * len) timesteps.
Tensor zero_masking(const Tensor& x, double fraction, std::mt19937_64& rng);

// Resamples along a piecewise-linear strictly increasing time remapping with
// fixed endpoints; `knots` interior control points are jittered by
// strength * segment_gap.
Tensor time_warp(const Tensor& x, std::size_t knots, double strength, std::mt19937_64& rng);

// Crops a random contiguous half of the window and linearly resizes it back
// to the full length.
Tensor crop_and_resize(const Tensor& x, std::mt19937_64& rng);

Tensor apply_augment(const Tensor& x, const AugmentSpec& spec, std::mt19937_64& rng);

}  // namespace cladnet
