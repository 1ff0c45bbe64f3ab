#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "trackflow/track.hpp"
#include "trackflow/video.hpp"

namespace trackflow {

/// Synthetic benchmark scenes: a smooth random texture with bright Gaussian
/// targets, moved by an analytic map so target trajectories are exact.
///
///   static     no motion
///   translate  constant velocity, 0.2 W and 0.1 H over the sequence
///   sinusoid   figure-eight oscillation (period 50 frames) whose amplitude
///              grows slightly from left to right
///   deform     rotation and scaling about the frame center, both oscillating
enum class SynthPreset { static_scene, translate, sinusoid, deform };

std::string_view to_string(SynthPreset preset);
SynthPreset parse_preset(std::string_view name);

struct SynthConfig {
  SynthPreset preset = SynthPreset::sinusoid;
  int frames = 100;
  int width = 256;
  int height = 256;
  int targets = 3;
  /// Standard deviation of additive per-frame Gaussian noise.
  double noise = 0.005;
  std::uint64_t seed = 1;
};

struct SynthScene {
  VideoSequence video;
  std::vector<Track> references;  // one per target, seeded at frame 0
};

SynthScene generate_synthetic(const SynthConfig& cfg);

/// Where the texture point `p` (its frame-0 position) sits at frame t.
Point2D synth_position(const SynthConfig& cfg, Point2D p, int t);

/// Noise texture smoothed to a few-pixel correlation length, values in
/// roughly [0, 1]. Used by the flow tests as well as the scene generator.
Image smooth_texture(int width, int height, double sigma, std::uint64_t seed);

/// Copy of `img` shifted by integer (dx, dy) with wrap-around fill.
Image shift_wrap(const Image& img, int dx, int dy);

}  // namespace trackflow
