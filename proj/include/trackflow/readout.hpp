#pragma once

#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "trackflow/track.hpp"
#include "trackflow/video.hpp"

namespace trackflow {

enum class SampleMode { nearest, bilinear };

/// Intensity along a track. Frames where the point is invisible or outside
/// the image are marked invalid and hold NaN.
struct SignalTrace {
  std::string track_id;
  std::vector<double> values;
  std::vector<bool> valid;
};

/// Nearest mode rounds half away from zero and reads one pixel.
SignalTrace sample_intensity(const VideoSequence& video, const Track& track, SampleMode mode = SampleMode::nearest);

/// (F(t) - F0) / F0, F0 the mean of the first `baseline_frames` values, which
/// must all be valid. Invalid frames stay NaN.
std::vector<double> dff(const SignalTrace& trace, int baseline_frames = 11);

/// (x - mean) / sd over the finite entries; population standard deviation.
/// Non-finite entries pass through unchanged.
std::vector<double> zscore(std::span<const double> values);

/// Columns: frame, raw, dff, zscore, valid.
void write_trace_csv(std::ostream& out, const SignalTrace& trace, std::span<const double> dff_values,
                     std::span<const double> z_values);

}  // namespace trackflow
