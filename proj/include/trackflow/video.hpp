#pragma once

// Image sequences and the repo-wide coordinate convention.
//
// Coordinates are (x = column, y = row) with the origin at the center of the
// top-left pixel; x grows rightward and y grows downward. Pixel (c, r) is
// sampled exactly at Point2D{c, r}.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace trackflow {

struct Point2D {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2D&, const Point2D&) = default;
};

/// Row-major single-channel float grid.
class Image {
 public:
  Image() = default;
  Image(int width, int height, float fill = 0.0f)
      : width_(width), height_(height),
        data_(static_cast<std::size_t>(width) * height, fill) {}
  Image(int width, int height, std::vector<float> data);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }

  float& at(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  float at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }

  const float* row(int y) const { return data_.data() + static_cast<std::size_t>(y) * width_; }
  float* row(int y) { return data_.data() + static_cast<std::size_t>(y) * width_; }

  std::span<const float> pixels() const { return data_; }
  std::span<float> pixels() { return data_; }

  /// Bilinear sample with coordinates clamped to [0, W-1] x [0, H-1].
  double sample_bilinear(double x, double y) const;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<float> data_;
};

struct Frame {
  int index = 0;
  Image pixels;
};

enum class SequenceKind { tiff_stack, image_dir };

struct LoadOptions {
  /// Channel to keep for multi-channel input, in RGB order (0 = red).
  /// Unset means the unweighted mean of all channels.
  std::optional<int> channel;
};

/// Ordered grayscale frames of one size, intensities normalized to [0, 1].
/// Immutable after construction.
class VideoSequence {
 public:
  /// Validates T >= 2 and uniform frame size. Frames are re-indexed 0..T-1.
  VideoSequence(std::vector<Image> frames, std::string source_path, int bit_depth);

  int width() const { return width_; }
  int height() const { return height_; }
  int frame_count() const { return static_cast<int>(frames_.size()); }
  int bit_depth() const { return bit_depth_; }
  const std::string& source_path() const { return source_path_; }

  const Frame& frame(int t) const { return frames_.at(static_cast<std::size_t>(t)); }
  const std::vector<Frame>& frames() const { return frames_; }

 private:
  int width_ = 0;
  int height_ = 0;
  int bit_depth_ = 8;
  std::string source_path_;
  std::vector<Frame> frames_;
};

VideoSequence load_sequence(const std::filesystem::path& path, SequenceKind kind,
                            const LoadOptions& options = {});

/// Picks tiff_stack for regular files and image_dir for directories.
VideoSequence load_sequence(const std::filesystem::path& path, const LoadOptions& options = {});

/// Bilinear resample of a single image (pixel-center aligned).
Image resize_bilinear(const Image& src, int new_width, int new_height);

VideoSequence rescale_sequence(const VideoSequence& video, int new_width, int new_height);

struct Size2D {
  int width = 0;
  int height = 0;
};

std::vector<Point2D> rescale_points(std::span<const Point2D> points, Size2D from, Size2D to);

/// Writes frames as a 16-bit multi-page TIFF (values scaled by 65535).
void write_tiff_stack(const VideoSequence& video, const std::filesystem::path& path);

/// 8-bit PNG encoding of one frame, for display.
std::vector<unsigned char> encode_png(const Image& frame);

/// Per-frame histogram equalization on a 256-bin grid.
Image equalize_histogram(const Image& frame);

}  // namespace trackflow
