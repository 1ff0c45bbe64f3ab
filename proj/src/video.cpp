#include "trackflow/video.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "trackflow/error.hpp"

namespace trackflow {

namespace fs = std::filesystem;

Image::Image(int width, int height, std::vector<float> data)
    : width_(width), height_(height), data_(std::move(data)) {
  if (data_.size() != static_cast<std::size_t>(width) * height) {
    throw Error(ErrorCode::DimensionMismatch, "image buffer does not match its dimensions");
  }
}

double Image::sample_bilinear(double x, double y) const {
  x = std::clamp(x, 0.0, static_cast<double>(width_ - 1));
  y = std::clamp(y, 0.0, static_cast<double>(height_ - 1));
  const int x0 = std::min(static_cast<int>(x), std::max(width_ - 2, 0));
  const int y0 = std::min(static_cast<int>(y), std::max(height_ - 2, 0));
  const int x1 = std::min(x0 + 1, width_ - 1);
  const int y1 = std::min(y0 + 1, height_ - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = (1.0 - fx) * at(x0, y0) + fx * at(x1, y0);
  const double bottom = (1.0 - fx) * at(x0, y1) + fx * at(x1, y1);
  return (1.0 - fy) * top + fy * bottom;
}

VideoSequence::VideoSequence(std::vector<Image> frames, std::string source_path, int bit_depth)
    : bit_depth_(bit_depth), source_path_(std::move(source_path)) {
  if (frames.size() < 2) {
    throw Error(ErrorCode::TooShort, "sequence needs at least 2 frames, got " +
                                         std::to_string(frames.size()));
  }
  if (bit_depth != 8 && bit_depth != 16) {
    throw Error(ErrorCode::UnsupportedDepth, "bit depth " + std::to_string(bit_depth));
  }
  width_ = frames.front().width();
  height_ = frames.front().height();
  frames_.reserve(frames.size());
  for (std::size_t t = 0; t < frames.size(); ++t) {
    if (frames[t].width() != width_ || frames[t].height() != height_) {
      throw Error(ErrorCode::DimensionMismatch,
                  "frame " + std::to_string(t) + " is " + std::to_string(frames[t].width()) + "x" +
                      std::to_string(frames[t].height()) + ", expected " +
                      std::to_string(width_) + "x" + std::to_string(height_));
    }
    frames_.push_back(Frame{static_cast<int>(t), std::move(frames[t])});
  }
}

namespace {

// Raw frame before normalization: luminance as float in source units.
struct RawFrame {
  cv::Mat gray;  // CV_32F
  int depth_bits;
};

RawFrame to_luminance(const cv::Mat& mat, const LoadOptions& options, const std::string& where) {
  int bits = 0;
  switch (mat.depth()) {
    case CV_8U: bits = 8; break;
    case CV_16U: bits = 16; break;
    default:
      throw Error(ErrorCode::UnsupportedDepth, where + ": only 8- and 16-bit images are supported");
  }
  cv::Mat as_float;
  mat.convertTo(as_float, CV_32F);
  const int channels = as_float.channels();
  cv::Mat gray;
  if (channels == 1) {
    gray = as_float;
  } else {
    std::vector<cv::Mat> planes;
    cv::split(as_float, planes);
    // OpenCV stores color as BGR(A); channel indices are exposed in RGB order.
    if (channels >= 3) std::swap(planes[0], planes[2]);
    if (options.channel) {
      if (*options.channel < 0 || *options.channel >= channels) {
        throw Error(ErrorCode::BadConfig, where + ": channel index " +
                                              std::to_string(*options.channel) + " out of range");
      }
      gray = planes[static_cast<std::size_t>(*options.channel)];
    } else {
      gray = cv::Mat::zeros(as_float.size(), CV_32F);
      for (const auto& p : planes) gray += p;
      gray /= static_cast<double>(channels);
    }
  }
  return {gray.clone(), bits};
}

VideoSequence normalize(std::vector<RawFrame> raw, const std::string& source) {
  if (raw.size() < 2) {
    throw Error(ErrorCode::TooShort, source + ": sequence needs at least 2 frames, got " +
                                         std::to_string(raw.size()));
  }
  int bits = raw.front().depth_bits;
  for (const auto& r : raw) {
    if (r.depth_bits != bits) {
      throw Error(ErrorCode::UnsupportedDepth, source + ": mixed bit depths in one sequence");
    }
  }
  const cv::Size size = raw.front().gray.size();
  for (std::size_t t = 0; t < raw.size(); ++t) {
    if (raw[t].gray.size() != size) {
      throw Error(ErrorCode::DimensionMismatch,
                  source + ": frame " + std::to_string(t) + " is " +
                      std::to_string(raw[t].gray.cols) + "x" + std::to_string(raw[t].gray.rows) +
                      ", expected " + std::to_string(size.width) + "x" +
                      std::to_string(size.height));
    }
  }

  double scale = 255.0;
  if (bits == 16) {
    double seq_max = 0.0;
    for (const auto& r : raw) {
      double mx = 0.0;
      cv::minMaxLoc(r.gray, nullptr, &mx);
      seq_max = std::max(seq_max, mx);
    }
    scale = seq_max > 0.0 ? seq_max : 1.0;
  }

  std::vector<Image> frames;
  frames.reserve(raw.size());
  for (auto& r : raw) {
    Image img(size.width, size.height);
    for (int y = 0; y < size.height; ++y) {
      const float* src = r.gray.ptr<float>(y);
      float* dst = img.row(y);
      for (int x = 0; x < size.width; ++x) {
        dst[x] = static_cast<float>(std::clamp(src[x] / scale, 0.0, 1.0));
      }
    }
    frames.push_back(std::move(img));
    r.gray.release();
  }
  return VideoSequence(std::move(frames), source, bits);
}

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".pgm" || ext == ".ppm" || ext == ".tif" || ext == ".tiff" ||
         ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

}  // namespace

VideoSequence load_sequence(const fs::path& path, SequenceKind kind, const LoadOptions& options) {
  if (!fs::exists(path)) {
    throw Error(ErrorCode::NotFound, path.string() + ": no such file or directory");
  }
  std::vector<RawFrame> raw;
  if (kind == SequenceKind::tiff_stack) {
    std::vector<cv::Mat> pages;
    if (!cv::imreadmulti(path.string(), pages, cv::IMREAD_ANYDEPTH | cv::IMREAD_ANYCOLOR) ||
        pages.empty()) {
      throw Error(ErrorCode::IoError, path.string() + ": could not decode image stack");
    }
    raw.reserve(pages.size());
    for (std::size_t i = 0; i < pages.size(); ++i) {
      raw.push_back(to_luminance(pages[i], options, path.string() + "[" + std::to_string(i) + "]"));
    }
  } else {
    if (!fs::is_directory(path)) {
      throw Error(ErrorCode::NotFound, path.string() + ": not a directory");
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      cv::Mat m = cv::imread(f.string(), cv::IMREAD_ANYDEPTH | cv::IMREAD_ANYCOLOR);
      if (m.empty()) throw Error(ErrorCode::IoError, f.string() + ": could not decode image");
      raw.push_back(to_luminance(m, options, f.string()));
    }
  }
  return normalize(std::move(raw), path.string());
}

VideoSequence load_sequence(const fs::path& path, const LoadOptions& options) {
  if (!fs::exists(path)) {
    throw Error(ErrorCode::NotFound, path.string() + ": no such file or directory");
  }
  return load_sequence(path, fs::is_directory(path) ? SequenceKind::image_dir : SequenceKind::tiff_stack,
                       options);
}

Image resize_bilinear(const Image& src, int new_width, int new_height) {
  if (new_width < 2 || new_height < 2) {
    throw Error(ErrorCode::BadSize, "target size must be at least 2x2");
  }
  Image dst(new_width, new_height);
  const double sx = static_cast<double>(src.width()) / new_width;
  const double sy = static_cast<double>(src.height()) / new_height;
  for (int y = 0; y < new_height; ++y) {
    const double src_y = (y + 0.5) * sy - 0.5;
    float* out = dst.row(y);
    for (int x = 0; x < new_width; ++x) {
      out[x] = static_cast<float>(src.sample_bilinear((x + 0.5) * sx - 0.5, src_y));
    }
  }
  return dst;
}

VideoSequence rescale_sequence(const VideoSequence& video, int new_width, int new_height) {
  if (new_width < 2 || new_height < 2) {
    throw Error(ErrorCode::BadSize, "target size must be at least 2x2");
  }
  std::vector<Image> frames;
  frames.reserve(static_cast<std::size_t>(video.frame_count()));
  for (const auto& f : video.frames()) frames.push_back(resize_bilinear(f.pixels, new_width, new_height));
  return VideoSequence(std::move(frames), video.source_path(), video.bit_depth());
}

std::vector<Point2D> rescale_points(std::span<const Point2D> points, Size2D from, Size2D to) {
  const double sx = static_cast<double>(to.width) / from.width;
  const double sy = static_cast<double>(to.height) / from.height;
  std::vector<Point2D> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back({p.x * sx, p.y * sy});
  return out;
}

namespace {

cv::Mat to_mat(const Image& img, int type, double scale) {
  cv::Mat m(img.height(), img.width(), type);
  for (int y = 0; y < img.height(); ++y) {
    const float* src = img.row(y);
    for (int x = 0; x < img.width(); ++x) {
      const double v = std::clamp(static_cast<double>(src[x]), 0.0, 1.0) * scale + 0.5;
      if (type == CV_16U) {
        m.at<std::uint16_t>(y, x) = static_cast<std::uint16_t>(v);
      } else {
        m.at<std::uint8_t>(y, x) = static_cast<std::uint8_t>(v);
      }
    }
  }
  return m;
}

}  // namespace

void write_tiff_stack(const VideoSequence& video, const fs::path& path) {
  std::vector<cv::Mat> pages;
  pages.reserve(static_cast<std::size_t>(video.frame_count()));
  for (const auto& f : video.frames()) pages.push_back(to_mat(f.pixels, CV_16U, 65535.0));
  if (!cv::imwritemulti(path.string(), pages)) {
    throw Error(ErrorCode::IoError, path.string() + ": could not write TIFF stack");
  }
}

std::vector<unsigned char> encode_png(const Image& frame) {
  std::vector<unsigned char> buf;
  if (!cv::imencode(".png", to_mat(frame, CV_8U, 255.0), buf)) {
    throw Error(ErrorCode::IoError, "PNG encoding failed");
  }
  return buf;
}

Image equalize_histogram(const Image& frame) {
  cv::Mat gray = to_mat(frame, CV_8U, 255.0);
  cv::Mat eq;
  cv::equalizeHist(gray, eq);
  Image out(frame.width(), frame.height());
  for (int y = 0; y < frame.height(); ++y) {
    for (int x = 0; x < frame.width(); ++x) out.at(x, y) = eq.at<std::uint8_t>(y, x) / 255.0f;
  }
  return out;
}

}  // namespace trackflow
