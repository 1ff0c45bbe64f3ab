#include "trackflow/flow.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <thread>

#include "trackflow/error.hpp"

namespace trackflow {

void FlowConfig::validate() const {
  if (patch_size < 2) throw Error(ErrorCode::BadConfig, "patch_size must be >= 2");
  if (patch_stride < 1 || patch_stride > patch_size) {
    throw Error(ErrorCode::BadConfig, "patch_stride must be in [1, patch_size]");
  }
  if (pyramid_levels && *pyramid_levels < 1) {
    throw Error(ErrorCode::BadConfig, "pyramid_levels must be >= 1");
  }
  if (gradient_descent_iters < 0) throw Error(ErrorCode::BadConfig, "gradient_descent_iters must be >= 0");
  if (refinement_iters < 0) throw Error(ErrorCode::BadConfig, "refinement_iters must be >= 0");
  if (!(refinement_data_weight > 0.0f)) {
    throw Error(ErrorCode::BadConfig, "refinement_data_weight must be > 0");
  }
  if (search_radius < 0) throw Error(ErrorCode::BadConfig, "search_radius must be >= 0");
}

int FlowConfig::levels_for(int width, int height) const {
  if (pyramid_levels) return *pyramid_levels;
  const double ratio = std::min(width, height) / 16.0;
  const int levels = ratio >= 1.0 ? static_cast<int>(std::floor(std::log2(ratio))) : 1;
  return std::clamp(levels, 1, 6);
}

namespace {

// Intensity differences are weighted in 8-bit units during densification.
constexpr float kDensifyScale = 255.0f;

Image downsample2(const Image& src) {
  const int w = std::max(1, (src.width() + 1) / 2);
  const int h = std::max(1, (src.height() + 1) / 2);
  Image dst(w, h);
  for (int y = 0; y < h; ++y) {
    const int y0 = std::min(2 * y, src.height() - 1);
    const int y1 = std::min(2 * y + 1, src.height() - 1);
    for (int x = 0; x < w; ++x) {
      const int x0 = std::min(2 * x, src.width() - 1);
      const int x1 = std::min(2 * x + 1, src.width() - 1);
      dst.at(x, y) = 0.25f * (src.at(x0, y0) + src.at(x1, y0) + src.at(x0, y1) + src.at(x1, y1));
    }
  }
  return dst;
}

void gradients(const Image& img, Image& gx, Image& gy) {
  const int w = img.width();
  const int h = img.height();
  gx = Image(w, h);
  gy = Image(w, h);
  for (int y = 0; y < h; ++y) {
    const int ym = std::max(y - 1, 0);
    const int yp = std::min(y + 1, h - 1);
    const float ny = static_cast<float>(yp - ym);
    for (int x = 0; x < w; ++x) {
      const int xm = std::max(x - 1, 0);
      const int xp = std::min(x + 1, w - 1);
      const float nx = static_cast<float>(xp - xm);
      gx.at(x, y) = nx > 0 ? (img.at(xp, y) - img.at(xm, y)) / nx : 0.0f;
      gy.at(x, y) = ny > 0 ? (img.at(x, yp) - img.at(x, ym)) / ny : 0.0f;
    }
  }
}

// Top-left corners of a patch grid that covers every pixel of a length-n axis.
std::vector<int> patch_origins(int n, int size, int stride) {
  std::vector<int> out;
  if (n <= size) {
    out.push_back(0);
    return out;
  }
  for (int p = 0; p + size <= n; p += stride) out.push_back(p);
  if (out.back() + size < n) out.push_back(n - size);
  return out;
}

// Bilinear read of a size x size block of `img` whose top-left sits at
// (ox + fx, oy + fy); out-of-range reads clamp to the border.
void read_patch(const Image& img, int ox, int oy, float fx, float fy, int size, float* out) {
  const int w = img.width();
  const int h = img.height();
  const float w00 = (1 - fx) * (1 - fy);
  const float w10 = fx * (1 - fy);
  const float w01 = (1 - fx) * fy;
  const float w11 = fx * fy;
  if (ox >= 0 && oy >= 0 && ox + size < w && oy + size < h) {
    for (int i = 0; i < size; ++i) {
      const float* r0 = img.row(oy + i) + ox;
      const float* r1 = img.row(oy + i + 1) + ox;
      for (int j = 0; j < size; ++j) {
        out[i * size + j] = w00 * r0[j] + w10 * r0[j + 1] + w01 * r1[j] + w11 * r1[j + 1];
      }
    }
    return;
  }
  for (int i = 0; i < size; ++i) {
    const int y0 = std::clamp(oy + i, 0, h - 1);
    const int y1 = std::clamp(oy + i + 1, 0, h - 1);
    for (int j = 0; j < size; ++j) {
      const int x0 = std::clamp(ox + j, 0, w - 1);
      const int x1 = std::clamp(ox + j + 1, 0, w - 1);
      out[i * size + j] = w00 * img.at(x0, y0) + w10 * img.at(x1, y0) + w01 * img.at(x0, y1) +
                          w11 * img.at(x1, y1);
    }
  }
}

struct SparseFlow {
  std::vector<int> xs;
  std::vector<int> ys;
  int size = 0;
  std::vector<float> ux;  // ys.size() x xs.size()
  std::vector<float> uy;
};

// Per-pixel average of overlapping patch displacements, each weighted by the
// inverse photometric error it produces at that pixel.
void densify(const SparseFlow& sparse, const Image& i0, const Image& i1, Image& ux, Image& uy) {
  const int w = i0.width();
  const int h = i0.height();
  const int size = sparse.size;
  Image sum_x(w, h), sum_y(w, h), sum_w(w, h);
  std::vector<float> warped(static_cast<std::size_t>(size) * size);
  for (std::size_t py = 0; py < sparse.ys.size(); ++py) {
    for (std::size_t px = 0; px < sparse.xs.size(); ++px) {
      const std::size_t idx = py * sparse.xs.size() + px;
      const float vx = sparse.ux[idx];
      const float vy = sparse.uy[idx];
      const int ox = sparse.xs[px];
      const int oy = sparse.ys[py];
      const float sx = ox + vx;
      const float sy = oy + vy;
      const int bx = static_cast<int>(std::floor(sx));
      const int by = static_cast<int>(std::floor(sy));
      read_patch(i1, bx, by, sx - bx, sy - by, size, warped.data());
      for (int i = 0; i < size; ++i) {
        const int y = oy + i;
        if (y >= h) break;
        const float* t = i0.row(y) + ox;
        float* acc_x = sum_x.row(y) + ox;
        float* acc_y = sum_y.row(y) + ox;
        float* acc_w = sum_w.row(y) + ox;
        const int n = std::min(size, w - ox);
        for (int j = 0; j < n; ++j) {
          const float diff = std::abs(warped[i * size + j] - t[j]) * kDensifyScale;
          const float c = 1.0f / std::max(1.0f, diff);
          acc_x[j] += c * vx;
          acc_y[j] += c * vy;
          acc_w[j] += c;
        }
      }
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float sw = sum_w.at(x, y);
      if (sw > 0.0f) {
        ux.at(x, y) = sum_x.at(x, y) / sw;
        uy.at(x, y) = sum_y.at(x, y) / sw;
      }
    }
  }
}

// Jacobi sweeps pulling each pixel toward its 4-neighbour mean while
// attaching it to the densified estimate.
void smooth_field(Image& field, int iters, float data_weight) {
  const int w = field.width();
  const int h = field.height();
  const Image data = field;
  Image next(w, h);
  for (int it = 0; it < iters; ++it) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        float sum = data_weight * data.at(x, y);
        float wsum = data_weight;
        if (x > 0) { sum += field.at(x - 1, y); wsum += 1; }
        if (x + 1 < w) { sum += field.at(x + 1, y); wsum += 1; }
        if (y > 0) { sum += field.at(x, y - 1); wsum += 1; }
        if (y + 1 < h) { sum += field.at(x, y + 1); wsum += 1; }
        next.at(x, y) = sum / wsum;
      }
    }
    std::swap(field, next);
  }
}

// Inverse-compositional search for one patch translation.
void inverse_search(const Image& i0, const Image& gx, const Image& gy, const Image& i1,
                    SparseFlow& sparse, const Image& init_x, const Image& init_y, int iters) {
  const int size = sparse.size;
  const int n = size * size;
  std::vector<float> tmpl(static_cast<std::size_t>(n));
  std::vector<float> tgx(static_cast<std::size_t>(n));
  std::vector<float> tgy(static_cast<std::size_t>(n));
  std::vector<float> warped(static_cast<std::size_t>(n));
  const int half = size / 2;

  for (std::size_t py = 0; py < sparse.ys.size(); ++py) {
    for (std::size_t px = 0; px < sparse.xs.size(); ++px) {
      const int ox = sparse.xs[px];
      const int oy = sparse.ys[py];
      double hxx = 0, hxy = 0, hyy = 0, sgx = 0, sgy = 0, st = 0;
      for (int i = 0; i < size; ++i) {
        const float* r = i0.row(oy + i) + ox;
        const float* rx = gx.row(oy + i) + ox;
        const float* ry = gy.row(oy + i) + ox;
        for (int j = 0; j < size; ++j) {
          const int k = i * size + j;
          tmpl[k] = r[j];
          tgx[k] = rx[j];
          tgy[k] = ry[j];
          st += r[j];
          sgx += rx[j];
          sgy += ry[j];
        }
      }
      // Zero-mean gradients make the update invariant to a patch-wise offset.
      const double mean_gx = sgx / n;
      const double mean_gy = sgy / n;
      const double mean_t = st / n;
      for (int k = 0; k < n; ++k) {
        tgx[k] = static_cast<float>(tgx[k] - mean_gx);
        tgy[k] = static_cast<float>(tgy[k] - mean_gy);
        tmpl[k] = static_cast<float>(tmpl[k] - mean_t);
        hxx += static_cast<double>(tgx[k]) * tgx[k];
        hxy += static_cast<double>(tgx[k]) * tgy[k];
        hyy += static_cast<double>(tgy[k]) * tgy[k];
      }
      const double ridge = 1e-6 * n;
      hxx += ridge;
      hyy += ridge;
      const double det = hxx * hyy - hxy * hxy;
      const double inv_xx = hyy / det;
      const double inv_xy = -hxy / det;
      const double inv_yy = hxx / det;

      const int cx = std::min(ox + half, init_x.width() - 1);
      const int cy = std::min(oy + half, init_x.height() - 1);
      const double start_x = init_x.at(cx, cy);
      const double start_y = init_y.at(cx, cy);
      double ux = start_x;
      double uy = start_y;
      double prev_ssd = std::numeric_limits<double>::infinity();
      double prev_ux = ux;
      double prev_uy = uy;
      for (int it = 0; it < iters; ++it) {
        const double sx = ox + ux;
        const double sy = oy + uy;
        const int bx = static_cast<int>(std::floor(sx));
        const int by = static_cast<int>(std::floor(sy));
        read_patch(i1, bx, by, static_cast<float>(sx - bx), static_cast<float>(sy - by), size,
                   warped.data());
        double mean_w = 0;
        for (int k = 0; k < n; ++k) mean_w += warped[k];
        mean_w /= n;
        double bxs = 0, bys = 0, ssd = 0;
        for (int k = 0; k < n; ++k) {
          const double diff = (warped[k] - mean_w) - tmpl[k];
          bxs += tgx[k] * diff;
          bys += tgy[k] * diff;
          ssd += diff * diff;
        }
        if (ssd > prev_ssd) {
          ux = prev_ux;
          uy = prev_uy;
          break;
        }
        prev_ssd = ssd;
        prev_ux = ux;
        prev_uy = uy;
        ux -= inv_xx * bxs + inv_xy * bys;
        uy -= inv_xy * bxs + inv_yy * bys;
      }
      const std::size_t idx = py * sparse.xs.size() + px;
      if (!std::isfinite(ux) || !std::isfinite(uy) ||
          std::hypot(ux - start_x, uy - start_y) > size) {
        ux = start_x;
        uy = start_y;
      }
      sparse.ux[idx] = static_cast<float>(ux);
      sparse.uy[idx] = static_cast<float>(uy);
    }
  }
}

void block_search(const Image& i0, const Image& i1, SparseFlow& sparse, int radius) {
  const int size = sparse.size;
  const int n = size * size;
  std::vector<float> warped(static_cast<std::size_t>(n));
  for (std::size_t py = 0; py < sparse.ys.size(); ++py) {
    for (std::size_t px = 0; px < sparse.xs.size(); ++px) {
      const int ox = sparse.xs[px];
      const int oy = sparse.ys[py];
      double best = std::numeric_limits<double>::infinity();
      int best_dx = 0;
      int best_dy = 0;
      // Ties keep the smallest |d|^2; the scan order settles the rest.
      for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
          read_patch(i1, ox + dx, oy + dy, 0.0f, 0.0f, size, warped.data());
          double ssd = 0;
          for (int i = 0; i < size; ++i) {
            const float* t = i0.row(oy + i) + ox;
            for (int j = 0; j < size; ++j) {
              const double d = warped[i * size + j] - t[j];
              ssd += d * d;
            }
          }
          const int mag = dx * dx + dy * dy;
          if (ssd < best || (ssd == best && mag < best_dx * best_dx + best_dy * best_dy)) {
            best = ssd;
            best_dx = dx;
            best_dy = dy;
          }
        }
      }
      const std::size_t idx = py * sparse.xs.size() + px;
      sparse.ux[idx] = static_cast<float>(best_dx);
      sparse.uy[idx] = static_cast<float>(best_dy);
    }
  }
}

SparseFlow make_grid(int w, int h, int patch_size, int stride) {
  SparseFlow s;
  s.size = std::min({patch_size, w, h});
  s.xs = patch_origins(w, s.size, stride);
  s.ys = patch_origins(h, s.size, stride);
  s.ux.assign(s.xs.size() * s.ys.size(), 0.0f);
  s.uy.assign(s.xs.size() * s.ys.size(), 0.0f);
  return s;
}

bool is_constant(const Image& img) {
  const auto px = img.pixels();
  const auto [lo, hi] = std::minmax_element(px.begin(), px.end());
  return *lo == *hi;
}

FlowField dis_flow(const Image& from, const Image& to, const FlowConfig& cfg) {
  const int levels = cfg.levels_for(from.width(), from.height());
  std::vector<Image> p0{from};
  std::vector<Image> p1{to};
  for (int l = 1; l < levels; ++l) {
    p0.push_back(downsample2(p0.back()));
    p1.push_back(downsample2(p1.back()));
  }

  Image ux(p0.back().width(), p0.back().height());
  Image uy(p0.back().width(), p0.back().height());
  for (int l = levels - 1; l >= 0; --l) {
    const Image& i0 = p0[static_cast<std::size_t>(l)];
    const Image& i1 = p1[static_cast<std::size_t>(l)];
    if (ux.width() != i0.width() || ux.height() != i0.height()) {
      const double rx = static_cast<double>(i0.width()) / ux.width();
      const double ry = static_cast<double>(i0.height()) / ux.height();
      Image nx = resize_bilinear(ux, i0.width(), i0.height());
      Image ny = resize_bilinear(uy, i0.width(), i0.height());
      for (auto& v : nx.pixels()) v = static_cast<float>(v * rx);
      for (auto& v : ny.pixels()) v = static_cast<float>(v * ry);
      ux = std::move(nx);
      uy = std::move(ny);
    }
    Image gx, gy;
    gradients(i0, gx, gy);
    SparseFlow sparse = make_grid(i0.width(), i0.height(), cfg.patch_size, cfg.patch_stride);
    inverse_search(i0, gx, gy, i1, sparse, ux, uy, cfg.gradient_descent_iters);
    densify(sparse, i0, i1, ux, uy);
    if (cfg.refinement && cfg.refinement_iters > 0) {
      smooth_field(ux, cfg.refinement_iters, cfg.refinement_data_weight);
      smooth_field(uy, cfg.refinement_iters, cfg.refinement_data_weight);
    }
  }
  FlowField field;
  field.dx = std::move(ux);
  field.dy = std::move(uy);
  return field;
}

FlowField block_match_flow(const Image& from, const Image& to, const FlowConfig& cfg) {
  SparseFlow sparse = make_grid(from.width(), from.height(), cfg.patch_size, cfg.patch_stride);
  block_search(from, to, sparse, cfg.search_radius);
  FlowField field;
  field.dx = Image(from.width(), from.height());
  field.dy = Image(from.width(), from.height());
  densify(sparse, from, to, field.dx, field.dy);
  return field;
}

}  // namespace

FlowField compute_flow_pair(const Image& from, const Image& to, const FlowConfig& cfg) {
  cfg.validate();
  if (from.width() != to.width() || from.height() != to.height()) {
    throw Error(ErrorCode::DimensionMismatch, "flow frames differ in size");
  }
  if (is_constant(from) && is_constant(to)) {
    FlowField field;
    field.dx = Image(from.width(), from.height());
    field.dy = Image(from.width(), from.height());
    field.degenerate = true;
    return field;
  }
  if (cfg.equalize) {
    const Image a = equalize_histogram(from);
    const Image b = equalize_histogram(to);
    return cfg.backend == FlowBackend::dis ? dis_flow(a, b, cfg) : block_match_flow(a, b, cfg);
  }
  return cfg.backend == FlowBackend::dis ? dis_flow(from, to, cfg) : block_match_flow(from, to, cfg);
}

FlowVolume compute_flow(const VideoSequence& video, const FlowConfig& cfg, const FlowProgress& progress) {
  cfg.validate();
  if (video.frame_count() < 2) throw Error(ErrorCode::TooShort, "flow needs at least 2 frames");
  FlowVolume vol;
  vol.width = video.width();
  vol.height = video.height();
  vol.frame_count = video.frame_count();
  const int pairs = video.frame_count() - 1;
  vol.fields.resize(static_cast<std::size_t>(pairs));

  std::atomic<int> next{0};
  std::atomic<int> done{0};
  std::mutex progress_mutex;
  auto worker = [&] {
    for (int t = next++; t < pairs; t = next++) {
      FlowField f = compute_flow_pair(video.frame(t).pixels, video.frame(t + 1).pixels, cfg);
      f.t = t;
      vol.fields[static_cast<std::size_t>(t)] = std::move(f);
      const int d = ++done;
      if (progress) {
        std::lock_guard lock(progress_mutex);
        progress(d, pairs);
      }
    }
  };
  const unsigned threads = std::clamp(std::thread::hardware_concurrency(), 1u, static_cast<unsigned>(pairs));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
  }
  return vol;
}

FlowVolume uniform_flow(int width, int height, int frame_count, Displacement d) {
  FlowVolume vol;
  vol.width = width;
  vol.height = height;
  vol.frame_count = frame_count;
  for (int t = 0; t + 1 < frame_count; ++t) {
    FlowField f;
    f.t = t;
    f.dx = Image(width, height, static_cast<float>(d.dx));
    f.dy = Image(width, height, static_cast<float>(d.dy));
    vol.fields.push_back(std::move(f));
  }
  return vol;
}

}  // namespace trackflow
