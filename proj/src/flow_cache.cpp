#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "trackflow/error.hpp"
#include "trackflow/flow.hpp"

namespace trackflow {

namespace {

static_assert(std::endian::native == std::endian::little,
              "flow cache I/O assumes a little-endian host");

constexpr std::array<char, 4> kMagic{'R', 'P', 'L', 'F'};

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

void write_plane(std::ostream& out, const Image& img) {
  const auto px = img.pixels();
  out.write(reinterpret_cast<const char*>(px.data()),
            static_cast<std::streamsize>(px.size() * sizeof(float)));
}

Image read_plane(std::istream& in, int w, int h) {
  Image img(w, h);
  auto px = img.pixels();
  in.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(px.size() * sizeof(float)));
  return img;
}

}  // namespace

void save_flow_cache(const FlowVolume& flow, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, path.string() + ": cannot open for writing");
  out.write(kMagic.data(), kMagic.size());
  write_u32(out, kFlowCacheVersion);
  write_u32(out, static_cast<std::uint32_t>(flow.frame_count));
  write_u32(out, static_cast<std::uint32_t>(flow.height));
  write_u32(out, static_cast<std::uint32_t>(flow.width));
  for (const auto& f : flow.fields) {
    write_plane(out, f.dx);
    write_plane(out, f.dy);
  }
  if (!out) throw Error(ErrorCode::IoError, path.string() + ": write failed");
}

FlowVolume load_flow_cache(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::NotFound, path.string() + ": flow cache not found");
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, path.string() + ": cannot open");
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw Error(ErrorCode::IoError, path.string() + ": not a flow cache");
  const std::uint32_t version = read_u32(in);
  if (version != kFlowCacheVersion) {
    throw Error(ErrorCode::IoError, path.string() + ": unsupported flow cache version " +
                                        std::to_string(version));
  }
  FlowVolume vol;
  vol.frame_count = static_cast<int>(read_u32(in));
  vol.height = static_cast<int>(read_u32(in));
  vol.width = static_cast<int>(read_u32(in));
  if (!in || vol.frame_count < 2 || vol.width < 1 || vol.height < 1) {
    throw Error(ErrorCode::IoError, path.string() + ": corrupt flow cache header");
  }
  vol.fields.reserve(static_cast<std::size_t>(vol.frame_count - 1));
  for (int t = 0; t + 1 < vol.frame_count; ++t) {
    FlowField f;
    f.t = t;
    f.dx = read_plane(in, vol.width, vol.height);
    f.dy = read_plane(in, vol.width, vol.height);
    if (!in) throw Error(ErrorCode::IoError, path.string() + ": truncated flow cache");
    vol.fields.push_back(std::move(f));
  }
  return vol;
}

}  // namespace trackflow
