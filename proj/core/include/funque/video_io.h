#ifndef FUNQUE_VIDEO_IO_H_
#define FUNQUE_VIDEO_IO_H_

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>

#include "funque/plane.h"

namespace funque {

enum class PixelFormat { kYuv420p, kYuv422p, kYuv444p };

PixelFormat parse_pixel_format(std::string_view name);
std::string_view to_string(PixelFormat fmt);

// Geometry of a raw planar YUV file. The frame count is not part of the
// description; it is derived from the file size when the file is opened.
struct VideoSpec {
  int width = 0;
  int height = 0;
  PixelFormat pixel_format = PixelFormat::kYuv420p;
  int bit_depth = 8;

  int bytes_per_sample() const { return bit_depth > 8 ? 2 : 1; }
  std::uint64_t luma_bytes() const;
  std::uint64_t chroma_plane_bytes() const;
  std::uint64_t frame_bytes() const;

  // Throws on non-positive dimensions, unsupported depth, or chroma
  // subsampling that does not divide the dimensions.
  void validate() const;

  friend bool operator==(const VideoSpec&, const VideoSpec&) = default;
};

// Sequential single-consumer reader over a raw YUV file. Independent
// FrameSource objects may be opened on the same path.
class FrameSource {
 public:
  FrameSource(const std::filesystem::path& path, const VideoSpec& spec);

  FrameSource(FrameSource&&) = default;
  FrameSource& operator=(FrameSource&&) = default;

  const VideoSpec& spec() const { return spec_; }
  int frame_count() const { return frame_count_; }
  const std::filesystem::path& path() const { return path_; }

  // Y plane of frame `index`, normalized to the 8-bit [0, 255] scale.
  Plane read_luma(int index);

 private:
  std::filesystem::path path_;
  VideoSpec spec_;
  int frame_count_ = 0;
  std::ifstream file_;
  std::string buffer_;
};

inline FrameSource open_sequence(const std::filesystem::path& path,
                                 const VideoSpec& spec) {
  return FrameSource(path, spec);
}

// Serializes one frame (Y from `luma`, chroma planes filled with
// `chroma_value`) in the layout FrameSource reads. Luma samples are rounded
// and clamped to the container range after scaling back to `bit_depth`.
std::string encode_frame(const Plane& luma, const VideoSpec& spec,
                         std::uint16_t chroma_value);

// Writes frames through a temporary file renamed into place on close.
class YuvWriter {
 public:
  YuvWriter(const std::filesystem::path& path, const VideoSpec& spec);
  ~YuvWriter();
  YuvWriter(const YuvWriter&) = delete;
  YuvWriter& operator=(const YuvWriter&) = delete;

  void write(const Plane& luma, std::uint16_t chroma_value = 128);
  void close();

 private:
  std::filesystem::path path_;
  std::filesystem::path temp_path_;
  VideoSpec spec_;
  std::ofstream out_;
  bool closed_ = false;
};

}  // namespace funque

#endif  // FUNQUE_VIDEO_IO_H_
