#include "funque/video_io.h"

#include <algorithm>
#include <cmath>
#include <system_error>

#include "funque/error.h"

namespace funque {

PixelFormat parse_pixel_format(std::string_view name) {
  if (name == "yuv420p") return PixelFormat::kYuv420p;
  if (name == "yuv422p") return PixelFormat::kYuv422p;
  if (name == "yuv444p") return PixelFormat::kYuv444p;
  throw Error("unsupported pixel format '" + std::string(name) +
              "' (expected yuv420p, yuv422p or yuv444p)");
}

std::string_view to_string(PixelFormat fmt) {
  switch (fmt) {
    case PixelFormat::kYuv420p: return "yuv420p";
    case PixelFormat::kYuv422p: return "yuv422p";
    case PixelFormat::kYuv444p: return "yuv444p";
  }
  return "unknown";
}

std::uint64_t VideoSpec::luma_bytes() const {
  return static_cast<std::uint64_t>(width) * height * bytes_per_sample();
}

std::uint64_t VideoSpec::chroma_plane_bytes() const {
  std::uint64_t w = width, h = height;
  switch (pixel_format) {
    case PixelFormat::kYuv420p: w /= 2; h /= 2; break;
    case PixelFormat::kYuv422p: w /= 2; break;
    case PixelFormat::kYuv444p: break;
  }
  return w * h * bytes_per_sample();
}

std::uint64_t VideoSpec::frame_bytes() const {
  return luma_bytes() + 2 * chroma_plane_bytes();
}

void VideoSpec::validate() const {
  if (width <= 0 || height <= 0) {
    throw Error("video dimensions must be positive, got " +
                std::to_string(width) + "x" + std::to_string(height));
  }
  if (bit_depth != 8 && bit_depth != 10 && bit_depth != 12) {
    throw Error("unsupported bit depth " + std::to_string(bit_depth) +
                " (expected 8, 10 or 12)");
  }
  const bool half_w = pixel_format != PixelFormat::kYuv444p;
  const bool half_h = pixel_format == PixelFormat::kYuv420p;
  if ((half_w && width % 2) || (half_h && height % 2)) {
    throw Error(std::string(to_string(pixel_format)) +
                " requires even dimensions");
  }
}

FrameSource::FrameSource(const std::filesystem::path& path,
                         const VideoSpec& spec)
    : path_(path), spec_(spec) {
  spec_.validate();
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec) throw Error("cannot open video '" + path.string() + "': " + ec.message());
  const std::uint64_t frame = spec_.frame_bytes();
  if (size == 0 || size % frame != 0) {
    throw Error("size of '" + path.string() + "' (" + std::to_string(size) +
                " bytes) is not a multiple of the " + std::to_string(frame) +
                "-byte frame implied by the declared format; check "
                "--width/--height/--pix-fmt/--bitdepth");
  }
  frame_count_ = static_cast<int>(size / frame);
  file_.open(path, std::ios::binary);
  if (!file_) throw Error("cannot open video '" + path.string() + "'");
  buffer_.resize(spec_.luma_bytes());
}

Plane FrameSource::read_luma(int index) {
  if (index < 0 || index >= frame_count_) {
    throw Error("frame index " + std::to_string(index) + " out of range [0, " +
                std::to_string(frame_count_) + ")");
  }
  file_.clear();
  file_.seekg(static_cast<std::streamoff>(spec_.frame_bytes() * index));
  file_.read(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
  if (file_.gcount() != static_cast<std::streamsize>(buffer_.size())) {
    throw Error("truncated read of frame " + std::to_string(index) + " in '" +
                path_.string() + "'");
  }

  Plane out(spec_.width, spec_.height);
  auto* bytes = reinterpret_cast<const unsigned char*>(buffer_.data());
  auto samples = out.samples();
  if (spec_.bit_depth == 8) {
    for (std::size_t i = 0; i < samples.size(); ++i) samples[i] = bytes[i];
  } else {
    const double scale = std::ldexp(1.0, -(spec_.bit_depth - 8));
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const unsigned v = bytes[2 * i] | (static_cast<unsigned>(bytes[2 * i + 1]) << 8);
      samples[i] = v * scale;
    }
  }
  return out;
}

std::string encode_frame(const Plane& luma, const VideoSpec& spec,
                         std::uint16_t chroma_value) {
  spec.validate();
  if (luma.width() != spec.width || luma.height() != spec.height) {
    throw Error("encode_frame: plane does not match video dimensions");
  }
  std::string out;
  out.reserve(spec.frame_bytes());
  const double scale = std::ldexp(1.0, spec.bit_depth - 8);
  const double max_code = std::ldexp(1.0, spec.bit_depth) - 1;
  auto put = [&](unsigned v) {
    out.push_back(static_cast<char>(v & 0xff));
    if (spec.bit_depth > 8) out.push_back(static_cast<char>(v >> 8));
  };
  for (double s : luma.samples()) {
    put(static_cast<unsigned>(std::clamp(std::round(s * scale), 0.0, max_code)));
  }
  const std::uint64_t chroma_samples =
      2 * spec.chroma_plane_bytes() / spec.bytes_per_sample();
  for (std::uint64_t i = 0; i < chroma_samples; ++i) put(chroma_value);
  return out;
}

YuvWriter::YuvWriter(const std::filesystem::path& path, const VideoSpec& spec)
    : path_(path), temp_path_(path.string() + ".tmp"), spec_(spec) {
  spec_.validate();
  out_.open(temp_path_, std::ios::binary | std::ios::trunc);
  if (!out_) throw Error("cannot create '" + temp_path_.string() + "'");
}

YuvWriter::~YuvWriter() {
  if (!closed_) {
    out_.close();
    std::error_code ec;
    std::filesystem::remove(temp_path_, ec);
  }
}

void YuvWriter::write(const Plane& luma, std::uint16_t chroma_value) {
  const std::string frame = encode_frame(luma, spec_, chroma_value);
  out_.write(frame.data(), static_cast<std::streamsize>(frame.size()));
  if (!out_) throw Error("write failed on '" + temp_path_.string() + "'");
}

void YuvWriter::close() {
  if (closed_) return;
  out_.close();
  if (!out_) throw Error("close failed on '" + temp_path_.string() + "'");
  std::filesystem::rename(temp_path_, path_);
  closed_ = true;
}

}  // namespace funque
