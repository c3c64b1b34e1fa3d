#include "flowcnn/videoio.hpp"

#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>

namespace flowcnn {

namespace {

std::string frame_name(std::size_t index_1based) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%04zu.ppm", index_1based);
  return buf;
}

void put_u32_le(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

bool get_u32_le(std::ifstream& in, std::uint32_t& v) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
  v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
      (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}

// next whitespace-delimited token, skipping '#' comments
std::string ppm_token(std::ifstream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (!std::isspace(c)) {
      tok.push_back(static_cast<char>(c));
      break;
    }
  }
  while ((c = in.get()) != EOF && !std::isspace(c)) tok.push_back(static_cast<char>(c));
  return tok;
}

std::size_t parse_dim(const std::string& tok, const std::filesystem::path& file) {
  if (tok.empty()) fail(ErrorKind::MalformedFile, "truncated PPM header: " + file.string());
  for (char c : tok)
    if (!std::isdigit(static_cast<unsigned char>(c)))
      fail(ErrorKind::MalformedFile, "bad PPM header token '" + tok + "' in " + file.string());
  return static_cast<std::size_t>(std::stoull(tok));
}

Clip load_clip_ppm_dir(const std::filesystem::path& dir) {
  std::vector<PpmImage> images;
  for (std::size_t i = 1;; ++i) {
    std::filesystem::path frame = dir / frame_name(i);
    if (!std::filesystem::exists(frame)) break;
    images.push_back(read_ppm(frame));
  }
  if (images.empty()) fail(ErrorKind::MissingFrames, "no frame_0001.ppm in " + dir.string());

  Clip clip;
  clip.frames = images.size();
  clip.height = images[0].height;
  clip.width = images[0].width;
  clip.data.reserve(clip.frames * clip.height * clip.width * 3);
  for (const PpmImage& img : images) {
    if (img.height != clip.height || img.width != clip.width)
      fail(ErrorKind::InconsistentDims, "frame size changes inside " + dir.string());
    clip.data.insert(clip.data.end(), img.rgb.begin(), img.rgb.end());
  }
  clip.validate();
  return clip;
}

Clip load_vclip(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open " + file.string());

  char magic[6];
  if (!in.read(magic, 6) || std::string(magic, 6) != "VCLP1\n")
    fail(ErrorKind::MalformedFile, "bad .vclip magic in " + file.string());

  std::uint32_t t, h, w, c;
  if (!get_u32_le(in, t) || !get_u32_le(in, h) || !get_u32_le(in, w) || !get_u32_le(in, c))
    fail(ErrorKind::MalformedFile, "truncated .vclip header in " + file.string());
  if (c != 3) fail(ErrorKind::MalformedFile, "channel count must be 3 in " + file.string());
  if (t == 0 || h == 0 || w == 0)
    fail(ErrorKind::MalformedFile, "zero dimension in " + file.string());

  Clip clip;
  clip.frames = t;
  clip.height = h;
  clip.width = w;
  std::size_t count = static_cast<std::size_t>(t) * h * w * c;
  clip.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits;
    if (!get_u32_le(in, bits))
      fail(ErrorKind::MalformedFile, "payload shorter than header claims in " + file.string());
    clip.data[i] = std::bit_cast<float>(bits);
  }
  if (in.get() != EOF)
    fail(ErrorKind::MalformedFile, "trailing bytes after payload in " + file.string());
  clip.validate();
  return clip;
}

}  // namespace

void Clip::validate() const {
  if (frames < 2) fail(ErrorKind::InvalidClip, "clip needs at least 2 frames");
  if (height == 0 || width == 0) fail(ErrorKind::InvalidClip, "clip has a zero dimension");
  if (data.size() != frames * height * width * 3)
    fail(ErrorKind::InvalidClip, "clip data length does not match dimensions");
  for (float v : data)
    if (!(v >= 0.0f && v <= 1.0f))
      fail(ErrorKind::InvalidClip, "clip value outside [0,1]");
}

PpmImage read_ppm(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open " + file.string());

  if (ppm_token(in) != "P6") fail(ErrorKind::MalformedFile, "not a P6 PPM: " + file.string());
  PpmImage img;
  img.width = parse_dim(ppm_token(in), file);
  img.height = parse_dim(ppm_token(in), file);
  std::size_t maxval = parse_dim(ppm_token(in), file);
  if (maxval != 255) fail(ErrorKind::MalformedFile, "PPM maxval must be 255: " + file.string());
  if (img.width == 0 || img.height == 0)
    fail(ErrorKind::MalformedFile, "zero dimension in " + file.string());
  // ppm_token consumed exactly one whitespace byte after the maxval

  std::size_t count = img.height * img.width * 3;
  std::vector<unsigned char> bytes(count);
  if (!in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(count)))
    fail(ErrorKind::MalformedFile, "pixel payload truncated in " + file.string());
  img.rgb.resize(count);
  for (std::size_t i = 0; i < count; ++i) img.rgb[i] = static_cast<float>(bytes[i]) / 255.0f;
  return img;
}

void write_ppm(const std::filesystem::path& file, std::size_t height,
               std::size_t width, const std::vector<float>& rgb) {
  if (rgb.size() != height * width * 3)
    fail(ErrorKind::ShapeMismatch, "rgb buffer does not match image dimensions");
  std::ofstream out(file, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + file.string());

  char header[64];
  int n = std::snprintf(header, sizeof(header), "P6\n%zu %zu\n255\n", width, height);
  out.write(header, n);
  std::vector<unsigned char> bytes(rgb.size());
  for (std::size_t i = 0; i < rgb.size(); ++i) {
    float v = rgb[i];
    v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
    bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::IoError, "short write to " + file.string());
}

Clip load_clip(const std::filesystem::path& path) {
  if (std::filesystem::is_directory(path)) return load_clip_ppm_dir(path);
  if (!std::filesystem::exists(path)) fail(ErrorKind::IoError, "no such path: " + path.string());
  if (path.extension() == ".vclip") return load_vclip(path);
  fail(ErrorKind::MalformedFile, "expected a frame directory or .vclip file: " + path.string());
}

void write_clip_ppm(const Clip& clip, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::size_t frame_count = clip.height * clip.width * 3;
  for (std::size_t t = 0; t < clip.frames; ++t) {
    std::vector<float> rgb(clip.data.begin() + static_cast<std::ptrdiff_t>(t * frame_count),
                           clip.data.begin() + static_cast<std::ptrdiff_t>((t + 1) * frame_count));
    write_ppm(dir / frame_name(t + 1), clip.height, clip.width, rgb);
  }
}

void write_vclip(const Clip& clip, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + file.string());
  out.write("VCLP1\n", 6);
  put_u32_le(out, static_cast<std::uint32_t>(clip.frames));
  put_u32_le(out, static_cast<std::uint32_t>(clip.height));
  put_u32_le(out, static_cast<std::uint32_t>(clip.width));
  put_u32_le(out, 3);
  for (float v : clip.data) put_u32_le(out, std::bit_cast<std::uint32_t>(v));
  if (!out) fail(ErrorKind::IoError, "short write to " + file.string());
}

Clip resize_quarter(const Clip& clip) {
  if (clip.height % 4 != 0 || clip.width % 4 != 0)
    fail(ErrorKind::NotDivisible, "height and width must be divisible by 4");

  Clip out;
  out.frames = clip.frames;
  out.height = clip.height / 4;
  out.width = clip.width / 4;
  out.data.resize(out.frames * out.height * out.width * 3);
  for (std::size_t t = 0; t < clip.frames; ++t)
    for (std::size_t y = 0; y < out.height; ++y)
      for (std::size_t x = 0; x < out.width; ++x)
        for (std::size_t c = 0; c < 3; ++c) {
          double sum = 0.0;
          for (std::size_t dy = 0; dy < 4; ++dy)
            for (std::size_t dx = 0; dx < 4; ++dx)
              sum += clip.at(t, 4 * y + dy, 4 * x + dx, c);
          out.at(t, y, x, c) = static_cast<float>(sum / 16.0);
        }
  return out;
}

GrayFrame to_grayscale(const Clip& clip, std::size_t frame_index) {
  if (frame_index >= clip.frames)
    fail(ErrorKind::IndexOutOfRange, "frame index past end of clip");

  GrayFrame out;
  out.height = clip.height;
  out.width = clip.width;
  out.data.resize(out.height * out.width);
  for (std::size_t y = 0; y < out.height; ++y)
    for (std::size_t x = 0; x < out.width; ++x)
      out.at(y, x) = 0.299f * clip.at(frame_index, y, x, 0) +
                     0.587f * clip.at(frame_index, y, x, 1) +
                     0.114f * clip.at(frame_index, y, x, 2);
  return out;
}

}  // namespace flowcnn
