#include "defcor/image.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

#include "defcor/error.hpp"

namespace defcor {
namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open for writing: " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open: " + path.string());
  return in;
}

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in, const std::filesystem::path& path) {
  std::string tok;
  while (true) {
    int c = in.get();
    if (c == EOF) throw FormatError("truncated header: " + path.string());
    if (c == '#') {
      while (c != '\n' && c != EOF) c = in.get();
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
}

struct NetpbmHeader {
  int width = 0;
  int height = 0;
};

NetpbmHeader read_netpbm_header(std::istream& in, const std::filesystem::path& path, const char* magic) {
  if (header_token(in, path) != magic) throw FormatError(std::string("expected ") + magic + " file: " + path.string());
  NetpbmHeader h;
  try {
    h.width = std::stoi(header_token(in, path));
    h.height = std::stoi(header_token(in, path));
    if (std::stoi(header_token(in, path)) != 255) throw FormatError("only maxval 255 supported: " + path.string());
  } catch (const std::logic_error&) {
    throw FormatError("bad header: " + path.string());
  }
  if (h.width <= 0 || h.height <= 0) throw FormatError("bad dimensions: " + path.string());
  return h;
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                        static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& in, const std::filesystem::path& path) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) throw FormatError("truncated file: " + path.string());
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

Image quantize(const Image& img) {
  Image out = img;
  for (double& v : out.pixels.data) v = to_byte(v);
  return out;
}

Image read_pgm(const std::filesystem::path& path) {
  auto in = open_in(path);
  auto h = read_netpbm_header(in, path, "P5");
  std::vector<unsigned char> buf(static_cast<size_t>(h.width) * h.height);
  if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
    throw FormatError("truncated pixel data: " + path.string());
  Image img(h.width, h.height);
  std::copy(buf.begin(), buf.end(), img.pixels.data.begin());
  return img;
}

void write_pgm(const std::filesystem::path& path, const Image& img) {
  auto out = open_out(path);
  out << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
  std::vector<char> buf(img.pixels.size());
  std::transform(img.pixels.data.begin(), img.pixels.data.end(), buf.begin(),
                 [](double v) { return static_cast<char>(to_byte(v)); });
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw FormatError("write failed: " + path.string());
}

RgbImage read_ppm(const std::filesystem::path& path) {
  auto in = open_in(path);
  auto h = read_netpbm_header(in, path, "P6");
  RgbImage img(h.width, h.height);
  if (!in.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size() * 3)))
    throw FormatError("truncated pixel data: " + path.string());
  return img;
}

void write_ppm(const std::filesystem::path& path, const RgbImage& img) {
  static_assert(sizeof(Rgb) == 3);
  auto out = open_out(path);
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()), static_cast<std::streamsize>(img.data.size() * 3));
  if (!out) throw FormatError("write failed: " + path.string());
}

FlowField read_dff(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), 4) || std::string(magic.data(), 4) != "DFF1")
    throw FormatError("missing DFF1 magic: " + path.string());
  const auto w = get_u32(in, path);
  const auto h = get_u32(in, path);
  if (w == 0 || h == 0 || w > (1u << 16) || h > (1u << 16)) throw FormatError("bad flow dimensions: " + path.string());
  FlowField f(static_cast<int>(w), static_cast<int>(h));
  for (size_t i = 0; i < f.dx.size(); ++i) {
    f.dx.data[i] = std::bit_cast<float>(get_u32(in, path));
    f.dy.data[i] = std::bit_cast<float>(get_u32(in, path));
  }
  return f;
}

void write_dff(const std::filesystem::path& path, const FlowField& flow) {
  auto out = open_out(path);
  out.write("DFF1", 4);
  put_u32(out, static_cast<std::uint32_t>(flow.width()));
  put_u32(out, static_cast<std::uint32_t>(flow.height()));
  for (size_t i = 0; i < flow.dx.size(); ++i) {
    put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(flow.dx.data[i])));
    put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(flow.dy.data[i])));
  }
  if (!out) throw FormatError("write failed: " + path.string());
}

}  // namespace defcor
