#include "camcls/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <fstream>
#include <memory>
#include <vector>

#include "camcls/error.hpp"

namespace camcls {

namespace {

// Skips PNM whitespace and '#' comment lines.
int pnm_next_token(std::istream& is) {
  int c = is.get();
  for (;;) {
    while (c == ' ' || c == '\t' || c == '\n' || c == '\r') c = is.get();
    if (c == '#') {
      while (c != '\n' && c != EOF) c = is.get();
      continue;
    }
    return c;
  }
}

unsigned pnm_number(std::istream& is) {
  int c = pnm_next_token(is);
  if (c < '0' || c > '9') throw IngestError("pgm: malformed header");
  unsigned v = 0;
  while (c >= '0' && c <= '9') {
    v = v * 10 + static_cast<unsigned>(c - '0');
    c = is.get();
  }
  return v;
}

struct PngReadCloser {
  png_structp png = nullptr;
  png_infop info = nullptr;
  FILE* fp = nullptr;
  ~PngReadCloser() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (fp) std::fclose(fp);
  }
};

struct PngWriteCloser {
  png_structp png = nullptr;
  png_infop info = nullptr;
  FILE* fp = nullptr;
  ~PngWriteCloser() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (fp) std::fclose(fp);
  }
};

}  // namespace

Tensor<float> read_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FileError("pgm: cannot open '" + path + "'");
  if (is.get() != 'P' || is.get() != '5') throw IngestError("pgm: not a P5 file: '" + path + "'");
  const unsigned w = pnm_number(is);
  const unsigned h = pnm_number(is);
  const unsigned maxval = pnm_number(is);
  if (w == 0 || h == 0 || maxval == 0 || maxval >= 65536)
    throw IngestError("pgm: bad dimensions or maxval in '" + path + "'");
  // pnm_number consumed the single whitespace after maxval already
  const size_t bytes_per = maxval < 256 ? 1 : 2;
  std::vector<unsigned char> raw(static_cast<size_t>(w) * h * bytes_per);
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!is) throw IngestError("pgm: truncated raster in '" + path + "'");
  Tensor<float> out({h, w});
  const float inv = 1.0f / static_cast<float>(maxval);
  for (size_t i = 0; i < static_cast<size_t>(w) * h; ++i) {
    unsigned v = raw[i * bytes_per];
    if (bytes_per == 2) v = v << 8 | raw[i * 2 + 1];
    out.data[i] = static_cast<float>(v) * inv;
  }
  return out;
}

Tensor<float> read_png_gray(const std::string& path) {
  PngReadCloser c;
  c.fp = std::fopen(path.c_str(), "rb");
  if (!c.fp) throw FileError("png: cannot open '" + path + "'");
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, c.fp) != 8 || png_sig_cmp(sig, 0, 8))
    throw IngestError("png: bad signature in '" + path + "'");
  c.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!c.png) throw Error("png: reader allocation failed");
  c.info = png_create_info_struct(c.png);
  if (!c.info) throw Error("png: info allocation failed");
  if (setjmp(png_jmpbuf(c.png))) throw IngestError("png: decode failed for '" + path + "'");
  png_init_io(c.png, c.fp);
  png_set_sig_bytes(c.png, 8);
  png_read_info(c.png, c.info);

  // Normalize every layout to 8-bit RGB without alpha.
  png_set_strip_16(c.png);
  png_set_strip_alpha(c.png);
  png_set_palette_to_rgb(c.png);
  png_set_expand_gray_1_2_4_to_8(c.png);
  png_set_gray_to_rgb(c.png);
  png_read_update_info(c.png, c.info);

  const png_uint_32 w = png_get_image_width(c.png, c.info);
  const png_uint_32 h = png_get_image_height(c.png, c.info);
  const size_t rowbytes = png_get_rowbytes(c.png, c.info);
  if (rowbytes != static_cast<size_t>(w) * 3)
    throw IngestError("png: unexpected row layout in '" + path + "'");
  std::vector<unsigned char> pixels(static_cast<size_t>(h) * rowbytes);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = pixels.data() + static_cast<size_t>(y) * rowbytes;
  png_read_image(c.png, rows.data());
  png_read_end(c.png, nullptr);

  Tensor<float> out({h, w});
  for (size_t i = 0; i < static_cast<size_t>(w) * h; ++i) {
    const float r = pixels[i * 3], g = pixels[i * 3 + 1], b = pixels[i * 3 + 2];
    out.data[i] = (0.299f * r + 0.587f * g + 0.114f * b) / 255.0f;  // Rec.601 luma
  }
  return out;
}

Tensor<float> read_image(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw FileError("image: cannot open '" + path + "'");
  unsigned char head[2] = {0, 0};
  probe.read(reinterpret_cast<char*>(head), 2);
  probe.close();
  if (head[0] == 'P' && head[1] == '5') return read_pgm(path);
  if (head[0] == 0x89 && head[1] == 'P') return read_png_gray(path);
  throw IngestError("image: unsupported format in '" + path + "'");
}

void write_pgm_minmax(const std::string& path, const Tensor<float>& plane) {
  if (plane.rank() != 2) throw DimensionError("pgm: expected HxW plane");
  const float lo = min_value(plane), hi = max_value(plane);
  const float span = hi > lo ? hi - lo : 1.0f;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FileError("pgm: cannot open '" + path + "' for writing");
  os << "P5\n" << plane.dim(1) << " " << plane.dim(0) << "\n255\n";
  std::vector<unsigned char> row(plane.dim(1));
  for (size_t y = 0; y < plane.dim(0); ++y) {
    for (size_t x = 0; x < plane.dim(1); ++x) {
      const float v = (plane(y, x) - lo) / span;
      row[x] = static_cast<unsigned char>(v * 255.0f + 0.5f);
    }
    os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!os) throw Error("pgm: write failed for '" + path + "'");
}

void write_png_gray8(const std::string& path, const Tensor<float>& plane) {
  if (plane.rank() != 2) throw DimensionError("png: expected HxW plane");
  PngWriteCloser c;
  c.fp = std::fopen(path.c_str(), "wb");
  if (!c.fp) throw FileError("png: cannot open '" + path + "' for writing");
  c.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!c.png) throw Error("png: writer allocation failed");
  c.info = png_create_info_struct(c.png);
  if (!c.info) throw Error("png: info allocation failed");
  if (setjmp(png_jmpbuf(c.png))) throw Error("png: encode failed for '" + path + "'");
  png_init_io(c.png, c.fp);
  const png_uint_32 h = static_cast<png_uint_32>(plane.dim(0));
  const png_uint_32 w = static_cast<png_uint_32>(plane.dim(1));
  png_set_IHDR(c.png, c.info, w, h, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(c.png, c.info);
  const float lo = min_value(plane), hi = max_value(plane);
  const float span = hi > lo ? hi - lo : 1.0f;
  std::vector<unsigned char> row(w);
  for (png_uint_32 y = 0; y < h; ++y) {
    for (png_uint_32 x = 0; x < w; ++x)
      row[x] = static_cast<unsigned char>((plane(y, x) - lo) / span * 255.0f + 0.5f);
    png_write_row(c.png, row.data());
  }
  png_write_end(c.png, nullptr);
}

}  // namespace camcls
