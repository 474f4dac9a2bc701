#include "vct/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace vct {

namespace {

uint8_t to_u8(float v) {
  v = std::min(1.0f, std::max(0.0f, v));
  return static_cast<uint8_t>(std::lround(v * 255.0f));
}

}  // namespace

std::vector<uint8_t> quantize_u8(const Tensor<float>& img) {
  std::vector<uint8_t> out(img.data.size());
  for (size_t i = 0; i < img.data.size(); ++i) out[i] = to_u8(img.data[i]);
  return out;
}

void write_ppm(const std::string& path, const Tensor<float>& img, int64_t size) {
  write_ppm_rect(path, img, size, size);
}

void write_ppm_rect(const std::string& path, const Tensor<float>& img, int64_t width,
                    int64_t height) {
  if (img.numel() != width * height * 3)
    throw std::invalid_argument("write_ppm: tensor does not hold width*height*3 values");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << "P6\n" << width << " " << height << "\n255\n";
  std::vector<uint8_t> bytes = quantize_u8(img);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Tensor<float> read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::string magic;
  int64_t w = 0, h = 0, maxv = 0;
  f >> magic >> w >> h >> maxv;
  if (magic != "P6" || maxv != 255 || w != h || w <= 0)
    throw std::runtime_error("unsupported ppm: " + path);
  f.get();  // the single whitespace after the header
  std::vector<char> bytes(static_cast<size_t>(w * h * 3));
  f.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("truncated ppm: " + path);
  Tensor<float> img = Tensor<float>::zeros({h, w, 3});
  for (size_t i = 0; i < bytes.size(); ++i)
    img.data[i] = static_cast<float>(static_cast<uint8_t>(bytes[i])) / 255.0f;
  return img;
}

void write_pgm(const std::string& path, const Tensor<float>& img, int64_t size) {
  if (img.numel() != size * size)
    throw std::invalid_argument("write_pgm: tensor does not hold size*size values");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << "P5\n" << size << " " << size << "\n255\n";
  std::vector<uint8_t> bytes(img.data.size());
  for (size_t i = 0; i < img.data.size(); ++i) bytes[i] = to_u8(img.data[i]);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Tensor<float> image_grid(const std::vector<Tensor<float>>& tiles, int64_t rows, int64_t cols,
                         int64_t tile_size, int64_t pad) {
  if (static_cast<int64_t>(tiles.size()) > rows * cols)
    throw std::invalid_argument("image_grid: more tiles than cells");
  const int64_t H = rows * tile_size + (rows + 1) * pad;
  const int64_t W = cols * tile_size + (cols + 1) * pad;
  Tensor<float> canvas = Tensor<float>::full({H, W, 3}, 1.0f);
  for (size_t t = 0; t < tiles.size(); ++t) {
    if (tiles[t].numel() != tile_size * tile_size * 3)
      throw std::invalid_argument("image_grid: tile size mismatch");
    const int64_t gr = static_cast<int64_t>(t) / cols, gc = static_cast<int64_t>(t) % cols;
    const int64_t oy = pad + gr * (tile_size + pad), ox = pad + gc * (tile_size + pad);
    for (int64_t y = 0; y < tile_size; ++y)
      for (int64_t x = 0; x < tile_size; ++x)
        for (int64_t c = 0; c < 3; ++c)
          canvas.data[static_cast<size_t>(((oy + y) * W + ox + x) * 3 + c)] =
              tiles[t].data[static_cast<size_t>((y * tile_size + x) * 3 + c)];
  }
  return canvas;
}

}  // namespace vct
