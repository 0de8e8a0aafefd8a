#include <png.h>

#include <cstring>
#include <fstream>

#include "advedit/scene/scene.hpp"

namespace advedit::scene {

std::vector<uint8_t> BevRaster::to_png() const {
  std::vector<uint8_t> rgb;
  rgb.reserve(cells.size() * 3);
  for (BevClass c : cells) {
    const Rgb p = palette(c);
    rgb.push_back(p.r);
    rgb.push_back(p.g);
    rgb.push_back(p.b);
  }
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, rgb.data(), 0, nullptr)) {
    throw Error(std::string("png: ") + image.message);
  }
  std::vector<uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, rgb.data(), 0, nullptr)) {
    throw Error(std::string("png: ") + image.message);
  }
  out.resize(size);
  return out;
}

void BevRaster::write_png(const std::string& path) const {
  const auto bytes = to_png();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("png: cannot open " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace advedit::scene
