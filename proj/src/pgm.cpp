#include "apcde/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace apcde {

void write_pgm(const std::string& path, const Tensor& y, int width, int height) {
  if (width < 1 || height < 1 ||
      static_cast<std::size_t>(width) * static_cast<std::size_t>(height) != y.size())
    throw ArgumentError("write_pgm: width*height must match the vector length");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("write_pgm: cannot open " + path);
  out << "P5\n" << width << " " << height << "\n255\n";
  for (double v : y.data()) {
    int byte = static_cast<int>(std::floor(v * 256.0));
    byte = std::clamp(byte, 0, 255);
    out.put(static_cast<char>(byte));
  }
  if (!out) throw DataError("write_pgm: write failed for " + path);
}

}  // namespace apcde
