#pragma once
#include <string>

#include "apcde/tensor.hpp"

namespace apcde {

/// Binary PGM (P5, maxval 255). Values in (0,1) map back to bytes via
/// floor(v * 256), the exact inverse of the dequantization convention.
void write_pgm(const std::string& path, const Tensor& y, int width, int height);

}  // namespace apcde
