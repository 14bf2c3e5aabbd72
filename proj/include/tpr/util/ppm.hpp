#ifndef TPR_UTIL_PPM_HPP
#define TPR_UTIL_PPM_HPP

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <string>

#include "tpr/core/errors.hpp"
#include "tpr/core/tensor.hpp"

namespace tpr {

// Binary P6 PPM, 8-bit. Input [H, W, 3] (or [1, H, W, 3]) in [0, 1].
template <typename T>
inline void write_ppm(const std::string& path, const Tensor<T>& img) {
  int h = 0, w = 0;
  const T* data = img.data();
  if (img.ndim() == 3) {
    h = img.size(0);
    w = img.size(1);
    require_shape(img.size(2) == 3, "ppm needs 3 channels");
  } else if (img.ndim() == 4 && img.size(0) == 1) {
    h = img.size(1);
    w = img.size(2);
    require_shape(img.size(3) == 3, "ppm needs 3 channels");
  } else {
    throw ShapeError("ppm expects [H,W,3] or [1,H,W,3]");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), "cannot open for writing: " + path);
  out << "P6\n" << w << " " << h << "\n255\n";
  std::string row(static_cast<size_t>(w) * 3, '\0');
  for (int y = 0; y < h; ++y) {
    for (int i = 0; i < w * 3; ++i) {
      const double v = std::clamp(static_cast<double>(data[static_cast<size_t>(y) * w * 3 + i]), 0.0, 1.0);
      row[static_cast<size_t>(i)] = static_cast<char>(static_cast<int>(v * 255.0 + 0.5));
    }
    out.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
  require(out.good(), "write failed: " + path);
}

}  // namespace tpr

#endif
