#include "shadowstorm/image.hpp"

#include <algorithm>
#include <cmath>

#include "shadowstorm/error.hpp"
#include "shadowstorm/numeric.hpp"

namespace shadowstorm {

std::string Shape::str() const {
  return std::to_string(height) + "x" + std::to_string(width) + "x" + std::to_string(channels);
}

Image::Image(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
  if (shape_.height <= 0 || shape_.width <= 0) {
    throw ShapeError("image extent must be positive, got " + shape_.str());
  }
  if (shape_.channels != 1 && shape_.channels != 3) {
    throw ShapeError("image must have 1 or 3 channels, got " + shape_.str());
  }
  if (data_.size() != shape_.size()) {
    throw ShapeError("image payload has " + std::to_string(data_.size()) + " values, shape " + shape_.str() +
                     " needs " + std::to_string(shape_.size()));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    const double v = data_[i];
    if (!(v >= 0.0 && v <= 1.0)) {
      throw UsageError("image intensity at index " + std::to_string(i) + " is outside [0, 1]: " +
                       std::to_string(v));
    }
  }
}

Image Image::filled(Shape shape, double value) { return Image(shape, std::vector<double>(shape.size(), value)); }

Image Image::clamped(Shape shape, std::vector<double> data) {
  for (double& v : data) {
    if (std::isnan(v)) throw NumericError("cannot clamp NaN into an image");
    v = std::clamp(v, 0.0, 1.0);
  }
  return Image(shape, std::move(data));
}

ShadowMask::ShadowMask(int height, int width, std::vector<std::uint8_t> data)
    : height_(height), width_(width), data_(std::move(data)) {
  if (height_ <= 0 || width_ <= 0) throw ShapeError("mask extent must be positive");
  if (data_.size() != static_cast<std::size_t>(height_) * width_) {
    throw ShapeError("mask payload has " + std::to_string(data_.size()) + " values, expected " +
                     std::to_string(static_cast<std::size_t>(height_) * width_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (data_[i] > 1) throw UsageError("mask value at index " + std::to_string(i) + " is not 0 or 1");
  }
}

std::size_t ShadowMask::shadow_count() const {
  return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
}

double mean_intensity(const Image& image) {
  return exact_sum(image.data()) / static_cast<double>(image.size());
}

std::vector<double> luminance(const Image& image) {
  const Shape& s = image.shape();
  std::vector<double> out(s.pixels());
  const auto c = static_cast<std::size_t>(s.channels);
  for (std::size_t p = 0; p < out.size(); ++p) {
    double acc = 0.0;
    for (std::size_t ch = 0; ch < c; ++ch) acc += image[p * c + ch];
    out[p] = acc / static_cast<double>(c);
  }
  return out;
}

}  // namespace shadowstorm
