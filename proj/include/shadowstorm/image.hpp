#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace shadowstorm {

/// Height x width x channels of a dense row-major (row, column, channel) array.
struct Shape {
  int height = 0;
  int width = 0;
  int channels = 0;

  std::size_t pixels() const { return static_cast<std::size_t>(height) * static_cast<std::size_t>(width); }
  std::size_t size() const { return pixels() * static_cast<std::size_t>(channels); }
  std::size_t index(int row, int col, int ch) const {
    return (static_cast<std::size_t>(row) * static_cast<std::size_t>(width) + static_cast<std::size_t>(col)) *
               static_cast<std::size_t>(channels) +
           static_cast<std::size_t>(ch);
  }
  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;
};

/**
 * Dense image with unit-interval intensities.
 *
 * Construction validates the shape (positive extent, 1 or 3 channels), the
 * payload length and that every intensity is a finite value in [0, 1].
 * Instances are immutable afterwards and safe to share between threads.
 */
class Image {
 public:
  Image(Shape shape, std::vector<double> data);

  static Image filled(Shape shape, double value);
  /// Builds an image from arbitrary reals, clamping each into [0, 1].
  static Image clamped(Shape shape, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  int height() const { return shape_.height; }
  int width() const { return shape_.width; }
  int channels() const { return shape_.channels; }
  std::size_t size() const { return data_.size(); }

  std::span<const double> data() const { return data_; }
  double operator[](std::size_t i) const { return data_[i]; }
  double at(int row, int col, int ch = 0) const { return data_[shape_.index(row, col, ch)]; }

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Binary H x W map; 1 marks a shadow pixel.
class ShadowMask {
 public:
  ShadowMask(int height, int width, std::vector<std::uint8_t> data);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  std::span<const std::uint8_t> data() const { return data_; }
  std::uint8_t operator[](std::size_t i) const { return data_[i]; }
  std::uint8_t at(int row, int col) const { return data_[static_cast<std::size_t>(row) * width_ + col]; }

  std::size_t shadow_count() const;
  std::size_t nonshadow_count() const { return data_.size() - shadow_count(); }
  bool matches(const Shape& shape) const { return shape.height == height_ && shape.width == width_; }

 private:
  int height_;
  int width_;
  std::vector<std::uint8_t> data_;
};

/// Signed perturbation with the layout of the image it is applied to.
struct Perturbation {
  Shape shape;
  std::vector<double> data;

  static Perturbation zeros(Shape shape) { return {shape, std::vector<double>(shape.size(), 0.0)}; }
};

/// Arithmetic mean over every entry, correctly rounded (independent of pixel order).
double mean_intensity(const Image& image);

/// Per-pixel mean over channels, H x W.
std::vector<double> luminance(const Image& image);

}  // namespace shadowstorm
