#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace blade {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Raised when an evolution produces a non-finite sample or leaves its
/// admissible range. `step()` is the index of the offending output frame.
class InstabilityError : public Error {
 public:
  InstabilityError(int step, const std::string& what)
      : Error(what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

/// Real-valued 2-D image, row-major. Coordinates are (m, n) = (column, row).
class Image {
 public:
  Image() = default;
  Image(int width, int height, double fill = 0.0, double dx = 1.0);
  Image(int width, int height, std::vector<double> data, double dx = 1.0);

  int width() const { return width_; }
  int height() const { return height_; }
  double dx() const { return dx_; }
  void set_dx(double dx);
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(int m, int n) { return data_[index(m, n)]; }
  double operator()(int m, int n) const { return data_[index(m, n)]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// Sample with replicate extension: (m, n) is clamped into the grid.
  double at_clamped(int m, int n) const {
    m = std::clamp(m, 0, width_ - 1);
    n = std::clamp(n, 0, height_ - 1);
    return data_[index(m, n)];
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  bool same_shape(const Image& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }
  bool all_finite() const;
  double min() const;
  double max() const;
  double sum() const;
  double mean() const;

  Image& operator+=(const Image& other);
  Image& operator-=(const Image& other);
  Image& operator*=(double s);
  /// this += s * other
  Image& add_scaled(const Image& other, double s);

 private:
  std::size_t index(int m, int n) const {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(m);
  }

  int width_ = 0;
  int height_ = 0;
  double dx_ = 1.0;
  std::vector<double> data_;
};

Image operator+(Image a, const Image& b);
Image operator-(Image a, const Image& b);
Image operator*(double s, Image a);

/// Inner product over all samples.
double dot(const Image& a, const Image& b);

void require_same_shape(const Image& a, const Image& b, const char* what);

struct ColorImage {
  Image r, g, b;

  ColorImage() = default;
  ColorImage(Image r_, Image g_, Image b_);

  int width() const { return r.width(); }
  int height() const { return r.height(); }
  Image& channel(int c) { return c == 0 ? r : (c == 1 ? g : b); }
  const Image& channel(int c) const { return c == 0 ? r : (c == 1 ? g : b); }
};

/// Frames u(0), u(1), ... spaced dt apart in time.
struct FrameSequence {
  std::vector<Image> frames;
  double dt = 1.0;

  FrameSequence() = default;
  FrameSequence(std::vector<Image> frames_, double dt_);

  std::size_t size() const { return frames.size(); }
  const Image& operator[](std::size_t k) const { return frames[k]; }
  /// Throws InvalidArgument if frames differ in shape or dt <= 0.
  void validate() const;
};

}  // namespace blade
