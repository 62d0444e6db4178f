#include "blade/image.hpp"

#include <cmath>
#include <numeric>

namespace blade {

Image::Image(int width, int height, double fill, double dx)
    : width_(width), height_(height), dx_(dx) {
  if (width < 1 || height < 1) {
    throw InvalidArgument("image dimensions must be positive, got " +
                          std::to_string(width) + "x" + std::to_string(height));
  }
  set_dx(dx);
  data_.assign(static_cast<std::size_t>(width) * height, fill);
}

Image::Image(int width, int height, std::vector<double> data, double dx)
    : width_(width), height_(height), dx_(dx), data_(std::move(data)) {
  if (width < 1 || height < 1) {
    throw InvalidArgument("image dimensions must be positive");
  }
  if (data_.size() != static_cast<std::size_t>(width) * height) {
    throw InvalidArgument("image data length does not match " +
                          std::to_string(width) + "x" + std::to_string(height));
  }
  set_dx(dx);
}

void Image::set_dx(double dx) {
  if (!(dx > 0.0) || !std::isfinite(dx)) {
    throw InvalidArgument("grid spacing dx must be positive");
  }
  dx_ = dx;
}

bool Image::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

double Image::min() const { return *std::min_element(data_.begin(), data_.end()); }
double Image::max() const { return *std::max_element(data_.begin(), data_.end()); }

double Image::sum() const {
  return std::accumulate(data_.begin(), data_.end(), 0.0);
}

double Image::mean() const { return sum() / static_cast<double>(data_.size()); }

Image& Image::operator+=(const Image& other) {
  require_same_shape(*this, other, "image addition");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Image& Image::operator-=(const Image& other) {
  require_same_shape(*this, other, "image subtraction");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Image& Image::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Image& Image::add_scaled(const Image& other, double s) {
  require_same_shape(*this, other, "image add_scaled");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * other.data_[i];
  return *this;
}

Image operator+(Image a, const Image& b) { return a += b; }
Image operator-(Image a, const Image& b) { return a -= b; }
Image operator*(double s, Image a) { return a *= s; }

double dot(const Image& a, const Image& b) {
  require_same_shape(a, b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) {
    throw InvalidArgument(std::string(what) + ": dimension mismatch " +
                          std::to_string(a.width()) + "x" +
                          std::to_string(a.height()) + " vs " +
                          std::to_string(b.width()) + "x" +
                          std::to_string(b.height()));
  }
}

ColorImage::ColorImage(Image r_, Image g_, Image b_)
    : r(std::move(r_)), g(std::move(g_)), b(std::move(b_)) {
  if (!r.same_shape(g) || !r.same_shape(b)) {
    throw InvalidArgument("color channels must share dimensions");
  }
}

FrameSequence::FrameSequence(std::vector<Image> frames_, double dt_)
    : frames(std::move(frames_)), dt(dt_) {
  validate();
}

void FrameSequence::validate() const {
  if (!(dt > 0.0)) throw InvalidArgument("frame sequence dt must be positive");
  for (const Image& f : frames) {
    if (!f.same_shape(frames.front())) {
      throw InvalidArgument("frame sequence frames differ in dimensions");
    }
  }
}

}  // namespace blade
