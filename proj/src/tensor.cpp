#include "bsnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "bsnn/error.hpp"

namespace bsnn {

std::size_t shape_volume(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (auto d : shape_)
    if (d == 0) throw ShapeError("tensor extents must be positive, got " + shape_string(shape_));
  data_.assign(shape_volume(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
  for (auto d : shape_)
    if (d == 0) throw ShapeError("tensor extents must be positive, got " + shape_string(shape_));
  if (data_.size() != shape_volume(shape_))
    throw ShapeError("value count " + std::to_string(data_.size()) + " does not match shape " +
                     shape_string(shape_));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size())
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_string(shape_));
  return shape_[axis];
}

double& Tensor::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
  return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
}

double Tensor::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
  return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
}

void Tensor::zero_grad() {
  if (!grad_) {
    grad_.emplace(data_.size(), 0.0);
  } else {
    std::fill(grad_->begin(), grad_->end(), 0.0);
  }
}

std::span<double> Tensor::grad() {
  if (!grad_) throw StateError("tensor has no gradient buffer");
  return *grad_;
}

std::span<const double> Tensor::grad() const {
  if (!grad_) throw StateError("tensor has no gradient buffer");
  return *grad_;
}

Tensor Tensor::reshaped(Shape shape) const {
  Tensor t = *this;
  t.reshape(std::move(shape));
  return t;
}

void Tensor::reshape(Shape shape) {
  if (shape_volume(shape) != data_.size())
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  shape_ = std::move(shape);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor slice_leading(const Tensor& t, std::size_t begin, std::size_t count) {
  if (t.rank() == 0 || begin + count > t.dim(0) || count == 0)
    throw ShapeError("leading slice [" + std::to_string(begin) + "," + std::to_string(begin + count) +
                     ") out of range for shape " + shape_string(t.shape()));
  Shape s = t.shape();
  s[0] = count;
  const std::size_t stride = t.size() / t.dim(0);
  std::vector<double> v(t.values().begin() + static_cast<std::ptrdiff_t>(begin * stride),
                        t.values().begin() + static_cast<std::ptrdiff_t>((begin + count) * stride));
  return Tensor(std::move(s), std::move(v));
}

void assign_leading(Tensor& dst, const Tensor& part, std::size_t begin) {
  if (dst.rank() != part.rank() || begin + part.dim(0) > dst.dim(0))
    throw ShapeError("cannot place " + shape_string(part.shape()) + " into " + shape_string(dst.shape()));
  for (std::size_t a = 1; a < dst.rank(); ++a)
    if (dst.dim(a) != part.dim(a))
      throw ShapeError("axis " + std::to_string(a) + " mismatch placing " + shape_string(part.shape()) +
                       " into " + shape_string(dst.shape()));
  const std::size_t stride = dst.size() / dst.dim(0);
  std::copy(part.values().begin(), part.values().end(),
            dst.values().begin() + static_cast<std::ptrdiff_t>(begin * stride));
}

Tensor fold_time(std::span<const Tensor> steps) {
  if (steps.empty()) throw ShapeError("empty timestep sequence");
  Shape s = steps.front().shape();
  for (const auto& st : steps)
    if (st.shape() != s)
      throw ShapeError("timestep shapes differ: " + shape_string(s) + " vs " + shape_string(st.shape()));
  const std::size_t n = s[0];
  s[0] = n * steps.size();
  Tensor out(s);
  for (std::size_t t = 0; t < steps.size(); ++t) assign_leading(out, steps[t], t * n);
  return out;
}

std::vector<Tensor> unfold_time(const Tensor& folded, std::size_t timesteps) {
  if (timesteps == 0 || folded.rank() == 0 || folded.dim(0) % timesteps != 0)
    throw ShapeError("leading axis of " + shape_string(folded.shape()) + " is not divisible by T=" +
                     std::to_string(timesteps));
  const std::size_t n = folded.dim(0) / timesteps;
  std::vector<Tensor> out;
  out.reserve(timesteps);
  for (std::size_t t = 0; t < timesteps; ++t) out.push_back(slice_leading(folded, t * n, n));
  return out;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(what) + ": shape " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

}  // namespace bsnn
