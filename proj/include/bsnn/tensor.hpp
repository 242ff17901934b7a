#pragma once

#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bsnn {

using Shape = std::vector<std::size_t>;

std::size_t shape_volume(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles with an optional gradient buffer of the
/// same length.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& values() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// Element access for rank-4 tensors laid out as [N, C, H, W].
  double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w);
  double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const;

  bool has_grad() const noexcept { return grad_.has_value(); }
  /// Allocates the gradient buffer on first use and fills it with zeros.
  void zero_grad();
  std::span<double> grad();
  std::span<const double> grad() const;

  /// Same values viewed under another shape of equal volume.
  Tensor reshaped(Shape shape) const;
  void reshape(Shape shape);

  void fill(double v);
  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
  std::optional<std::vector<double>> grad_;
};

/// Copies `count` consecutive entries of the leading axis starting at `begin`.
Tensor slice_leading(const Tensor& t, std::size_t begin, std::size_t count);

/// Writes `part` into `dst` along the leading axis starting at `begin`.
void assign_leading(Tensor& dst, const Tensor& part, std::size_t begin);

/// Stacks per-timestep tensors [N, ...] into one [T*N, ...] tensor, t-major.
Tensor fold_time(std::span<const Tensor> steps);

/// Inverse of fold_time.
std::vector<Tensor> unfold_time(const Tensor& folded, std::size_t timesteps);

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace bsnn
