#ifndef TPR_CORE_TENSOR_HPP
#define TPR_CORE_TENSOR_HPP

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "tpr/core/errors.hpp"

namespace tpr {

// Allocator that default-initializes scalars (i.e. leaves them alone), so
// buffers that are fully overwritten right after allocation skip the zero
// pass. Tensor construction still zeros by default; Tensor::uninit opts out.
template <typename T>
struct NoInitAlloc : std::allocator<T> {
  template <typename U>
  struct rebind {
    using other = NoInitAlloc<U>;
  };
  template <typename U>
  void construct(U* p) noexcept {
    ::new (static_cast<void*>(p)) U;
  }
  template <typename U, typename... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
};

// Dense row-major n-d array. The whole stack is templated on the scalar
// type: training runs in float, gradient verification in double.
template <typename T>
class Tensor {
 public:
  using Storage = std::vector<T, NoInitAlloc<T>>;

  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(count(shape_), T(0));
  }

  Tensor(std::vector<int> shape, std::vector<T> data)
      : shape_(std::move(shape)) {
    require_shape(data.size() == count(shape_),
                  "tensor data length does not match shape");
    data_.assign(data.begin(), data.end());
  }

  // Allocated but not zeroed; every element must be written before use.
  static Tensor uninit(std::vector<int> shape) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_.resize(count(t.shape_));
    return t;
  }

  static Tensor full(std::vector<int> shape, T value) {
    Tensor t = uninit(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  static Tensor scalar(T value) { return Tensor({1}, {value}); }

  int ndim() const { return static_cast<int>(shape_.size()); }
  const std::vector<int>& shape() const { return shape_; }
  int size(int axis) const { return shape_.at(static_cast<size_t>(axis)); }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  T& operator[](std::int64_t i) { return data_[static_cast<size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // Row-major indexing helpers for the ranks used in this codebase.
  T& at(int i, int j) { return data_[static_cast<size_t>(i) * shape_[1] + j]; }
  const T& at(int i, int j) const { return data_[static_cast<size_t>(i) * shape_[1] + j]; }

  T& at(int i, int j, int k) {
    return data_[(static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k];
  }
  const T& at(int i, int j, int k) const {
    return data_[(static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k];
  }

  T& at(int i, int j, int k, int l) {
    return data_[((static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }
  const T& at(int i, int j, int k, int l) const {
    return data_[((static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }
  void zero() { fill(T(0)); }

  void reshape(std::vector<int> shape) {
    require_shape(count(shape) == data_.size(), "reshape changes element count");
    shape_ = std::move(shape);
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  bool all_finite() const {
    for (const T& v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  Storage& storage() { return data_; }
  const Storage& storage() const { return data_; }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(shape_[i]);
    }
    return s + "]";
  }

 private:
  static size_t count(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) {
      require_shape(d >= 0, "negative tensor dim");
      n *= static_cast<size_t>(d);
    }
    return n;
  }

  std::vector<int> shape_;
  Storage data_;
};

template <typename T>
struct DtypeCode;
template <>
struct DtypeCode<float> {
  static constexpr std::uint8_t value = 0;
};
template <>
struct DtypeCode<double> {
  static constexpr std::uint8_t value = 1;
};

}  // namespace tpr

#endif
