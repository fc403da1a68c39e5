#pragma once

#include <cstdint>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "attnviz/errors.hpp"

namespace attnviz {

using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

inline std::size_t numel_of(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) {
    if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_str(s));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

// Dense N-dimensional array, row-major, NCHW for image batches.
//
// The scalar type is the precision mode: Tensor<float> is the training mode,
// Tensor<double> exists for gradient checking. A Tensor is a cheap handle;
// copies share storage (and gradient), like the tape expects. `node` / `epoch`
// tie the tensor to a generation of the recording tape (see tape.hpp).
template <class S>
class Tensor {
 public:
  struct Meta {
    std::vector<S> data;
    std::vector<S> grad;  // same length as data once requires_grad is set
    bool requires_grad = false;
    std::int64_t node = -1;
    std::uint64_t epoch = 0;
  };

  Tensor() = default;

  explicit Tensor(Shape shape, S fill = S(0))
      : shape_(std::move(shape)), m_(std::make_shared<Meta>()) {
    m_->data.assign(numel_of(shape_), fill);
  }

  static Tensor from_data(Shape shape, std::vector<S> values) {
    Tensor t;
    t.shape_ = std::move(shape);
    if (numel_of(t.shape_) != values.size())
      throw ShapeError("data length " + std::to_string(values.size()) +
                       " does not match shape " + shape_str(t.shape_));
    t.m_ = std::make_shared<Meta>();
    t.m_->data = std::move(values);
    return t;
  }

  bool defined() const { return static_cast<bool>(m_); }
  const Shape& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::size_t numel() const { return m_ ? m_->data.size() : 0; }

  S* data() { return m_->data.data(); }
  const S* data() const { return m_->data.data(); }
  std::vector<S>& vec() { return m_->data; }
  const std::vector<S>& vec() const { return m_->data; }
  S& operator[](std::size_t i) { return m_->data[i]; }
  S operator[](std::size_t i) const { return m_->data[i]; }

  bool requires_grad() const { return m_ && m_->requires_grad; }

  Tensor& set_requires_grad(bool on) {
    if (on) {
      m_->requires_grad = true;
      if (m_->grad.size() != m_->data.size()) m_->grad.assign(m_->data.size(), S(0));
    } else {
      m_->requires_grad = false;
      m_->grad.clear();
    }
    return *this;
  }

  // Gradient buffer. Mutable through const handles: storage is shared, the
  // handle is not the owner of constness.
  std::vector<S>& grad() const {
    if (!m_->requires_grad)
      throw UsageError("tensor does not track gradients");
    return m_->grad;
  }

  void zero_grad() const {
    if (m_ && m_->requires_grad) std::fill(m_->grad.begin(), m_->grad.end(), S(0));
  }

  // Deep copy with no gradient tracking and no tape membership.
  Tensor detached() const {
    Tensor t;
    t.shape_ = shape_;
    t.m_ = std::make_shared<Meta>();
    t.m_->data = m_->data;
    return t;
  }

  Meta& meta() const { return *m_; }

 private:
  Shape shape_;
  std::shared_ptr<Meta> m_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

// NCHW offset helpers.
inline std::size_t idx4(int c_dim, int h_dim, int w_dim, int n, int c, int h, int w) {
  return ((static_cast<std::size_t>(n) * c_dim + c) * h_dim + h) * w_dim + w;
}

}  // namespace attnviz
