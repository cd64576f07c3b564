#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <vector>

#include "rtcan/errors.hpp"

namespace rtcan::ag {

class Tape;

struct TensorData {
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized lazily, same length as value
  bool requires_grad = false;
  const Tape* creator = nullptr;  // tape whose op produced this tensor
};

// Dense row-major 64-bit tensor handle with shared storage. Up to 3 dims
// are used in practice: (batch, channels, length) or (batch, features).
class Tensor {
 public:
  Tensor() : impl_(std::make_shared<TensorData>()) {}

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double fill);
  static Tensor from(std::vector<double> values, std::vector<int> shape);
  static Tensor scalar(double v) { return from({v}, {1}); }

  int dim() const { return static_cast<int>(impl_->shape.size()); }
  const std::vector<int>& shape() const { return impl_->shape; }
  int size(int d) const { return impl_->shape.at(static_cast<std::size_t>(d)); }
  int numel() const { return static_cast<int>(impl_->value.size()); }

  double* data() { return impl_->value.data(); }
  const double* data() const { return impl_->value.data(); }
  std::vector<double>& vec() { return impl_->value; }
  const std::vector<double>& vec() const { return impl_->value; }
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool b) {
    impl_->requires_grad = b;
    return *this;
  }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::vector<double>& grad();        // allocates zeros on first use
  const std::vector<double>& grad() const;
  void zero_grad();

  const Tape* creator() const { return impl_->creator; }

  std::shared_ptr<TensorData> impl() const { return impl_; }
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  // Deep copy of values (fresh storage, grad not copied).
  Tensor clone() const;

 private:
  std::shared_ptr<TensorData> impl_;
  friend class Tape;
};

int shape_numel(const std::vector<int>& shape);

// Reverse-mode tape: forward ops append backward closures in execution
// order; backward() replays them in reverse, accumulating gradients
// additively across fan-out.
class Tape {
 public:
  // Registers the op output and its backward rule.
  void record(const Tensor& output, std::function<void()> backward_fn) {
    output.impl_->creator = this;
    backward_fns_.push_back(std::move(backward_fn));
  }

  // Seeds d(loss)/d(loss) = 1 and runs the recorded rules in reverse.
  void backward(Tensor& loss);

  void clear() { backward_fns_.clear(); }
  std::size_t size() const { return backward_fns_.size(); }

 private:
  std::vector<std::function<void()>> backward_fns_;
};

}  // namespace rtcan::ag
