#include "rtcan/tensor.hpp"

#include <string>

namespace rtcan::ag {

int shape_numel(const std::vector<int>& shape) {
  int n = 1;
  for (int d : shape) {
    if (d <= 0) fail(Err::ShapeMismatch, "shape dims must be positive");
    n *= d;
  }
  return n;
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  Tensor t;
  t.impl_->value.assign(static_cast<std::size_t>(shape_numel(shape)), 0.0);
  t.impl_->shape = std::move(shape);
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::full(std::vector<int> shape, double fill) {
  Tensor t = zeros(std::move(shape));
  for (double& v : t.impl_->value) v = fill;
  return t;
}

Tensor Tensor::from(std::vector<double> values, std::vector<int> shape) {
  if (static_cast<int>(values.size()) != shape_numel(shape)) {
    fail(Err::ShapeMismatch, "value count does not match shape");
  }
  Tensor t;
  t.impl_->value = std::move(values);
  t.impl_->shape = std::move(shape);
  return t;
}

double Tensor::item() const {
  if (numel() != 1) fail(Err::ShapeMismatch, "item() needs a scalar tensor");
  return impl_->value[0];
}

std::vector<double>& Tensor::grad() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->value.size(), 0.0);
  return impl_->grad;
}

const std::vector<double>& Tensor::grad() const {
  if (impl_->grad.empty()) {
    fail(Err::MissingGrad, "tensor has no gradient populated");
  }
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) impl_->grad.assign(impl_->value.size(), 0.0);
}

Tensor Tensor::clone() const {
  Tensor t;
  t.impl_->shape = impl_->shape;
  t.impl_->value = impl_->value;
  t.impl_->requires_grad = impl_->requires_grad;
  return t;
}

void Tape::backward(Tensor& loss) {
  if (loss.numel() != 1) {
    fail(Err::ShapeMismatch, "backward needs a scalar loss");
  }
  if (loss.creator() != this) {
    fail(Err::DetachedLoss, "loss was not produced by an op on this tape");
  }
  loss.grad()[0] += 1.0;
  for (auto it = backward_fns_.rbegin(); it != backward_fns_.rend(); ++it) {
    (*it)();
  }
}

}  // namespace rtcan::ag
