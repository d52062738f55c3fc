#include "capsid/tensor.hpp"

#include <sstream>

#include "capsid/errors.hpp"
#include "capsid/kernels.hpp"

namespace capsid {

Tensor::Tensor(std::vector<std::size_t> shape_, bool requires_grad_,
               std::string name_)
    : shape(std::move(shape_)),
      requires_grad(requires_grad_),
      name(std::move(name_)) {
  for (std::size_t d : shape)
    if (d == 0) throw ShapeError("tensor dimension of 0 in " + shape_str(shape));
  value.assign(shape_size(shape), 0.0);
  if (requires_grad) grad.assign(value.size(), 0.0);
}

void Tensor::ensure_grad() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
}

void Tensor::zero_grad() { grad.assign(value.size(), 0.0); }

double Tensor::scalar() const {
  if (value.size() != 1)
    throw ContractError("scalar() on tensor of shape " + shape_str(shape));
  return value[0];
}

TensorPtr make_tensor(std::vector<std::size_t> shape, bool requires_grad,
                      std::string name) {
  return std::make_shared<Tensor>(std::move(shape), requires_grad,
                                  std::move(name));
}

TensorPtr make_tensor(std::vector<std::size_t> shape, std::vector<double> values,
                      bool requires_grad, std::string name) {
  auto t = std::make_shared<Tensor>(std::move(shape), requires_grad,
                                    std::move(name));
  if (values.size() != t->value.size())
    throw ShapeError("value count " + std::to_string(values.size()) +
                     " does not fill shape " + shape_str(t->shape));
  t->value = std::move(values);
  return t;
}

std::size_t shape_size(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

TensorPtr Graph::node(const char* op, TensorPtr out,
                      std::vector<TensorPtr> inputs,
                      std::function<void()> backward) {
  if (!kernels::active().all_finite(out->value.data(), out->value.size()))
    throw NumericFault(std::string("non-finite values in output of ") + op);
  if (out->requires_grad) out->ensure_grad();
  tape_.push_back(Node{op, std::move(out), std::move(inputs),
                       std::move(backward)});
  return tape_.back().out;
}

void Graph::backward(const TensorPtr& loss) {
  if (loss->value.size() != 1)
    throw ContractError("backward() needs a scalar loss, got " +
                        shape_str(loss->shape));
  for (auto& n : tape_)
    for (auto& in : n.inputs)
      if (in->requires_grad) in->ensure_grad();
  loss->ensure_grad();
  loss->grad[0] = 1.0;
  for (auto it = tape_.rbegin(); it != tape_.rend(); ++it)
    if (it->out->requires_grad && it->bwd) it->bwd();
}

}  // namespace capsid
