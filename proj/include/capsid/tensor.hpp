#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace capsid {

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::string name;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, bool requires_grad = false,
                  std::string name = "");

  std::size_t size() const { return value.size(); }
  void ensure_grad();
  void zero_grad();
  // The single element of a scalar tensor; contract error otherwise.
  double scalar() const;
};

using TensorPtr = std::shared_ptr<Tensor>;

TensorPtr make_tensor(std::vector<std::size_t> shape, bool requires_grad = false,
                      std::string name = "");
TensorPtr make_tensor(std::vector<std::size_t> shape, std::vector<double> values,
                      bool requires_grad = false, std::string name = "");

std::size_t shape_size(const std::vector<std::size_t>& shape);
std::string shape_str(const std::vector<std::size_t>& shape);

// Reverse-mode tape. Ops append nodes in construction order; backward walks
// the exact reverse. Leaf tensors (parameters, inputs) never appear as node
// outputs, so a graph can be dropped and rebuilt per batch while leaves
// persist.
class Graph {
 public:
  // Registers out as the result of op over inputs. Throws NumericFault if
  // the freshly computed values contain NaN or Inf. backward, when present,
  // accumulates into the inputs' grad buffers given out->grad.
  TensorPtr node(const char* op, TensorPtr out, std::vector<TensorPtr> inputs,
                 std::function<void()> backward);

  // Seeds d(loss)/d(loss) = 1 and runs every node's backward in reverse
  // construction order. loss must be scalar.
  void backward(const TensorPtr& loss);

  std::size_t node_count() const { return tape_.size(); }

 private:
  struct Node {
    const char* op;
    TensorPtr out;
    std::vector<TensorPtr> inputs;
    std::function<void()> bwd;
  };
  std::vector<Node> tape_;
};

}  // namespace capsid
