#pragma once

#include <string>
#include <vector>

#include "capsid/tensor.hpp"

namespace capsid {

// Little-endian tensor container: header {magic "CAPW", version u32,
// n_tensors u32}, then per tensor {name length u32, name bytes, rank u32,
// dims u64 each, values f64 each}. Tensor names must be unique and
// non-empty.
void save_checkpoint(const std::string& path,
                     const std::vector<TensorPtr>& tensors);

// Loaded tensors preserve file order; requires_grad is false.
std::vector<TensorPtr> load_checkpoint(const std::string& path);

// Copies values from the checkpoint into same-named tensors; every target
// must be matched by name and shape or a parse error is thrown.
void restore_into(const std::vector<TensorPtr>& loaded,
                  const std::vector<TensorPtr>& targets);

}  // namespace capsid
