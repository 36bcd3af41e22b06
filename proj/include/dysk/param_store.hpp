#pragma once

#include "dysk/tensor.hpp"

#include <string>
#include <unordered_map>
#include <vector>

namespace dysk {

// Named learnable tensors with stable iteration order plus the optimizer's
// moment accumulators. Mutated only between forward passes.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor param);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  const std::vector<std::string>& names() const { return order_; }
  size_t count() const { return order_.size(); }
  long total_elements() const;

  void zero_grad();

  struct Moments {
    Array first;
    Array second;
  };
  Moments& moments(const std::string& name);
  long step_count() const { return step_; }
  void bump_step() { ++step_; }

 private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, Tensor> params_;
  std::unordered_map<std::string, Moments> moments_;
  long step_ = 0;
};

}  // namespace dysk
