#include "dysk/param_store.hpp"

#include <stdexcept>

namespace dysk {

Tensor& ParamStore::add(const std::string& name, Tensor param) {
  if (params_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  if (!param.defined() || !param.requires_grad())
    throw std::invalid_argument("parameter " + name + " must be a requires_grad tensor");
  order_.push_back(name);
  auto [it, inserted] = params_.emplace(name, std::move(param));
  (void)inserted;
  return it->second;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::invalid_argument("unknown parameter: " + name);
  return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::invalid_argument("unknown parameter: " + name);
  return it->second;
}

bool ParamStore::contains(const std::string& name) const { return params_.count(name) != 0; }

long ParamStore::total_elements() const {
  long n = 0;
  for (const auto& name : order_) n += params_.at(name).size();
  return n;
}

void ParamStore::zero_grad() {
  for (const auto& name : order_) params_.at(name).zero_grad();
}

ParamStore::Moments& ParamStore::moments(const std::string& name) {
  auto it = moments_.find(name);
  if (it == moments_.end()) {
    long n = get(name).size();
    it = moments_.emplace(name, Moments{Array::Zero(n), Array::Zero(n)}).first;
  }
  return it->second;
}

}  // namespace dysk
