#include "ddwm/param_store.hpp"

#include <stdexcept>

namespace ddwm {

size_t ParamStore::add(const std::string& name, std::vector<int> shape) {
  if (index_.count(name)) throw std::invalid_argument("ParamStore: duplicate tensor " + name);
  if (shape.empty()) throw std::invalid_argument("ParamStore: empty shape for " + name);
  size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("ParamStore: bad dimension in " + name);
    n *= static_cast<size_t>(d);
  }
  TensorSpec s;
  s.name = name;
  s.shape = std::move(shape);
  s.offset = values_.size();
  s.size = n;
  index_.emplace(name, specs_.size());
  specs_.push_back(std::move(s));
  values_.resize(values_.size() + n, 0.0);
  return specs_.back().offset;
}

const TensorSpec& ParamStore::spec(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("ParamStore: no tensor named " + name);
  return specs_[it->second];
}

double* ParamStore::data(const std::string& name) { return values_.data() + spec(name).offset; }

const double* ParamStore::data(const std::string& name) const {
  return values_.data() + spec(name).offset;
}

}  // namespace ddwm
