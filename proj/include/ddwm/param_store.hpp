#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

namespace ddwm {

// One named tensor inside the flat parameter buffer.
struct TensorSpec {
  std::string name;
  std::vector<int> shape;
  size_t offset = 0;  // index into the flat buffer
  size_t size = 0;    // product of shape
};

// All learnable parameters in one contiguous vector<double> plus a manifest
// of (name, shape, offset). Optimizers and finite-difference checks treat the
// buffer as a single flat vector; checkpoints serialize buffer + manifest.
class ParamStore {
 public:
  // appends a zero-filled tensor; names must be unique
  size_t add(const std::string& name, std::vector<int> shape);

  bool has(const std::string& name) const { return index_.count(name) != 0; }
  const TensorSpec& spec(const std::string& name) const;
  double* data(const std::string& name);
  const double* data(const std::string& name) const;

  std::vector<double>& flat() { return values_; }
  const std::vector<double>& flat() const { return values_; }
  const std::vector<TensorSpec>& manifest() const { return specs_; }
  size_t size() const { return values_.size(); }

 private:
  std::vector<TensorSpec> specs_;
  std::unordered_map<std::string, size_t> index_;  // name -> specs_ slot
  std::vector<double> values_;
};

}  // namespace ddwm
