#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace uwe {

/// Named, shaped, row-major parameter buffer.
struct NamedTensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> data;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

/// Ordered collection of named tensors; order is preserved in checkpoints.
class TensorSet {
 public:
  NamedTensor& add(std::string name, std::vector<std::size_t> shape, std::vector<double> data);
  NamedTensor& add(std::string name, std::vector<std::size_t> shape, double fill = 0.0);
  bool contains(const std::string& name) const;
  NamedTensor& at(const std::string& name);
  const NamedTensor& at(const std::string& name) const;

  std::vector<NamedTensor>& items() noexcept { return items_; }
  const std::vector<NamedTensor>& items() const noexcept { return items_; }
  std::size_t parameter_count() const;

  friend bool operator==(const TensorSet&, const TensorSet&) = default;

 private:
  std::vector<NamedTensor> items_;
};

}  // namespace uwe
