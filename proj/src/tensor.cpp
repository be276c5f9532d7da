#include "uwe/tensor.hpp"

#include <algorithm>

#include "uwe/error.hpp"

namespace uwe {

namespace {
std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}
}  // namespace

NamedTensor& TensorSet::add(std::string name, std::vector<std::size_t> shape, std::vector<double> data) {
  require(!contains(name), Errc::parameter, "duplicate tensor name '" + name + "'");
  require(product(shape) == data.size(), Errc::shape_mismatch, "tensor '" + name + "' data does not match its shape");
  items_.push_back({std::move(name), std::move(shape), std::move(data)});
  return items_.back();
}

NamedTensor& TensorSet::add(std::string name, std::vector<std::size_t> shape, double fill) {
  const std::size_t n = product(shape);
  return add(std::move(name), std::move(shape), std::vector<double>(n, fill));
}

bool TensorSet::contains(const std::string& name) const {
  return std::any_of(items_.begin(), items_.end(), [&](const NamedTensor& t) { return t.name == name; });
}

NamedTensor& TensorSet::at(const std::string& name) {
  for (auto& t : items_)
    if (t.name == name) return t;
  throw Error(Errc::parameter, "no tensor named '" + name + "'");
}

const NamedTensor& TensorSet::at(const std::string& name) const {
  return const_cast<TensorSet*>(this)->at(name);
}

std::size_t TensorSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : items_) n += t.data.size();
  return n;
}

}  // namespace uwe
