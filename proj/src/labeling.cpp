#include "semiconv/labeling.hpp"

#include <string>

#include "semiconv/errors.hpp"

namespace semiconv {

std::vector<std::uint8_t> InstanceLabeling::foreground_mask() const {
  std::vector<std::uint8_t> mask(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) mask[i] = labels[i] > 0 ? 1 : 0;
  return mask;
}

std::vector<std::size_t> InstanceLabeling::foreground_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] > 0) out.push_back(i);
  return out;
}

std::vector<std::vector<std::size_t>> InstanceLabeling::instance_pixels() const {
  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] > 0) out[static_cast<std::size_t>(labels[i] - 1)].push_back(i);
  return out;
}

void InstanceLabeling::validate() const {
  if (labels.size() != height * width) throw ShapeError("labeling: label count does not match grid");
  if (count < 0) throw std::invalid_argument("labeling: negative instance count");
  std::vector<bool> seen(static_cast<std::size_t>(count) + 1, false);
  for (std::int32_t id : labels) {
    if (id < 0 || id > count) throw std::invalid_argument("labeling: id " + std::to_string(id) + " out of range");
    seen[static_cast<std::size_t>(id)] = true;
  }
  for (std::int32_t k = 1; k <= count; ++k) {
    if (!seen[static_cast<std::size_t>(k)]) throw std::invalid_argument("labeling: instance " + std::to_string(k) + " is empty");
  }
}

}  // namespace semiconv
