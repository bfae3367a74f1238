#include "semiconv/losses.hpp"

#include <string>

#include "semiconv/errors.hpp"
#include "semiconv/ops.hpp"

namespace semiconv {

namespace {
constexpr double kProbabilityClamp = 1e-7;
}

SegmentSet SegmentSet::from_labeling(const InstanceLabeling& labeling) {
  labeling.validate();
  SegmentSet set;
  set.segments = labeling.instance_pixels();
  for (std::size_t i = 0; i < labeling.labels.size(); ++i)
    if (labeling.labels[i] == 0) set.background.push_back(i);
  return set;
}

void SegmentSet::validate(std::size_t pixel_count) const {
  std::vector<std::uint8_t> owner(pixel_count, 0);
  auto claim = [&](std::size_t p) {
    if (p >= pixel_count) throw ShapeError("segments: pixel index out of range");
    if (owner[p]) throw std::invalid_argument("segments: segments overlap");
    owner[p] = 1;
  };
  for (const auto& s : segments) {
    if (s.empty()) throw std::invalid_argument("segments: empty segment");
    for (std::size_t p : s) claim(p);
  }
  for (std::size_t p : background) claim(p);
  for (std::uint8_t o : owner)
    if (!o) throw std::invalid_argument("segments: pixels not covered by any segment or background");
}

Tensor pull_to_mean_loss(const EmbeddingField& field, const SegmentSet& segments, const PullLossOptions& options) {
  if (!(options.eps > 0.0)) throw DomainError("pull_to_mean_loss: eps must be positive");
  std::vector<const std::vector<std::size_t>*> groups;
  for (const auto& s : segments.segments) {
    if (s.empty()) throw std::invalid_argument("pull_to_mean_loss: empty segment");
    groups.push_back(&s);
  }
  if (options.include_background && !segments.background.empty()) groups.push_back(&segments.background);
  if (groups.empty()) throw std::invalid_argument("pull_to_mean_loss: no segments");

  const Tensor rows = field.pixel_rows();
  Tensor total;
  bool first = true;
  for (const auto* group : groups) {
    const Tensor members = gather_rows(rows, *group);
    const Tensor center = mean(members, 0);
    const Tensor deviation = sub(members, expand_rows(center, group->size()));
    const Tensor term = mean(l2norm_rows(deviation, options.eps));
    total = first ? term : add(total, term);
    first = false;
  }
  return total;
}

Tensor mask_bce(const Tensor& probabilities, std::span<const std::uint8_t> mask) {
  if (probabilities.numel() != mask.size()) {
    throw ShapeError("mask_bce: " + std::to_string(probabilities.numel()) + " probabilities vs " +
                     std::to_string(mask.size()) + " mask entries");
  }
  if (mask.empty()) throw ShapeError("mask_bce: empty input");
  std::vector<double> positive(mask.size()), negative(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] > 1) throw std::invalid_argument("mask_bce: mask must be binary");
    positive[i] = mask[i] ? 1.0 : 0.0;
    negative[i] = 1.0 - positive[i];
  }
  const Tensor flat = reshape(probabilities, {mask.size()});
  const Tensor k = clamp(flat, kProbabilityClamp, 1.0 - kProbabilityClamp);
  const Tensor log_k = log(k);
  const Tensor log_not_k = log(add_scalar(neg(k), 1.0));
  const Tensor ll = add(mul(Tensor(Shape{mask.size()}, std::move(positive)), log_k),
                        mul(Tensor(Shape{mask.size()}, std::move(negative)), log_not_k));
  return neg(mean(ll));
}

}  // namespace semiconv
