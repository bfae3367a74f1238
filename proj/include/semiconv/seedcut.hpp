#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "semiconv/backbone.hpp"
#include "semiconv/embedding.hpp"
#include "semiconv/kernels.hpp"
#include "semiconv/synth.hpp"

namespace semiconv {

/// Half-open pixel rectangle [x0, x1) x [y0, y1).
struct Box {
  std::size_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  std::size_t width() const { return x1 > x0 ? x1 - x0 : 0; }
  std::size_t height() const { return y1 > y0 ? y1 - y0 : 0; }
  std::size_t area() const { return width() * height(); }
  bool operator==(const Box&) const = default;

  /// Raster indices of the covered pixels in an image `image_width` wide.
  std::vector<std::size_t> pixels(std::size_t image_width) const;
  void validate(std::size_t image_height, std::size_t image_width) const;
};

/// Tight box around each ground-truth instance grown by `margin` and clipped
/// to the image, in instance order.
std::vector<Box> gt_boxes(const InstanceLabeling& gt, std::size_t margin = 2);

nlohmann::json boxes_to_json(std::span<const Box> boxes);
std::vector<Box> boxes_from_json(const nlohmann::json& j);

/// One candidate region: scores and embeddings of its pixels in box raster order.
struct RegionProposal {
  Box box;
  Tensor scores;                 // [N]
  Tensor embeddings;             // [N,D]
  std::optional<Tensor> coords;  // [N,2], bilateral family only

  void validate() const;
};

/// Crops `score_map` (H*W values) and the field to `box`. Embeddings stay differentiable.
RegionProposal make_region(const EmbeddingField& field, std::span<const double> score_map, const Box& box);

struct CutResult {
  std::vector<std::uint8_t> mask;  // box raster order
  SeedFusionResult fusion;
};

/// mask = [logistic(s + log K(seed, .)) >= threshold].
CutResult cut_region(const RegionProposal& region, const KernelParams& params, SeedMode mode,
                     double threshold = 0.5);

struct ScoreMapOptions {
  /// Distance beyond the dot radius at which the score crosses zero.
  double overshoot = 1.5;
  double slope = 1.0;
};

/// Stand-in detector logits: slope * (radius + overshoot - d) with d the
/// distance to the nearest instance center. Positive on a disc slightly larger
/// than each dot and maximal at its center, so the hard seed of a ground-truth
/// box is that instance's center.
std::vector<double> synthetic_score_map(const Scene& scene, const ScoreMapOptions& options = {});

struct SeedcutConfig {
  TrainConfig train;
  double sigma_init = 1.0;
  double embedding_weight = 1.0;
  /// 0 disables the kernel term; training then matches train() step for step.
  double bce_weight = 1.0;
  SeedMode seed_mode = SeedMode::hard;
  ScoreMapOptions scores;
};

struct SeedcutModel {
  Backbone model;
  KernelParams kernel;
  std::vector<double> losses;  // epochs + 1 entries, as in TrainResult
  std::vector<double> sigmas;  // sigma before each update and at the end
};

/// Joint training of the embedding and the kernel scale on one scene: the
/// pull-to-mean loss plus, per box, the BCE of the kernel row around the seed
/// against the ground-truth instance containing the hard seed.
SeedcutModel train_seedcut(const Scene& scene, std::span<const Box> boxes, const SeedcutConfig& config);

struct BoxCut {
  Box box;
  std::size_t seed_pixel = 0;  // raster index in the image
  std::vector<std::uint8_t> mask;
  double iou = 0.0;  // against the instance covering most of the box
};

std::vector<BoxCut> cut_boxes(const EmbeddingField& field, std::span<const double> score_map,
                              std::span<const Box> boxes, const KernelParams& params, SeedMode mode,
                              double threshold, const InstanceLabeling& gt);

double mean_iou(std::span<const BoxCut> cuts);

/// Run-length encoding of a {0,1} mask: alternating run lengths starting with zeros.
std::vector<std::size_t> rle_encode(std::span<const std::uint8_t> mask);
std::vector<std::uint8_t> rle_decode(std::span<const std::size_t> counts);

nlohmann::json cuts_to_json(std::span<const BoxCut> cuts, std::size_t image_width);

}  // namespace semiconv
