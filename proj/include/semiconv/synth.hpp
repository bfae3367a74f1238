#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"
#include "semiconv/backbone.hpp"
#include "semiconv/embedding.hpp"
#include "semiconv/labeling.hpp"
#include "semiconv/tensor.hpp"

namespace semiconv {

struct SceneSpec {
  std::size_t height = 128;
  std::size_t width = 128;
  std::size_t rows = 4;
  std::size_t cols = 4;
  std::size_t dot_radius = 3;
  /// Center-to-center distance. The grid is centered, so with spacing =
  /// height / rows the pattern tiles the image periodically.
  std::size_t spacing = 32;
  double noise_std = 0.0;
  std::uint64_t seed = 0;
};

/// Grid of identical filled discs (intensity 1 on 0) with ground-truth instances
/// numbered in raster order of their centers.
struct Scene {
  Tensor image;  // [1,H,W]
  InstanceLabeling gt;
  SceneSpec meta;
  std::vector<std::array<std::size_t, 2>> centers;  // (x, y) per instance
};

/// Number of pixels with dx^2 + dy^2 <= r^2.
std::size_t disc_area(std::size_t radius);

Scene generate_scene(const SceneSpec& spec);

nlohmann::json scene_to_json(const Scene& scene);
Scene scene_from_json(const nlohmann::json& j);

enum class EmbeddingMode { conv, semiconv };
enum class Optimizer { sgd, momentum };

EmbeddingMode parse_mode(std::string_view text);
std::string_view to_string(EmbeddingMode mode);

struct TrainConfig {
  EmbeddingMode mode = EmbeddingMode::semiconv;
  std::size_t dims = 8;
  std::vector<std::size_t> hidden_channels{16, 32};
  Padding padding = Padding::circular;
  double head_grad_scale = 1.0;
  std::size_t epochs = 2000;
  double lr = 3e-4;
  Optimizer optimizer = Optimizer::sgd;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  double eps = 1e-8;
  bool include_background = false;

  BackboneConfig backbone_config(std::size_t in_channels) const;
};

/// Plain or momentum SGD over a fixed parameter list.
class SgdOptimizer {
 public:
  SgdOptimizer(std::vector<Tensor> params, double lr, Optimizer kind, double momentum);
  void zero_grad();
  /// Throws NumericError on a non-finite gradient.
  void step();

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> velocity_;
  double lr_;
  Optimizer kind_;
  double momentum_;
};

/// Psi (semiconv) or Phi (conv) for the given backbone output.
EmbeddingField make_field(const Tensor& phi, EmbeddingMode mode);

struct TrainResult {
  Backbone model;
  /// Loss before each update, followed by the loss of the final model (epochs + 1 entries).
  std::vector<double> losses;
  double final_loss() const { return losses.back(); }
};

/// Fits the backbone to one scene by SGD on the pull-to-mean loss. Only the
/// receptive field of the supervised pixels is evaluated per step.
TrainResult train(const Scene& scene, const TrainConfig& config);

/// Embedding field of the whole image under a trained model (no graph recorded).
EmbeddingField embed(const Backbone& model, const Scene& scene, EmbeddingMode mode);

struct KMeansOptions {
  std::size_t max_iterations = 300;
  double tolerance = 1e-6;
};

struct KMeansResult {
  std::vector<std::size_t> assignment;
  std::vector<std::vector<double>> centroids;
  std::size_t iterations = 0;
};

/// k-means++ seeding followed by Lloyd iterations until the largest centroid
/// shift drops below the tolerance. Ties go to the lowest centroid index.
KMeansResult kmeans(const std::vector<std::vector<double>>& points, std::size_t k, std::uint64_t seed,
                    const KMeansOptions& options = {});

/// Clusters the foreground embeddings into `k` groups. Background keeps label 0;
/// clusters that end up empty are dropped and the remaining ids compacted.
InstanceLabeling decode_kmeans(const EmbeddingField& field, std::span<const std::uint8_t> foreground, std::size_t k,
                               std::uint64_t seed, const KMeansOptions& options = {});

struct SegmentationScore {
  double mean_iou = 0.0;
  double purity = 0.0;
};

/// mean_iou: mean over ground-truth instances of the IoU they get under greedy
/// one-to-one matching in descending IoU order (0 when unmatched).
/// purity: fraction of ground-truth foreground pixels whose predicted cluster's
/// majority instance is their own.
SegmentationScore score(const InstanceLabeling& pred, const InstanceLabeling& gt);

}  // namespace semiconv
