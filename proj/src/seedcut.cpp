#include "semiconv/seedcut.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "semiconv/errors.hpp"
#include "semiconv/losses.hpp"
#include "semiconv/ops.hpp"

namespace semiconv {

std::vector<std::size_t> Box::pixels(std::size_t image_width) const {
  std::vector<std::size_t> out;
  out.reserve(area());
  for (std::size_t y = y0; y < y1; ++y)
    for (std::size_t x = x0; x < x1; ++x) out.push_back(y * image_width + x);
  return out;
}

void Box::validate(std::size_t image_height, std::size_t image_width) const {
  if (x0 >= x1 || y0 >= y1) throw std::invalid_argument("box: empty rectangle");
  if (x1 > image_width || y1 > image_height) throw std::invalid_argument("box: outside the image");
}

std::vector<Box> gt_boxes(const InstanceLabeling& gt, std::size_t margin) {
  std::vector<Box> boxes;
  for (const auto& pixels : gt.instance_pixels()) {
    Box b{std::numeric_limits<std::size_t>::max(), std::numeric_limits<std::size_t>::max(), 0, 0};
    for (std::size_t p : pixels) {
      const std::size_t x = p % gt.width, y = p / gt.width;
      b.x0 = std::min(b.x0, x);
      b.y0 = std::min(b.y0, y);
      b.x1 = std::max(b.x1, x + 1);
      b.y1 = std::max(b.y1, y + 1);
    }
    b.x0 = b.x0 > margin ? b.x0 - margin : 0;
    b.y0 = b.y0 > margin ? b.y0 - margin : 0;
    b.x1 = std::min(gt.width, b.x1 + margin);
    b.y1 = std::min(gt.height, b.y1 + margin);
    boxes.push_back(b);
  }
  return boxes;
}

nlohmann::json boxes_to_json(std::span<const Box> boxes) {
  auto out = nlohmann::json::array();
  for (const Box& b : boxes) out.push_back({{"x0", b.x0}, {"y0", b.y0}, {"x1", b.x1}, {"y1", b.y1}});
  return out;
}

std::vector<Box> boxes_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw std::invalid_argument("boxes: expected a JSON array");
  std::vector<Box> boxes;
  for (const auto& item : j) {
    boxes.push_back({item.at("x0").get<std::size_t>(), item.at("y0").get<std::size_t>(),
                     item.at("x1").get<std::size_t>(), item.at("y1").get<std::size_t>()});
  }
  return boxes;
}

void RegionProposal::validate() const {
  const std::size_t n = box.area();
  if (n == 0) throw std::invalid_argument("region: empty rectangle");
  if (scores.numel() != n) throw ShapeError("region: score map does not match the rectangle");
  if (embeddings.rank() != 2 || embeddings.dim(0) != n) throw ShapeError("region: embeddings must be [N,D]");
  if (coords && coords->shape() != Shape{n, 2}) throw ShapeError("region: coords must be [N,2]");
}

RegionProposal make_region(const EmbeddingField& field, std::span<const double> score_map, const Box& box) {
  box.validate(field.height(), field.width());
  if (score_map.size() != field.height() * field.width()) throw ShapeError("make_region: score map size mismatch");
  const auto pixels = box.pixels(field.width());
  std::vector<double> scores, coords;
  scores.reserve(pixels.size());
  coords.reserve(2 * pixels.size());
  for (std::size_t p : pixels) {
    scores.push_back(score_map[p]);
    coords.push_back(static_cast<double>(p % field.width()));
    coords.push_back(static_cast<double>(p / field.width()));
  }
  RegionProposal r;
  r.box = box;
  r.scores = Tensor(Shape{pixels.size()}, std::move(scores));
  r.embeddings = field.pixel_rows(pixels);
  r.coords = Tensor(Shape{pixels.size(), 2}, std::move(coords));
  return r;
}

CutResult cut_region(const RegionProposal& region, const KernelParams& params, SeedMode mode, double threshold) {
  if (region.box.area() == 0 || region.scores.numel() == 0) throw std::invalid_argument("cut_region: empty region");
  region.validate();
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw DomainError("cut_region: threshold must lie in [0, 1]");
  CutResult out;
  out.fusion = fuse_scores(region.scores, region.embeddings, params, mode,
                           params.family == KernelFamily::bilateral ? region.coords : std::nullopt);
  const auto prob = out.fusion.probabilities.data();
  out.mask.resize(prob.size());
  for (std::size_t i = 0; i < prob.size(); ++i) out.mask[i] = prob[i] >= threshold ? 1 : 0;
  return out;
}

std::vector<double> synthetic_score_map(const Scene& scene, const ScoreMapOptions& options) {
  if (!(options.slope > 0.0)) throw DomainError("score map: slope must be positive");
  const double reach = static_cast<double>(scene.meta.dot_radius) + options.overshoot;
  const std::size_t h = scene.gt.height, w = scene.gt.width;
  std::vector<double> map(h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : scene.centers) {
        const double dx = static_cast<double>(x) - static_cast<double>(c[0]);
        const double dy = static_cast<double>(y) - static_cast<double>(c[1]);
        best = std::min(best, dx * dx + dy * dy);
      }
      map[y * w + x] = scene.centers.empty() ? -options.slope * reach : options.slope * (reach - std::sqrt(best));
    }
  return map;
}

namespace {

// Ground-truth instance covering the most pixels of the box; lowest id on ties, 0 if none.
std::int32_t dominant_instance(const InstanceLabeling& gt, const Box& box) {
  std::map<std::int32_t, std::size_t> counts;
  for (std::size_t p : box.pixels(gt.width))
    if (gt.labels[p] > 0) ++counts[gt.labels[p]];
  std::int32_t best = 0;
  std::size_t best_count = 0;
  for (const auto& [id, n] : counts)
    if (n > best_count) {
      best = id;
      best_count = n;
    }
  return best;
}

}  // namespace

SeedcutModel train_seedcut(const Scene& scene, std::span<const Box> boxes, const SeedcutConfig& config) {
  const auto& tc = config.train;
  if (!(config.sigma_init > 0.0) || !std::isfinite(config.sigma_init)) {
    throw DomainError("train_seedcut: sigma_init must be positive");
  }
  if (!(config.embedding_weight >= 0.0) || !(config.bce_weight >= 0.0)) {
    throw DomainError("train_seedcut: loss weights must be non-negative");
  }
  const bool use_bce = config.bce_weight > 0.0;
  if (use_bce && boxes.empty()) throw std::invalid_argument("train_seedcut: no boxes");
  for (const Box& b : boxes) b.validate(scene.gt.height, scene.gt.width);

  SeedcutModel m{Backbone(tc.backbone_config(scene.image.dim(0))), KernelParams::laplacian(config.sigma_init, true),
                 {}, {}};
  const SegmentSet segments = SegmentSet::from_labeling(scene.gt);
  if (segments.segments.empty()) throw std::invalid_argument("train_seedcut: scene has no foreground instances");
  const PullLossOptions loss_options{.eps = tc.eps, .include_background = tc.include_background};

  std::vector<std::uint8_t> active =
      tc.include_background ? std::vector<std::uint8_t>(scene.gt.pixels(), 1) : scene.gt.foreground_mask();
  const auto score_map = synthetic_score_map(scene, config.scores);
  std::vector<std::vector<std::size_t>> box_pixels;
  std::vector<Tensor> box_scores;
  for (const Box& b : boxes) {
    box_pixels.push_back(b.pixels(scene.gt.width));
    std::vector<double> s;
    for (std::size_t p : box_pixels.back()) {
      s.push_back(score_map[p]);
      if (use_bce) active[p] = 1;
    }
    box_scores.emplace_back(Shape{s.size()}, std::move(s));
  }

  auto params = m.model.parameters();
  if (use_bce) params.push_back(m.kernel.log_sigma);
  SgdOptimizer optimizer(params, tc.lr, tc.optimizer, tc.momentum);
  m.losses.reserve(tc.epochs + 1);
  for (std::size_t step = 0; step <= tc.epochs; ++step) {
    try {
      optimizer.zero_grad();
      const EmbeddingField field = make_field(m.model.forward(scene.image, active), tc.mode);
      Tensor loss = pull_to_mean_loss(field, segments, loss_options);
      if (config.embedding_weight != 1.0) loss = scale(loss, config.embedding_weight);
      if (use_bce) {
        std::optional<Tensor> bce;
        for (std::size_t b = 0; b < boxes.size(); ++b) {
          const SeedFusionResult f =
              fuse_scores(box_scores[b], field.pixel_rows(box_pixels[b]), m.kernel, config.seed_mode);
          // Target: the instance that contains the hard seed (empty if the seed is background).
          const std::int32_t id = scene.gt.labels[box_pixels[b][f.seed_index]];
          std::vector<std::uint8_t> target(box_pixels[b].size(), 0);
          for (std::size_t i = 0; i < target.size(); ++i)
            target[i] = id > 0 && scene.gt.labels[box_pixels[b][i]] == id ? 1 : 0;
          const Tensor term = mask_bce(f.kernel_row, target);
          bce = bce ? add(*bce, term) : term;
        }
        loss = add(loss, scale(*bce, config.bce_weight / static_cast<double>(boxes.size())));
      }
      m.losses.push_back(loss.item());
      m.sigmas.push_back(m.kernel.sigma());
      if (step == tc.epochs) break;
      loss.backward();
      optimizer.step();
    } catch (const NumericError& e) {
      throw NumericError("training diverged at step " + std::to_string(step) + ": " + e.what());
    }
  }
  return m;
}

std::vector<BoxCut> cut_boxes(const EmbeddingField& field, std::span<const double> score_map,
                              std::span<const Box> boxes, const KernelParams& params, SeedMode mode,
                              double threshold, const InstanceLabeling& gt) {
  if (gt.height != field.height() || gt.width != field.width()) throw ShapeError("cut_boxes: gt grid mismatch");
  std::vector<BoxCut> cuts(boxes.size());
  NoGradGuard no_grad;
  for (std::size_t b = 0; b < boxes.size(); ++b) {
    const RegionProposal region = make_region(field, score_map, boxes[b]);
    CutResult r = cut_region(region, params, mode, threshold);
    const auto pixels = boxes[b].pixels(field.width());
    BoxCut& c = cuts[b];
    c.box = boxes[b];
    c.seed_pixel = pixels[r.fusion.seed_index];
    c.mask = std::move(r.mask);
    const std::int32_t id = dominant_instance(gt, boxes[b]);
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < pixels.size(); ++i) {
      const bool truth = id > 0 && gt.labels[pixels[i]] == id;
      inter += truth && c.mask[i];
      uni += truth || c.mask[i];
    }
    // Instance pixels outside the box count as misses.
    if (id > 0) {
      std::size_t total = 0;
      for (std::int32_t v : gt.labels) total += v == id;
      std::size_t inside = 0;
      for (std::size_t p : pixels) inside += gt.labels[p] == id;
      uni += total - inside;
    }
    c.iou = uni ? static_cast<double>(inter) / static_cast<double>(uni) : 1.0;
  }
  return cuts;
}

double mean_iou(std::span<const BoxCut> cuts) {
  if (cuts.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& c : cuts) acc += c.iou;
  return acc / static_cast<double>(cuts.size());
}

std::vector<std::size_t> rle_encode(std::span<const std::uint8_t> mask) {
  std::vector<std::size_t> counts;
  std::uint8_t current = 0;
  std::size_t run = 0;
  for (std::uint8_t v : mask) {
    const std::uint8_t bit = v ? 1 : 0;
    if (bit != current) {
      counts.push_back(run);
      current = bit;
      run = 0;
    }
    ++run;
  }
  counts.push_back(run);
  return counts;
}

std::vector<std::uint8_t> rle_decode(std::span<const std::size_t> counts) {
  std::vector<std::uint8_t> mask;
  std::uint8_t bit = 0;
  for (std::size_t n : counts) {
    mask.insert(mask.end(), n, bit);
    bit ^= 1;
  }
  return mask;
}

nlohmann::json cuts_to_json(std::span<const BoxCut> cuts, std::size_t image_width) {
  auto out = nlohmann::json::array();
  for (const BoxCut& c : cuts) {
    std::size_t area = 0;
    for (auto v : c.mask) area += v;
    out.push_back({
        {"box", {{"x0", c.box.x0}, {"y0", c.box.y0}, {"x1", c.box.x1}, {"y1", c.box.y1}}},
        {"seed", {c.seed_pixel % image_width, c.seed_pixel / image_width}},
        {"area", area},
        {"iou", c.iou},
        {"rle", rle_encode(c.mask)},
    });
  }
  return out;
}

}  // namespace semiconv
