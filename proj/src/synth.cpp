#include "semiconv/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <tuple>

#include "semiconv/errors.hpp"
#include "semiconv/io.hpp"
#include "semiconv/losses.hpp"
#include "semiconv/ops.hpp"
#include "semiconv/rng.hpp"

namespace semiconv {

std::size_t disc_area(std::size_t radius) {
  const auto r = static_cast<long>(radius);
  std::size_t n = 0;
  for (long dy = -r; dy <= r; ++dy)
    for (long dx = -r; dx <= r; ++dx)
      if (dx * dx + dy * dy <= r * r) ++n;
  return n;
}

Scene generate_scene(const SceneSpec& spec) {
  if (spec.rows == 0 || spec.cols == 0) throw std::invalid_argument("scene: need at least one row and column");
  if (spec.rows * spec.cols > 0xFFFF) throw std::invalid_argument("scene: too many instances");
  if ((spec.rows > 1 || spec.cols > 1) && spec.spacing <= 2 * spec.dot_radius) {
    throw std::invalid_argument("scene: overlapping dots (spacing must exceed 2 * radius)");
  }
  if (!(spec.noise_std >= 0.0)) throw DomainError("scene: noise std must be non-negative");
  const std::size_t extent_y = (spec.rows - 1) * spec.spacing, extent_x = (spec.cols - 1) * spec.spacing;
  if (extent_y + 2 * spec.dot_radius >= spec.height || extent_x + 2 * spec.dot_radius >= spec.width) {
    throw std::invalid_argument("scene: grid does not fit in the image");
  }
  const std::size_t oy = (spec.height - extent_y) / 2, ox = (spec.width - extent_x) / 2;
  if (oy < spec.dot_radius || ox < spec.dot_radius || oy + extent_y + spec.dot_radius >= spec.height ||
      ox + extent_x + spec.dot_radius >= spec.width) {
    throw std::invalid_argument("scene: grid does not fit in the image");
  }

  Scene scene;
  scene.meta = spec;
  scene.gt.height = spec.height;
  scene.gt.width = spec.width;
  scene.gt.labels.assign(spec.height * spec.width, 0);
  std::vector<double> image(spec.height * spec.width, 0.0);
  const auto r = static_cast<long>(spec.dot_radius);
  std::int32_t id = 0;
  for (std::size_t row = 0; row < spec.rows; ++row)
    for (std::size_t col = 0; col < spec.cols; ++col) {
      ++id;
      const std::size_t cy = oy + row * spec.spacing, cx = ox + col * spec.spacing;
      scene.centers.push_back({cx, cy});
      for (long dy = -r; dy <= r; ++dy)
        for (long dx = -r; dx <= r; ++dx) {
          if (dx * dx + dy * dy > r * r) continue;
          const auto p = static_cast<std::size_t>((static_cast<long>(cy) + dy) * static_cast<long>(spec.width) +
                                                  static_cast<long>(cx) + dx);
          scene.gt.labels[p] = id;
          image[p] = 1.0;
        }
    }
  scene.gt.count = id;

  if (spec.noise_std > 0.0) {
    Rng rng(spec.seed);
    for (double& v : image) v += spec.noise_std * rng.normal();
  }
  // f32 precision, matching the JSON payload.
  for (double& v : image) v = static_cast<double>(static_cast<float>(v));
  scene.image = Tensor(Shape{1, spec.height, spec.width}, std::move(image));
  return scene;
}

nlohmann::json scene_to_json(const Scene& scene) {
  const auto& m = scene.meta;
  return {
      {"h", m.height},
      {"w", m.width},
      {"rows", m.rows},
      {"cols", m.cols},
      {"dot_radius", m.dot_radius},
      {"spacing", m.spacing},
      {"seed", m.seed},
      {"image", base64_encode(pack_f32_le(scene.image.data()))},
      {"labels", base64_encode(pack_u16_le(scene.gt.labels))},
  };
}

Scene scene_from_json(const nlohmann::json& j) {
  Scene scene;
  auto& m = scene.meta;
  m.height = j.at("h").get<std::size_t>();
  m.width = j.at("w").get<std::size_t>();
  m.rows = j.at("rows").get<std::size_t>();
  m.cols = j.at("cols").get<std::size_t>();
  m.dot_radius = j.at("dot_radius").get<std::size_t>();
  m.spacing = j.at("spacing").get<std::size_t>();
  m.seed = j.at("seed").get<std::uint64_t>();
  const auto image = unpack_f32_le(base64_decode(j.at("image").get<std::string>()));
  const auto labels = unpack_u16_le(base64_decode(j.at("labels").get<std::string>()));
  if (image.size() != m.height * m.width || labels.size() != m.height * m.width) {
    throw ShapeError("scene: payload size does not match h * w");
  }
  scene.image = Tensor(Shape{1, m.height, m.width}, image);
  scene.gt.height = m.height;
  scene.gt.width = m.width;
  scene.gt.labels = labels;
  scene.gt.count = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end());
  scene.gt.validate();
  for (const auto& pixels : scene.gt.instance_pixels()) {
    double sx = 0.0, sy = 0.0;
    for (std::size_t p : pixels) {
      sx += static_cast<double>(p % m.width);
      sy += static_cast<double>(p / m.width);
    }
    const double n = static_cast<double>(pixels.size());
    scene.centers.push_back({static_cast<std::size_t>(std::lround(sx / n)), static_cast<std::size_t>(std::lround(sy / n))});
  }
  return scene;
}

EmbeddingMode parse_mode(std::string_view text) {
  if (text == "conv") return EmbeddingMode::conv;
  if (text == "semiconv") return EmbeddingMode::semiconv;
  throw std::invalid_argument("unknown mode '" + std::string(text) + "' (expected conv or semiconv)");
}

std::string_view to_string(EmbeddingMode mode) { return mode == EmbeddingMode::conv ? "conv" : "semiconv"; }

BackboneConfig TrainConfig::backbone_config(std::size_t in_channels) const {
  BackboneConfig c;
  c.in_channels = in_channels;
  c.channels = hidden_channels;
  c.channels.push_back(dims);
  c.kernel_sizes.assign(c.channels.size(), 3);
  c.padding = padding;
  c.seed = seed;
  c.head_grad_scale = head_grad_scale;
  return c;
}

SgdOptimizer::SgdOptimizer(std::vector<Tensor> params, double lr, Optimizer kind, double momentum)
    : params_(std::move(params)), lr_(lr), kind_(kind), momentum_(momentum) {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw DomainError("optimizer: learning rate must be positive");
  for (const Tensor& p : params_) velocity_.emplace_back(p.numel(), 0.0);
}

void SgdOptimizer::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

void SgdOptimizer::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) continue;
    const auto g = params_[i].grad();
    std::vector<double> value(params_[i].data().begin(), params_[i].data().end());
    auto& v = velocity_[i];
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (!std::isfinite(g[j])) throw NumericError("optimizer: non-finite gradient");
      if (kind_ == Optimizer::momentum) {
        v[j] = momentum_ * v[j] + g[j];
        value[j] -= lr_ * v[j];
      } else {
        value[j] -= lr_ * g[j];
      }
    }
    params_[i].assign(value);
  }
}

EmbeddingField make_field(const Tensor& phi, EmbeddingMode mode) {
  return mode == EmbeddingMode::semiconv ? attach_coords(phi) : convolutional_field(phi);
}

TrainResult train(const Scene& scene, const TrainConfig& config) {
  TrainResult result{Backbone(config.backbone_config(scene.image.dim(0))), {}};
  const SegmentSet segments = SegmentSet::from_labeling(scene.gt);
  if (segments.segments.empty()) throw std::invalid_argument("train: scene has no foreground instances");
  const std::vector<std::uint8_t> supervised =
      config.include_background ? std::vector<std::uint8_t>(scene.gt.pixels(), 1) : scene.gt.foreground_mask();
  const PullLossOptions loss_options{.eps = config.eps, .include_background = config.include_background};

  SgdOptimizer optimizer(result.model.parameters(), config.lr, config.optimizer, config.momentum);
  result.losses.reserve(config.epochs + 1);
  for (std::size_t step = 0; step <= config.epochs; ++step) {
    try {
      optimizer.zero_grad();
      const Tensor phi = result.model.forward(scene.image, supervised);
      const Tensor loss = pull_to_mean_loss(make_field(phi, config.mode), segments, loss_options);
      result.losses.push_back(loss.item());
      if (step == config.epochs) break;
      loss.backward();
      optimizer.step();
    } catch (const NumericError& e) {
      throw NumericError("training diverged at step " + std::to_string(step) + ": " + e.what());
    }
  }
  return result;
}

EmbeddingField embed(const Backbone& model, const Scene& scene, EmbeddingMode mode) {
  NoGradGuard no_grad;
  return make_field(model.forward(scene.image), mode);
}

KMeansResult kmeans(const std::vector<std::vector<double>>& points, std::size_t k, std::uint64_t seed,
                    const KMeansOptions& options) {
  if (k == 0) throw std::invalid_argument("kmeans: k must be positive");
  if (points.empty()) throw std::invalid_argument("kmeans: no points");
  if (k > points.size()) throw std::invalid_argument("kmeans: k exceeds the number of points");
  const std::size_t n = points.size(), d = points.front().size();
  auto dist2 = [d](const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < d; ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return acc;
  };

  Rng rng(seed);
  KMeansResult r;
  r.centroids.push_back(points[rng.index(n)]);
  std::vector<double> nearest(n);
  for (std::size_t i = 0; i < n; ++i) nearest[i] = dist2(points[i], r.centroids[0]);
  while (r.centroids.size() < k) {
    double total = 0.0;
    for (double v : nearest) total += v;
    std::size_t pick = n - 1;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += nearest[i];
        if (acc > target) {
          pick = i;
          break;
        }
      }
    } else {
      // Fewer distinct points than clusters: any point will do.
      pick = rng.index(n);
    }
    r.centroids.push_back(points[pick]);
    for (std::size_t i = 0; i < n; ++i) nearest[i] = std::min(nearest[i], dist2(points[i], r.centroids.back()));
  }

  r.assignment.assign(n, 0);
  for (r.iterations = 1; r.iterations <= options.max_iterations; ++r.iterations) {
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double dd = dist2(points[i], r.centroids[c]);
        if (dd < best) {
          best = dd;
          r.assignment[i] = c;
        }
      }
    }
    std::vector<std::vector<double>> sums(k, std::vector<double>(d, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[r.assignment[i]];
      for (std::size_t j = 0; j < d; ++j) sums[r.assignment[i]][j] += points[i][j];
    }
    double shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its centroid
      for (double& v : sums[c]) v /= static_cast<double>(counts[c]);
      shift = std::max(shift, std::sqrt(dist2(sums[c], r.centroids[c])));
      r.centroids[c] = std::move(sums[c]);
    }
    if (shift < options.tolerance) break;
  }
  r.iterations = std::min(r.iterations, options.max_iterations);
  return r;
}

InstanceLabeling decode_kmeans(const EmbeddingField& field, std::span<const std::uint8_t> foreground, std::size_t k,
                               std::uint64_t seed, const KMeansOptions& options) {
  const std::size_t plane = field.height() * field.width();
  if (foreground.size() != plane) throw ShapeError("decode_kmeans: mask does not match the field");
  if (k == 0) throw std::invalid_argument("decode_kmeans: K must be positive");
  std::vector<std::size_t> pixels;
  for (std::size_t p = 0; p < plane; ++p)
    if (foreground[p]) pixels.push_back(p);
  if (pixels.empty()) throw std::invalid_argument("decode_kmeans: empty foreground");
  if (k > pixels.size()) throw std::invalid_argument("decode_kmeans: K exceeds the foreground pixel count");

  std::vector<std::vector<double>> points;
  points.reserve(pixels.size());
  for (std::size_t p : pixels) points.push_back(field.embedding_at(p));
  const KMeansResult km = kmeans(points, k, seed, options);

  std::vector<std::int32_t> remap(k, 0);
  for (std::size_t a : km.assignment) remap[a] = 1;
  std::int32_t next = 0;
  for (auto& v : remap) v = v ? ++next : 0;

  InstanceLabeling out;
  out.height = field.height();
  out.width = field.width();
  out.labels.assign(plane, 0);
  for (std::size_t i = 0; i < pixels.size(); ++i) out.labels[pixels[i]] = remap[km.assignment[i]];
  out.count = next;
  return out;
}

SegmentationScore score(const InstanceLabeling& pred, const InstanceLabeling& gt) {
  if (pred.height != gt.height || pred.width != gt.width || pred.labels.size() != gt.labels.size()) {
    throw ShapeError("score: prediction and ground truth grids differ");
  }
  const auto kg = static_cast<std::size_t>(gt.count), kp = static_cast<std::size_t>(pred.count);
  std::vector<std::size_t> gt_size(kg + 1, 0), pred_size(kp + 1, 0);
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> inter;
  std::size_t foreground = 0;
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    const auto g = static_cast<std::size_t>(gt.labels[i]), p = static_cast<std::size_t>(pred.labels[i]);
    ++gt_size[g];
    ++pred_size[p];
    if (g > 0) ++foreground;
    if (g > 0 && p > 0) ++inter[{g, p}];
  }

  SegmentationScore s;
  if (kg == 0) return s;

  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
  for (const auto& [key, count] : inter) {
    const double iou = static_cast<double>(count) /
                       static_cast<double>(gt_size[key.first] + pred_size[key.second] - count);
    pairs.emplace_back(iou, key.first, key.second);
  }
  std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
    return std::tie(std::get<1>(a), std::get<2>(a)) < std::tie(std::get<1>(b), std::get<2>(b));
  });
  std::vector<bool> gt_used(kg + 1, false), pred_used(kp + 1, false);
  double total_iou = 0.0;
  for (const auto& [iou, g, p] : pairs) {
    if (gt_used[g] || pred_used[p]) continue;
    gt_used[g] = pred_used[p] = true;
    total_iou += iou;
  }
  s.mean_iou = total_iou / static_cast<double>(kg);

  // Majority ground-truth instance of each predicted cluster; ties to the lowest id.
  std::vector<std::size_t> best_count(kp + 1, 0);
  std::vector<std::size_t> best_id(kp + 1, 0);
  for (const auto& [key, count] : inter) {
    const auto [g, p] = key;
    if (count > best_count[p] || (count == best_count[p] && g < best_id[p])) {
      best_count[p] = count;
      best_id[p] = g;
    }
  }
  std::size_t pure = 0;
  for (std::size_t p = 1; p <= kp; ++p) pure += best_count[p];
  s.purity = foreground ? static_cast<double>(pure) / static_cast<double>(foreground) : 0.0;
  return s;
}

}  // namespace semiconv
