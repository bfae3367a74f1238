#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "doctest.h"
#include "semiconv/embedding.hpp"
#include "semiconv/errors.hpp"
#include "semiconv/losses.hpp"
#include "semiconv/rng.hpp"
#include "semiconv/synth.hpp"

using namespace semiconv;

namespace {

SceneSpec small_spec() {
  SceneSpec s;
  s.height = s.width = 64;
  s.rows = s.cols = 2;
  return s;
}

std::size_t count_lattice_points(long r) {
  std::size_t n = 0;
  for (long y = -r; y <= r; ++y)
    for (long x = -r; x <= r; ++x) n += x * x + y * y <= r * r;
  return n;
}

InstanceLabeling labeling(std::size_t h, std::size_t w, std::vector<std::int32_t> labels) {
  InstanceLabeling l;
  l.height = h;
  l.width = w;
  l.count = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end());
  l.labels = std::move(labels);
  return l;
}

}  // namespace

TEST_CASE("disc area matches a direct lattice count") {
  for (long r = 0; r <= 12; ++r) CHECK(disc_area(static_cast<std::size_t>(r)) == count_lattice_points(r));
  CHECK(disc_area(3) == 29);
}

TEST_CASE("single dot scene") {
  SceneSpec s;
  s.height = s.width = 16;
  s.rows = s.cols = 1;
  s.spacing = 16;
  const Scene sc = generate_scene(s);
  CHECK(sc.gt.count == 1);
  CHECK(sc.centers.size() == 1);
  CHECK(sc.gt.foreground_indices().size() == disc_area(3));
  sc.gt.validate();
}

TEST_CASE("4x4 grid scene") {
  SceneSpec s;
  s.spacing = 16;
  const Scene sc = generate_scene(s);
  CHECK(sc.gt.count == 16);
  CHECK(sc.image.shape() == Shape{1, 128, 128});
  const auto fg = sc.gt.foreground_mask();
  std::size_t lit = 0;
  for (std::size_t i = 0; i < fg.size(); ++i) {
    CHECK((sc.image[i] == 1.0) == (fg[i] != 0));
    lit += fg[i];
  }
  CHECK(lit == 16 * count_lattice_points(3));
  for (const auto& pix : sc.gt.instance_pixels()) CHECK(pix.size() == 29);
  // raster numbering of centers
  for (std::size_t k = 0; k < sc.centers.size(); ++k) {
    const auto [x, y] = sc.centers[k];
    CHECK(sc.gt.labels[y * 128 + x] == static_cast<std::int32_t>(k + 1));
    if (k > 0) CHECK((sc.centers[k - 1][1] < y || (sc.centers[k - 1][1] == y && sc.centers[k - 1][0] < x)));
  }
}

TEST_CASE("default scene tiles the image periodically") {
  const Scene sc = generate_scene(SceneSpec{});
  for (std::size_t y = 0; y < 128; ++y)
    for (std::size_t x = 0; x < 128; ++x) CHECK(sc.image[y * 128 + x] == sc.image[((y + 32) % 128) * 128 + (x + 32) % 128]);
}

TEST_CASE("scene generation is deterministic and noise is seeded") {
  SceneSpec s = small_spec();
  s.noise_std = 0.1;
  const Scene a = generate_scene(s), b = generate_scene(s);
  CHECK(std::equal(a.image.data().begin(), a.image.data().end(), b.image.data().begin()));
  s.seed = 1;
  const Scene c = generate_scene(s);
  CHECK(!std::equal(a.image.data().begin(), a.image.data().end(), c.image.data().begin()));
  CHECK(a.gt.labels == c.gt.labels);
}

TEST_CASE("scene errors") {
  SceneSpec s;
  s.spacing = 6;
  CHECK_THROWS_AS(generate_scene(s), std::invalid_argument);
  s = SceneSpec{};
  s.rows = 0;
  CHECK_THROWS_AS(generate_scene(s), std::invalid_argument);
  s = SceneSpec{};
  s.rows = 5;
  CHECK_THROWS_AS(generate_scene(s), std::invalid_argument);
  s = SceneSpec{};
  s.noise_std = -1.0;
  CHECK_THROWS_AS(generate_scene(s), DomainError);
}

TEST_CASE("scene JSON round trip") {
  SceneSpec s = small_spec();
  s.noise_std = 0.05;
  s.seed = 4;
  const Scene a = generate_scene(s);
  const Scene b = scene_from_json(scene_to_json(a));
  CHECK(b.gt.labels == a.gt.labels);
  CHECK(b.gt.count == a.gt.count);
  CHECK(b.centers == a.centers);
  CHECK(std::equal(a.image.data().begin(), a.image.data().end(), b.image.data().begin()));
  auto j = scene_to_json(a);
  j["w"] = 63;
  CHECK_THROWS_AS(scene_from_json(j), ShapeError);
}

TEST_CASE("mode parsing") {
  CHECK(parse_mode("conv") == EmbeddingMode::conv);
  CHECK(parse_mode("semiconv") == EmbeddingMode::semiconv);
  CHECK(to_string(EmbeddingMode::semiconv) == "semiconv");
  CHECK_THROWS_AS(parse_mode("Conv"), std::invalid_argument);
}

TEST_CASE("zero epochs returns the initialization") {
  const Scene sc = generate_scene(small_spec());
  TrainConfig cfg;
  cfg.epochs = 0;
  const TrainResult conv = [&] {
    TrainConfig c = cfg;
    c.mode = EmbeddingMode::conv;
    return train(sc, c);
  }();
  const TrainResult semi = train(sc, cfg);
  CHECK(semi.losses.size() == 1);
  CHECK(conv.model.same_parameters(semi.model));
  CHECK(semi.model.same_parameters(Backbone(cfg.backbone_config(1))));
  const auto field = make_field(semi.model.forward(sc.image), EmbeddingMode::semiconv);
  CHECK(pull_to_mean_loss(field, SegmentSet::from_labeling(sc.gt)).item() ==
        doctest::Approx(semi.final_loss()).epsilon(1e-12));
}

TEST_CASE("loss history has one entry per step plus the final loss") {
  const Scene sc = generate_scene(small_spec());
  TrainConfig cfg;
  cfg.epochs = 5;
  const TrainResult r = train(sc, cfg);
  CHECK(r.losses.size() == 6);
  const TrainResult again = train(sc, cfg);
  CHECK(r.losses == again.losses);
  CHECK(r.model.same_parameters(again.model));
}

TEST_CASE("non-finite input reports the diverging step") {
  Scene sc = generate_scene(small_spec());
  std::vector<double> v(sc.image.data().begin(), sc.image.data().end());
  v[sc.centers[0][1] * 64 + sc.centers[0][0]] = std::numeric_limits<double>::quiet_NaN();
  sc.image = Tensor(sc.image.shape(), v);
  TrainConfig cfg;
  cfg.epochs = 3;
  // Background far from every dot is outside the supervised receptive field.
  Scene far = generate_scene(small_spec());
  std::vector<double> w(far.image.data().begin(), far.image.data().end());
  w[0] = std::numeric_limits<double>::quiet_NaN();
  far.image = Tensor(far.image.shape(), w);
  CHECK_NOTHROW(train(far, cfg));
  try {
    train(sc, cfg);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("step 0") != std::string::npos);
  }
}

TEST_CASE("optimizer") {
  const Tensor w = Tensor::full({2}, 1.0, true);
  SgdOptimizer plain({w}, 0.5, Optimizer::sgd, 0.0);
  sum(mul(w, w)).backward();
  plain.step();
  CHECK(w[0] == 0.0);
  plain.zero_grad();
  plain.step();
  CHECK(w[0] == 0.0);

  const Tensor m = Tensor::full({1}, 1.0, true);
  SgdOptimizer mom({m}, 0.1, Optimizer::momentum, 0.5);
  for (int i = 0; i < 2; ++i) {
    mom.zero_grad();
    sum(m).backward();
    mom.step();
  }
  // v1 = 1, v2 = 0.5 + 1 = 1.5
  CHECK(m[0] == doctest::Approx(1.0 - 0.1 - 0.15).epsilon(1e-15));
  CHECK_THROWS_AS(SgdOptimizer({m}, 0.0, Optimizer::sgd, 0.0), DomainError);
}

TEST_CASE("kmeans separates two blobs") {
  Rng rng(1);
  std::vector<std::vector<double>> pts;
  for (int i = 0; i < 40; ++i) pts.push_back({rng.uniform(-0.1, 0.1) + (i < 20 ? 0.0 : 10.0), rng.uniform(-0.1, 0.1)});
  const auto r = kmeans(pts, 2, 3);
  for (int i = 1; i < 20; ++i) CHECK(r.assignment[i] == r.assignment[0]);
  for (int i = 21; i < 40; ++i) CHECK(r.assignment[i] == r.assignment[20]);
  CHECK(r.assignment[0] != r.assignment[20]);
  const auto again = kmeans(pts, 2, 3);
  CHECK(again.assignment == r.assignment);
  CHECK(again.centroids == r.centroids);
}

TEST_CASE("kmeans with one cluster returns the mean") {
  const std::vector<std::vector<double>> pts{{0, 0}, {2, 0}, {4, 3}};
  const auto r = kmeans(pts, 1, 0);
  CHECK(r.centroids[0][0] == doctest::Approx(2.0));
  CHECK(r.centroids[0][1] == doctest::Approx(1.0));
  CHECK_THROWS_AS(kmeans(pts, 0, 0), std::invalid_argument);
  CHECK_THROWS_AS(kmeans(pts, 4, 0), std::invalid_argument);
  CHECK_THROWS_AS(kmeans({}, 1, 0), std::invalid_argument);
}

TEST_CASE("decode_kmeans keeps the background and compacts ids") {
  // Two groups of identical embeddings; asking for 3 clusters leaves one empty.
  std::vector<double> v(2 * 3 * 3, 0.0);
  const std::vector<std::uint8_t> fg{0, 1, 1, 0, 1, 1, 0, 0, 0};
  for (std::size_t p : {4, 5}) v[p] = 7.0;
  EmbeddingField f;
  f.values = Tensor(Shape{2, 3, 3}, v);
  const auto pred = decode_kmeans(f, fg, 2, 0);
  CHECK(pred.labels[0] == 0);
  CHECK(pred.labels[8] == 0);
  CHECK(pred.labels[1] == pred.labels[2]);
  CHECK(pred.labels[4] == pred.labels[5]);
  CHECK(pred.labels[1] != pred.labels[4]);
  CHECK(pred.count == 2);
  pred.validate();
  CHECK_THROWS_AS(decode_kmeans(f, std::vector<std::uint8_t>(4, 1), 2, 0), ShapeError);
  CHECK_THROWS_AS(decode_kmeans(f, std::vector<std::uint8_t>(9, 0), 1, 0), std::invalid_argument);
}

TEST_CASE("segmentation score examples") {
  const auto gt = labeling(1, 6, {1, 1, 2, 2, 0, 0});
  const auto perfect = score(gt, gt);
  CHECK(perfect.mean_iou == 1.0);
  CHECK(perfect.purity == 1.0);
  const auto permuted = score(labeling(1, 6, {2, 2, 1, 1, 0, 0}), gt);
  CHECK(permuted.mean_iou == 1.0);
  CHECK(permuted.purity == 1.0);
  const auto merged = score(labeling(1, 6, {1, 1, 1, 1, 0, 0}), gt);
  CHECK(merged.mean_iou == doctest::Approx(0.25));
  CHECK(merged.purity == 0.5);
  CHECK_THROWS_AS(score(labeling(1, 5, {1, 1, 1, 1, 0}), gt), ShapeError);
}

TEST_CASE("one cluster over sixteen equal instances has purity 1/16") {
  SceneSpec s;
  const Scene sc = generate_scene(s);
  InstanceLabeling one = sc.gt;
  for (auto& l : one.labels) l = l ? 1 : 0;
  one.count = 1;
  const auto r = score(one, sc.gt);
  CHECK(r.purity == doctest::Approx(1.0 / 16.0));
  CHECK(r.mean_iou == doctest::Approx(1.0 / 256.0));
}

TEST_CASE("semiconv training separates a small scene; conv collides") {
  const Scene sc = generate_scene(small_spec());
  TrainConfig cfg;
  cfg.epochs = 1000;
  cfg.lr = 1e-3;
  const TrainResult semi = train(sc, cfg);
  CHECK(semi.final_loss() < 0.1 * semi.losses.front());
  const auto field = embed(semi.model, sc, EmbeddingMode::semiconv);
  for (double s : endpoint_spread(field, sc.gt)) CHECK(s < 1.5);
  const auto pred = decode_kmeans(field, sc.gt.foreground_mask(), 4, 0);
  CHECK(score(pred, sc.gt).mean_iou >= 0.9);

  cfg.mode = EmbeddingMode::conv;
  const TrainResult conv = train(sc, cfg);
  const auto cf = embed(conv.model, sc, EmbeddingMode::conv);
  // Identical local appearance and a periodic scene: every instance gets the same embeddings.
  double collide = 0.0;
  for (std::size_t k = 1; k < sc.centers.size(); ++k) {
    const std::size_t a = sc.centers[0][1] * 64 + sc.centers[0][0], b = sc.centers[k][1] * 64 + sc.centers[k][0];
    const auto ea = cf.embedding_at(a), eb = cf.embedding_at(b);
    for (std::size_t d = 0; d < ea.size(); ++d) collide = std::max(collide, std::abs(ea[d] - eb[d]));
  }
  CHECK(collide < 1e-6);
  CHECK(check_margin(cf, sc.gt, 0.5, 2000, 0).between < 0.01);
  const auto cpred = decode_kmeans(cf, sc.gt.foreground_mask(), 4, 0);
  CHECK(score(cpred, sc.gt).mean_iou < 0.5);
}
