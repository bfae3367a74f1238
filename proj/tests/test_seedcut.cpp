#include <cmath>

#include "doctest.h"
#include "seedcut_cases.hpp"
#include "semiconv/errors.hpp"
#include "semiconv/seedcut.hpp"

using namespace semiconv;

namespace {

SceneSpec small_spec() {
  SceneSpec s;
  s.height = s.width = 64;
  s.rows = s.cols = 2;
  return s;
}

}  // namespace

TEST_CASE("constructed cut cases return their masks exactly") {
  for (const auto& c : testing::seedcut_oracle_cases()) {
    CAPTURE(c.name);
    const CutResult r = cut_region(c.region, KernelParams::laplacian(1.0), SeedMode::hard);
    CHECK(r.mask == c.expected);
  }
}

TEST_CASE("hard seed is invariant under monotone rescaling of the scores") {
  const auto c = testing::seedcut_oracle_cases()[2];
  const auto base = cut_region(c.region, KernelParams::laplacian(1.0), SeedMode::hard);
  std::vector<double> s(c.region.scores.data().begin(), c.region.scores.data().end());
  for (double& v : s) v = 3.0 * std::tanh(v) + 7.0;
  RegionProposal r = c.region;
  r.scores = Tensor(Shape{s.size()}, s);
  CHECK(cut_region(r, KernelParams::laplacian(1.0), SeedMode::hard).fusion.seed_index == base.fusion.seed_index);
}

TEST_CASE("cut_region errors") {
  auto c = testing::seedcut_oracle_cases()[0];
  CHECK_THROWS_AS(cut_region(c.region, KernelParams::laplacian(1.0), SeedMode::hard, 1.5), DomainError);
  RegionProposal empty;
  empty.box = Box{2, 2, 2, 5};
  CHECK_THROWS_AS(cut_region(empty, KernelParams::laplacian(1.0), SeedMode::hard), std::invalid_argument);
  c.region.scores = Tensor::zeros({3});
  CHECK_THROWS_AS(cut_region(c.region, KernelParams::laplacian(1.0), SeedMode::hard), ShapeError);
}

TEST_CASE("boxes") {
  const Box b{1, 2, 4, 3};
  CHECK(b.area() == 3);
  CHECK(b.pixels(10) == std::vector<std::size_t>{21, 22, 23});
  CHECK_THROWS_AS(b.validate(2, 10), std::invalid_argument);
  CHECK_THROWS_AS((Box{3, 0, 3, 1}).validate(5, 5), std::invalid_argument);

  const Scene sc = generate_scene(small_spec());
  const auto boxes = gt_boxes(sc.gt, 2);
  REQUIRE(boxes.size() == 4);
  const auto [cx, cy] = sc.centers[0];
  CHECK(boxes[0] == Box{cx - 5, cy - 5, cx + 6, cy + 6});
  CHECK(boxes_from_json(boxes_to_json(boxes)) == boxes);
  CHECK_THROWS_AS(boxes_from_json(nlohmann::json::object()), std::invalid_argument);
}

TEST_CASE("synthetic scores peak at each center and vanish past the dot") {
  const Scene sc = generate_scene(small_spec());
  const auto s = synthetic_score_map(sc);
  for (const auto& [x, y] : sc.centers) {
    CHECK(s[y * 64 + x] == doctest::Approx(4.5));
    CHECK(s[y * 64 + x + 4] == doctest::Approx(0.5));
    CHECK(s[y * 64 + x + 5] < 0.0);
  }
  const auto fg = sc.gt.foreground_mask();
  for (std::size_t i = 0; i < fg.size(); ++i)
    if (fg[i]) CHECK(s[i] > 0.0);
}

TEST_CASE("run-length encoding") {
  const std::vector<std::uint8_t> m{1, 1, 0, 0, 0, 1, 0};
  CHECK(rle_encode(m) == std::vector<std::size_t>{0, 2, 3, 1, 1});
  CHECK(rle_decode(rle_encode(m)) == m);
  const std::vector<std::uint8_t> zeros(5, 0);
  CHECK(rle_encode(zeros) == std::vector<std::size_t>{5});
  CHECK(rle_decode(rle_encode(zeros)) == zeros);
}

TEST_CASE("without the kernel term training matches the embedding trainer") {
  const Scene sc = generate_scene(small_spec());
  SeedcutConfig cfg;
  cfg.train.epochs = 4;
  cfg.bce_weight = 0.0;
  const auto boxes = gt_boxes(sc.gt);
  const SeedcutModel m = train_seedcut(sc, boxes, cfg);
  const TrainResult t = train(sc, cfg.train);
  CHECK(m.losses == t.losses);
  CHECK(m.model.same_parameters(t.model));
  CHECK(m.kernel.sigma() == 1.0);
}

TEST_CASE("seedcut config errors") {
  const Scene sc = generate_scene(small_spec());
  SeedcutConfig cfg;
  cfg.train.epochs = 1;
  cfg.sigma_init = 0.0;
  CHECK_THROWS_AS(train_seedcut(sc, gt_boxes(sc.gt), cfg), DomainError);
  cfg.sigma_init = 1.0;
  CHECK_THROWS_AS(train_seedcut(sc, {}, cfg), std::invalid_argument);
  cfg.bce_weight = -1.0;
  CHECK_THROWS_AS(train_seedcut(sc, gt_boxes(sc.gt), cfg), DomainError);
}

TEST_CASE("joint training cuts every box") {
  const Scene sc = generate_scene(small_spec());
  SeedcutConfig cfg;
  cfg.train.epochs = 1000;
  cfg.train.lr = 1e-3;
  cfg.bce_weight = 50.0;
  const auto boxes = gt_boxes(sc.gt, 2);
  const SeedcutModel m = train_seedcut(sc, boxes, cfg);
  for (double s : m.sigmas) {
    CHECK(std::isfinite(s));
    CHECK(s > 0.0);
  }
  CHECK(m.sigmas.front() == doctest::Approx(1.0));
  CHECK(m.sigmas.back() != m.sigmas.front());
  const auto field = embed(m.model, sc, cfg.train.mode);
  const auto cuts = cut_boxes(field, synthetic_score_map(sc), boxes, m.kernel, SeedMode::hard, 0.5, sc.gt);
  CHECK(mean_iou(cuts) >= 0.9);
  const auto j = cuts_to_json(cuts, 64);
  CHECK(j.size() == 4);
  CHECK(rle_decode(j[0]["rle"].get<std::vector<std::size_t>>()) == cuts[0].mask);
}
