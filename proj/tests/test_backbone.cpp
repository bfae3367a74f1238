#include <sstream>
#include <vector>

#include "doctest.h"
#include "semiconv/backbone.hpp"
#include "semiconv/errors.hpp"
#include "semiconv/gradcheck.hpp"
#include "semiconv/ops.hpp"
#include "semiconv/rng.hpp"

using namespace semiconv;

namespace {

Tensor random_image(std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(c * h * w);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor(Shape{c, h, w}, std::move(v));
}

Tensor shift(const Tensor& x, std::size_t dy, std::size_t dx) {
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  std::vector<double> out(x.numel());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx) out[(ch * h + (y + dy) % h) * w + (xx + dx) % w] = x.at({ch, y, xx});
  return Tensor(x.shape(), std::move(out));
}

BackboneConfig small_config(std::uint64_t seed = 3) {
  BackboneConfig c;
  c.channels = {4, 6, 3};
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("default config is three 3x3 layers ending in D = 8") {
  BackboneConfig c;
  CHECK(c.channels == std::vector<std::size_t>{16, 32, 8});
  CHECK(c.kernel_sizes == std::vector<std::size_t>{3, 3, 3});
  CHECK(c.dims() == 8);
  CHECK(c.padding == Padding::circular);
  c.set_dims(5);
  CHECK(c.channels.back() == 5);
}

TEST_CASE("invalid configs are rejected") {
  BackboneConfig c;
  c.kernel_sizes = {3, 4, 3};
  CHECK_THROWS_AS(Backbone{c}, std::invalid_argument);
  c = {};
  c.kernel_sizes = {3, 3};
  CHECK_THROWS_AS(Backbone{c}, std::invalid_argument);
  c = {};
  c.channels = {16, 0, 8};
  CHECK_THROWS_AS(Backbone{c}, std::invalid_argument);
}

TEST_CASE("weights follow the seeded Glorot bound and biases start at zero") {
  const Backbone net(BackboneConfig{});
  const auto params = net.parameters();
  REQUIRE(params.size() == 6);
  const std::size_t in[] = {1, 16, 32}, out[] = {16, 32, 8};
  for (std::size_t l = 0; l < 3; ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(9 * in[l] + 9 * out[l]));
    for (double w : params[2 * l].data()) CHECK(std::abs(w) <= bound);
    for (double b : params[2 * l + 1].data()) CHECK(b == 0.0);
  }
}

TEST_CASE("constant input gives a spatially constant output") {
  const Backbone net(small_config());
  const Tensor y = net.forward(Tensor::full({1, 9, 7}, 0.7));
  REQUIRE(y.shape() == Shape{3, 9, 7});
  for (std::size_t d = 0; d < y.dim(0); ++d)
    for (std::size_t i = 0; i < 63; ++i) CHECK(y[d * 63 + i] == y[d * 63]);
}

TEST_CASE("circular padding makes the backbone exactly shift-equivariant") {
  const Backbone net(small_config());
  const Tensor x = random_image(1, 10, 12, 11);
  const Tensor y = net.forward(x);
  for (auto [dy, dx] : {std::pair<std::size_t, std::size_t>{1, 0}, {3, 5}, {9, 11}}) {
    const Tensor ys = net.forward(shift(x, dy, dx));
    const Tensor expected = shift(y, dy, dx);
    double worst = 0.0;
    for (std::size_t i = 0; i < ys.numel(); ++i) worst = std::max(worst, std::abs(ys[i] - expected[i]));
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("same seed gives bit-identical outputs, different seeds differ") {
  const Tensor x = random_image(1, 8, 8, 5);
  const Tensor a = Backbone(small_config(7)).forward(x);
  const Tensor b = Backbone(small_config(7)).forward(x);
  const Tensor c = Backbone(small_config(8)).forward(x);
  CHECK(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
  CHECK_FALSE(std::equal(a.data().begin(), a.data().end(), c.data().begin()));
}

TEST_CASE("channel mismatch and undersized images are shape errors") {
  const Backbone net(small_config());
  CHECK_THROWS_AS(net.forward(Tensor::zeros({3, 8, 8})), ShapeError);
  CHECK_THROWS_AS(net.forward(Tensor::zeros({8, 8})), ShapeError);
  CHECK_THROWS_AS(net.forward(Tensor::zeros({1, 2, 8})), ShapeError);
  BackboneConfig rgb = small_config();
  rgb.in_channels = 3;
  CHECK(Backbone(rgb).forward(random_image(3, 6, 6, 1)).shape() == Shape{3, 6, 6});
}

TEST_CASE("masked forward matches the dense pass bit for bit on flagged pixels") {
  for (Padding p : {Padding::circular, Padding::zero}) {
    BackboneConfig c = small_config();
    c.padding = p;
    const Backbone net(c);
    const Tensor x = random_image(1, 11, 9, 2);
    const Tensor dense = net.forward(x);
    std::vector<std::uint8_t> mask(99, 0);
    for (std::size_t i : {0, 8, 17, 50, 98}) mask[i] = 1;
    const Tensor sparse = net.forward(x, mask);
    for (std::size_t d = 0; d < 3; ++d)
      for (std::size_t i = 0; i < 99; ++i) {
        if (mask[i]) {
          CHECK(sparse[d * 99 + i] == dense[d * 99 + i]);
        } else {
          CHECK(sparse[d * 99 + i] == 0.0);
        }
      }
  }
}

TEST_CASE("layer masks dilate by the kernel radius and wrap under circular padding") {
  const Backbone net(small_config());
  std::vector<std::uint8_t> mask(25, 0);
  mask[0] = 1;  // corner pixel
  const auto masks = net.layer_masks(5, 5, mask);
  REQUIRE(masks.size() == 3);
  CHECK(masks[2] == mask);
  std::size_t ring1 = 0, ring2 = 0;
  for (auto v : masks[1]) ring1 += v;
  for (auto v : masks[0]) ring2 += v;
  CHECK(ring1 == 9);   // 3x3 around the corner, wrapped
  CHECK(ring2 == 25);  // 5x5 covers the whole 5x5 torus
  CHECK(masks[1][24] == 1);
}

TEST_CASE("every weight gradient passes the finite-difference check") {
  BackboneConfig c;
  c.channels = {3, 2};
  c.kernel_sizes = {3, 3};
  c.seed = 9;
  const Tensor x = random_image(1, 5, 6, 4);
  Rng rng(12);
  std::vector<double> probe_v(2 * 5 * 6);
  for (double& v : probe_v) v = rng.uniform(-1.0, 1.0);
  const Tensor probe(Shape{2, 5, 6}, probe_v);
  const Backbone net(c);
  const auto params = net.parameters();
  sum(mul(net.forward(x), probe)).backward();
  auto objective = [&](std::size_t i, std::size_t j, double delta) {
    Backbone copy(net);
    auto ps = copy.parameters();
    std::vector<double> v(ps[i].data().begin(), ps[i].data().end());
    v[j] += delta;
    ps[i].assign(v);
    return sum(mul(copy.forward(x), probe)).item();
  };
  const double h = 1e-5;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto g = params[i].grad();
    double worst = 0.0;
    for (std::size_t j = 0; j < params[i].numel(); ++j) {
      const double numeric = (objective(i, j, h) - objective(i, j, -h)) / (2 * h);
      worst = std::max(worst, std::abs(g[j] - numeric) / std::max(1.0, std::abs(numeric)));
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("head gradient scale multiplies only the gradient reaching the trunk") {
  BackboneConfig c = small_config();
  const Tensor x = random_image(1, 6, 6, 8);
  auto grads = [&](double scale_factor) {
    c.head_grad_scale = scale_factor;
    const Backbone net(c);
    sum(net.forward(x)).backward();
    std::vector<std::vector<double>> g;
    for (const auto& p : net.parameters()) g.push_back(p.grad());
    return g;
  };
  const auto g1 = grads(1.0), g10 = grads(0.1);
  for (std::size_t i = 0; i < g1.size(); ++i) {
    const bool head = i >= 4;
    for (std::size_t j = 0; j < g1[i].size(); ++j) {
      if (head) {
        CHECK(g10[i][j] == g1[i][j]);
      } else {
        CHECK(g10[i][j] == doctest::Approx(0.1 * g1[i][j]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("save and load round-trip the weights at f32 precision") {
  const Backbone net(small_config());
  std::stringstream buf;
  net.save(buf);
  const std::string bytes = buf.str();
  CHECK(bytes.substr(0, 4) == "SCNV");
  // header (4 + 4 + 4) + per layer 16 bytes + 4 bytes per value
  const std::size_t values = (4 * 9 + 4) + (6 * 4 * 9 + 6) + (3 * 6 * 9 + 3);
  CHECK(bytes.size() == 12 + 3 * 16 + 4 * values);
  const Backbone back = Backbone::load(buf, small_config());
  const auto a = net.parameters(), b = back.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].numel(); ++j)
      CHECK(b[i][j] == static_cast<double>(static_cast<float>(a[i][j])));
  CHECK(back.dims() == 3);
}

TEST_CASE("corrupt model files are rejected") {
  std::stringstream bad("NOPE");
  CHECK_THROWS(Backbone::load(bad));
  const Backbone net(small_config());
  std::stringstream buf;
  net.save(buf);
  std::stringstream truncated(buf.str().substr(0, 40));
  CHECK_THROWS(Backbone::load(truncated));
}

TEST_CASE("copies are deep") {
  const Backbone a(small_config());
  Backbone b(a);
  CHECK(a.same_parameters(b));
  auto pb = b.parameters();
  std::vector<double> v(pb[1].numel(), 1.0);
  pb[1].assign(v);
  CHECK_FALSE(a.same_parameters(b));
  CHECK(a.parameters()[1][0] == 0.0);
}
