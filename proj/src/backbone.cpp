#include "semiconv/backbone.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "semiconv/errors.hpp"
#include "semiconv/rng.hpp"

namespace semiconv {

namespace {

constexpr std::array<char, 4> kMagic{'S', 'C', 'N', 'V'};
constexpr std::uint32_t kFormatVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  const std::array<unsigned char, 4> bytes{static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                           static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(bytes.data()), 4);
}

void write_f32(std::ostream& out, double v) { write_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

std::uint32_t read_u32(std::istream& in) {
  std::array<unsigned char, 4> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), 4);
  if (!in) throw std::runtime_error("model file: unexpected end of data");
  return std::uint32_t{bytes[0]} | (std::uint32_t{bytes[1]} << 8) | (std::uint32_t{bytes[2]} << 16) |
         (std::uint32_t{bytes[3]} << 24);
}

double read_f32(std::istream& in) { return static_cast<double>(std::bit_cast<float>(read_u32(in))); }

std::vector<std::uint8_t> dilate(std::span<const std::uint8_t> mask, std::size_t h, std::size_t w,
                                 std::size_t radius, Padding padding) {
  std::vector<std::uint8_t> out(mask.size(), 0);
  const auto r = static_cast<std::ptrdiff_t>(radius);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      if (!mask[y * w + x]) continue;
      for (std::ptrdiff_t dy = -r; dy <= r; ++dy)
        for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
          auto yy = static_cast<std::ptrdiff_t>(y) + dy;
          auto xx = static_cast<std::ptrdiff_t>(x) + dx;
          const auto hh = static_cast<std::ptrdiff_t>(h), ww = static_cast<std::ptrdiff_t>(w);
          if (padding == Padding::circular) {
            yy = ((yy % hh) + hh) % hh;
            xx = ((xx % ww) + ww) % ww;
          } else if (yy < 0 || xx < 0 || yy >= hh || xx >= ww) {
            continue;
          }
          out[static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)] = 1;
        }
    }
  return out;
}

}  // namespace

void BackboneConfig::validate() const {
  if (channels.empty()) throw std::invalid_argument("backbone: at least one layer required");
  if (kernel_sizes.size() != channels.size()) throw std::invalid_argument("backbone: one kernel size per layer");
  for (std::size_t k : kernel_sizes) {
    if (k % 2 == 0) throw std::invalid_argument("backbone: kernel sizes must be odd");
  }
  for (std::size_t c : channels) {
    if (c == 0) throw std::invalid_argument("backbone: channel counts must be positive");
  }
  if (in_channels == 0) throw std::invalid_argument("backbone: in_channels must be positive");
  if (!std::isfinite(head_grad_scale)) throw std::invalid_argument("backbone: head_grad_scale must be finite");
}

Backbone::Backbone(BackboneConfig config) : config_(std::move(config)) {
  config_.validate();
  Rng rng(config_.seed);
  std::size_t cin = config_.in_channels;
  for (std::size_t l = 0; l < config_.channels.size(); ++l) {
    const std::size_t cout = config_.channels[l], k = config_.kernel_sizes[l];
    const double fan_in = static_cast<double>(cin * k * k), fan_out = static_cast<double>(cout * k * k);
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::vector<double> w(cout * cin * k * k);
    for (double& v : w) v = rng.uniform(-bound, bound);
    weights_.emplace_back(Shape{cout, cin, k, k}, std::move(w), true);
    biases_.push_back(Tensor::zeros({cout}, true));
    cin = cout;
  }
}

Backbone::Backbone(BackboneConfig config, std::vector<Tensor> weights, std::vector<Tensor> biases)
    : config_(std::move(config)), weights_(std::move(weights)), biases_(std::move(biases)) {}

Backbone::Backbone(const Backbone& other) : config_(other.config_) {
  for (const Tensor& w : other.weights_) weights_.push_back(w.detach(true));
  for (const Tensor& b : other.biases_) biases_.push_back(b.detach(true));
}

Backbone& Backbone::operator=(const Backbone& other) {
  if (this != &other) {
    Backbone copy(other);
    *this = std::move(copy);
  }
  return *this;
}

Tensor Backbone::forward(const Tensor& x) const { return run(x, nullptr); }

Tensor Backbone::forward(const Tensor& x, std::span<const std::uint8_t> output_mask) const {
  if (x.rank() != 3) throw ShapeError("backbone: input must be [C,H,W]");
  const auto masks = layer_masks(x.dim(1), x.dim(2), output_mask);
  return run(x, &masks);
}

std::vector<std::vector<std::uint8_t>> Backbone::layer_masks(std::size_t height, std::size_t width,
                                                             std::span<const std::uint8_t> output_mask) const {
  if (output_mask.size() != height * width) throw ShapeError("backbone: output mask size mismatch");
  std::vector<std::vector<std::uint8_t>> masks(weights_.size());
  masks.back().assign(output_mask.begin(), output_mask.end());
  for (std::size_t l = weights_.size() - 1; l-- > 0;) {
    masks[l] = dilate(masks[l + 1], height, width, (config_.kernel_sizes[l + 1] - 1) / 2, config_.padding);
  }
  return masks;
}

Tensor Backbone::run(const Tensor& x, const std::vector<std::vector<std::uint8_t>>* masks) const {
  if (x.rank() != 3) throw ShapeError("backbone: input must be [C,H,W], got " + to_string(x.shape()));
  if (x.dim(0) != config_.in_channels) {
    throw ShapeError("backbone: first layer expects " + std::to_string(config_.in_channels) + " channels, got " +
                     std::to_string(x.dim(0)));
  }
  const std::size_t largest = *std::max_element(config_.kernel_sizes.begin(), config_.kernel_sizes.end());
  if (x.dim(1) < largest || x.dim(2) < largest) throw ShapeError("backbone: image smaller than the largest kernel");

  Tensor h = x;
  const std::size_t last = weights_.size() - 1;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const Conv2dOptions opt{.stride = 1, .padding = config_.padding, .pad = (config_.kernel_sizes[l] - 1) / 2};
    if (l == last && config_.head_grad_scale != 1.0) h = grad_scale(h, config_.head_grad_scale);
    const std::span<const std::uint8_t> active = masks ? std::span<const std::uint8_t>((*masks)[l])
                                                       : std::span<const std::uint8_t>{};
    h = conv2d(h, weights_[l], biases_[l], opt, active);
    if (l != last) h = relu(h);
  }
  return h;
}

std::vector<Tensor> Backbone::parameters() const {
  std::vector<Tensor> params;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    params.push_back(weights_[l]);
    params.push_back(biases_[l]);
  }
  return params;
}

bool Backbone::same_parameters(const Backbone& other) const {
  const auto a = parameters(), b = other.parameters();
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].shape() != b[i].shape()) return false;
    if (!std::equal(a[i].data().begin(), a[i].data().end(), b[i].data().begin())) return false;
  }
  return true;
}

void Backbone::save(std::ostream& out) const {
  out.write(kMagic.data(), kMagic.size());
  write_u32(out, kFormatVersion);
  write_u32(out, static_cast<std::uint32_t>(weights_.size()));
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const Shape& s = weights_[l].shape();
    write_u32(out, static_cast<std::uint32_t>(s[1]));
    write_u32(out, static_cast<std::uint32_t>(s[0]));
    write_u32(out, static_cast<std::uint32_t>(s[2]));
    write_u32(out, static_cast<std::uint32_t>(s[3]));
    for (double v : weights_[l].data()) write_f32(out, v);
    for (double v : biases_[l].data()) write_f32(out, v);
  }
  if (!out) throw std::runtime_error("model file: write failed");
}

void Backbone::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("model file: cannot open " + path.string() + " for writing");
  save(out);
}

Backbone Backbone::load(std::istream& in, const BackboneConfig& base) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw std::runtime_error("model file: bad magic bytes");
  const std::uint32_t version = read_u32(in);
  if (version != kFormatVersion) throw std::runtime_error("model file: unsupported version " + std::to_string(version));
  const std::uint32_t layers = read_u32(in);
  if (layers == 0 || layers > 1024) throw std::runtime_error("model file: implausible layer count");

  BackboneConfig config = base;
  config.channels.clear();
  config.kernel_sizes.clear();
  std::vector<Tensor> weights, biases;
  for (std::uint32_t l = 0; l < layers; ++l) {
    const std::size_t cin = read_u32(in), cout = read_u32(in), kh = read_u32(in), kw = read_u32(in);
    if (kh != kw) throw std::runtime_error("model file: non-square kernels are not supported");
    if (l == 0) {
      config.in_channels = cin;
    } else if (cin != config.channels.back()) {
      throw std::runtime_error("model file: layer " + std::to_string(l) + " channel mismatch");
    }
    if (cin * cout * kh * kw > (std::size_t{1} << 28)) throw std::runtime_error("model file: layer too large");
    std::vector<double> w(cout * cin * kh * kw), b(cout);
    for (double& v : w) v = read_f32(in);
    for (double& v : b) v = read_f32(in);
    weights.emplace_back(Shape{cout, cin, kh, kw}, std::move(w), true);
    biases.emplace_back(Shape{cout}, std::move(b), true);
    config.channels.push_back(cout);
    config.kernel_sizes.push_back(kh);
  }
  config.validate();
  return Backbone(std::move(config), std::move(weights), std::move(biases));
}

Backbone Backbone::load(const std::filesystem::path& path, const BackboneConfig& base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("model file: cannot open " + path.string());
  return load(in, base);
}

}  // namespace semiconv
