#include "icgmvs/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>

namespace icgmvs {

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = 0.0;
  while (u1 <= 0.0) u1 = uniform();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double th = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(th);
  has_spare_ = true;
  return r * std::cos(th);
}

Tensor random_uniform(const Shape& shape, Rng& rng, double lo, double hi) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor(shape, std::move(v));
}

void ParameterStore::check_unique(const std::string& name) const {
  if (find(name)) throw UsageError("duplicate parameter name '" + name + "'");
}

Tensor ParameterStore::add_parameter(const std::string& name, Tensor t) {
  check_unique(name);
  t.set_requires_grad(true);
  params_.push_back({name, t});
  return t;
}

Tensor ParameterStore::add_buffer(const std::string& name, Tensor t) {
  check_unique(name);
  buffers_.push_back({name, t});
  return t;
}

std::vector<NamedTensor> ParameterStore::all() const {
  std::vector<NamedTensor> out = params_;
  out.insert(out.end(), buffers_.begin(), buffers_.end());
  return out;
}

const Tensor* ParameterStore::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p.tensor;
  for (const auto& b : buffers_)
    if (b.name == name) return &b.tensor;
  return nullptr;
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

Tensor BatchNormLayer::operator()(const Tensor& x, Mode mode) {
  return mode == Mode::Train ? batch_norm_train(x, gamma, beta, state) : batch_norm_infer(x, gamma, beta, state);
}

namespace {

Tensor he_uniform(const Shape& shape, std::size_t fan_in, Rng& rng) {
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  return random_uniform(shape, rng, -bound, bound);
}

ConvParams make_conv_params(ParameterStore& store, const std::string& name, Shape wshape, std::size_t fan_in,
                            std::size_t bias_len, Rng& rng, bool bias) {
  ConvParams p;
  p.weight = store.add_parameter(name + ".weight", he_uniform(wshape, fan_in, rng));
  if (bias) p.bias = store.add_parameter(name + ".bias", Tensor(Shape{bias_len}, 0.0));
  return p;
}

}  // namespace

Conv2dLayer make_conv2d(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
                        std::size_t kernel, std::size_t stride, std::size_t padding, Rng& rng, bool bias) {
  Conv2dLayer l;
  l.p = make_conv_params(store, name, Shape{out, in, kernel, kernel}, in * kernel * kernel, out, rng, bias);
  l.p.stride = {stride, stride, 1};
  l.p.padding = {padding, padding, 0};
  return l;
}

Conv3dLayer make_conv3d(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
                        std::size_t kernel, std::size_t stride, std::size_t padding, Rng& rng, bool bias) {
  Conv3dLayer l;
  l.p = make_conv_params(store, name, Shape{out, in, kernel, kernel, kernel}, in * kernel * kernel * kernel, out,
                         rng, bias);
  l.p.stride = {stride, stride, stride};
  l.p.padding = {padding, padding, padding};
  return l;
}

ConvTranspose3dLayer make_conv_transpose3d(ParameterStore& store, const std::string& name, std::size_t in,
                                           std::size_t out, std::size_t kernel, std::size_t stride,
                                           std::size_t padding, std::size_t output_padding, Rng& rng, bool bias) {
  ConvTranspose3dLayer l;
  l.p = make_conv_params(store, name, Shape{in, out, kernel, kernel, kernel}, in * kernel * kernel * kernel, out,
                         rng, bias);
  l.p.stride = {stride, stride, stride};
  l.p.padding = {padding, padding, padding};
  l.p.output_padding = {output_padding, output_padding, output_padding};
  return l;
}

BatchNormLayer make_batch_norm(ParameterStore& store, const std::string& name, std::size_t channels) {
  BatchNormLayer bn;
  bn.gamma = store.add_parameter(name + ".gamma", Tensor(Shape{channels}, 1.0));
  bn.beta = store.add_parameter(name + ".beta", Tensor(Shape{channels}, 0.0));
  bn.state.running_mean = store.add_buffer(name + ".running_mean", Tensor(Shape{channels}, 0.0));
  bn.state.running_var = store.add_buffer(name + ".running_var", Tensor(Shape{channels}, 1.0));
  return bn;
}

ConvBnRelu2d make_conv_bn_relu2d(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
                                 std::size_t kernel, std::size_t stride, std::size_t padding, Rng& rng) {
  // Bias is redundant in front of batch norm.
  return {make_conv2d(store, name + ".conv", in, out, kernel, stride, padding, rng, false),
          make_batch_norm(store, name + ".bn", out)};
}

ConvBnRelu3d make_conv_bn_relu3d(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
                                 std::size_t stride, Rng& rng) {
  return {make_conv3d(store, name + ".conv", in, out, 3, stride, 1, rng, false),
          make_batch_norm(store, name + ".bn", out)};
}

ConvTBnRelu3d make_convt_bn_relu3d(ParameterStore& store, const std::string& name, std::size_t in,
                                   std::size_t out, Rng& rng) {
  return {make_conv_transpose3d(store, name + ".conv", in, out, 3, 2, 1, 1, rng, false),
          make_batch_norm(store, name + ".bn", out)};
}

// ---- checkpoint -----------------------------------------------------------

namespace {

template <typename T>
void put_le(std::string& buf, T v) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  buf.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(const std::string& buf, std::size_t& pos) {
  if (pos + sizeof(T) > buf.size()) throw ParseError("checkpoint truncated", pos);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, buf.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::string buf = "ICGW";
  put_le<std::uint32_t>(buf, kCheckpointVersion);
  put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& nt : tensors) {
    put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(nt.name.size()));
    buf += nt.name;
    const Shape& s = nt.tensor.shape();
    put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(s.size()));
    for (auto e : s) put_le<std::uint64_t>(buf, e);
    for (double v : nt.tensor.data()) put_le<double>(buf, v);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint for writing: " + path);
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw IoError("failed writing checkpoint: " + path);
}

std::vector<NamedTensor> read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (buf.size() < 4 || buf.compare(0, 4, "ICGW") != 0) throw ParseError("bad checkpoint magic in " + path, 0);
  std::size_t pos = 4;
  auto version = get_le<std::uint32_t>(buf, pos);
  if (version != kCheckpointVersion)
    throw ParseError("unsupported checkpoint version " + std::to_string(version), pos - 4);
  auto count = get_le<std::uint32_t>(buf, pos);
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    auto len = get_le<std::uint32_t>(buf, pos);
    if (pos + len > buf.size()) throw ParseError("checkpoint name truncated", pos);
    std::string name = buf.substr(pos, len);
    pos += len;
    auto rank = get_le<std::uint32_t>(buf, pos);
    Shape shape(rank);
    for (auto& e : shape) {
      std::size_t at = pos;
      e = get_le<std::uint64_t>(buf, pos);
      if (e == 0) throw ParseError("zero extent in checkpoint tensor '" + name + "'", at);
    }
    std::vector<double> data(shape_numel(shape));
    for (auto& v : data) v = get_le<double>(buf, pos);
    out.push_back({name, Tensor(shape, std::move(data))});
  }
  if (pos != buf.size()) throw ParseError("trailing bytes in checkpoint", pos);
  return out;
}

void load_checkpoint(const std::string& path, ParameterStore& store) {
  auto loaded = read_checkpoint(path);
  for (auto nt : store.all()) {
    const NamedTensor* src = nullptr;
    for (const auto& l : loaded)
      if (l.name == nt.name) src = &l;
    if (!src) throw ParameterError("checkpoint " + path + " lacks tensor '" + nt.name + "'");
    if (src->tensor.shape() != nt.tensor.shape())
      throw DimensionError("checkpoint tensor '" + nt.name + "' has shape " + shape_str(src->tensor.shape()) +
                           ", expected " + shape_str(nt.tensor.shape()));
    auto dst = nt.tensor.mutable_data();
    auto s = src->tensor.data();
    std::copy(s.begin(), s.end(), dst.begin());
  }
}

}  // namespace icgmvs
