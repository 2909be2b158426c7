#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "icgmvs/ops.hpp"

namespace icgmvs {

// Seeded generator whose derived distributions do not depend on the
// standard library implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  std::uint64_t next() { return engine_(); }
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n; }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

Tensor random_uniform(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0);

enum class Mode { Train, Eval };

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Owns every learned parameter and running statistic of a network, in
// registration order. Layers hold shallow handles into the same storage.
class ParameterStore {
 public:
  Tensor add_parameter(const std::string& name, Tensor t);
  Tensor add_buffer(const std::string& name, Tensor t);

  const std::vector<NamedTensor>& parameters() const { return params_; }
  const std::vector<NamedTensor>& buffers() const { return buffers_; }
  std::vector<NamedTensor> all() const;
  const Tensor* find(const std::string& name) const;
  std::size_t parameter_count() const;
  void zero_grad();

 private:
  void check_unique(const std::string& name) const;
  std::vector<NamedTensor> params_;
  std::vector<NamedTensor> buffers_;
};

struct Conv2dLayer {
  ConvParams p;
  Tensor operator()(const Tensor& x) const { return conv2d(x, p); }
};

struct Conv3dLayer {
  ConvParams p;
  Tensor operator()(const Tensor& x) const { return conv3d(x, p); }
};

struct ConvTranspose3dLayer {
  ConvParams p;
  Tensor operator()(const Tensor& x) const { return conv_transpose3d(x, p); }
};

struct BatchNormLayer {
  Tensor gamma, beta;
  BatchNormState state;
  Tensor operator()(const Tensor& x, Mode mode);
};

// conv -> batch norm -> relu, the building block of every learned stage.
template <typename Conv>
struct ConvBnRelu {
  Conv conv;
  BatchNormLayer bn;
  Tensor operator()(const Tensor& x, Mode mode) { return relu(bn(conv(x), mode)); }
};

using ConvBnRelu2d = ConvBnRelu<Conv2dLayer>;
using ConvBnRelu3d = ConvBnRelu<Conv3dLayer>;
using ConvTBnRelu3d = ConvBnRelu<ConvTranspose3dLayer>;

// Factories register parameters under `name` with He-uniform weights and zero bias.
Conv2dLayer make_conv2d(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
                        std::size_t kernel, std::size_t stride, std::size_t padding, Rng& rng, bool bias = true);
Conv3dLayer make_conv3d(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
                        std::size_t kernel, std::size_t stride, std::size_t padding, Rng& rng, bool bias = true);
ConvTranspose3dLayer make_conv_transpose3d(ParameterStore& store, const std::string& name, std::size_t in,
                                           std::size_t out, std::size_t kernel, std::size_t stride,
                                           std::size_t padding, std::size_t output_padding, Rng& rng,
                                           bool bias = true);
BatchNormLayer make_batch_norm(ParameterStore& store, const std::string& name, std::size_t channels);

ConvBnRelu2d make_conv_bn_relu2d(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
                                 std::size_t kernel, std::size_t stride, std::size_t padding, Rng& rng);
ConvBnRelu3d make_conv_bn_relu3d(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
                                 std::size_t stride, Rng& rng);
ConvTBnRelu3d make_convt_bn_relu3d(ParameterStore& store, const std::string& name, std::size_t in,
                                   std::size_t out, Rng& rng);

// Binary checkpoint: "ICGW", u32 version, u32 count, then per tensor
// u32 name length, UTF-8 name, u32 rank, u64 extents, little-endian f64 data.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(const std::string& path);
// Copies values into the store's tensors by name; every store entry must be present.
void load_checkpoint(const std::string& path, ParameterStore& store);

}  // namespace icgmvs
