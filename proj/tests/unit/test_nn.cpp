#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "icgmvs/io.hpp"
#include "icgmvs/nn.hpp"

using namespace icgmvs;
namespace fs = std::filesystem;

TEST_CASE("rng streams are reproducible") {
  Rng a(42), b(42);
  for (int i = 0; i < 10; ++i) CHECK(a.uniform() == b.uniform());
  CHECK(a.normal() == b.normal());
  Rng c(7);
  for (int i = 0; i < 1000; ++i) {
    const double u = c.uniform(-2.0, 3.0);
    CHECK(u >= -2.0);
    CHECK(u < 3.0);
    CHECK(c.index(5) < 5);
  }
}

TEST_CASE("parameter store rejects duplicate names") {
  ParameterStore s;
  s.add_parameter("w", Tensor(Shape{2}, 1.0));
  CHECK_THROWS_AS(s.add_parameter("w", Tensor(Shape{2}, 1.0)), UsageError);
  CHECK_THROWS_AS(s.add_buffer("w", Tensor(Shape{2}, 1.0)), UsageError);
  CHECK(s.parameter_count() == 2);
  CHECK(s.find("w") != nullptr);
  CHECK(s.find("v") == nullptr);
}

TEST_CASE("layer factories register He-uniform weights and zero bias") {
  ParameterStore s;
  Rng rng(1);
  Conv2dLayer c = make_conv2d(s, "c", 4, 6, 3, 1, 1, rng);
  const double bound = std::sqrt(6.0 / 36.0);
  for (double w : c.p.weight.data()) CHECK(std::abs(w) <= bound);
  for (double b : c.p.bias.data()) CHECK(b == 0.0);
  CHECK(s.find("c.weight") != nullptr);
  CHECK(c.p.weight.requires_grad());
}

TEST_CASE("layers share storage with the store") {
  ParameterStore s;
  Rng rng(1);
  Conv2dLayer c = make_conv2d(s, "c", 1, 1, 1, 1, 0, rng);
  Tensor w = *s.find("c.weight");
  w.mutable_data()[0] = 2.0;
  CHECK(conv2d(Tensor(Shape{1, 1, 1}, 3.0), c.p)[0] == 6.0);
}

TEST_CASE("batch norm layer switches statistics by mode") {
  ParameterStore s;
  BatchNormLayer bn = make_batch_norm(s, "bn", 1);
  Tensor x(Shape{1, 2, 2}, std::vector<double>{1, 2, 3, 4});
  Tensor t = bn(x, Mode::Train);
  CHECK(std::abs(mean(t).item()) < 1e-12);
  Tensor e = bn(x, Mode::Eval);
  // running stats after one step: mean 0.25, var 0.9 + 0.1 * 1.25 (unbiased or not, both > 0)
  CHECK(e[0] != t[0]);
}

TEST_CASE("checkpoint round trip is exact") {
  const fs::path dir = fs::temp_directory_path() / "icgmvs_nn_test";
  fs::create_directories(dir);
  ParameterStore s;
  Rng rng(3);
  make_conv_bn_relu2d(s, "blk", 2, 3, 3, 1, 1, rng);
  const std::string path = (dir / "a.icgw").string();
  save_checkpoint(path, s.all());

  ParameterStore t;
  Rng other(4);
  make_conv_bn_relu2d(t, "blk", 2, 3, 3, 1, 1, other);
  load_checkpoint(path, t);
  for (std::size_t i = 0; i < s.all().size(); ++i) {
    const auto a = s.all()[i].tensor.data();
    const auto b = t.all()[i].tensor.data();
    CHECK(std::equal(a.begin(), a.end(), b.begin()));
  }

  ParameterStore bigger;
  make_conv_bn_relu2d(bigger, "blk", 2, 3, 3, 1, 1, other);
  make_conv2d(bigger, "extra", 1, 1, 1, 1, 0, other);
  CHECK_THROWS_AS(load_checkpoint(path, bigger), ParameterError);

  ParameterStore wrong;
  make_conv_bn_relu2d(wrong, "blk", 2, 4, 3, 1, 1, other);
  CHECK_THROWS_AS(load_checkpoint(path, wrong), DimensionError);

  std::string bytes = read_file(path);
  write_file(path, bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_checkpoint(path), ParseError);
  write_file(path, "NOPE" + bytes.substr(4));
  CHECK_THROWS_AS(read_checkpoint(path), ParseError);
  fs::remove_all(dir);
}
