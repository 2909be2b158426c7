#include "icgmvs/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "icgmvs/cost_volume.hpp"
#include "icgmvs/feature_net.hpp"
#include "icgmvs/regularizer.hpp"
#include "icgmvs/synth.hpp"
#include "icgmvs/trainer.hpp"
#include "icgmvs/util.hpp"

namespace icgmvs {

void GradcheckResult::merge(const GradcheckResult& o) {
  instances += o.instances;
  coordinates += o.coordinates;
  max_rel_error = std::max(max_rel_error, o.max_rel_error);
  max_abs_error = std::max(max_abs_error, o.max_abs_error);
  passed = passed && o.passed;
}

namespace {

struct Coord {
  Tensor tensor;
  std::size_t index;
};

GradcheckResult check_coords(const std::string& name, const std::vector<Tensor>& leaves,
                             const std::vector<Coord>& coords, const std::function<Tensor()>& loss,
                             double step = kGradcheckStep) {
  for (const auto& t : leaves) {
    if (!t.requires_grad() || !t.is_leaf()) throw UsageError("gradcheck inputs must be leaves requiring grad");
    t.impl()->grad.clear();
  }
  Tensor l = loss();
  if (l.numel() != 1) throw UsageError("gradcheck loss must be scalar");
  l.backward();
  GradcheckResult r;
  r.op = name;
  r.instances = 1;
  for (const Coord& c : coords) {
    const double analytic = c.tensor.has_grad() ? c.tensor.grad()[c.index] : 0.0;
    double numeric;
    {
      NoGradGuard guard;
      Tensor t = c.tensor;
      auto w = t.mutable_data();
      const double orig = w[c.index];
      w[c.index] = orig + step;
      const double fp = loss().item();
      w[c.index] = orig - step;
      const double fm = loss().item();
      w[c.index] = orig;
      numeric = (fp - fm) / (2.0 * step);
    }
    const double abs_err = std::abs(analytic - numeric);
    r.max_abs_error = std::max(r.max_abs_error, abs_err);
    if (abs_err > kGradcheckAbsTol) {
      const double rel = abs_err / std::max(std::abs(analytic), std::abs(numeric));
      r.max_rel_error = std::max(r.max_rel_error, rel);
      if (rel > kGradcheckRelTol) r.passed = false;
    }
    ++r.coordinates;
  }
  for (const auto& t : leaves) t.impl()->grad.clear();
  return r;
}

}  // namespace

GradcheckResult check_gradients(const std::string& name, const std::vector<Tensor>& inputs,
                                const std::function<Tensor()>& loss, Rng& rng, std::size_t max_coords) {
  std::vector<Coord> coords;
  for (const auto& t : inputs) {
    const std::size_t n = t.numel();
    if (n <= max_coords) {
      for (std::size_t i = 0; i < n; ++i) coords.push_back({t, i});
    } else {
      for (std::size_t k = 0; k < max_coords; ++k) coords.push_back({t, rng.index(n)});
    }
  }
  return check_coords(name, inputs, coords, loss);
}

namespace {

Tensor leaf(const Shape& s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = random_uniform(s, rng, lo, hi);
  t.set_requires_grad(true);
  return t;
}

// Values with |x| in [lo, hi] and random sign.
Tensor leaf_away_from_zero(const Shape& s, Rng& rng, double lo, double hi) {
  Tensor t(s);
  auto d = t.mutable_data();
  for (double& v : d) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(lo, hi);
  t.set_requires_grad(true);
  return t;
}

// Random linear functional of an op output, so every output entry matters.
Tensor project(const Tensor& y, const Tensor& r) { return sum(mul(y, r)); }

Tensor constant_like(const Shape& s, Rng& rng) { return random_uniform(s, rng, -1.0, 1.0); }

struct Problem {
  std::vector<Tensor> inputs;
  std::function<Tensor()> loss;
};

using Builder = std::function<Problem(Rng&)>;

template <typename F>
Problem unary(Rng& rng, Tensor x, F f) {
  Tensor y0;
  {
    NoGradGuard g;
    y0 = f(x);
  }
  Tensor r = constant_like(y0.shape(), rng);
  return {{x}, [x, r, f]() { return project(f(x), r); }};
}

template <typename F>
Problem binary(Rng& rng, Tensor a, Tensor b, F f) {
  Tensor r = constant_like(broadcast_shape(a.shape(), b.shape()), rng);
  return {{a, b}, [a, b, r, f]() { return project(f(a, b), r); }};
}

Shape random_shape(Rng& rng, std::size_t rank, std::size_t lo = 1, std::size_t hi = 4) {
  Shape s(rank);
  for (auto& e : s) e = lo + rng.index(hi - lo + 1);
  return s;
}

// A shape broadcast-compatible with `s`: trailing subset with some extents 1.
Shape broadcastable(const Shape& s, Rng& rng) {
  const std::size_t drop = rng.index(s.size());
  Shape b(s.begin() + static_cast<std::ptrdiff_t>(drop), s.end());
  for (auto& e : b)
    if (rng.uniform() < 0.4) e = 1;
  return b;
}

std::vector<Tensor> params_of(const ParameterStore& store) {
  std::vector<Tensor> out;
  for (const auto& p : store.parameters()) out.push_back(p.tensor);
  return out;
}

const std::map<std::string, Builder>& builders() {
  static const std::map<std::string, Builder> table{
      {"add",
       [](Rng& rng) {
         Shape s = random_shape(rng, 3);
         return binary(rng, leaf(s, rng), leaf(broadcastable(s, rng), rng),
                       [](const Tensor& a, const Tensor& b) { return add(a, b); });
       }},
      {"sub",
       [](Rng& rng) {
         Shape s = random_shape(rng, 3);
         return binary(rng, leaf(broadcastable(s, rng), rng), leaf(s, rng),
                       [](const Tensor& a, const Tensor& b) { return sub(a, b); });
       }},
      {"mul",
       [](Rng& rng) {
         Shape s = random_shape(rng, 3);
         return binary(rng, leaf(s, rng), leaf(broadcastable(s, rng), rng),
                       [](const Tensor& a, const Tensor& b) { return mul(a, b); });
       }},
      {"div",
       [](Rng& rng) {
         Shape s = random_shape(rng, 3);
         return binary(rng, leaf(s, rng), leaf_away_from_zero(broadcastable(s, rng), rng, 0.5, 1.5),
                       [](const Tensor& a, const Tensor& b) { return div(a, b); });
       }},
      {"scale",
       [](Rng& rng) {
         const double k = rng.uniform(-2.0, 2.0);
         Shape s = random_shape(rng, 2);
         return unary(rng, leaf(s, rng), [k](const Tensor& x) { return scale(x, k); });
       }},
      {"add_scalar",
       [](Rng& rng) {
         const double k = rng.uniform(-2.0, 2.0);
         Shape s = random_shape(rng, 2);
         return unary(rng, leaf(s, rng), [k](const Tensor& x) { return square(add_scalar(x, k)); });
       }},
      {"relu",
       [](Rng& rng) {
         Shape s = random_shape(rng, 3);
         return unary(rng, leaf_away_from_zero(s, rng, 0.05, 1.0), [](const Tensor& x) { return relu(x); });
       }},
      {"sigmoid",
       [](Rng& rng) {
         Shape s = random_shape(rng, 3);
         return unary(rng, leaf(s, rng, -3.0, 3.0), [](const Tensor& x) { return sigmoid(x); });
       }},
      {"exp",
       [](Rng& rng) {
         Shape s = random_shape(rng, 2);
         return unary(rng, leaf(s, rng), [](const Tensor& x) { return exp(x); });
       }},
      {"log",
       [](Rng& rng) {
         Shape s = random_shape(rng, 2);
         return unary(rng, leaf(s, rng, 0.5, 2.0), [](const Tensor& x) { return log(x); });
       }},
      {"square",
       [](Rng& rng) {
         Shape s = random_shape(rng, 2);
         return unary(rng, leaf(s, rng), [](const Tensor& x) { return square(x); });
       }},
      {"sum",
       [](Rng& rng) {
         Shape s = random_shape(rng, 3);
         Tensor x = leaf(s, rng);
         return Problem{{x}, [x]() { return square(sum(x)); }};
       }},
      {"mean",
       [](Rng& rng) {
         Shape s = random_shape(rng, 3);
         Tensor x = leaf(s, rng);
         return Problem{{x}, [x]() { return square(mean(x)); }};
       }},
      {"sum_axis",
       [](Rng& rng) {
         Shape s = random_shape(rng, 3);
         const std::size_t axis = rng.index(3);
         const bool keep = rng.uniform() < 0.5;
         return unary(rng, leaf(s, rng), [axis, keep](const Tensor& x) { return sum_axis(x, axis, keep); });
       }},
      {"mean_axis",
       [](Rng& rng) {
         Shape s = random_shape(rng, 3);
         const std::size_t axis = rng.index(3);
         const bool keep = rng.uniform() < 0.5;
         return unary(rng, leaf(s, rng), [axis, keep](const Tensor& x) { return mean_axis(x, axis, keep); });
       }},
      {"reshape",
       [](Rng& rng) {
         Shape s = random_shape(rng, 3);
         Shape t{s[0] * s[1], s[2]};
         return unary(rng, leaf(s, rng), [t](const Tensor& x) { return reshape(x, t); });
       }},
      {"broadcast_to",
       [](Rng& rng) {
         Shape t = random_shape(rng, 4);
         Shape s = broadcastable(t, rng);
         return unary(rng, leaf(s, rng), [t](const Tensor& x) { return broadcast_to(x, t); });
       }},
      {"concat",
       [](Rng& rng) {
         Shape s = random_shape(rng, 3);
         const std::size_t axis = rng.index(3);
         Shape s2 = s;
         s2[axis] = 1 + rng.index(3);
         Tensor a = leaf(s, rng), b = leaf(s2, rng);
         Tensor y0;
         {
           NoGradGuard g;
           y0 = concat({a, b}, axis);
         }
         Tensor r = constant_like(y0.shape(), rng);
         return Problem{{a, b}, [a, b, r, axis]() { return project(concat({a, b}, axis), r); }};
       }},
      {"slice",
       [](Rng& rng) {
         Shape s = random_shape(rng, 3, 2, 5);
         const std::size_t axis = rng.index(3);
         const std::size_t b = rng.index(s[axis] - 1);
         const std::size_t e = b + 1 + rng.index(s[axis] - b);
         return unary(rng, leaf(s, rng), [axis, b, e](const Tensor& x) { return slice(x, axis, b, e); });
       }},
      {"pad",
       [](Rng& rng) {
         Shape s = random_shape(rng, 3);
         std::vector<std::pair<std::size_t, std::size_t>> p;
         for (int i = 0; i < 3; ++i) p.emplace_back(rng.index(3), rng.index(3));
         return unary(rng, leaf(s, rng), [p](const Tensor& x) { return pad(x, p); });
       }},
      {"softmax_axis",
       [](Rng& rng) {
         Shape s = random_shape(rng, 3, 2, 4);
         const std::size_t axis = rng.index(3);
         return unary(rng, leaf(s, rng, -2.0, 2.0), [axis](const Tensor& x) { return softmax_axis(x, axis); });
       }},
      {"conv2d",
       [](Rng& rng) {
         const std::size_t ci = 1 + rng.index(3), co = 1 + rng.index(3), k = rng.uniform() < 0.5 ? 1 : 3;
         const std::size_t stride = 1 + rng.index(2), padv = k == 3 ? rng.index(2) : 0;
         Tensor x = leaf({ci, 5, 6}, rng), w = leaf({co, ci, k, k}, rng), b = leaf({co}, rng);
         auto f = [w, b, stride, padv](const Tensor& in) {
           ConvParams p{w, b, {stride, stride, 1}, {padv, padv, 0}, {0, 0, 0}};
           return conv2d(in, p);
         };
         Tensor y0;
         {
           NoGradGuard g;
           y0 = f(x);
         }
         Tensor r = constant_like(y0.shape(), rng);
         return Problem{{x, w, b}, [x, r, f]() { return project(f(x), r); }};
       }},
      {"conv3d",
       [](Rng& rng) {
         const std::size_t ci = 1 + rng.index(2), co = 1 + rng.index(2);
         const std::size_t stride = 1 + rng.index(2), padv = rng.index(2);
         Tensor x = leaf({ci, 4, 5, 4}, rng), w = leaf({co, ci, 3, 3, 3}, rng), b = leaf({co}, rng);
         auto f = [w, b, stride, padv](const Tensor& in) {
           ConvParams p{w, b, {stride, stride, stride}, {padv, padv, padv}, {0, 0, 0}};
           return conv3d(in, p);
         };
         Tensor y0;
         {
           NoGradGuard g;
           y0 = f(x);
         }
         Tensor r = constant_like(y0.shape(), rng);
         return Problem{{x, w, b}, [x, r, f]() { return project(f(x), r); }};
       }},
      {"conv_transpose3d",
       [](Rng& rng) {
         const std::size_t ci = 1 + rng.index(2), co = 1 + rng.index(2);
         const bool s2 = rng.uniform() < 0.7;
         const std::size_t stride = s2 ? 2 : 1, op = s2 ? 1 : 0;
         Tensor x = leaf({ci, 2, 3, 2}, rng), w = leaf({ci, co, 3, 3, 3}, rng), b = leaf({co}, rng);
         auto f = [w, b, stride, op](const Tensor& in) {
           ConvParams p{w, b, {stride, stride, stride}, {1, 1, 1}, {op, op, op}};
           return conv_transpose3d(in, p);
         };
         Tensor y0;
         {
           NoGradGuard g;
           y0 = f(x);
         }
         Tensor r = constant_like(y0.shape(), rng);
         return Problem{{x, w, b}, [x, r, f]() { return project(f(x), r); }};
       }},
      {"grid_sample_bilinear",
       [](Rng& rng) {
         const std::size_t C = 1 + rng.index(3), H = 4, W = 5;
         Tensor src = leaf({C, H, W}, rng);
         Tensor coords({2, 3, 4});
         auto c = coords.mutable_data();
         for (std::size_t i = 0; i < 12; ++i) {
           c[i] = rng.uniform(-0.5, static_cast<double>(W) - 0.5);
           c[12 + i] = rng.uniform(-0.5, static_cast<double>(H) - 0.5);
         }
         return unary(rng, src, [coords](const Tensor& x) { return grid_sample_bilinear(x, coords); });
       }},
      {"upsample_bilinear2x",
       [](Rng& rng) {
         Shape s = random_shape(rng, 3);
         return unary(rng, leaf(s, rng), [](const Tensor& x) { return upsample_bilinear2x(x); });
       }},
      {"batch_norm_train",
       [](Rng& rng) {
         const std::size_t C = 1 + rng.index(3);
         Tensor x = leaf({C, 3, 4}, rng), g = leaf({C}, rng, 0.5, 1.5), b = leaf({C}, rng);
         auto state = std::make_shared<BatchNormState>();
         state->running_mean = Tensor(Shape{C}, 0.0);
         state->running_var = Tensor(Shape{C}, 1.0);
         Tensor r = constant_like({C, 3, 4}, rng);
         return Problem{{x, g, b}, [x, g, b, r, state]() { return project(batch_norm_train(x, g, b, *state), r); }};
       }},
      {"batch_norm_infer",
       [](Rng& rng) {
         const std::size_t C = 1 + rng.index(3);
         Tensor x = leaf({C, 3, 4}, rng), g = leaf({C}, rng, 0.5, 1.5), b = leaf({C}, rng);
         BatchNormState state;
         state.running_mean = random_uniform({C}, rng);
         state.running_var = random_uniform({C}, rng, 0.5, 2.0);
         Tensor r = constant_like({C, 3, 4}, rng);
         return Problem{{x, g, b}, [x, g, b, r, state]() { return project(batch_norm_infer(x, g, b, state), r); }};
       }},
      {"nll_loss",
       [](Rng& rng) {
         const std::size_t D = 2 + rng.index(4), H = 3, W = 3;
         Tensor logits = leaf({D, H, W}, rng, -2.0, 2.0);
         std::vector<int> target(H * W);
         std::vector<unsigned char> mask(H * W);
         for (std::size_t i = 0; i < H * W; ++i) {
           target[i] = static_cast<int>(rng.index(D));
           mask[i] = rng.uniform() < 0.8 ? 1 : 0;
         }
         mask[0] = 1;
         return Problem{{logits}, [logits, target, mask]() { return nll_loss(softmax_axis(logits, 0), target, mask); }};
       }},
      {"group_correlation",
       [](Rng& rng) {
         const std::size_t G = 1 + rng.index(3), C = G * (1 + rng.index(2)), D = 1 + rng.index(3);
         Tensor ref = leaf({C, 3, 4}, rng), warped = leaf({C, D, 3, 4}, rng);
         Tensor r = constant_like({G, D, 3, 4}, rng);
         return Problem{{ref, warped}, [ref, warped, r, G]() { return project(group_correlation(ref, warped, G), r); }};
       }},
      {"view_weights",
       [](Rng& rng) {
         const std::size_t G = 1 + rng.index(3), D = 2 + rng.index(3);
         const double temp = rng.uniform(0.5, 3.0);
         Shape s{G, D, 3, 3};
         return unary(rng, leaf(s, rng), [temp](const Tensor& x) { return view_weights(x, temp); });
       }},
      {"aggregate",
       [](Rng& rng) {
         const std::size_t V = 1 + rng.index(3), G = 2, D = 3;
         std::vector<Tensor> corrs, weights, inputs;
         for (std::size_t v = 0; v < V; ++v) {
           corrs.push_back(leaf({G, D, 2, 3}, rng));
           weights.push_back(leaf({D, 2, 3}, rng, 0.2, 1.0));
           inputs.push_back(corrs.back());
           inputs.push_back(weights.back());
         }
         Tensor r = constant_like({G, D, 2, 3}, rng);
         return Problem{inputs, [corrs, weights, r]() { return project(aggregate(corrs, weights, 0).data, r); }};
       }},
      {"ivf_attention",
       [](Rng& rng) {
         ParameterStore store;
         const std::size_t C = 4 + rng.index(5), H = 3, W = 4;
         IvfParams p = make_ivf_params(store, "ivf", C, 2, rng);
         Tensor x = leaf({C, H, W}, rng);
         Tensor r = constant_like({C, H, W}, rng);
         std::vector<Tensor> inputs = params_of(store);
         inputs.push_back(x);
         return Problem{inputs, [x, p, r]() {
                          auto [th, tw] = coordinate_pool(x);
                          IvfAttention a = ivf_attention(th, tw, p);
                          return project(mul(a.a_h, a.a_w), r);
                        }};
       }},
      {"ivf_fuse",
       [](Rng& rng) {
         const std::size_t C = 1 + rng.index(3);
         Tensor coarse = leaf({C, 2, 3}, rng), fine = leaf({C, 4, 6}, rng);
         Tensor ah = leaf({C, 4, 1}, rng, 0.1, 0.9), aw = leaf({C, 1, 6}, rng, 0.1, 0.9);
         Tensor r = constant_like({C, 4, 6}, rng);
         return Problem{{coarse, fine, ah, aw},
                        [coarse, fine, ah, aw, r]() { return project(ivf_fuse(coarse, fine, {ah, aw}), r); }};
       }},
      {"cva_guidance",
       [](Rng& rng) {
         ParameterStore store;
         const std::size_t G = 2, Dp = 2, D = 2;
         auto params = std::make_shared<CvaParams>(
             make_cva_params(store, "cva", G * Dp, G * D, 1 + rng.index(2), 1 + rng.index(2), rng));
         Tensor prev = leaf({G, Dp, 2, 3}, rng), cur = leaf({G, D, 4, 6}, rng);
         Tensor y0;
         {
           NoGradGuard g;
           CostVolume pv{prev, 0};
           y0 = cva_guidance(&pv, {cur, 1}, *params, Mode::Train).data;
         }
         Tensor r = constant_like(y0.shape(), rng);
         std::vector<Tensor> inputs = params_of(store);
         inputs.push_back(prev);
         inputs.push_back(cur);
         return Problem{inputs, [prev, cur, params, r]() {
                          CostVolume pv{prev, 0};
                          return project(cva_guidance(&pv, {cur, 1}, *params, Mode::Train).data, r);
                        }};
       }},
      {"regularizer",
       [](Rng& rng) {
         ParameterStore store;
         auto reg = std::make_shared<Regularizer>(store, "reg", 2, 2, rng.next());
         Tensor x = leaf({2, 4, 3, 5}, rng);
         Tensor r = constant_like({4, 3, 5}, rng);
         std::vector<Tensor> inputs = params_of(store);
         inputs.push_back(x);
         return Problem{inputs, [x, reg, r]() { return project((*reg)(x, Mode::Train), r); }};
       }},
  };
  return table;
}

}  // namespace

std::vector<std::string> gradcheck_op_names() {
  std::vector<std::string> out;
  for (const auto& [name, b] : builders()) out.push_back(name);
  return out;
}

GradcheckResult gradcheck_op(const std::string& op, std::uint64_t seed, std::size_t instances) {
  const auto it = builders().find(op);
  if (it == builders().end()) throw UsageError("unknown operator '" + op + "' for gradcheck");
  GradcheckResult total;
  total.op = op;
  Rng rng(mix_seed(seed, op));
  for (std::size_t i = 0; i < instances; ++i) {
    Problem p = it->second(rng);
    total.merge(check_gradients(op, p.inputs, p.loss, rng));
  }
  total.op = op;
  return total;
}

GradcheckResult gradcheck_pipeline(std::uint64_t seed, std::size_t num_params, std::size_t size) {
  IcgMvsNet net(NetworkConfig{}, seed);
  SceneOptions so;
  so.num_objects = 2;
  Scene scene = random_scene(seed, so);
  MvsSample sample;
  sample.id = "gradcheck";
  for (Camera cam : arc_cameras(2, size, size)) {
    Render r = render(scene, cam, size, size);
    fit_depth_range(cam, r.depth, 0.1);
    sample.images.push_back(r.image);
    sample.cams.push_back(cam);
    if (!sample.gt_depth.defined()) sample.gt_depth = r.depth;
  }
  const std::array<double, kNumStages> weights{1.0, 1.0, 1.0, 1.0};
  std::vector<Tensor> leaves = params_of(net.parameters());
  Rng rng(mix_seed(seed, "pipeline-gradcheck"));
  std::vector<Coord> coords;
  for (std::size_t k = 0; k < num_params; ++k) {
    const Tensor& t = leaves[rng.index(leaves.size())];
    coords.push_back({t, rng.index(t.numel())});
  }
  GradcheckResult r =
      check_coords("pipeline", leaves, coords, [&]() { return sample_loss(net, sample, weights, Mode::Train).total; },
                   kGradcheckPipelineStep);
  r.op = "pipeline";
  return r;
}

}  // namespace icgmvs
