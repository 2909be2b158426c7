#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "icgmvs/nn.hpp"

namespace icgmvs {

inline constexpr double kGradcheckStep = 1e-5;
// Smaller step for the full network, whose loss has many ReLU and WTA kinks.
inline constexpr double kGradcheckPipelineStep = 1e-6;
inline constexpr double kGradcheckRelTol = 1e-3;
inline constexpr double kGradcheckAbsTol = 1e-5;

struct GradcheckResult {
  std::string op;
  std::size_t instances = 0;
  std::size_t coordinates = 0;
  double max_rel_error = 0.0;  // over coordinates whose absolute error exceeds the floor
  double max_abs_error = 0.0;
  bool passed = true;

  void merge(const GradcheckResult& other);
};

// Compares backward() gradients of `loss` w.r.t. each input leaf against
// central differences, on at most `max_coords` random entries per input.
GradcheckResult check_gradients(const std::string& name, const std::vector<Tensor>& inputs,
                                const std::function<Tensor()>& loss, Rng& rng, std::size_t max_coords = 16);

std::vector<std::string> gradcheck_op_names();
// `instances` random problems for one named operator.
GradcheckResult gradcheck_op(const std::string& op, std::uint64_t seed, std::size_t instances = 20);

// Full four-stage network loss on a rendered size x size view pair; checks
// `num_params` randomly chosen parameter entries.
GradcheckResult gradcheck_pipeline(std::uint64_t seed, std::size_t num_params = 10, std::size_t size = 16);

}  // namespace icgmvs
