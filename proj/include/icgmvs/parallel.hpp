#pragma once

#include <cstddef>
#include <functional>

namespace icgmvs {

// Worker count used by parallel_for. 1 means strictly sequential.
void set_num_threads(int n);
int num_threads();

// Runs body(i) for i in [begin, end). Each index is processed by exactly one
// worker and the body must only write state owned by that index, so results
// are identical for every thread count.
void parallel_for(std::size_t begin, std::size_t end, const std::function<void(std::size_t)>& body);

}  // namespace icgmvs
