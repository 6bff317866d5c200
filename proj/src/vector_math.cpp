// Built with -ffast-math -fopenmp-simd when libmvec is present so the loops
// below lower to vector sin/cos calls. Nothing else lives in this file.
#include "modsiren/vector_math.hpp"

#include <cmath>

namespace modsiren {

void vsin(const double* in, double* out, std::size_t n) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) out[i] = std::sin(in[i]);
}

void vcos(const double* in, double* out, std::size_t n) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) out[i] = std::cos(in[i]);
}

void vsin(const float* in, float* out, std::size_t n) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) out[i] = std::sin(in[i]);
}

void vcos(const float* in, float* out, std::size_t n) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) out[i] = std::cos(in[i]);
}

}  // namespace modsiren
