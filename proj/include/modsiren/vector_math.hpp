#pragma once

#include <cstddef>

#include "modsiren/linalg.hpp"

namespace modsiren {

// Elementwise sine/cosine over contiguous buffers. Uses the platform's
// vector math library when available (a few ulp from std::sin).
void vsin(const double* in, double* out, std::size_t n);
void vcos(const double* in, double* out, std::size_t n);
void vsin(const float* in, float* out, std::size_t n);
void vcos(const float* in, float* out, std::size_t n);

template <typename S>
Mat<S> sin_of(const Mat<S>& a) {
  Mat<S> out(a.rows(), a.cols());
  vsin(a.data(), out.data(), static_cast<std::size_t>(a.size()));
  return out;
}

template <typename S>
Mat<S> cos_of(const Mat<S>& a) {
  Mat<S> out(a.rows(), a.cols());
  vcos(a.data(), out.data(), static_cast<std::size_t>(a.size()));
  return out;
}

}  // namespace modsiren
