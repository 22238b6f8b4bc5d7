#pragma once

#include <cstddef>

namespace flocksim::nn {

// Fixed-order kernels. Summation order never depends on data, so results are
// bit-reproducible run to run; the four-lane split breaks the dependency
// chain enough for the autovectorizer.

inline double dot(const double* a, const double* b, int n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  double tail = 0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((s0 + s1) + (s2 + s3)) + tail;
}

/// y = W x + b, W row-major (out x in).
inline void affine(const double* w, const double* b, const double* x,
                   double* y, int out, int in) {
  for (int o = 0; o < out; ++o) {
    y[o] = dot(w + static_cast<size_t>(o) * in, x, in) + b[o];
  }
}

/// y = W^T d, W row-major (out x in); y has length `in`, zeroed here.
inline void matvec_transposed(const double* w, const double* d, double* y,
                              int out, int in) {
  for (int i = 0; i < in; ++i) y[i] = 0.0;
  for (int o = 0; o < out; ++o) {
    const double* wr = w + static_cast<size_t>(o) * in;
    const double dv = d[o];
    for (int i = 0; i < in; ++i) y[i] += dv * wr[i];
  }
}

/// G += d x^T, G row-major (out x in).
inline void outer_accumulate(double* g, const double* d, const double* x,
                             int out, int in) {
  for (int o = 0; o < out; ++o) {
    double* gr = g + static_cast<size_t>(o) * in;
    const double dv = d[o];
    for (int i = 0; i < in; ++i) gr[i] += dv * x[i];
  }
}

inline void axpy(double a, const double* x, double* y, int n) {
  for (int i = 0; i < n; ++i) y[i] += a * x[i];
}

}  // namespace flocksim::nn
