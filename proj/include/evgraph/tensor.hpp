#pragma once

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "evgraph/error.hpp"

namespace evg {

// Dense row-major matrix. Vectors are 1xN or Nx1 as convenient.
template <typename T>
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<T> v;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, T(0)) {}

  T* row(int i) { return v.data() + static_cast<size_t>(i) * cols; }
  const T* row(int i) const { return v.data() + static_cast<size_t>(i) * cols; }
  T& at(int i, int j) { return v[static_cast<size_t>(i) * cols + j]; }
  T at(int i, int j) const { return v[static_cast<size_t>(i) * cols + j]; }
  size_t size() const { return v.size(); }
  void zero() { std::memset(v.data(), 0, v.size() * sizeof(T)); }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

  template <typename U>
  Mat<U> cast() const {
    Mat<U> out(rows, cols);
    for (size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
    return out;
  }
};

template <typename T>
inline void require_shape(const Mat<T>& m, int r, int c, const char* what) {
  if (m.rows != r || m.cols != c)
    raise(ErrorCode::Shape, std::string(what) + ": expected " + std::to_string(r) + "x" +
                                std::to_string(c) + ", got " + std::to_string(m.rows) + "x" +
                                std::to_string(m.cols));
}

// C += A * B,   A: m x k, B: k x n, C: m x n
template <typename T>
inline void mm_nn(const Mat<T>& a, const Mat<T>& b, Mat<T>& c) {
  const int m = a.rows, k = a.cols, n = b.cols;
  for (int i = 0; i < m; ++i) {
    const T* ai = a.row(i);
    T* ci = c.row(i);
    for (int p = 0; p < k; ++p) {
      const T s = ai[p];
      const T* bp = b.row(p);
      for (int j = 0; j < n; ++j) ci[j] += s * bp[j];
    }
  }
}

// C += A * B^T,  A: m x n, B: k x n, C: m x k
template <typename T>
inline void mm_nt(const Mat<T>& a, const Mat<T>& b, Mat<T>& c) {
  const int m = a.rows, n = a.cols, k = b.rows;
  for (int i = 0; i < m; ++i) {
    const T* ai = a.row(i);
    T* ci = c.row(i);
    for (int p = 0; p < k; ++p) {
      const T* bp = b.row(p);
      T acc = 0;
      for (int j = 0; j < n; ++j) acc += ai[j] * bp[j];
      ci[p] += acc;
    }
  }
}

// C += A^T * B,  A: m x k, B: m x n, C: k x n
template <typename T>
inline void mm_tn(const Mat<T>& a, const Mat<T>& b, Mat<T>& c) {
  const int m = a.rows, k = a.cols, n = b.cols;
  for (int i = 0; i < m; ++i) {
    const T* ai = a.row(i);
    const T* bi = b.row(i);
    for (int p = 0; p < k; ++p) {
      const T s = ai[p];
      T* cp = c.row(p);
      for (int j = 0; j < n; ++j) cp[j] += s * bi[j];
    }
  }
}

template <typename T>
inline bool all_finite(const Mat<T>& m) {
  for (const T x : m.v)
    if (!std::isfinite(static_cast<double>(x))) return false;
  return true;
}

template <typename T>
inline void check_finite(const Mat<T>& m, const char* stage) {
  if (!all_finite(m))
    raise(ErrorCode::Numeric, std::string("non-finite value at stage ") + stage);
}

}  // namespace evg
