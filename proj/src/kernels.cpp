#include "flowplug/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <string>

#include "flowplug/errors.hpp"

namespace flowplug::kernels {

namespace {

std::atomic<Policy> g_policy{Policy::Parallel};

void check(bool ok, const char* what, const Matrix& a, const Matrix& b) {
  if (!ok) {
    throw DimensionError(std::string(what) + ": incompatible shapes " + std::to_string(a.rows()) +
                         "x" + std::to_string(a.cols()) + " and " + std::to_string(b.rows()) +
                         "x" + std::to_string(b.cols()));
  }
}

// Block kernels shared by both variants so the arithmetic is identical. Each
// processes up to kBlock output rows at once so every row of b is loaded once
// per block; each output element still accumulates over k in order.

constexpr std::size_t kBlock = 4;

// Rows [i0, i1) of out = a * b, with i1 - i0 <= kBlock.
inline void matmul_block(const Matrix& a, const Matrix& b, Matrix& out, std::size_t i0,
                         std::size_t i1) {
  const std::size_t inner = a.cols();
  const std::size_t n = b.cols();
  const std::size_t rows = i1 - i0;
  double* o[kBlock];
  for (std::size_t r = 0; r < rows; ++r) {
    o[r] = out.data() + (i0 + r) * n;
    for (std::size_t j = 0; j < n; ++j) o[r][j] = 0.0;
  }
  if (rows == kBlock) {
    for (std::size_t k = 0; k < inner; ++k) {
      const double a0 = a(i0, k), a1 = a(i0 + 1, k), a2 = a(i0 + 2, k), a3 = a(i0 + 3, k);
      const double* br = b.data() + k * n;
      double* __restrict o0 = o[0];
      double* __restrict o1 = o[1];
      double* __restrict o2 = o[2];
      double* __restrict o3 = o[3];
      for (std::size_t j = 0; j < n; ++j) {
        const double bv = br[j];
        o0[j] += a0 * bv;
        o1[j] += a1 * bv;
        o2[j] += a2 * bv;
        o3[j] += a3 * bv;
      }
    }
    return;
  }
  for (std::size_t r = 0; r < rows; ++r) {
    double* __restrict orow = o[r];
    for (std::size_t k = 0; k < inner; ++k) {
      const double av = a(i0 + r, k);
      const double* br = b.data() + k * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * br[j];
    }
  }
}

// Rows [i0, i1) of out += a^T * b: out row i sums a(r, i) * b(r, :) over r.
inline void matmul_tn_block(const Matrix& a, const Matrix& b, Matrix& out, std::size_t i0,
                            std::size_t i1) {
  const std::size_t n = b.cols();
  const std::size_t rows = i1 - i0;
  if (rows == kBlock) {
    double* __restrict o0 = out.data() + i0 * n;
    double* __restrict o1 = o0 + n;
    double* __restrict o2 = o1 + n;
    double* __restrict o3 = o2 + n;
    for (std::size_t r = 0; r < a.rows(); ++r) {
      const double a0 = a(r, i0), a1 = a(r, i0 + 1), a2 = a(r, i0 + 2), a3 = a(r, i0 + 3);
      const double* br = b.data() + r * n;
      for (std::size_t j = 0; j < n; ++j) {
        const double bv = br[j];
        o0[j] += a0 * bv;
        o1[j] += a1 * bv;
        o2[j] += a2 * bv;
        o3[j] += a3 * bv;
      }
    }
    return;
  }
  for (std::size_t i = i0; i < i1; ++i) {
    double* __restrict orow = out.data() + i * n;
    for (std::size_t r = 0; r < a.rows(); ++r) {
      const double av = a(r, i);
      const double* br = b.data() + r * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * br[j];
    }
  }
}

inline std::size_t num_blocks(std::size_t rows) { return (rows + kBlock - 1) / kBlock; }

template <typename Fn>
inline void for_blocks_serial(std::size_t rows, Fn&& fn) {
  for (std::size_t blk = 0; blk < num_blocks(rows); ++blk)
    fn(blk * kBlock, std::min(rows, (blk + 1) * kBlock));
}

template <typename Fn>
inline void for_blocks_parallel(std::size_t rows, Fn&& fn) {
  const auto blocks = static_cast<std::ptrdiff_t>(num_blocks(rows));
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t blk = 0; blk < blocks; ++blk) {
    const auto b0 = static_cast<std::size_t>(blk) * kBlock;
    fn(b0, std::min(rows, b0 + kBlock));
  }
}

}  // namespace

Policy policy() { return g_policy.load(std::memory_order_relaxed); }
void set_policy(Policy p) { g_policy.store(p, std::memory_order_relaxed); }

namespace serial {

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
  check(a.cols() == b.rows(), "matmul", a, b);
  if (out.rows() != a.rows() || out.cols() != b.cols()) out = Matrix(a.rows(), b.cols());
  for_blocks_serial(a.rows(), [&](std::size_t i0, std::size_t i1) { matmul_block(a, b, out, i0, i1); });
}

void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  check(a.rows() == b.rows(), "matmul_tn_acc", a, b);
  if (out.rows() != a.cols() || out.cols() != b.cols())
    throw DimensionError("matmul_tn_acc: accumulator has wrong shape");
  for_blocks_serial(a.cols(), [&](std::size_t i0, std::size_t i1) { matmul_tn_block(a, b, out, i0, i1); });
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out) {
  check(a.cols() == b.cols(), "matmul_nt", a, b);
  const Matrix bt = b.transposed();
  if (out.rows() != a.rows() || out.cols() != b.rows()) out = Matrix(a.rows(), b.rows());
  for_blocks_serial(a.rows(), [&](std::size_t i0, std::size_t i1) { matmul_block(a, bt, out, i0, i1); });
}

}  // namespace serial

namespace parallel {

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
  check(a.cols() == b.rows(), "matmul", a, b);
  if (out.rows() != a.rows() || out.cols() != b.cols()) out = Matrix(a.rows(), b.cols());
  for_blocks_parallel(a.rows(), [&](std::size_t i0, std::size_t i1) { matmul_block(a, b, out, i0, i1); });
}

void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  check(a.rows() == b.rows(), "matmul_tn_acc", a, b);
  if (out.rows() != a.cols() || out.cols() != b.cols())
    throw DimensionError("matmul_tn_acc: accumulator has wrong shape");
  for_blocks_parallel(a.cols(), [&](std::size_t i0, std::size_t i1) { matmul_tn_block(a, b, out, i0, i1); });
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out) {
  check(a.cols() == b.cols(), "matmul_nt", a, b);
  const Matrix bt = b.transposed();
  if (out.rows() != a.rows() || out.cols() != b.rows()) out = Matrix(a.rows(), b.rows());
  for_blocks_parallel(a.rows(), [&](std::size_t i0, std::size_t i1) { matmul_block(a, bt, out, i0, i1); });
}

}  // namespace parallel

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
  policy() == Policy::Serial ? serial::matmul(a, b, out) : parallel::matmul(a, b, out);
}

void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  policy() == Policy::Serial ? serial::matmul_tn_acc(a, b, out)
                             : parallel::matmul_tn_acc(a, b, out);
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out) {
  policy() == Policy::Serial ? serial::matmul_nt(a, b, out) : parallel::matmul_nt(a, b, out);
}

}  // namespace flowplug::kernels
