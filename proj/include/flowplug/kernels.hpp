#pragma once

// Dense kernels used by the MLPs and the flow. Every kernel exists in two
// forms: a plain serial loop nest (the reference, kept for testing) and an
// OpenMP version that splits work over output rows. Each output element is
// produced by exactly one thread with the same summation order as the serial
// loop, so both forms are bit-identical.

#include "flowplug/matrix.hpp"

namespace flowplug::kernels {

enum class Policy { Serial, Parallel };

Policy policy();
void set_policy(Policy p);

// Restores the previous policy on scope exit.
class ScopedPolicy {
 public:
  explicit ScopedPolicy(Policy p) : saved_(policy()) { set_policy(p); }
  ~ScopedPolicy() { set_policy(saved_); }
  ScopedPolicy(const ScopedPolicy&) = delete;
  ScopedPolicy& operator=(const ScopedPolicy&) = delete;

 private:
  Policy saved_;
};

// out = a * b
void matmul(const Matrix& a, const Matrix& b, Matrix& out);
// out += a^T * b
void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& out);
// out = a * b^T
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out);

namespace serial {
void matmul(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out);
}  // namespace serial

namespace parallel {
void matmul(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out);
}  // namespace parallel

}  // namespace flowplug::kernels
