#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "melex/common.hpp"

namespace melex {

// Mixed radix-2/3 complex FFT (sizes 2^a * 3^b), enough for the 768-point
// analysis windows used throughout. Plans precompute the twiddle table once.
class Fft {
 public:
  using cd = std::complex<double>;

  explicit Fft(std::size_t n) : n_(n) {
    std::size_t m = n;
    while (m > 1 && m % 2 == 0) m /= 2;
    while (m > 1 && m % 3 == 0) m /= 3;
    if (m != 1) {
      throw ValidationError(format_msg("fft: size ", n, " is not of the form 2^a*3^b"));
    }
    table_.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      const double a = -2.0 * 3.14159265358979323846 * static_cast<double>(j) /
                       static_cast<double>(n);
      table_[j] = cd(std::cos(a), std::sin(a));
    }
  }

  std::size_t size() const { return n_; }

  void forward(const cd* in, cd* out) const { rec(in, out, n_, 1, 1); }

  std::vector<cd> forward(const std::vector<cd>& in) const {
    if (in.size() != n_) throw ValidationError("fft: input length mismatch");
    std::vector<cd> out(n_);
    forward(in.data(), out.data());
    return out;
  }

  // Inverse with 1/n scaling.
  std::vector<cd> inverse(const std::vector<cd>& in) const {
    if (in.size() != n_) throw ValidationError("fft: input length mismatch");
    std::vector<cd> tmp(n_), out(n_);
    for (std::size_t i = 0; i < n_; ++i) tmp[i] = std::conj(in[i]);
    forward(tmp.data(), out.data());
    const double inv = 1.0 / static_cast<double>(n_);
    for (std::size_t i = 0; i < n_; ++i) out[i] = std::conj(out[i]) * inv;
    return out;
  }

 private:
  void rec(const cd* in, cd* out, std::size_t n, std::size_t stride, std::size_t tw) const {
    if (n == 1) {
      out[0] = in[0];
      return;
    }
    const std::size_t r = (n % 2 == 0) ? 2 : 3;
    const std::size_t m = n / r;
    for (std::size_t q = 0; q < r; ++q) {
      rec(in + q * stride, out + q * m, m, stride * r, tw * r);
    }
    if (r == 2) {
      for (std::size_t k = 0; k < m; ++k) {
        const cd t0 = out[k];
        const cd t1 = table_[k * tw] * out[m + k];
        out[k] = t0 + t1;
        out[m + k] = t0 - t1;
      }
    } else {
      // exp(-2*pi*i/3) and its square
      static const cd w1(-0.5, -0.86602540378443864676);
      static const cd w2(-0.5, 0.86602540378443864676);
      for (std::size_t k = 0; k < m; ++k) {
        const cd t0 = out[k];
        const cd t1 = table_[k * tw] * out[m + k];
        const cd t2 = table_[2 * k * tw] * out[2 * m + k];
        out[k] = t0 + t1 + t2;
        out[m + k] = t0 + w1 * t1 + w2 * t2;
        out[2 * m + k] = t0 + w2 * t1 + w1 * t2;
      }
    }
  }

  std::size_t n_;
  std::vector<cd> table_;
};

}  // namespace melex
