#pragma once

// Circular convolution out[i] = sum_k kernel[(i - k) mod L] * signal[k],
// either by the O(L^2) direct sum or through FFTW real-to-complex transforms.

#include <algorithm>
#include <complex>
#include <cstddef>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include <fftw3.h>

#include "fluctlab/error.hpp"

namespace fluctlab {

enum class ConvolutionMethod { direct, fast, automatic };

inline ConvolutionMethod parse_convolution_method(const std::string& name) {
  if (name == "direct") return ConvolutionMethod::direct;
  if (name == "fast") return ConvolutionMethod::fast;
  if (name == "auto") return ConvolutionMethod::automatic;
  throw ConfigError("unknown method '" + name + "' (expected direct, fast or auto)");
}

inline const char* to_string(ConvolutionMethod m) {
  switch (m) {
    case ConvolutionMethod::direct: return "direct";
    case ConvolutionMethod::fast: return "fast";
    case ConvolutionMethod::automatic: return "auto";
  }
  return "?";
}

// Below this length the FFT path falls back to the direct sum.
inline constexpr std::size_t kFastConvolutionThreshold = 64;

inline void circular_convolve_direct(std::span<const double> kernel, std::span<const double> signal,
                                     std::span<double> out) {
  const std::size_t n = kernel.size();
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    // split the index range to avoid a modulo per term
    for (std::size_t k = 0; k <= i; ++k) acc += kernel[i - k] * signal[k];
    for (std::size_t k = i + 1; k < n; ++k) acc += kernel[n + i - k] * signal[k];
    out[i] = acc;
  }
}

namespace detail {
// FFTW planning is not thread safe; execution with new-array functions is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace detail

// Convolution with a fixed kernel. Holds the kernel spectrum and scratch
// buffers, so one instance must not be applied from two threads at once.
class CirculantOperator {
 public:
  explicit CirculantOperator(std::span<const double> kernel)
      : kernel_(kernel.begin(), kernel.end()), length_(kernel.size()) {
    if (length_ == 0) throw ConfigError("convolution length must be >= 1");
    if (length_ < kFastConvolutionThreshold) return;
    const std::size_t spectrum_len = length_ / 2 + 1;
    real_ = static_cast<double*>(fftw_malloc(sizeof(double) * length_));
    spec_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * spectrum_len));
    {
      std::lock_guard lock(detail::fftw_planner_mutex());
      forward_ = fftw_plan_dft_r2c_1d(static_cast<int>(length_), real_, spec_, FFTW_ESTIMATE);
      backward_ = fftw_plan_dft_c2r_1d(static_cast<int>(length_), spec_, real_, FFTW_ESTIMATE);
    }
    std::copy(kernel_.begin(), kernel_.end(), real_);
    fftw_execute(forward_);
    kernel_spectrum_.resize(spectrum_len);
    const double scale = 1.0 / static_cast<double>(length_);
    for (std::size_t k = 0; k < spectrum_len; ++k) {
      kernel_spectrum_[k] = std::complex<double>(spec_[k][0], spec_[k][1]) * scale;
    }
  }

  CirculantOperator(const CirculantOperator&) = delete;
  CirculantOperator& operator=(const CirculantOperator&) = delete;

  ~CirculantOperator() {
    if (forward_ != nullptr || backward_ != nullptr) {
      std::lock_guard lock(detail::fftw_planner_mutex());
      if (forward_ != nullptr) fftw_destroy_plan(forward_);
      if (backward_ != nullptr) fftw_destroy_plan(backward_);
    }
    fftw_free(real_);
    fftw_free(spec_);
  }

  [[nodiscard]] std::size_t length() const { return length_; }
  [[nodiscard]] const std::vector<double>& kernel() const { return kernel_; }

  void apply(std::span<const double> signal, std::span<double> out,
             ConvolutionMethod method = ConvolutionMethod::fast) {
    if (signal.size() != length_ || out.size() != length_) {
      throw ConfigError("convolution length mismatch");
    }
    if (method == ConvolutionMethod::direct || forward_ == nullptr) {
      circular_convolve_direct(kernel_, signal, out);
      return;
    }
    std::copy(signal.begin(), signal.end(), real_);
    fftw_execute(forward_);
    for (std::size_t k = 0; k < kernel_spectrum_.size(); ++k) {
      const std::complex<double> v = std::complex<double>(spec_[k][0], spec_[k][1]) * kernel_spectrum_[k];
      spec_[k][0] = v.real();
      spec_[k][1] = v.imag();
    }
    fftw_execute(backward_);
    std::copy(real_, real_ + length_, out.begin());
  }

 private:
  std::vector<double> kernel_;
  std::size_t length_;
  std::vector<std::complex<double>> kernel_spectrum_;
  double* real_ = nullptr;
  fftw_complex* spec_ = nullptr;
  fftw_plan forward_ = nullptr;
  fftw_plan backward_ = nullptr;
};

inline std::vector<double> circular_convolve(std::span<const double> kernel, std::span<const double> signal,
                                             ConvolutionMethod method) {
  if (kernel.size() != signal.size()) {
    throw ConfigError("circular_convolve: kernel length " + std::to_string(kernel.size()) +
                      " != signal length " + std::to_string(signal.size()));
  }
  if (kernel.empty()) throw ConfigError("circular_convolve: empty input");
  std::vector<double> out(kernel.size());
  if (method == ConvolutionMethod::direct) {
    circular_convolve_direct(kernel, signal, out);
  } else {
    CirculantOperator op(kernel);
    op.apply(signal, out, ConvolutionMethod::fast);
  }
  return out;
}

}  // namespace fluctlab
