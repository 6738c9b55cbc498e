#pragma once

#include <fftw3.h>

#include <cstring>
#include <mutex>

#include "pinball/wavefield.hpp"

namespace pinball::detail {

// The FFTW planner is not reentrant.
inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

/// In-place unnormalized forward/backward transforms over a grid. Plans use
/// FFTW_ESTIMATE so the chosen algorithm, and therefore every bit of the
/// output, is the same on every run.
///
/// 2D transforms run as a batch of contiguous row transforms followed by
/// column transforms on blocks of kBlock columns gathered into a small
/// buffer. ESTIMATE picks a slow strided plan for the full 2D transform;
/// this is about twice as fast and gives the same bits.
class FftPlan {
 public:
  static constexpr int kBlock = 8;

  explicit FftPlan(const Grid& grid) : n0_(static_cast<int>(grid.n[0])), n1_(static_cast<int>(grid.n[1])) {
    ComplexField scratch(grid.size());
    auto* data = reinterpret_cast<fftw_complex*>(scratch.data());
    std::lock_guard lock(planner_mutex());
    if (grid.dims == 1) {
      n1_ = 0;
      for (int s = 0; s < 2; ++s) rows_[s] = fftw_plan_dft_1d(n0_, data, data, sign(s), FFTW_ESTIMATE);
      return;
    }
    buffer_ = fftw_alloc_complex(static_cast<std::size_t>(n0_) * kBlock);
    for (int s = 0; s < 2; ++s) {
      rows_[s] = fftw_plan_many_dft(1, &n1_, n0_, data, nullptr, 1, n1_, data, nullptr, 1, n1_, sign(s),
                                    FFTW_ESTIMATE);
      cols_[s] = fftw_plan_many_dft(1, &n0_, kBlock, buffer_, nullptr, kBlock, 1, buffer_, nullptr, kBlock, 1,
                                    sign(s), FFTW_ESTIMATE);
    }
  }

  ~FftPlan() {
    std::lock_guard lock(planner_mutex());
    for (int s = 0; s < 2; ++s) {
      if (rows_[s]) fftw_destroy_plan(rows_[s]);
      if (cols_[s]) fftw_destroy_plan(cols_[s]);
    }
    if (buffer_) fftw_free(buffer_);
  }

  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;

  void forward(Complex* data) const { run(0, data); }
  void backward(Complex* data) const { run(1, data); }

 private:
  static int sign(int s) { return s == 0 ? FFTW_FORWARD : FFTW_BACKWARD; }

  void run(int s, Complex* data) const {
    auto* p = reinterpret_cast<fftw_complex*>(data);
    fftw_execute_dft(rows_[s], p, p);
    if (n1_ == 0) return;
    const std::size_t chunk = sizeof(fftw_complex) * kBlock;
    for (int c = 0; c < n1_; c += kBlock) {
      for (int i = 0; i < n0_; ++i) std::memcpy(buffer_[i * kBlock], p[i * n1_ + c], chunk);
      fftw_execute(cols_[s]);
      for (int i = 0; i < n0_; ++i) std::memcpy(p[i * n1_ + c], buffer_[i * kBlock], chunk);
    }
  }

  int n0_;
  int n1_;
  fftw_complex* buffer_ = nullptr;
  fftw_plan rows_[2] = {nullptr, nullptr};
  fftw_plan cols_[2] = {nullptr, nullptr};
};

}  // namespace pinball::detail
