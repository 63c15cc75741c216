#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace llmdmd {

/// Classic fixed-step fourth-order Runge-Kutta. `f(t, x, dxdt)` must fill
/// dxdt; the workspace is reused between steps.
class Rk4 {
 public:
  explicit Rk4(std::size_t n) : k1_(n), k2_(n), k3_(n), k4_(n), tmp_(n) {}

  template <typename F>
  void step(F&& f, double t, double dt, std::span<double> x) {
    const std::size_t n = x.size();
    f(t, std::span<const double>(x), std::span<double>(k1_));
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = x[i] + 0.5 * dt * k1_[i];
    f(t + 0.5 * dt, std::span<const double>(tmp_), std::span<double>(k2_));
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = x[i] + 0.5 * dt * k2_[i];
    f(t + 0.5 * dt, std::span<const double>(tmp_), std::span<double>(k3_));
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = x[i] + dt * k3_[i];
    f(t + dt, std::span<const double>(tmp_), std::span<double>(k4_));
    for (std::size_t i = 0; i < n; ++i) x[i] += dt / 6.0 * (k1_[i] + 2.0 * k2_[i] + 2.0 * k3_[i] + k4_[i]);
  }

 private:
  std::vector<double> k1_, k2_, k3_, k4_, tmp_;
};

}  // namespace llmdmd
