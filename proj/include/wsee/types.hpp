#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace wsee {

// Error hierarchy. ShapeError for dimension mismatches between containers,
// InvalidInput for bad user-supplied values (NaN, empty datasets, ...),
// DomainViolation for math-domain failures (log of nonpositive, sqrt of
// negative) carrying the offending location.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct InvalidInput : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct StateError : std::logic_error {
    using std::logic_error::logic_error;
};

struct DomainViolation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dense M x K grid of doubles, the shape of every per-link quantity
// (power coefficients, SINR, rates, weights, auxiliaries).
class Grid {
  public:
    Grid() = default;
    Grid(int num_bs, int users_per_bs, double fill = 0.0)
        : m_(num_bs), k_(users_per_bs), v_(static_cast<size_t>(num_bs) * users_per_bs, fill) {
        if (num_bs < 0 || users_per_bs < 0) throw ShapeError("Grid: negative dimension");
    }

    int num_bs() const { return m_; }
    int users_per_bs() const { return k_; }
    size_t size() const { return v_.size(); }
    bool empty() const { return v_.empty(); }

    double& at(int m, int k) { return v_[static_cast<size_t>(m) * k_ + k]; }
    double at(int m, int k) const { return v_[static_cast<size_t>(m) * k_ + k]; }

    double* data() { return v_.data(); }
    const double* data() const { return v_.data(); }
    std::vector<double>& flat() { return v_; }
    const std::vector<double>& flat() const { return v_; }

    bool same_shape(const Grid& o) const { return m_ == o.m_ && k_ == o.k_; }

    void fill(double x) { v_.assign(v_.size(), x); }

  private:
    int m_ = 0, k_ = 0;
    std::vector<double> v_;
};

// Effective power gains G[serving m][user k][source BS n], dims M x K x M.
// Entry (m,k,n) is pathloss(d(user_{m,k}, BS_n)) * |h|^2.
class GainTensor {
  public:
    GainTensor() = default;
    GainTensor(int num_bs, int users_per_bs)
        : m_(num_bs), k_(users_per_bs),
          v_(static_cast<size_t>(num_bs) * users_per_bs * num_bs, 0.0) {}

    int num_bs() const { return m_; }
    int users_per_bs() const { return k_; }
    size_t size() const { return v_.size(); }

    double& at(int m, int k, int n) {
        return v_[(static_cast<size_t>(m) * k_ + k) * m_ + n];
    }
    double at(int m, int k, int n) const {
        return v_[(static_cast<size_t>(m) * k_ + k) * m_ + n];
    }

    std::vector<double>& flat() { return v_; }
    const std::vector<double>& flat() const { return v_; }

  private:
    int m_ = 0, k_ = 0;
    std::vector<double> v_;
};

// Static scenario parameters. Serializes to JSON with exactly these
// field names (see serialize.hpp).
struct NetworkConfig {
    int num_bs = 1;          // M
    int users_per_bs = 1;    // K
    int num_antennas = 1;    // N
    double p_max = 1.0;             // watts, per-BS transmit budget
    double circuit_power = 1.0;     // watts, per user
    double bandwidth = 1.0;         // hertz
    double noise_power = 1.0;       // watts
    Grid weights;                   // M x K, nonnegative
    double path_loss_exponent = 3.5;
    double cell_radius = 500.0;     // meters
    uint64_t rng_seed = 0;

    // Checks the structural invariants. `require_positive_weight` is the
    // strict form used at external input boundaries; library-internal
    // callers tolerate the all-zero-weights degenerate case.
    void validate(bool require_positive_weight = false) const;
};

// Builds a config with weights = 1 everywhere, the common case.
NetworkConfig make_config(int num_bs, int users_per_bs, int num_antennas, double p_max,
                          double circuit_power, double bandwidth, double noise_power,
                          double path_loss_exponent, double cell_radius, uint64_t rng_seed);

// Thermal noise power in watts over `bandwidth_hz` for the standard
// -174 dBm/Hz density plus a receiver noise figure in dB.
double thermal_noise_watts(double bandwidth_hz, double noise_figure_db = 7.0);

struct ChannelRealization {
    GainTensor gains;
    uint64_t seed = 0;
};

// Power allocation coefficients rho in [0,1]^{M x K} with per-BS budget
// sum_k rho[m][k] <= 1.
struct PowerAllocation {
    Grid rho;
};

struct LinkMetrics {
    Grid sinr;
    Grid rate;  // bit/s
    Grid ee;    // bit/joule
    double wsee = 0.0;
};

}  // namespace wsee
