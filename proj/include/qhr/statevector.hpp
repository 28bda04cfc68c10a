#pragma once

#include <Eigen/Dense>
#include <complex>

namespace qhr {

/// Dense statevector over n qubits, little-endian: qubit 0 is the least
/// significant bit of the basis-state index. Amplitudes live in a flat
/// Eigen vector; gate kernels mutate it in place with stride-2^q pair
/// iteration. All expectation values are exact (no sampling).
class StateVector {
  public:
    using Complex = std::complex<double>;

    /// |0...0> on n_qubits. Guarded to 1..24 qubits (24 -> 256 MiB).
    explicit StateVector(int n_qubits);

    int n_qubits() const { return n_qubits_; }
    Eigen::Index dim() const { return amps_.size(); }
    const Eigen::VectorXcd& amplitudes() const { return amps_; }
    Eigen::VectorXcd& amplitudes() { return amps_; }

    void reset();  // back to |0...0>

    void apply_h(int qubit);
    void apply_rz(int qubit, double angle);
    void apply_rx(int qubit, double angle);
    void apply_cnot(int control, int target);

    /// <Z_qubit> = sum over bit=0 states of |amp|^2 minus sum over bit=1.
    double expectation_z(int qubit) const;

    double squared_norm() const { return amps_.squaredNorm(); }

  private:
    void check_qubit(int qubit) const;

    int n_qubits_;
    Eigen::VectorXcd amps_;
};

}  // namespace qhr
