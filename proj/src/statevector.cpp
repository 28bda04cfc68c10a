#include "qhr/statevector.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace qhr {

namespace {
constexpr int kMaxQubits = 24;  // memory guard: 2^24 amplitudes
}

StateVector::StateVector(int n_qubits) : n_qubits_(n_qubits) {
    if (n_qubits < 1 || n_qubits > kMaxQubits) {
        throw std::invalid_argument("configuration error: qubit count " +
                                    std::to_string(n_qubits) + " outside [1, " +
                                    std::to_string(kMaxQubits) + "]");
    }
    amps_ = Eigen::VectorXcd::Zero(Eigen::Index(1) << n_qubits);
    amps_[0] = Complex(1.0, 0.0);
}

void StateVector::reset() {
    amps_.setZero();
    amps_[0] = Complex(1.0, 0.0);
}

void StateVector::check_qubit(int qubit) const {
    if (qubit < 0 || qubit >= n_qubits_) {
        throw std::out_of_range("index error: qubit " + std::to_string(qubit) +
                                " out of range for " + std::to_string(n_qubits_) +
                                " qubits");
    }
}

void StateVector::apply_h(int qubit) {
    check_qubit(qubit);
    const std::size_t mask = std::size_t(1) << qubit;
    const std::size_t half = std::size_t(amps_.size()) >> 1;
    const double inv_sqrt2 = 0.7071067811865476;
    Complex* a = amps_.data();
    for (std::size_t k = 0; k < half; ++k) {
        const std::size_t i0 = ((k & ~(mask - 1)) << 1) | (k & (mask - 1));
        const std::size_t i1 = i0 | mask;
        const Complex v0 = a[i0];
        const Complex v1 = a[i1];
        a[i0] = (v0 + v1) * inv_sqrt2;
        a[i1] = (v0 - v1) * inv_sqrt2;
    }
}

void StateVector::apply_rz(int qubit, double angle) {
    check_qubit(qubit);
    if (!std::isfinite(angle)) throw std::invalid_argument("RZ angle not finite");
    const std::size_t mask = std::size_t(1) << qubit;
    // diag(e^{-i a/2}, e^{+i a/2})
    const Complex e0(std::cos(angle / 2), -std::sin(angle / 2));
    const Complex e1(std::cos(angle / 2), std::sin(angle / 2));
    Complex* a = amps_.data();
    const std::size_t dim = std::size_t(amps_.size());
    for (std::size_t i = 0; i < dim; ++i) {
        a[i] *= (i & mask) ? e1 : e0;
    }
}

void StateVector::apply_rx(int qubit, double angle) {
    check_qubit(qubit);
    if (!std::isfinite(angle)) throw std::invalid_argument("RX angle not finite");
    const std::size_t mask = std::size_t(1) << qubit;
    const std::size_t half = std::size_t(amps_.size()) >> 1;
    const double c = std::cos(angle / 2);
    const Complex mis(0.0, -std::sin(angle / 2));  // -i sin(a/2)
    Complex* a = amps_.data();
    for (std::size_t k = 0; k < half; ++k) {
        const std::size_t i0 = ((k & ~(mask - 1)) << 1) | (k & (mask - 1));
        const std::size_t i1 = i0 | mask;
        const Complex v0 = a[i0];
        const Complex v1 = a[i1];
        a[i0] = c * v0 + mis * v1;
        a[i1] = mis * v0 + c * v1;
    }
}

void StateVector::apply_cnot(int control, int target) {
    check_qubit(control);
    check_qubit(target);
    if (control == target) {
        throw std::invalid_argument("argument error: CNOT control == target");
    }
    const std::size_t cmask = std::size_t(1) << control;
    const std::size_t tmask = std::size_t(1) << target;
    Complex* a = amps_.data();
    const std::size_t dim = std::size_t(amps_.size());
    for (std::size_t i = 0; i < dim; ++i) {
        if ((i & cmask) && !(i & tmask)) {
            std::swap(a[i], a[i | tmask]);
        }
    }
}

double StateVector::expectation_z(int qubit) const {
    check_qubit(qubit);
    const std::size_t mask = std::size_t(1) << qubit;
    const Complex* a = amps_.data();
    const std::size_t dim = std::size_t(amps_.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
        const double p = std::norm(a[i]);
        acc += (i & mask) ? -p : p;
    }
    return acc;
}

}  // namespace qhr
