#pragma once

// Test-only oracles, independent of the statevector kernels they check:
// full 2^n x 2^n dense unitaries built by Kronecker products and applied
// by matrix multiplication, plus central finite differences.

#include <Eigen/Dense>
#include <complex>
#include <functional>
#include <vector>

#include "qhr/circuit.hpp"

namespace oracle {

using Eigen::MatrixXcd;
using Eigen::VectorXcd;
using Eigen::VectorXd;
using Complex = std::complex<double>;

inline MatrixXcd kron(const MatrixXcd& a, const MatrixXcd& b) {
    MatrixXcd out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
        }
    }
    return out;
}

// Embed a 2x2 unitary on `qubit` of an n-qubit register. Qubit 0 is the
// least significant bit, so it sits rightmost in the Kronecker chain.
inline MatrixXcd embed_1q(const MatrixXcd& u, int qubit, int n_qubits) {
    MatrixXcd out = MatrixXcd::Identity(1, 1);
    for (int q = n_qubits - 1; q >= 0; --q) {
        out = kron(out, q == qubit ? u : MatrixXcd::Identity(2, 2));
    }
    return out;
}

inline MatrixXcd h_matrix() {
    MatrixXcd u(2, 2);
    const double s = 0.7071067811865476;
    u << s, s, s, -s;
    return u;
}

inline MatrixXcd rz_matrix(double angle) {
    MatrixXcd u = MatrixXcd::Zero(2, 2);
    u(0, 0) = std::exp(Complex(0, -angle / 2));
    u(1, 1) = std::exp(Complex(0, angle / 2));
    return u;
}

inline MatrixXcd rx_matrix(double angle) {
    MatrixXcd u(2, 2);
    const double c = std::cos(angle / 2);
    const Complex is(0, std::sin(angle / 2));
    u << Complex(c, 0), -is, -is, Complex(c, 0);
    return u;
}

inline MatrixXcd cnot_matrix(int control, int target, int n_qubits) {
    const Eigen::Index dim = Eigen::Index(1) << n_qubits;
    MatrixXcd u = MatrixXcd::Zero(dim, dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
        Eigen::Index j = i;
        if (i & (Eigen::Index(1) << control)) j = i ^ (Eigen::Index(1) << target);
        u(j, i) = 1.0;
    }
    return u;
}

// Runs a compiled plan by full matrix multiplication and returns the
// measured <Z> values.
inline VectorXd run_plan_dense(const qhr::CircuitPlan& plan, const VectorXd& inputs,
                               const VectorXd& params) {
    const int n = plan.config.n1;
    const Eigen::Index dim = Eigen::Index(1) << n;
    VectorXcd state = VectorXcd::Zero(dim);
    state[0] = 1.0;
    for (const auto& g : plan.gates) {
        MatrixXcd u;
        switch (g.kind) {
            case qhr::GateKind::H: u = embed_1q(h_matrix(), g.qubit, n); break;
            case qhr::GateKind::RZ: u = embed_1q(rz_matrix(inputs[g.slot]), g.qubit, n); break;
            case qhr::GateKind::RX: u = embed_1q(rx_matrix(params[g.slot]), g.qubit, n); break;
            case qhr::GateKind::CNOT: u = cnot_matrix(g.control, g.qubit, n); break;
        }
        state = u * state;
    }
    VectorXd out(static_cast<Eigen::Index>(plan.measured_qubits.size()));
    for (std::size_t m = 0; m < plan.measured_qubits.size(); ++m) {
        double z = 0.0;
        for (Eigen::Index i = 0; i < dim; ++i) {
            const double p = std::norm(state[i]);
            z += (i & (Eigen::Index(1) << plan.measured_qubits[m])) ? -p : p;
        }
        out[static_cast<Eigen::Index>(m)] = z;
    }
    return out;
}

// Central finite differences of a scalar function of a flat vector.
inline VectorXd finite_diff(const std::function<double(const VectorXd&)>& f, VectorXd at,
                            double h = 1e-5) {
    VectorXd grad(at.size());
    for (Eigen::Index i = 0; i < at.size(); ++i) {
        const double keep = at[i];
        at[i] = keep + h;
        const double plus = f(at);
        at[i] = keep - h;
        const double minus = f(at);
        at[i] = keep;
        grad[i] = (plus - minus) / (2 * h);
    }
    return grad;
}

// |a - b| <= tol * max(1, |a|, |b|), elementwise.
inline bool close_rel(double a, double b, double tol) {
    return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

inline bool all_close_rel(const VectorXd& a, const VectorXd& b, double tol) {
    if (a.size() != b.size()) return false;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        if (!close_rel(a[i], b[i], tol)) return false;
    }
    return true;
}

}  // namespace oracle
