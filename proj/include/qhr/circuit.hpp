#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace qhr {

enum class MeasureHead { MultiMeasure, SingleMeasure };

/// The layered ansatz of the hybrid model, characterized by three
/// hyperparameters: n1 qubits, n2 encoding repetitions, n3 variational
/// repetitions, plus the measurement head.
struct CircuitConfig {
    int n1 = 1;
    int n2 = 1;
    int n3 = 1;
    MeasureHead head = MeasureHead::MultiMeasure;

    int input_count() const { return n1 * n2; }   // RZ angle slots
    int param_count() const { return n1 * n3; }   // RX angle slots
    int output_count() const { return head == MeasureHead::MultiMeasure ? n1 : 1; }

    void validate() const;
};

enum class GateKind { H, RZ, RX, CNOT };

/// One gate in a compiled plan. Rotation gates reference an angle slot:
/// slot_domain Input indexes the normalized feature vector, Param the
/// trainable rotation angles.
struct PlanGate {
    GateKind kind;
    int qubit = 0;       // target
    int control = -1;    // CNOT only
    int slot = -1;       // RZ/RX only
    enum class Slot { None, Input, Param } slot_domain = Slot::None;
};

struct CircuitPlan {
    CircuitConfig config;
    std::vector<PlanGate> gates;

    /// Measured qubits in output order: all of them (multi) or just
    /// qubit 0 after the integrating CNOT chain (single).
    std::vector<int> measured_qubits;

    std::string to_json() const;
};

/// Compile the layered architecture:
///   encoding:    H wall (first repetition only), then per repetition j
///                an RZ(phi[j*n1+i]) on each qubit i;
///   variational: per repetition k an RX(theta[k*n1+i]) wall followed by
///                a CNOT ring i -> (i+1 mod n1), ring omitted at n1 = 1;
///   head:        multi measures every qubit; single first folds all
///                qubits into qubit 0 with a descending CNOT chain.
CircuitPlan build_circuit(const CircuitConfig& config);

/// Exact expectation values <Z> for the measured qubits, in [-1, 1].
Eigen::VectorXd circuit_forward(const CircuitPlan& plan,
                                const Eigen::Ref<const Eigen::VectorXd>& inputs,
                                const Eigen::Ref<const Eigen::VectorXd>& params);

/// Parameter-shift Jacobians, exact for RZ/RX:
/// d out / d slot = [f(slot + pi/2) - f(slot - pi/2)] / 2.
struct CircuitGradient {
    Eigen::MatrixXd d_inputs;  // output_count x input_count
    Eigen::MatrixXd d_params;  // output_count x param_count
};

CircuitGradient circuit_gradient(const CircuitPlan& plan,
                                 const Eigen::Ref<const Eigen::VectorXd>& inputs,
                                 const Eigen::Ref<const Eigen::VectorXd>& params);

}  // namespace qhr
