#include "qhr/circuit.hpp"

#include <nlohmann/json.hpp>
#include <stdexcept>

#include "qhr/statevector.hpp"

namespace qhr {

void CircuitConfig::validate() const {
    if (n1 < 1 || n2 < 1 || n3 < 1) {
        throw std::invalid_argument("configuration error: circuit needs n1, n2, n3 >= 1");
    }
    if (n1 > 24) {
        throw std::invalid_argument("configuration error: n1 exceeds the 24-qubit guard");
    }
}

CircuitPlan build_circuit(const CircuitConfig& config) {
    config.validate();
    CircuitPlan plan;
    plan.config = config;

    for (int j = 0; j < config.n2; ++j) {
        if (j == 0) {
            for (int i = 0; i < config.n1; ++i) {
                plan.gates.push_back({GateKind::H, i, -1, -1, PlanGate::Slot::None});
            }
        }
        for (int i = 0; i < config.n1; ++i) {
            plan.gates.push_back(
                {GateKind::RZ, i, -1, j * config.n1 + i, PlanGate::Slot::Input});
        }
    }

    for (int k = 0; k < config.n3; ++k) {
        for (int i = 0; i < config.n1; ++i) {
            plan.gates.push_back(
                {GateKind::RX, i, -1, k * config.n1 + i, PlanGate::Slot::Param});
        }
        if (config.n1 > 1) {
            for (int i = 0; i < config.n1; ++i) {
                plan.gates.push_back({GateKind::CNOT, (i + 1) % config.n1, i, -1,
                                      PlanGate::Slot::None});
            }
        }
    }

    if (config.head == MeasureHead::MultiMeasure) {
        for (int i = 0; i < config.n1; ++i) plan.measured_qubits.push_back(i);
    } else {
        // Integrate all qubits into qubit 0 before the lone measurement.
        for (int i = config.n1 - 1; i >= 1; --i) {
            plan.gates.push_back({GateKind::CNOT, i - 1, i, -1, PlanGate::Slot::None});
        }
        plan.measured_qubits.push_back(0);
    }
    return plan;
}

std::string CircuitPlan::to_json() const {
    nlohmann::json j;
    j["n_qubits"] = config.n1;
    j["n_inputs"] = config.input_count();
    j["n_params"] = config.param_count();
    j["head"] = config.head == MeasureHead::MultiMeasure ? "multi" : "single";
    j["gates"] = nlohmann::json::array();
    for (const auto& g : gates) {
        nlohmann::json jg;
        switch (g.kind) {
            case GateKind::H: jg["gate"] = "H"; break;
            case GateKind::RZ: jg["gate"] = "RZ"; break;
            case GateKind::RX: jg["gate"] = "RX"; break;
            case GateKind::CNOT: jg["gate"] = "CNOT"; break;
        }
        jg["qubit"] = g.qubit;
        if (g.control >= 0) jg["control"] = g.control;
        if (g.slot >= 0) {
            jg["slot"] = g.slot;
            jg["domain"] = g.slot_domain == PlanGate::Slot::Input ? "input" : "param";
        }
        j["gates"].push_back(jg);
    }
    j["measured_qubits"] = measured_qubits;
    return j.dump(2);
}

namespace {

void run_plan(const CircuitPlan& plan, const Eigen::Ref<const Eigen::VectorXd>& inputs,
              const Eigen::Ref<const Eigen::VectorXd>& params, StateVector& state) {
    for (const auto& g : plan.gates) {
        switch (g.kind) {
            case GateKind::H:
                state.apply_h(g.qubit);
                break;
            case GateKind::RZ:
                state.apply_rz(g.qubit, inputs[g.slot]);
                break;
            case GateKind::RX:
                state.apply_rx(g.qubit, params[g.slot]);
                break;
            case GateKind::CNOT:
                state.apply_cnot(g.control, g.qubit);
                break;
        }
    }
}

void check_shapes(const CircuitPlan& plan, Eigen::Index n_inputs, Eigen::Index n_params) {
    if (n_inputs != plan.config.input_count() || n_params != plan.config.param_count()) {
        throw std::invalid_argument("shape error: circuit expects " +
                                    std::to_string(plan.config.input_count()) + " inputs and " +
                                    std::to_string(plan.config.param_count()) + " params, got " +
                                    std::to_string(n_inputs) + " / " + std::to_string(n_params));
    }
}

}  // namespace

Eigen::VectorXd circuit_forward(const CircuitPlan& plan,
                                const Eigen::Ref<const Eigen::VectorXd>& inputs,
                                const Eigen::Ref<const Eigen::VectorXd>& params) {
    check_shapes(plan, inputs.size(), params.size());
    StateVector state(plan.config.n1);
    run_plan(plan, inputs, params, state);
    Eigen::VectorXd out(static_cast<Eigen::Index>(plan.measured_qubits.size()));
    for (std::size_t i = 0; i < plan.measured_qubits.size(); ++i) {
        out[static_cast<Eigen::Index>(i)] = state.expectation_z(plan.measured_qubits[i]);
    }
    return out;
}

CircuitGradient circuit_gradient(const CircuitPlan& plan,
                                 const Eigen::Ref<const Eigen::VectorXd>& inputs,
                                 const Eigen::Ref<const Eigen::VectorXd>& params) {
    check_shapes(plan, inputs.size(), params.size());
    const double shift = 1.5707963267948966;  // pi/2
    const Eigen::Index n_out = plan.config.output_count();

    CircuitGradient grad;
    grad.d_inputs.resize(n_out, inputs.size());
    grad.d_params.resize(n_out, params.size());

    Eigen::VectorXd work = inputs;
    for (Eigen::Index s = 0; s < inputs.size(); ++s) {
        work[s] = inputs[s] + shift;
        Eigen::VectorXd plus = circuit_forward(plan, work, params);
        work[s] = inputs[s] - shift;
        Eigen::VectorXd minus = circuit_forward(plan, work, params);
        work[s] = inputs[s];
        grad.d_inputs.col(s) = (plus - minus) / 2.0;
    }
    work = params;
    for (Eigen::Index s = 0; s < params.size(); ++s) {
        work[s] = params[s] + shift;
        Eigen::VectorXd plus = circuit_forward(plan, inputs, work);
        work[s] = params[s] - shift;
        Eigen::VectorXd minus = circuit_forward(plan, inputs, work);
        work[s] = params[s];
        grad.d_params.col(s) = (plus - minus) / 2.0;
    }
    return grad;
}

}  // namespace qhr
