#pragma once

#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "circuitflow/types.hpp"

namespace circuitflow {

enum class BusKind { PQ, PV, Slack };
enum class Connection { Wye, Delta };
enum class Units { PerUnit, Physical };

struct Bus {
    int id = 0;
    BusKind kind = BusKind::PQ;
    bool slack = false;          // designated reference bus
    double base_kv = 1.0;
    std::optional<double> v_set; // present iff voltage controlled
    double slack_angle = 0.0;    // radians, used when slack
    double v_init_mag = 1.0;     // case-file starting point
    double v_init_angle = 0.0;   // radians
    int island = 0;
};

struct Generator {
    int id = 0;
    int bus = 0;
    bool in_service = true;
    bool regulating = false;  // voltage control through Q
    std::optional<int> remote_bus;
    Vector p;      // per phase
    Vector q;      // per phase; initial/fixed value
    Vector q_min;
    Vector q_max;

    int regulated_bus() const { return remote_bus.value_or(bus); }
};

struct ZipLoad {
    int id = 0;
    int bus = 0;
    Connection connection = Connection::Wye;
    ComplexVector admittance;  // Y_P + jY_Q, the inverse of the impedance part
    ComplexVector current;     // I_P + jI_Q at nominal voltage
    ComplexVector power;       // S_P + jS_Q

    ComplexVector impedance() const { return admittance.cwiseInverse(); }
};

struct BigLoad {
    int id = 0;
    int bus = 0;
    Connection connection = Connection::Wye;
    ComplexVector alpha;       // base current
    ComplexVector admittance;  // G_BIG + jB_BIG
};

struct Branch {
    int id = 0;
    int from = 0;
    int to = 0;
    bool in_service = true;
    ComplexMatrix series;    // n x n series admittance
    ComplexMatrix charging;  // n x n total shunt admittance, split half per end
    double rating = 0.0;
};

struct Transformer {
    int id = 0;
    int from = 0;
    int to = 0;
    bool in_service = true;
    ComplexMatrix series;
    ComplexMatrix charging;
    Vector tap;    // per phase turns ratio on the from side
    Vector shift;  // per phase, radians
    double tap_min = 0.5;
    double tap_max = 1.5;
    double tap_step = 0.0;  // zero disables discrete adjustment
    std::optional<int> controlled_bus;
    double v_target = 1.0;
    double v_band = 0.01;
    double rating = 0.0;
};

struct SwitchedBlocks {
    Complex block;  // admittance of one block, per phase
    int min_blocks = 0;
    int max_blocks = 0;
    int blocks_on = 0;
    double v_low = 0.95;
    double v_high = 1.05;
};

struct Shunt {
    int id = 0;
    int bus = 0;
    ComplexVector admittance;  // fixed part, per phase
    std::optional<SwitchedBlocks> switched;

    ComplexVector total_admittance() const;
};

struct Network {
    std::string name;
    PhaseDomain domain = PhaseDomain::PositiveSequence;
    Units units = Units::PerUnit;
    double base_mva = 100.0;

    std::vector<Bus> buses;
    std::vector<Generator> generators;
    std::vector<ZipLoad> zip_loads;
    std::vector<BigLoad> big_loads;
    std::vector<Branch> branches;
    std::vector<Transformer> transformers;
    std::vector<Shunt> shunts;

    int phases() const { return phase_count(domain); }
    int bus_count() const { return static_cast<int>(buses.size()); }

    /// Position of a bus id in `buses`; throws std::out_of_range for unknown ids.
    int bus_index(int id) const;
    bool has_bus(int id) const { return bus_lookup_.contains(id); }
    int island_count() const { return islands_; }

    /// Rebuilds the id index, island assignment and bus kinds. Call after any
    /// structural edit (outages, control switching).
    void finalize();

  private:
    std::unordered_map<int, int> bus_lookup_;
    int islands_ = 0;
};

struct ValidationError {
    enum class Kind {
        MissingSlack,
        MultipleSlack,
        UnknownBus,
        DuplicateId,
        UnreachableRemote,
        BadQLimits,
        BadVoltageSetpoint,
        PhaseMismatch,
        ZeroAdmittance,
        AsymmetricAdmittance,
        TapOutOfRange,
        ShiftOutOfRange,
        BadShuntBlocks,
        NonFinite,
        BadBase,
    };
    Kind kind;
    int device_id = 0;  // island index for MissingSlack/MultipleSlack
    std::string message;
};

const char* to_string(ValidationError::Kind kind);

/// Structural check of every type invariant. Empty result means the network
/// can be indexed by the solver.
std::vector<ValidationError> validate(const Network& network);

/// Thrown by consumers that require a valid network.
class InvalidNetwork : public std::runtime_error {
  public:
    explicit InvalidNetwork(std::vector<ValidationError> errors);
    const std::vector<ValidationError>& errors() const { return errors_; }

  private:
    std::vector<ValidationError> errors_;
};

// Per-unit conversion -------------------------------------------------------

struct PerUnitBase {
    double mva = 100.0;

    double power_to_pu(double mw) const { return mw / mva; }
    double power_from_pu(double pu) const { return pu * mva; }
    double impedance_base(double kv) const { return kv * kv / mva; }
    double impedance_to_pu(double ohm, double kv) const { return ohm / impedance_base(kv); }
    double admittance_to_pu(double siemens, double kv) const { return siemens * impedance_base(kv); }
    double admittance_from_pu(double pu, double kv) const { return pu / impedance_base(kv); }
};

/// Converts a network given in physical units (MW, MVAr, siemens for series
/// elements, MVA-at-nominal-voltage for load and shunt admittances) to
/// per-unit on its base. Throws std::invalid_argument on non-positive bases.
Network to_per_unit(const Network& network);
Network from_per_unit(const Network& network);

/// Same-sized helpers for building per-phase fields.
inline Vector uniform(int phases, double value) { return Vector::Constant(phases, value); }
inline ComplexVector uniform(int phases, Complex value) { return ComplexVector::Constant(phases, value); }

constexpr double kInfinity = std::numeric_limits<double>::infinity();

}  // namespace circuitflow
