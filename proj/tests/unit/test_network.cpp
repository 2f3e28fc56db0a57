#include <doctest.h>

#include <random>

#include "circuitflow/stamps.hpp"
#include "fixtures.hpp"

using namespace circuitflow;

namespace {

bool has_error(const std::vector<ValidationError>& errors, ValidationError::Kind kind, int id) {
    for (const auto& e : errors)
        if (e.kind == kind && e.device_id == id) return true;
    return false;
}

Network three_phase_pair() {
    Network net;
    net.domain = PhaseDomain::ThreePhase;
    Bus a;
    a.id = 1;
    a.slack = true;
    a.v_set = 1.0;
    Bus b;
    b.id = 2;
    net.buses = {a, b};
    Branch br;
    br.id = 1;
    br.from = 1;
    br.to = 2;
    br.series = ComplexMatrix::Constant(3, 3, Complex(-1.0, 3.0));
    br.series.diagonal().setConstant(Complex(5.0, -20.0));
    br.charging = ComplexMatrix::Zero(3, 3);
    net.branches = {br};
    net.finalize();
    return net;
}

}  // namespace

TEST_CASE("minimal two-bus network is valid") {
    const Network net = fixtures::two_bus(0.01, 0.1, 0.5, 0.2);
    CHECK(validate(net).empty());
    CHECK(net.bus_count() == 2);
    CHECK(net.island_count() == 1);
    CHECK(net.buses[0].kind == BusKind::Slack);
    CHECK(net.buses[1].kind == BusKind::PQ);
}

TEST_CASE("island without a slack bus is reported") {
    Network net = fixtures::two_bus(0.01, 0.1, 0.5, 0.2);
    net.branches[0].in_service = false;
    net.finalize();
    const auto errors = validate(net);
    REQUIRE(net.island_count() == 2);
    CHECK(has_error(errors, ValidationError::Kind::MissingSlack, net.buses[1].island));
}

TEST_CASE("unreachable remote regulation target is reported") {
    Network net = fixtures::two_bus(0.01, 0.1, 0.5, 0.2);
    Bus lonely;
    lonely.id = 3;
    lonely.slack = true;
    lonely.v_set = 1.0;
    net.buses.push_back(lonely);
    Generator g;
    g.id = 7;
    g.bus = 2;
    g.regulating = true;
    g.remote_bus = 3;
    g.p = uniform(1, 0.1);
    g.q = uniform(1, 0.0);
    g.q_min = uniform(1, -kInfinity);
    g.q_max = uniform(1, kInfinity);
    net.generators.push_back(g);
    net.buses[2].v_set = 1.0;
    net.finalize();
    CHECK(has_error(validate(net), ValidationError::Kind::UnreachableRemote, 7));
}

TEST_CASE("dangling bus references and duplicate ids are reported") {
    Network net = fixtures::two_bus(0.01, 0.1, 0.5, 0.2);
    net.zip_loads[0].bus = 99;
    net.buses[1].id = 1;
    net.finalize();
    const auto errors = validate(net);
    CHECK(has_error(errors, ValidationError::Kind::UnknownBus, 1));
    bool duplicate = false;
    for (const auto& e : errors) duplicate |= e.kind == ValidationError::Kind::DuplicateId;
    CHECK(duplicate);
}

TEST_CASE("inverted reactive limits are reported") {
    Network net = fixtures::load("case14.net");
    net.generators[1].q_min = uniform(1, 0.5);
    net.generators[1].q_max = uniform(1, -0.5);
    CHECK(has_error(validate(net), ValidationError::Kind::BadQLimits, net.generators[1].id));
}

TEST_CASE("transformer tap outside its range and excessive shift are reported") {
    Network net = fixtures::load("case14.net");
    REQUIRE(!net.transformers.empty());
    net.transformers[0].tap = uniform(1, 2.0);
    net.transformers[0].tap_max = 1.1;
    CHECK(has_error(validate(net), ValidationError::Kind::TapOutOfRange, net.transformers[0].id));
    net = fixtures::load("case14.net");
    net.transformers[0].shift = uniform(1, deg_to_rad(-180.0));
    CHECK(has_error(validate(net), ValidationError::Kind::ShiftOutOfRange, net.transformers[0].id));
}

TEST_CASE("three-phase branch matrices must be symmetric") {
    Network net = three_phase_pair();
    CHECK(validate(net).empty());
    net.branches[0].series(0, 1) += Complex(1e-9, 0.0);
    CHECK(has_error(validate(net), ValidationError::Kind::AsymmetricAdmittance, 1));
}

TEST_CASE("devices must carry exactly the network's phases") {
    Network net = three_phase_pair();
    ZipLoad load;
    load.id = 4;
    load.bus = 2;
    load.admittance = uniform(1, Complex{});
    load.current = uniform(1, Complex{});
    load.power = uniform(1, Complex(0.1, 0.0));
    net.zip_loads.push_back(load);
    CHECK(has_error(validate(net), ValidationError::Kind::PhaseMismatch, 4));
}

TEST_CASE("zero series admittance is reported") {
    Network net = fixtures::two_bus(0.01, 0.1, 0.5, 0.2);
    net.branches[0].series.setZero();
    CHECK(has_error(validate(net), ValidationError::Kind::ZeroAdmittance, 1));
}

TEST_CASE("a bus is PV exactly when a regulating generator targets it") {
    const Network net = fixtures::load("case14.net");
    for (const auto& bus : net.buses) {
        bool targeted = false;
        for (const auto& g : net.generators)
            targeted |= g.in_service && g.regulating && g.regulated_bus() == bus.id;
        if (bus.slack) CHECK(bus.kind == BusKind::Slack);
        else CHECK((bus.kind == BusKind::PV) == targeted);
    }
}

TEST_CASE("per-unit conversion of powers and impedances") {
    PerUnitBase base{100.0};
    CHECK(base.power_to_pu(100.0) == doctest::Approx(1.0));
    CHECK(base.power_to_pu(50.0) == doctest::Approx(0.5));
    CHECK(base.power_to_pu(10.0) == doctest::Approx(0.1));
    CHECK(base.impedance_to_pu(5.0, 138.0) == doctest::Approx(0.02626).epsilon(1e-4));

    Network net = fixtures::two_bus(0.01, 0.1, 0.0, 0.0);
    net.units = Units::Physical;
    net.base_mva = 100.0;
    for (auto& b : net.buses) b.base_kv = 138.0;
    net.zip_loads[0].power = uniform(1, Complex(50.0, 10.0));
    net.branches[0].series = ComplexMatrix::Constant(1, 1, 1.0 / Complex(5.0, 0.0));
    const Network pu = to_per_unit(net);
    CHECK(pu.units == Units::PerUnit);
    CHECK(pu.zip_loads[0].power(0).real() == doctest::Approx(0.5));
    CHECK(pu.zip_loads[0].power(0).imag() == doctest::Approx(0.1));
    CHECK((1.0 / pu.branches[0].series(0, 0)).real() == doctest::Approx(5.0 / (138.0 * 138.0 / 100.0)));
}

TEST_CASE("per-unit round trip is the identity") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int trial = 0; trial < 20; ++trial) {
        Network net = fixtures::load("case30_syn.net");
        net.base_mva = 10.0 + 90.0 * std::abs(u(rng));
        for (auto& b : net.buses) b.base_kv = 1.0 + 200.0 * std::abs(u(rng));
        for (auto& l : net.zip_loads) l.power(0) = {u(rng), u(rng)};
        for (auto& br : net.branches) br.series(0, 0) = {u(rng), u(rng) - 3.0};
        const Network back = to_per_unit(from_per_unit(net));
        for (std::size_t i = 0; i < net.zip_loads.size(); ++i)
            CHECK(std::abs(back.zip_loads[i].power(0) - net.zip_loads[i].power(0)) < 1e-12);
        for (std::size_t i = 0; i < net.branches.size(); ++i)
            CHECK(std::abs(back.branches[i].series(0, 0) - net.branches[i].series(0, 0)) <
                  1e-12 * std::abs(net.branches[i].series(0, 0)));
        for (std::size_t i = 0; i < net.generators.size(); ++i)
            CHECK(std::abs(back.generators[i].p(0) - net.generators[i].p(0)) < 1e-12);
    }
}

TEST_CASE("non-positive bases are rejected") {
    Network net = fixtures::two_bus(0.01, 0.1, 0.5, 0.2);
    net.units = Units::Physical;
    net.base_mva = 0.0;
    CHECK_THROWS_AS(to_per_unit(net), std::invalid_argument);
    net.base_mva = 100.0;
    net.buses[1].base_kv = -1.0;
    CHECK_THROWS_AS(to_per_unit(net), std::invalid_argument);
}

TEST_CASE("every valid shipped network can be indexed and stamped") {
    for (const auto& name : fixtures::all_cases()) {
        CAPTURE(name);
        const Network net = fixtures::load(name);
        REQUIRE(validate(net).empty());
        const IndexMap index(net);
        StateVector flat(net.bus_count(), net.phases(), static_cast<int>(net.generators.size()));
        for (int b = 0; b < net.bus_count(); ++b)
            for (int p = 0; p < net.phases(); ++p) flat.v(b, p) = std::polar(1.0, phase_offset(net.domain, p));
        const Stamp stamp = stamp_network(net, index, index.pack(flat));
        for (const auto& t : stamp.jacobian) {
            CHECK(t.row() < index.dimension());
            CHECK(t.col() < index.dimension());
        }
    }
}
