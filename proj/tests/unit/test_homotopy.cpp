#include <doctest.h>

#include "circuitflow/homotopy.hpp"
#include "circuitflow/solver.hpp"
#include "fixtures.hpp"

using namespace circuitflow;

namespace {

StateVector flat_state(const Network& net) { return initialize_state(net, FlatStart{}); }

double max_difference(const StateVector& a, const StateVector& b) { return (a.voltage - b.voltage).cwiseAbs().maxCoeff(); }

Network three_phase_line() {
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

TEST_CASE("series admittance scaling") {
    Network net = fixtures::two_bus(0.01, 0.1, 0.5, 0.2);
    net.branches[0].series(0, 0) = {1.0, -10.0};
    CHECK(tx_transform(net, 1.0, 1000.0).branches[0].series(0, 0) == Complex(1001.0, -10010.0));

    const Network three = tx_transform(three_phase_line(), 0.5, 100.0);
    CHECK(three.branches[0].series(0, 0) == Complex(5.0, -20.0) * 51.0);
    CHECK(three.branches[0].series(1, 1) == Complex(5.0, -20.0) * 51.0);
    CHECK(three.branches[0].series(0, 1) == Complex(-1.0, 3.0));
    CHECK(three.branches[0].series(2, 1) == Complex(-1.0, 3.0));
}

TEST_CASE("taps, shifts, shunts and charging are relaxed at lambda one") {
    Network net = fixtures::load("case30_syn.net");
    const Network relaxed = tx_transform(net, 1.0, 1e4);
    for (const auto& tx : relaxed.transformers) {
        CHECK(tx.tap(0) == 1.0);
        CHECK(tx.shift(0) == 0.0);
    }
    for (const auto& sh : relaxed.shunts) CHECK(sh.total_admittance().isZero(0.0));
    for (const auto& br : relaxed.branches) CHECK(br.charging.isZero(0.0));
    const Network quarter = tx_transform(net, 0.25, 1e4);
    for (std::size_t i = 0; i < net.shunts.size(); ++i)
        CHECK(std::abs(quarter.shunts[i].admittance(0) - 0.75 * net.shunts[i].admittance(0)) < 1e-15);
}

TEST_CASE("endpoint transforms are bit-exact identities") {
    for (const auto& name : fixtures::all_cases()) {
        CAPTURE(name);
        const Network net = fixtures::load(name);
        for (double gamma : {1.0, 1e4, 1e8}) CHECK(fixtures::identical(tx_transform(net, 0.0, gamma), net));
        CHECK(fixtures::identical(power_transform(net, 1.0), net));
    }
}

TEST_CASE("power transform scales injections and keeps impedances") {
    Network net = fixtures::two_bus(0.01, 0.1, 0.8, 0.3);
    net.zip_loads[0].admittance(0) = {0.2, -0.1};
    const Network half = power_transform(net, 0.5);
    CHECK(half.zip_loads[0].power(0).real() == doctest::Approx(0.4));
    CHECK(half.zip_loads[0].admittance(0) == net.zip_loads[0].admittance(0));

    const Network zero = power_transform(net, 0.0);
    CHECK_FALSE(has_nonlinear_devices(zero));
    CHECK(has_nonlinear_devices(net));
}

TEST_CASE("virtual short paths") {
    CHECK(build_virtual_shorts(fixtures::load("case14.net")).empty());

    Network net = fixtures::load("case14.net");
    Generator g;
    g.id = 99;
    g.bus = 3;
    g.regulating = true;
    g.remote_bus = 7;
    g.p = uniform(1, 0.0);
    g.q = uniform(1, 0.0);
    g.q_min = uniform(1, -kInfinity);
    g.q_max = uniform(1, kInfinity);
    net.generators.push_back(g);
    net.generators.push_back(g);
    net.generators.back().id = 100;
    const auto paths = build_virtual_shorts(net);
    REQUIRE(paths.size() == 1);
    CHECK(paths[0].controlling_bus == 3);
    CHECK(paths[0].controlled_bus == 7);
    CHECK(paths[0].admittance_at(0.0) == Complex(0.0, 0.0));
    CHECK(paths[0].admittance_at(1.0) == paths[0].admittance);
}

TEST_CASE("homotopy and plain Newton agree on a small case") {
    const Network net = fixtures::load("case3_ring.net");
    NrOptions tight;
    tight.tol = 1e-11;
    const HomotopyResult plain = run_homotopy(net, HomotopyMethod::None, flat_state(net), tight);
    REQUIRE(plain.converged);
    CHECK(plain.steps == 0);
    for (auto method : {HomotopyMethod::TxStepping, HomotopyMethod::PowerStepping}) {
        const HomotopyResult h = run_homotopy(net, method, flat_state(net), tight);
        REQUIRE(h.converged);
        CHECK(h.steps > 1);
        CHECK(max_difference(h.state, plain.state) < 1e-8);
    }
}

TEST_CASE("the trivial Tx sub-problem sits near the set-point magnitudes") {
    for (const auto& name : fixtures::corpus()) {
        CAPTURE(name);
        const Network net = fixtures::load(name);
        NrEngine engine;
        const NrResult r = engine.solve(tx_transform(net, 1.0, 1e4), flat_state(net), {});
        REQUIRE(r.converged);
        CHECK(r.iterations <= 5);
        double lo = kInfinity, hi = 0.0;
        for (const auto& bus : net.buses)
            if (bus.v_set) {
                lo = std::min(lo, *bus.v_set);
                hi = std::max(hi, *bus.v_set);
            }
        for (int b = 0; b < net.bus_count(); ++b) {
            const double m = std::abs(r.state.v(b, 0));
            CHECK(m >= lo - 0.01);
            CHECK(m <= hi + 0.01);
        }
    }
}

TEST_CASE("accepted lambdas decrease and the final state is converged") {
    const Network net = fixtures::load("case14.net");
    for (auto method : {HomotopyMethod::TxStepping, HomotopyMethod::PowerStepping}) {
        const HomotopyResult h = run_homotopy(net, method, flat_state(net), {});
        REQUIRE(h.converged);
        double last = 2.0;
        for (const auto& row : h.lambda_trace) {
            if (!row.accepted) continue;
            CHECK(row.lambda < last);
            last = row.lambda;
        }
        CHECK(last == 0.0);
        CHECK(h.last_good_lambda == 0.0);
        CHECK(check_convergence(net, h.state, NrOptions{}.tol).converged);
    }
}

TEST_CASE("consecutive sub-problem solutions move in proportion to the step") {
    const Network net = fixtures::load("case14.net");
    const double bound = 5.0;  // pu per unit of lambda
    for (auto method : {HomotopyMethod::TxStepping, HomotopyMethod::PowerStepping}) {
        NrEngine engine;
        StateVector previous;
        double previous_lambda = 1.0;
        for (int k = 10; k >= 0; --k) {
            const double lambda = 0.1 * k;
            const Network sub = method == HomotopyMethod::TxStepping ? tx_transform(net, lambda, 1e4)
                                                                     : power_transform(net, 1.0 - lambda);
            const NrResult r = engine.solve(sub, k == 10 ? flat_state(net) : previous, {});
            REQUIRE(r.converged);
            if (k < 10) CHECK(max_difference(r.state, previous) <= bound * (previous_lambda - lambda));
            previous = r.state;
            previous_lambda = lambda;
        }
    }
}

TEST_CASE("power stepping rescues the stressed case") {
    const Network net = fixtures::load("case145_stressed.net");
    const HomotopyResult plain = run_homotopy(net, HomotopyMethod::None, flat_state(net), {});
    CHECK_FALSE(plain.converged);
    CHECK(plain.inner_iterations == 100);
    const HomotopyResult power = run_homotopy(net, HomotopyMethod::PowerStepping, flat_state(net), {});
    CHECK(power.converged);
}

TEST_CASE("step underflow reports the last good lambda") {
    // Far beyond the maximum transferable power: no solution at lambda = 0.
    const Network net = fixtures::two_bus(0.02, 0.2, 4.0, 2.0);
    HomotopySchedule schedule;
    schedule.min_step = 1e-3;
    const HomotopyResult h = run_homotopy(net, HomotopyMethod::PowerStepping, flat_state(net), {}, schedule);
    CHECK_FALSE(h.converged);
    CHECK(h.failure.find("underflow") != std::string::npos);
    CHECK(h.last_good_lambda > 0.0);
    CHECK(h.last_good_lambda < 1.0);
}
