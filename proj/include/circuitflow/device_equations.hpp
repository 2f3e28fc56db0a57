#pragma once

// Current-voltage relations of the equivalent-circuit device models, in
// rectangular coordinates. Currents are the currents drawn by the device
// (flowing from the terminal into the device); a generator's injection into
// the network is the negative of the value computed here.

#include <cmath>
#include <complex>

#include <Eigen/Core>

#include "circuitflow/types.hpp"

namespace circuitflow {

/// Current of a constant complex power P + jQ at terminal voltage V,
/// I = conj((P + jQ) / V). This is the PV generator relation and the
/// constant-power part of the ZIP load.
template <typename Scalar>
std::complex<Scalar> constant_power_current(std::complex<Scalar> v, Scalar p, Scalar q) {
    const Scalar d = v.real() * v.real() + v.imag() * v.imag();
    return {(p * v.real() + q * v.imag()) / d, (p * v.imag() - q * v.real()) / d};
}

/// Power-factor angle of the constant-current part. atan2 reduces to the
/// arctangent of I_Q/I_P for I_P > 0 and gives sign(I_Q)*90 degrees at I_P = 0.
template <typename Scalar>
Scalar current_pf_angle(Scalar ip, Scalar iq) {
    using std::atan2;
    return atan2(iq, ip);
}

/// Constant-current part: magnitude |I_P + jI_Q| at angle (delta - I_pf).
template <typename Scalar>
std::complex<Scalar> constant_current_current(std::complex<Scalar> v, Scalar ip, Scalar iq) {
    using std::atan2;
    using std::cos;
    using std::sin;
    using std::sqrt;
    const Scalar magnitude = sqrt(ip * ip + iq * iq);
    if (magnitude == Scalar(0)) return {Scalar(0), Scalar(0)};
    const Scalar angle = atan2(v.imag(), v.real()) - current_pf_angle(ip, iq);
    return {magnitude * cos(angle), magnitude * sin(angle)};
}

template <typename Scalar>
std::complex<Scalar> zip_current(std::complex<Scalar> v, std::complex<Scalar> admittance,
                                 std::complex<Scalar> current, std::complex<Scalar> power) {
    return admittance * v + constant_current_current(v, current.real(), current.imag()) +
           constant_power_current(v, power.real(), power.imag());
}

template <typename Scalar>
std::complex<Scalar> big_current(std::complex<Scalar> v, std::complex<Scalar> alpha,
                                 std::complex<Scalar> admittance) {
    return alpha + admittance * v;
}

/// First-order expansion of a device current around one iterate:
/// I(V) ~ current + dv * (V - V_k) [+ dq * (Q - Q_k)], in (real, imag) rows.
struct Linearization {
    Complex current{0.0, 0.0};
    Eigen::Matrix2d dv = Eigen::Matrix2d::Zero();
    Eigen::Vector2d dq = Eigen::Vector2d::Zero();
};

inline Eigen::Matrix2d admittance_block(Complex y) {
    Eigen::Matrix2d m;
    m << y.real(), -y.imag(), y.imag(), y.real();
    return m;
}

inline Linearization linearize_constant_power(Complex v, double p, double q) {
    const double d = std::norm(v);
    Linearization lin;
    lin.current = constant_power_current(v, p, q);
    const double ir = lin.current.real();
    const double ii = lin.current.imag();
    lin.dv << p / d - 2.0 * v.real() * ir / d, q / d - 2.0 * v.imag() * ir / d,
        -q / d - 2.0 * v.real() * ii / d, p / d - 2.0 * v.imag() * ii / d;
    lin.dq << v.imag() / d, -v.real() / d;
    return lin;
}

inline Linearization linearize_constant_current(Complex v, double ip, double iq) {
    const double d = std::norm(v);
    Linearization lin;
    lin.current = constant_current_current(v, ip, iq);
    const double ir = lin.current.real();
    const double ii = lin.current.imag();
    lin.dv << ii * v.imag() / d, -ii * v.real() / d, -ir * v.imag() / d, ir * v.real() / d;
    return lin;
}

/// PV generator current (P, Q) at V with the derivative with respect to Q.
inline Linearization linearize_pv_generator(Complex v, double p, double q) { return linearize_constant_power(v, p, q); }

/// Nonlinear part of the ZIP load (constant current plus constant power).
inline Linearization linearize_zip_nonlinear(Complex v, Complex current, Complex power) {
    Linearization lin = linearize_constant_power(v, power.real(), power.imag());
    const Linearization ci = linearize_constant_current(v, current.real(), current.imag());
    lin.current += ci.current;
    lin.dv += ci.dv;
    lin.dq.setZero();
    return lin;
}

/// Inverse of the generator relation: the complex power that draws current
/// I at voltage V, S = V conj(I).
inline Complex generator_power_from_current(Complex v, Complex i) { return v * std::conj(i); }

}  // namespace circuitflow
