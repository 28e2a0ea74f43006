#include "ofp/rotation.hpp"

#include <cmath>

namespace ofp {

namespace {

// Below this angle the Rodrigues coefficients are evaluated by their Taylor
// series; the direct forms lose accuracy to cancellation.
constexpr double kSeriesThreshold = 1e-2;

struct RodriguesCoefficients {
    double a;   // sin(phi)/phi
    double b;   // (1 - cos(phi))/phi^2
    double da;  // a'(phi)/phi
    double db;  // b'(phi)/phi
};

RodriguesCoefficients coefficients(double phi) {
    const double p2 = phi * phi;
    if (phi < kSeriesThreshold) {
        const double p4 = p2 * p2;
        return {1.0 - p2 / 6.0 + p4 / 120.0, 0.5 - p2 / 24.0 + p4 / 720.0,
                -1.0 / 3.0 + p2 / 30.0 - p4 / 840.0, -1.0 / 12.0 + p2 / 180.0 - p4 / 6720.0};
    }
    const double s = std::sin(phi);
    const double c = std::cos(phi);
    return {s / phi, (1.0 - c) / p2, (phi * c - s) / (p2 * phi),
            (phi * s - 2.0 * (1.0 - c)) / (p2 * p2)};
}

}  // namespace

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
    Eigen::Matrix3d k;
    k << 0.0, -v.z(), v.y(),  //
        v.z(), 0.0, -v.x(),   //
        -v.y(), v.x(), 0.0;
    return k;
}

Eigen::Matrix3d rotation_matrix(const Eigen::Vector3d& v) {
    const auto c = coefficients(v.norm());
    const Eigen::Matrix3d k = skew(v);
    return Eigen::Matrix3d::Identity() + c.a * k + c.b * (k * k);
}

RotationJacobian rotation_with_jacobian(const Eigen::Vector3d& v) {
    const auto c = coefficients(v.norm());
    const Eigen::Matrix3d k = skew(v);
    const Eigen::Matrix3d k2 = k * k;

    RotationJacobian out;
    out.r = Eigen::Matrix3d::Identity() + c.a * k + c.b * k2;

    auto partial = [&](int axis) {
        const Eigen::Matrix3d e = skew(Eigen::Vector3d::Unit(axis));
        return Eigen::Matrix3d(c.da * v[axis] * k + c.a * e + c.db * v[axis] * k2 +
                               c.b * (e * k + k * e));
    };
    out.dr_dx = partial(0);
    out.dr_dy = partial(1);
    return out;
}

}  // namespace ofp
