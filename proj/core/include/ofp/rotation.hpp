#pragma once

#include <Eigen/Core>

namespace ofp {

/// Rotation exp([v]x) about v by angle |v| (Rodrigues form).
Eigen::Matrix3d rotation_matrix(const Eigen::Vector3d& v);

/// Rotation together with its partial derivatives with respect to v.x and v.y.
struct RotationJacobian {
    Eigen::Matrix3d r;
    Eigen::Matrix3d dr_dx;
    Eigen::Matrix3d dr_dy;
};

RotationJacobian rotation_with_jacobian(const Eigen::Vector3d& v);

/// Cross-product matrix, [v]x w == v.cross(w).
Eigen::Matrix3d skew(const Eigen::Vector3d& v);

}  // namespace ofp
