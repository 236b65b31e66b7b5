"""Vector and scalar kernels on points in R^3.

Every kernel that takes points broadcasts over leading axes, so the same
code serves single frameworks of shape ``(3,)`` and batched simulations of
shape ``(R, 3)``.  Dot and cross products are written out component-wise:
results are then bitwise independent of batch size, which the simulator
relies on for reproducibility.
"""

import math

import numpy as np

from .errors import DegenerateFaceError, InvalidTriangleError, UnrealizableError

# relative threshold under which a determinant-like quantity counts as zero
ZERO_TOL = 1e-9


def dot(a, b):
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]


def cross(a, b):
    return np.stack(
        (
            a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1],
            a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2],
            a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0],
        ),
        axis=-1,
    )


def norm(a):
    return np.sqrt(dot(a, a))


def signed_volume(p1, p2, p3, p4):
    """Signed volume of the tetrahedron ``(p1, p2, p3, p4)``.

    Positive when 1, 2, 3 run counterclockwise as seen from vertex 4.
    """
    p1, p2, p3, p4 = (np.asarray(p, dtype=float) for p in (p1, p2, p3, p4))
    v = -dot(p1 - p4, cross(p2 - p4, p3 - p4)) / 6.0
    return float(v) if np.ndim(v) == 0 else v


def _squared_area_term(a2, b2, c2):
    return 2 * a2 * b2 + 2 * a2 * c2 + 2 * b2 * c2 - a2 * a2 - b2 * b2 - c2 * c2


def heron_area(d_ji, d_ki, d_kj):
    """Unsigned area of a triangle from its three side lengths."""
    if min(d_ji, d_ki, d_kj) < 0:
        raise InvalidTriangleError("side lengths must be non-negative")
    a2, b2, c2 = d_ji * d_ji, d_ki * d_ki, d_kj * d_kj
    rad = _squared_area_term(a2, b2, c2)
    scale = max(a2, b2, c2) ** 2
    if rad < 0:
        if rad < -ZERO_TOL * scale:
            raise InvalidTriangleError(
                f"lengths ({d_ji}, {d_ki}, {d_kj}) violate the triangle inequality"
            )
        rad = 0.0
    return 0.25 * math.sqrt(rad)


def cayley_menger_determinant(d_ji, d_ki, d_li, d_kj, d_lj, d_lk):
    """5x5 Cayley-Menger determinant of four points given pairwise distances."""
    s = [d * d for d in (d_ji, d_ki, d_li, d_kj, d_lj, d_lk)]
    m = np.array(
        [
            [0.0, 1.0, 1.0, 1.0, 1.0],
            [1.0, 0.0, s[0], s[1], s[2]],
            [1.0, s[0], 0.0, s[3], s[4]],
            [1.0, s[1], s[3], 0.0, s[5]],
            [1.0, s[2], s[4], s[5], 0.0],
        ]
    )
    return float(np.linalg.det(m))


def cayley_menger_volume(d_ji, d_ki, d_li, d_kj, d_lj, d_lk, sign=1):
    """Tetrahedron volume from its six edge lengths, carrying ``sign``.

    Raises UnrealizableError when the lengths cannot close up in 3D.
    """
    dists = (d_ji, d_ki, d_li, d_kj, d_lj, d_lk)
    if min(dists) < 0:
        raise UnrealizableError("distances must be non-negative")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    det = cayley_menger_determinant(*dists)
    scale = max(dists) ** 6
    if det < 0:
        if det < -ZERO_TOL * scale:
            raise UnrealizableError(
                f"distances {dists} are not realizable in 3D (CM determinant {det:.3g})"
            )
        det = 0.0
    return sign * math.sqrt(det / 288.0)


def cos_dihedral(theta_423, theta_123, theta_124):
    """Cosine of the dihedral angle at edge (1,2) from three face angles at vertex 2."""
    s1, s2 = math.sin(theta_123), math.sin(theta_124)
    if abs(s1) < ZERO_TOL or abs(s2) < ZERO_TOL:
        raise DegenerateFaceError("face angle with zero sine")
    c = (math.cos(theta_423) - math.cos(theta_123) * math.cos(theta_124)) / (s1 * s2)
    return min(1.0, max(-1.0, c))


def face_angle(pa, pb, pc):
    """Angle at ``pb`` between edges towards ``pa`` and ``pc``."""
    u = np.asarray(pa, float) - np.asarray(pb, float)
    v = np.asarray(pc, float) - np.asarray(pb, float)
    return math.atan2(float(norm(cross(u, v))), float(dot(u, v)))


def signed_dihedral(p1, p2, p3, p4):
    """Dihedral angle between faces 1-2-3 and 1-2-4, signed like the volume."""
    p1, p2, p3, p4 = (np.asarray(p, dtype=float) for p in (p1, p2, p3, p4))
    p21 = p1 - p2
    len21 = float(norm(p21))
    scale = max(len21, float(norm(p3 - p2)), float(norm(p4 - p2)))
    if len21 <= ZERO_TOL * max(scale, 1.0):
        raise DegenerateFaceError("vertices 1 and 2 coincide")
    area3 = float(norm(cross(p3 - p2, p21)))
    area4 = float(norm(cross(p4 - p2, p21)))
    if area3 <= ZERO_TOL * scale * scale or area4 <= ZERO_TOL * scale * scale:
        raise DegenerateFaceError("face 1-2-3 or 1-2-4 is degenerate")
    cos_a = cos_dihedral(face_angle(p4, p2, p3), face_angle(p1, p2, p3), face_angle(p1, p2, p4))
    vol = signed_volume(p1, p2, p3, p4)
    # height of vertex 4 over plane 1-2-3, carrying the volume's sign
    h = 3.0 * vol / (0.5 * area3)
    b = area4 / len21
    return math.atan2(h / b, cos_a)
