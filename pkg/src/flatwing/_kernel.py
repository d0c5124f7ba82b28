"""Compiled per-sample loop used by :class:`flatwing.gradients.Objective`.

Computes, for every quadrature sample, the weighted integrand sum and its
partials with respect to position, velocity, acceleration and jerk, plus the
quantities the feasibility check needs. Mirrors the vectorised functions in
``gradients.py``; the two are cross-checked in the tests.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _hinge(phi, power):
    if phi <= 0.0:
        return 0.0, 0.0
    d = power * phi ** (power - 1)
    return phi**power, d


@njit(cache=True)
def sample_pass(
    p, v, a, j, wq,
    centers, rad, rho, r_safe,
    box_c, box_h, box_lam,
    lam_e, lam_obs, power, g, v_eps,
    gp, gv, ga, gj,
    V_out, sg_out, loads_out, clear_out,
):  # fmt: skip
    """Returns ``(acc, tsum, status)``.

    ``acc``  = sum_k w_k sum_sigma lambda_sigma G_sigma
    ``tsum`` = sum_k w_k (gv.v + 2 ga.a + 3 gj.j)
    ``status`` is 0, or 1/2 for a velocity / vertical singularity.
    Box order: V, sin(gamma), n_x, n_y, n_z.
    """
    M = p.shape[0]
    n_obs = centers.shape[0]
    acc = 0.0
    tsum = 0.0
    for m in range(M):
        w = wq[m]
        px, py = p[m, 0], p[m, 1]
        vx, vy, vz = v[m, 0], v[m, 1], v[m, 2]
        ax, ay, az = a[m, 0], a[m, 1], a[m, 2]
        jx, jy, jz = j[m, 0], j[m, 1], j[m, 2]
        hh2 = vx * vx + vy * vy
        hh = math.sqrt(hh2)
        V2 = hh2 + vz * vz
        V = math.sqrt(V2)
        if V < v_eps:
            return acc, tsum, 1
        if hh < v_eps:
            return acc, tsum, 2
        gpx = 0.0
        gpy = 0.0
        gvx = 0.0
        gvy = 0.0
        gvz = 0.0
        gax = 0.0
        gay = 0.0
        gaz = 0.0

        # jerk
        acc += w * lam_e * (jx * jx + jy * jy + jz * jz)
        gjx, gjy, gjz = 2.0 * lam_e * jx, 2.0 * lam_e * jy, 2.0 * lam_e * jz

        # obstacles
        clear = np.inf
        for o in range(n_obs):
            dx = px - centers[o, 0]
            dy = py - centers[o, 1]
            d2 = dx * dx + dy * dy
            c = math.sqrt(d2) - (rad[o] + r_safe)
            if c < clear:
                clear = c
            phi = 1.0 - d2 / (rho[o] * rho[o])
            if phi > 0.0 and lam_obs != 0.0:
                G, dG = _hinge(phi, power)
                acc += w * lam_obs * G
                f = lam_obs * dG * (-2.0 / (rho[o] * rho[o]))
                gpx += f * dx
                gpy += f * dy
        clear_out[m] = clear

        # speed
        V_out[m] = V
        q = (V - box_c[0]) / box_h[0]
        phi = q * q - 1.0
        if phi > 0.0 and box_lam[0] != 0.0:
            G, dG = _hinge(phi, power)
            acc += w * box_lam[0] * G
            f = box_lam[0] * dG * 2.0 * (V - box_c[0]) / (box_h[0] * box_h[0]) / V
            gvx += f * vx
            gvy += f * vy
            gvz += f * vz

        # flight-path angle via sin(gamma) = -v_z / V
        r1x, r1y, r1z = vx / V, vy / V, vz / V
        sg = -r1z
        sg_out[m] = sg
        q = (sg - box_c[1]) / box_h[1]
        phi = q * q - 1.0
        if phi > 0.0 and box_lam[1] != 0.0:
            G, dG = _hinge(phi, power)
            acc += w * box_lam[1] * G
            f = box_lam[1] * dG * 2.0 * (sg - box_c[1]) / (box_h[1] * box_h[1])
            # d sg / dv = -(e3 - r1 r1_z) / V
            gvx += f * (r1x * r1z) / V
            gvy += f * (r1y * r1z) / V
            gvz += f * (-(1.0 - r1z * r1z)) / V

        ngx, ngy, ngz = ax / g, ay / g, az / g - 1.0

        # n_x = ng . r1
        nx = ngx * r1x + ngy * r1y + ngz * r1z
        loads_out[m, 0] = nx
        q = (nx - box_c[2]) / box_h[2]
        phi = q * q - 1.0
        if phi > 0.0 and box_lam[2] != 0.0:
            G, dG = _hinge(phi, power)
            acc += w * box_lam[2] * G
            f = box_lam[2] * dG * 2.0 * (nx - box_c[2]) / (box_h[2] * box_h[2])
            gvx += f * (ngx - nx * r1x) / V
            gvy += f * (ngy - nx * r1y) / V
            gvz += f * (ngz - nx * r1z) / V
            gax += f * r1x / g
            gay += f * r1y / g
            gaz += f * r1z / g

        # n_y = ng . r2, r2 = (-vy, vx, 0) / hh
        r2x, r2y = -vy / hh, vx / hh
        ny = ngx * r2x + ngy * r2y
        loads_out[m, 1] = ny
        q = (ny - box_c[3]) / box_h[3]
        phi = q * q - 1.0
        if phi > 0.0 and box_lam[3] != 0.0:
            G, dG = _hinge(phi, power)
            acc += w * box_lam[3] * G
            f = box_lam[3] * dG * 2.0 * (ny - box_c[3]) / (box_h[3] * box_h[3])
            ux = (ngx - ny * r2x) / hh
            uy = (ngy - ny * r2y) / hh
            gvx += f * uy
            gvy += f * (-ux)
            gax += f * r2x / g
            gay += f * r2y / g

        # n_z = -ng . r3, r3 = (-vx vz, -vy vz, V^2 - vz^2) / (V hh)
        nw3 = V * hh
        r3x, r3y, r3z = -vx * vz / nw3, -vy * vz / nw3, hh2 / nw3
        mz = ngx * r3x + ngy * r3y + ngz * r3z
        nz = -mz
        loads_out[m, 2] = nz
        q = (nz - box_c[4]) / box_h[4]
        phi = q * q - 1.0
        if phi > 0.0 and box_lam[4] != 0.0:
            G, dG = _hinge(phi, power)
            acc += w * box_lam[4] * G
            f = box_lam[4] * dG * 2.0 * (nz - box_c[4]) / (box_h[4] * box_h[4])
            ux = (ngx - mz * r3x) / nw3
            uy = (ngy - mz * r3y) / nw3
            uz = (ngz - mz * r3z) / nw3
            vu = vx * ux + vy * uy + vz * uz
            # d n_z / dv = -(2 v u_z - v_z u - e3 (v.u))
            gvx -= f * (2.0 * vx * uz - vz * ux)
            gvy -= f * (2.0 * vy * uz - vz * uy)
            gvz -= f * (2.0 * vz * uz - vz * uz - vu)
            gax -= f * r3x / g
            gay -= f * r3y / g
            gaz -= f * r3z / g

        gp[m, 0] = gpx
        gp[m, 1] = gpy
        gp[m, 2] = 0.0
        gv[m, 0] = gvx
        gv[m, 1] = gvy
        gv[m, 2] = gvz
        ga[m, 0] = gax
        ga[m, 1] = gay
        ga[m, 2] = gaz
        gj[m, 0] = gjx
        gj[m, 1] = gjy
        gj[m, 2] = gjz
        tsum += w * (
            gvx * vx + gvy * vy + gvz * vz
            + 2.0 * (gax * ax + gay * ay + gaz * az)
            + 3.0 * (gjx * jx + gjy * jy + gjz * jz)
        )
    return acc, tsum, 0


@njit(cache=True)
def coefficient_pullback(BT, gp, gv, ga, gj, wq, h, s, N, K, out):
    """``out[i] = sum_k h w_k (b_k gp + s b'_k gv + s^2 b''_k ga + s^3 b'''_k gj)``."""
    s2 = s * s
    s3 = s2 * s
    for i in range(N):
        for c in range(6):
            for d in range(3):
                out[6 * i + c, d] = 0.0
        for k in range(K):
            m = i * K + k
            wk = h * wq[m]
            for c in range(6):
                b0 = BT[c, k] * wk
                b1 = BT[c, K + k] * wk * s
                b2 = BT[c, 2 * K + k] * wk * s2
                b3 = BT[c, 3 * K + k] * wk * s3
                for d in range(3):
                    out[6 * i + c, d] += b0 * gp[m, d] + b1 * gv[m, d] + b2 * ga[m, d] + b3 * gj[m, d]
    return out


@njit(cache=True)
def max_violations(V, sg, loads, clearance, lo, hi, out):
    """Largest bound excess per family (V, sin(gamma), n_x, n_y, n_z, obstacle)."""
    for i in range(6):
        out[i] = 0.0
    for m in range(V.shape[0]):
        q0, q1, q2, q3, q4 = V[m], sg[m], loads[m, 0], loads[m, 1], loads[m, 2]
        for i, x in enumerate((q0, q1, q2, q3, q4)):
            e = max(lo[i] - x, x - hi[i])
            if e > out[i]:
                out[i] = e
    for m in range(clearance.shape[0]):
        if -clearance[m] > out[5]:
            out[5] = -clearance[m]
    return out
