"""Electrostatic density system on a 3D bin grid.

Movable objects are cuboid charges (dynamic planar footprint, depth half the
region).  The density map feeds a spectral Poisson solve under Neumann walls;
the resulting potential is the density penalty and the field its spreading
force.

Accumulation is adaptive: standard cells and fillers scatter directly into the
few bins they overlap, while macros are decomposed into 8 signed corner stamps
whose 3D prefix sum reproduces the exact overlap volume per bin (at most 8
nonzero entries per corner).  The backward pass mirrors this with suffix sums
of the field maps, so both phases run in O(bins + macros).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from .model import partition_from_z, rotated_dims


class DensityGrid:
    """Uniform Nx x Ny x Nz bin grid over [0,dx] x [0,dy] x [0,dz].

    The z-bin size is the mean planar bin extent, d_b = (w_b + h_b)/2, and the
    region depth follows as dz = Nz * d_b.
    """

    def __init__(self, dx, dy, nx, ny, nz):
        self.dx = float(dx)
        self.dy = float(dy)
        self.nx, self.ny, self.nz = int(nx), int(ny), int(nz)
        self.wb = self.dx / self.nx
        self.hb = self.dy / self.ny
        self.db = (self.wb + self.hb) / 2
        self.dz = self.nz * self.db
        self.shape = (self.nx, self.ny, self.nz)
        self.bin_vol = self.wb * self.hb * self.db
        wx = np.pi * np.arange(self.nx) / self.dx
        wy = np.pi * np.arange(self.ny) / self.dy
        wz = np.pi * np.arange(self.nz) / self.dz
        self.omega = (wx, wy, wz)
        lam = (
            wx[:, None, None] ** 2 + wy[None, :, None] ** 2 + wz[None, None, :] ** 2
        )
        with np.errstate(divide="ignore"):
            self.inv_lam = np.where(lam > 0, 1.0 / np.where(lam > 0, lam, 1.0), 0.0)

    @property
    def extents(self):
        return self.wb, self.hb, self.db


@dataclass
class ChargeCloud:
    """Struct-of-arrays view of every movable charge (instances + fillers)."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    w: np.ndarray
    h: np.ndarray
    dep: np.ndarray
    weight: np.ndarray
    is_macro: np.ndarray

    @property
    def volume(self):
        return self.w * self.h * self.dep

    @property
    def charge(self):
        return self.weight * self.volume

    def subset(self, mask):
        return ChargeCloud(
            self.x[mask], self.y[mask], self.z[mask], self.w[mask], self.h[mask],
            self.dep[mask], self.weight[mask], self.is_macro[mask],
        )


@dataclass
class FillerSet:
    """Dummy charges enforcing per-die utilization; depth dz/2, z pinned."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    die: np.ndarray
    w: np.ndarray
    h: np.ndarray
    dep: float

    @property
    def count(self):
        return len(self.x)

    def total_volume(self, die):
        m = self.die == die
        return float((self.w[m] * self.h[m]).sum() * self.dep)


def build_fillers(die_area_wh, dz, u_top, u_bot, cell_area_hint, rng):
    """Fillers sized near the typical cell footprint whose total volume is
    exactly (1/2) dx dy dz (1 - u) per die, pinned to z = dz/4 and 3dz/4."""
    dx, dy = die_area_wh
    xs, ys, zs, dies, ws, hs = [], [], [], [], [], []
    for die, u in ((0, u_bot), (1, u_top)):
        area = dx * dy * (1.0 - u)
        if area <= 0:
            continue
        side_hint = max(np.sqrt(cell_area_hint), 1e-9)
        count = int(np.clip(round(area / side_hint**2), 1, 20000))
        side = np.sqrt(area / count)
        xs.append(rng.uniform(side / 2, dx - side / 2, count))
        ys.append(rng.uniform(side / 2, dy - side / 2, count))
        zs.append(np.full(count, dz / 4 if die == 0 else 3 * dz / 4))
        dies.append(np.full(count, die, dtype=np.int8))
        ws.append(np.full(count, side))
        hs.append(np.full(count, side))
    if not xs:
        empty = np.zeros(0)
        return FillerSet(empty, empty, empty, np.zeros(0, np.int8), empty, empty, dz / 2)
    return FillerSet(
        np.concatenate(xs), np.concatenate(ys), np.concatenate(zs),
        np.concatenate(dies), np.concatenate(ws), np.concatenate(hs), dz / 2,
    )


def dynamic_size(w_top, h_top, w_bot, h_bot, is_macro, z, dz):
    """Footprint as a function of depth.

    Cells switch at the midplane; macros blend linearly between the two die
    footprints over z in [dz/4, 3dz/4] (z clamped into that range).
    """
    z = np.clip(np.asarray(z, float), dz / 4, 3 * dz / 4)
    delta = partition_from_z(z, dz).astype(float)
    w = np.where(delta == 1, w_top, w_bot)
    h = np.where(delta == 1, h_top, h_bot)
    t = 2 * z / dz - 0.5  # 0 at the bottom plane, 1 at the top plane
    wm = t * w_top + (1 - t) * w_bot
    hm = t * h_top + (1 - t) * h_bot
    return np.where(is_macro, wm, w), np.where(is_macro, hm, h)


# ---------------------------------------------------------------------------
# accumulation
# ---------------------------------------------------------------------------


def _axis_ranges(lo, hi, step, nbins):
    i0 = np.clip(np.floor(lo / step).astype(np.int64), 0, nbins - 1)
    i1 = np.clip(np.ceil(hi / step).astype(np.int64) - 1, 0, nbins - 1)
    i1 = np.maximum(i1, i0)
    return i0, i1


def _clipped_boxes(grid, cloud):
    xlo = np.clip(cloud.x - cloud.w / 2, 0, grid.dx)
    xhi = np.clip(cloud.x + cloud.w / 2, 0, grid.dx)
    ylo = np.clip(cloud.y - cloud.h / 2, 0, grid.dy)
    yhi = np.clip(cloud.y + cloud.h / 2, 0, grid.dy)
    zlo = np.clip(cloud.z - cloud.dep / 2, 0, grid.dz)
    zhi = np.clip(cloud.z + cloud.dep / 2, 0, grid.dz)
    return xlo, xhi, ylo, yhi, zlo, zhi


def _overlap_weights(lo, hi, idx, step):
    return np.clip(np.minimum(hi, (idx + 1) * step) - np.maximum(lo, idx * step), 0, None)


def _direct_terms(grid, cloud):
    """Yield (flat bin index, overlap volume) per offset triple, vectorized
    over objects.  Every overlapped bin of every object appears exactly once."""
    xlo, xhi, ylo, yhi, zlo, zhi = _clipped_boxes(grid, cloud)
    ix0, ix1 = _axis_ranges(xlo, xhi, grid.wb, grid.nx)
    iy0, iy1 = _axis_ranges(ylo, yhi, grid.hb, grid.ny)
    iz0, iz1 = _axis_ranges(zlo, zhi, grid.db, grid.nz)
    for ox in range(int((ix1 - ix0).max()) + 1 if len(ix0) else 0):
        ix = np.minimum(ix0 + ox, ix1)
        wx = np.where(ix0 + ox <= ix1, _overlap_weights(xlo, xhi, ix, grid.wb), 0.0)
        for oy in range(int((iy1 - iy0).max()) + 1):
            iy = np.minimum(iy0 + oy, iy1)
            wy = np.where(iy0 + oy <= iy1, _overlap_weights(ylo, yhi, iy, grid.hb), 0.0)
            wxy = wx * wy
            for oz in range(int((iz1 - iz0).max()) + 1):
                iz = np.minimum(iz0 + oz, iz1)
                wz = np.where(
                    iz0 + oz <= iz1, _overlap_weights(zlo, zhi, iz, grid.db), 0.0
                )
                flat = (ix * grid.ny + iy) * grid.nz + iz
                yield flat, wxy * wz


def direct_density(grid, cloud):
    """Per-instance bin traversal: rho contribution of the given charges."""
    rho = np.zeros(grid.nx * grid.ny * grid.nz)
    for flat, vol in _direct_terms(grid, cloud):
        rho += np.bincount(flat, weights=cloud.weight * vol, minlength=rho.size)
    return rho.reshape(grid.shape) / grid.bin_vol


def prefix_sum_3d(a):
    """Inclusive prefix sum along x, then y, then z."""
    return np.cumsum(np.cumsum(np.cumsum(a, axis=0), axis=1), axis=2)


def suffix_sum_3d(a):
    """Adjoint of prefix_sum_3d: inclusive sums toward smaller indices."""
    out = a
    for axis in range(3):
        out = np.flip(np.cumsum(np.flip(out, axis), axis=axis), axis)
    return out


def corner_map(corner, grid):
    """Sparse stamp of one cuboid corner: A[i,j,k] = g(i-xh) g(j-yh) g(k-zh)
    with g(a) = max(1-|a|, 0) on normalized coordinates; at most 8 entries."""
    xh = corner[0] / grid.wb
    yh = corner[1] / grid.hb
    zh = corner[2] / grid.db
    idx = []
    vals = []
    for base, n in ((xh, grid.nx), (yh, grid.ny), (zh, grid.nz)):
        i0 = int(np.floor(base))
        ax = [(i0, 1.0 - (base - i0)), (i0 + 1, base - i0)]
        idx.append([(i, v) for i, v in ax if 0 <= i < n and v != 0.0])
        vals.append(None)
    out_idx = []
    out_val = []
    for i, vi in idx[0]:
        for j, vj in idx[1]:
            for k, vk in idx[2]:
                out_idx.append((i, j, k))
                out_val.append(vi * vj * vk)
    return out_idx, out_val


def _corner_stamps(grid, xs, ys, zs, weights):
    """Scatter weighted corner stamps for arrays of corners into a dense map."""
    a = np.zeros(grid.shape)
    xh = xs / grid.wb
    yh = ys / grid.hb
    zh = zs / grid.db
    i0 = np.floor(xh).astype(np.int64)
    j0 = np.floor(yh).astype(np.int64)
    k0 = np.floor(zh).astype(np.int64)
    fx, fy, fz = xh - i0, yh - j0, zh - k0
    for bx in (0, 1):
        gi = i0 + bx
        gx = fx if bx else 1.0 - fx
        okx = (gi >= 0) & (gi < grid.nx)
        for by in (0, 1):
            gj = j0 + by
            gy = fy if by else 1.0 - fy
            oky = okx & (gj >= 0) & (gj < grid.ny)
            for bz in (0, 1):
                gk = k0 + bz
                gz = fz if bz else 1.0 - fz
                ok = oky & (gk >= 0) & (gk < grid.nz)
                if not ok.any():
                    continue
                np.add.at(
                    a,
                    (gi[ok], gj[ok], gk[ok]),
                    (weights * gx * gy * gz)[ok],
                )
    return a


def _macro_corner_field(grid, cloud):
    """Signed 8-corner stamp map for all macros (before the prefix sum)."""
    xs, ys, zs, ws = [], [], [], []
    for sx in (-1.0, 1.0):
        for sy in (-1.0, 1.0):
            for sz in (-1.0, 1.0):
                xs.append(np.clip(cloud.x + sx * cloud.w / 2, 0, grid.dx))
                ys.append(np.clip(cloud.y + sy * cloud.h / 2, 0, grid.dy))
                zs.append(np.clip(cloud.z + sz * cloud.dep / 2, 0, grid.dz))
                ws.append(np.full(len(cloud.x), -sx * sy * sz) * cloud.weight)
    return _corner_stamps(
        grid, np.concatenate(xs), np.concatenate(ys), np.concatenate(zs),
        np.concatenate(ws),
    )


def macro_prefix_density(grid, cloud):
    """Macro density via signed corner stamps + one 3D prefix sum.

    Equals the brute-force overlap accumulation; O(bins + macros).
    """
    if len(cloud.x) == 0:
        return np.zeros(grid.shape)
    return prefix_sum_3d(_macro_corner_field(grid, cloud))


def accumulate_density(grid, cloud):
    """Full density map: direct traversal for cells/fillers, corner stamps +
    prefix sum for macros."""
    rho = np.zeros(grid.shape)
    small = cloud.subset(~cloud.is_macro)
    if len(small.x):
        rho += direct_density(grid, small)
    big = cloud.subset(cloud.is_macro)
    if len(big.x):
        rho += macro_prefix_density(grid, big)
    return rho


# ---------------------------------------------------------------------------
# spectral Poisson solve
# ---------------------------------------------------------------------------


def solve_potential(rho, grid):
    """Solve lap(phi) = -(rho - mean) with zero-flux walls via cosine
    transforms; the DC coefficient is dropped to enforce integral(phi) = 0.

    Returns (phi map, raw DCT-II coefficient array of rho).
    """
    coef = sfft.dctn(rho, type=2)
    pot = coef * grid.inv_lam
    phi = sfft.idctn(pot, type=2)
    return phi, coef


def _true_coefficients(coef, grid):
    a = coef / (grid.nx * grid.ny * grid.nz)
    a[0, :, :] /= 2
    a[:, 0, :] /= 2
    a[:, :, 0] /= 2
    return a


def _eval_cos_axis(c, axis):
    d = c.copy()
    sl = [slice(None)] * 3
    sl[axis] = slice(1, None)
    d[tuple(sl)] /= 2
    return sfft.dct(d, type=3, axis=axis)


def _eval_sin_axis(c, axis):
    d = np.zeros_like(c)
    head = [slice(None)] * 3
    tail = [slice(None)] * 3
    head[axis] = slice(0, c.shape[axis] - 1)
    tail[axis] = slice(1, None)
    d[tuple(head)] = c[tuple(tail)] / 2
    return sfft.dst(d, type=3, axis=axis)


def electric_field(coef, grid):
    """E = -grad(phi) evaluated spectrally from the density coefficients."""
    a = _true_coefficients(coef.copy(), grid)
    wx, wy, wz = grid.omega
    base = a * grid.inv_lam
    ex = base * wx[:, None, None]
    ey = base * wy[None, :, None]
    ez = base * wz[None, None, :]
    ex = _eval_cos_axis(_eval_cos_axis(_eval_sin_axis(ex, 0), 1), 2)
    ey = _eval_cos_axis(_eval_cos_axis(_eval_sin_axis(ey, 1), 0), 2)
    ez = _eval_cos_axis(_eval_cos_axis(_eval_sin_axis(ez, 2), 0), 1)
    return ex, ey, ez


# ---------------------------------------------------------------------------
# energy, forces, overflow
# ---------------------------------------------------------------------------


def _direct_average(grid, cloud, maps):
    """Overlap-weighted average of each map over each object's cuboid."""
    out = [np.zeros(len(cloud.x)) for _ in maps]
    total = np.zeros(len(cloud.x))
    flats = [m.reshape(-1) for m in maps]
    for flat, vol in _direct_terms(grid, cloud):
        total += vol
        for acc, m in zip(out, flats):
            acc += m[flat] * vol
    total = np.maximum(total, 1e-300)
    return [acc / total for acc in out]


def _axis_face_terms(grid, lo, hi, step, nbins):
    """Derivative of the per-bin overlap length w.r.t. the center coordinate:
    +1 in the bin holding the leading face, -1 at the trailing face."""
    fi_hi = np.clip(np.floor(hi / step).astype(np.int64), 0, nbins - 1)
    fi_lo = np.clip(np.floor(lo / step).astype(np.int64), 0, nbins - 1)
    return fi_lo, fi_hi


def _direct_face_grad(grid, cloud, phi):
    """d/d(center) of sum_b phi_b * vol(D cap b), via the two face columns."""
    n = len(cloud.x)
    xlo, xhi, ylo, yhi, zlo, zhi = _clipped_boxes(grid, cloud)
    flat = phi.reshape(-1)
    out = np.zeros((n, 3))
    axes = (
        (0, xlo, xhi, grid.wb, grid.nx),
        (1, ylo, yhi, grid.hb, grid.ny),
        (2, zlo, zhi, grid.db, grid.nz),
    )
    ranges = {
        0: _axis_ranges(xlo, xhi, grid.wb, grid.nx),
        1: _axis_ranges(ylo, yhi, grid.hb, grid.ny),
        2: _axis_ranges(zlo, zhi, grid.db, grid.nz),
    }
    bounds = {0: (xlo, xhi, grid.wb), 1: (ylo, yhi, grid.hb), 2: (zlo, zhi, grid.db)}
    for axis, lo, hi, step, nbins in axes:
        fi_lo, fi_hi = _axis_face_terms(grid, lo, hi, step, nbins)
        o1, o2 = [a for a in (0, 1, 2) if a != axis]
        (l1, h1, s1), (l2, h2, s2) = bounds[o1], bounds[o2]
        i10, i11 = ranges[o1]
        i20, i21 = ranges[o2]
        acc = np.zeros(n)
        for d1 in range(int((i11 - i10).max(initial=-1)) + 1):
            b1 = np.minimum(i10 + d1, i11)
            w1 = np.where(i10 + d1 <= i11, _overlap_weights(l1, h1, b1, s1), 0.0)
            for d2 in range(int((i21 - i20).max(initial=-1)) + 1):
                b2 = np.minimum(i20 + d2, i21)
                w2 = np.where(i20 + d2 <= i21, _overlap_weights(l2, h2, b2, s2), 0.0)
                w12 = w1 * w2
                idx = [None, None, None]
                idx[o1], idx[o2] = b1, b2
                idx[axis] = fi_hi
                fhi = (idx[0] * grid.ny + idx[1]) * grid.nz + idx[2]
                idx[axis] = fi_lo
                flo = (idx[0] * grid.ny + idx[1]) * grid.nz + idx[2]
                acc += (flat[fhi] - flat[flo]) * w12
        out[:, axis] = acc
    return out


def _stamp_face_grad(grid, cloud, phi_suffix):
    """Macro version of _direct_face_grad using the suffix-summed potential:
    per corner the interpolation stamp is differentiated along the gradient
    axis (a +-1/step pair) and kept as g-pairs on the other axes."""
    n = len(cloud.x)
    out = np.zeros((n, 3))
    steps = (grid.wb, grid.hb, grid.db)
    nbins = (grid.nx, grid.ny, grid.nz)
    extents = (grid.dx, grid.dy, grid.dz)
    half = (cloud.w / 2, cloud.h / 2, cloud.dep / 2)
    centers = (cloud.x, cloud.y, cloud.z)
    for axis in range(3):
        acc = np.zeros(n)
        for sx in (-1.0, 1.0):
            for sy in (-1.0, 1.0):
                for sz in (-1.0, 1.0):
                    sign = -sx * sy * sz
                    sigma = (sx, sy, sz)
                    coords = [
                        np.clip(centers[a] + sigma[a] * half[a], 0, extents[a])
                        for a in range(3)
                    ]
                    stamps = []
                    for a in range(3):
                        base = coords[a] / steps[a]
                        i0 = np.floor(base).astype(np.int64)
                        frac = base - i0
                        if a == axis:
                            # corners translate rigidly with the center, so
                            # d(corner)/d(center) = 1 for every corner
                            pair = [(i0, -1.0 / steps[a]),
                                    (i0 + 1, 1.0 / steps[a])]
                        else:
                            pair = [(i0, 1.0 - frac), (i0 + 1, frac)]
                        stamps.append(pair)
                    for g0, v0 in stamps[0]:
                        ok0 = (g0 >= 0) & (g0 < nbins[0])
                        for g1, v1 in stamps[1]:
                            ok1 = ok0 & (g1 >= 0) & (g1 < nbins[1])
                            for g2, v2 in stamps[2]:
                                ok = ok1 & (g2 >= 0) & (g2 < nbins[2])
                                if not ok.any():
                                    continue
                                val = np.zeros(n)
                                val[ok] = phi_suffix[g0[ok], g1[ok], g2[ok]]
                                acc += sign * val * (v0 * v1 * np.asarray(v2))
        out[:, axis] = acc * grid.bin_vol
    return out


def _macro_phi_average(grid, cloud, phi_suffix):
    """Overlap-weighted potential average via signed corner stamps."""
    n = len(cloud.x)
    acc = np.zeros(n)
    for sx in (-1.0, 1.0):
        for sy in (-1.0, 1.0):
            for sz in (-1.0, 1.0):
                cx = np.clip(cloud.x + sx * cloud.w / 2, 0, grid.dx)
                cy = np.clip(cloud.y + sy * cloud.h / 2, 0, grid.dy)
                cz = np.clip(cloud.z + sz * cloud.dep / 2, 0, grid.dz)
                sign = -sx * sy * sz
                acc += sign * _corner_dot(grid, phi_suffix, cx, cy, cz)
    vol = np.maximum(cloud.volume, 1e-300)
    return acc * grid.bin_vol / vol


def _corner_dot(grid, smap, xs, ys, zs):
    """<corner stamp, suffix-summed map> for arrays of corners."""
    xh, yh, zh = xs / grid.wb, ys / grid.hb, zs / grid.db
    i0 = np.floor(xh).astype(np.int64)
    j0 = np.floor(yh).astype(np.int64)
    k0 = np.floor(zh).astype(np.int64)
    fx, fy, fz = xh - i0, yh - j0, zh - k0
    acc = np.zeros(len(xs))
    for bx in (0, 1):
        gi = i0 + bx
        gx = fx if bx else 1.0 - fx
        okx = (gi >= 0) & (gi < grid.nx)
        for by in (0, 1):
            gj = j0 + by
            gy = fy if by else 1.0 - fy
            oky = okx & (gj >= 0) & (gj < grid.ny)
            for bz in (0, 1):
                gk = k0 + bz
                gz = fz if bz else 1.0 - fz
                ok = oky & (gk >= 0) & (gk < grid.nz)
                if not ok.any():
                    continue
                contrib = np.zeros(len(xs))
                contrib[ok] = smap[gi[ok], gj[ok], gk[ok]] * (gx * gy * gz)[ok]
                acc += contrib
    return acc


def density_energy_and_gradient(grid, cloud, phi, ex, ey, ez, freeze_z=None):
    """Total potential energy U = sum_i q_i * phibar_i and its exact gradient.

    phibar is the overlap-weighted average of the potential over each cuboid.
    Because U is a quadratic form of the charge field, the derivative carries
    a factor two and reduces to potential differences over the two faces
    normal to each axis: dU/dc_i = 2 w_i sum_b phi_b d vol(D_i cap b)/dc_i.
    Cells take the direct two-face traversal, macros evaluate differentiated
    corner stamps against the suffix-summed potential (O(1) per macro).  The
    field maps (ex, ey, ez) are accepted for interface symmetry with the
    forward solve; the exact face form is what matches finite differences of
    U.  ``freeze_z`` marks objects whose z-gradient is pinned to zero.
    """
    n = len(cloud.x)
    grad = np.zeros((n, 3))
    phibar = np.zeros(n)
    small = ~cloud.is_macro
    if small.any():
        sub = cloud.subset(small)
        phibar[small] = _direct_average(grid, sub, (phi,))[0]
        grad[small] = _direct_face_grad(grid, sub, phi) * (2.0 * sub.weight[:, None])
    if cloud.is_macro.any():
        sub = cloud.subset(cloud.is_macro)
        sphi = suffix_sum_3d(phi)
        phibar[cloud.is_macro] = _macro_phi_average(grid, sub, sphi)
        grad[cloud.is_macro] = _stamp_face_grad(grid, sub, sphi) * (
            2.0 * sub.weight[:, None]
        )
    q = cloud.charge
    energy = float((q * phibar).sum())
    if freeze_z is not None:
        grad[freeze_z, 2] = 0.0
    return energy, grad


def density_energy(grid, cloud, phi):
    """Total potential energy only (overlap-weighted phi averages)."""
    n = len(cloud.x)
    phibar = np.zeros(n)
    small = ~cloud.is_macro
    if small.any():
        phibar[small] = _direct_average(grid, cloud.subset(small), (phi,))[0]
    if cloud.is_macro.any():
        phibar[cloud.is_macro] = _macro_phi_average(
            grid, cloud.subset(cloud.is_macro), suffix_sum_3d(phi)
        )
    return float((cloud.charge * phibar).sum())


def density_force(grid, cloud, ex, ey, ez, freeze_z=None):
    """Spreading force as overlap-weighted field averages, scaled like the
    energy gradient (-2 q Ebar).

    This is the smooth spectral force driving the optimizer; macros read the
    suffix-summed field maps at their 8 corners (one prefix pass per map,
    constant work per macro).  It approaches the exact energy gradient as the
    charge distribution smooths out.
    """
    n = len(cloud.x)
    grad = np.zeros((n, 3))
    small = ~cloud.is_macro
    if small.any():
        sub = cloud.subset(small)
        gx, gy, gz = _direct_average(grid, sub, (ex, ey, ez))
        grad[small, 0] = gx
        grad[small, 1] = gy
        grad[small, 2] = gz
    if cloud.is_macro.any():
        sub = cloud.subset(cloud.is_macro)
        for axis, m in enumerate((ex, ey, ez)):
            grad[cloud.is_macro, axis] = _macro_phi_average(
                grid, sub, suffix_sum_3d(m)
            )
    grad *= -2.0 * cloud.charge[:, None]
    if freeze_z is not None:
        grad[freeze_z, 2] = 0.0
    return grad


def overflow(rho, grid, rho_t, movable_volume):
    """Fraction of movable volume sitting above the target density."""
    if movable_volume <= 0:
        return 0.0
    excess = np.clip(rho - rho_t, 0, None).sum() * grid.bin_vol
    return float(excess / movable_volume)


def macro_overflow(grid, cloud, rho_t):
    """Overflow of the macro-only density map against the target (the macro
    spreading diagnostic)."""
    big = cloud.subset(cloud.is_macro)
    if len(big.x) == 0:
        return 0.0
    rho = macro_prefix_density(grid, big)
    return overflow(rho, grid, rho_t, float(big.volume.sum()))


def dump_fields(path_prefix, grid, named_maps):
    """Debug dump: one flat binary file per map with a text header line."""
    paths = []
    for name, m in named_maps.items():
        path = f"{path_prefix}{name}.bin"
        arr = np.ascontiguousarray(m, dtype=np.float64)
        with open(path, "wb") as fh:
            fh.write(f"{name} float64 {grid.nx} {grid.ny} {grid.nz}\n".encode())
            fh.write(arr.tobytes())
        paths.append(path)
    return paths


def load_field(path):
    with open(path, "rb") as fh:
        header = fh.readline().decode().split()
        data = np.frombuffer(fh.read(), dtype=header[1])
    return header[0], data.reshape([int(t) for t in header[2:]])
