"""Numba kernels for the hot loops of the bundling pipeline.

Every kernel releases the GIL and writes only to rows of its own edge
partition or to a private buffer, so thread workers never contend and the
results do not depend on the worker count. fastmath stays off: the
determinism contract needs reproducible IEEE arithmetic.

Cell rounding is floor(x + 0.5) everywhere; the pure-numpy implementations
in :mod:`histobundle.raster` and :mod:`histobundle.bundler` mirror these
formulas operation for operation so both routes agree bitwise.
"""

import math

from numba import njit

# polyline advection clamps points this far (cells) inside the grid so
# bilinear gradients always have a full stencil
INTERIOR_MARGIN = 1.0


@njit(cache=True, nogil=True)
def fill_samples(src, dst, starts, out):
    """Place equally spaced points along each straight edge.

    src/dst are (E, 2) grid endpoints; out is the packed (N, 2) point
    array described by starts. Endpoints are copied exactly.
    """
    for e in range(starts.size - 1):
        s = starts[e]
        m = starts[e + 1] - s - 1
        x0 = src[e, 0]
        y0 = src[e, 1]
        dx = dst[e, 0] - x0
        dy = dst[e, 1] - y0
        for k in range(1, m):
            t = k / m
            out[s + k, 0] = x0 + t * dx
            out[s + k, 1] = y0 + t * dy
        out[s, 0] = x0
        out[s, 1] = y0
        out[s + m, 0] = dst[e, 0]
        out[s + m, 1] = dst[e, 1]


@njit(cache=True, nogil=True)
def accumulate(pts, starts, layer_w, out, e_lo, e_hi):
    """Rasterize polyline segments of edges [e_lo, e_hi) into out (B, V, U).

    Each rasterized cell of edge e receives layer_w[e, l] on every layer l.
    The junction cell shared by consecutive segments is attributed to the
    earlier segment only.
    """
    nbins = out.shape[0]
    for e in range(e_lo, e_hi):
        s = starts[e]
        n = starts[e + 1] - s
        for j in range(n - 1):
            x0 = int(math.floor(pts[s + j, 0] + 0.5))
            y0 = int(math.floor(pts[s + j, 1] + 0.5))
            x1 = int(math.floor(pts[s + j + 1, 0] + 0.5))
            y1 = int(math.floor(pts[s + j + 1, 1] + 0.5))
            dx = x1 - x0
            dy = y1 - y0
            steps = max(abs(dx), abs(dy))
            k0 = 0 if j == 0 else 1
            if steps == 0:
                if k0 == 0:
                    for l in range(nbins):
                        out[l, y0, x0] += layer_w[e, l]
                continue
            inv = 1.0 / steps
            for k in range(k0, steps + 1):
                u = int(math.floor(x0 + k * dx * inv + 0.5))
                v = int(math.floor(y0 + k * dy * inv + 0.5))
                for l in range(nbins):
                    out[l, v, u] += layer_w[e, l]


@njit(cache=True, nogil=True, inline="always")
def bilinear_value(rho, x, y):
    """Bilinear sample of one density layer at a continuous grid point."""
    nv, nu = rho.shape
    u0 = int(math.floor(x))
    v0 = int(math.floor(y))
    if u0 < 0:
        u0 = 0
    elif u0 > nu - 2:
        u0 = nu - 2
    if v0 < 0:
        v0 = 0
    elif v0 > nv - 2:
        v0 = nv - 2
    fx = x - u0
    fy = y - v0
    a = rho[v0, u0] + fx * (rho[v0, u0 + 1] - rho[v0, u0])
    b = rho[v0 + 1, u0] + fx * (rho[v0 + 1, u0 + 1] - rho[v0 + 1, u0])
    return a + fy * (b - a)


@njit(cache=True, nogil=True, inline="always")
def _cell_gradient(rho, u, v):
    nv, nu = rho.shape
    if u < 1:
        u = 1
    elif u > nu - 2:
        u = nu - 2
    if v < 1:
        v = 1
    elif v > nv - 2:
        v = nv - 2
    gx = 0.5 * (rho[v, u + 1] - rho[v, u - 1])
    gy = 0.5 * (rho[v + 1, u] - rho[v - 1, u])
    return gx, gy


@njit(cache=True, nogil=True, inline="always")
def gradient_xy(rho, x, y):
    """Central-difference gradient, bilinearly interpolated at (x, y)."""
    nv, nu = rho.shape
    u0 = int(math.floor(x))
    v0 = int(math.floor(y))
    if u0 < 0:
        u0 = 0
    elif u0 > nu - 2:
        u0 = nu - 2
    if v0 < 0:
        v0 = 0
    elif v0 > nv - 2:
        v0 = nv - 2
    fx = x - u0
    fy = y - v0
    g00x, g00y = _cell_gradient(rho, u0, v0)
    g10x, g10y = _cell_gradient(rho, u0 + 1, v0)
    g01x, g01y = _cell_gradient(rho, u0, v0 + 1)
    g11x, g11y = _cell_gradient(rho, u0 + 1, v0 + 1)
    ax = g00x + fx * (g10x - g00x)
    bx = g01x + fx * (g11x - g01x)
    ay = g00y + fx * (g10y - g00y)
    by = g01y + fx * (g11y - g01y)
    return ax + fy * (bx - ax), ay + fy * (by - ay)


@njit(cache=True, nogil=True)
def advect(pts, starts, edge_layer, rho3, h, eps, min_step, fixed_step,
           e_lo, e_hi):
    """Move interior points of edges [e_lo, e_hi) along density gradients.

    Adaptive mode halves the step until the bilinear density at the new
    position is at least the density at the old one, then stops below
    min_step. Fixed mode (test flag) always moves the full step. Returns
    (interior points, moved points, total displacement).
    """
    nv = rho3.shape[1]
    nu = rho3.shape[2]
    xlo = INTERIOR_MARGIN
    ylo = INTERIOR_MARGIN
    xhi = nu - 1 - INTERIOR_MARGIN
    yhi = nv - 1 - INTERIOR_MARGIN
    interior = 0
    moved = 0
    disp = 0.0
    for e in range(e_lo, e_hi):
        rho = rho3[edge_layer[e]]
        s = starts[e]
        n = starts[e + 1] - s
        for j in range(1, n - 1):
            x = pts[s + j, 0]
            y = pts[s + j, 1]
            interior += 1
            gx, gy = gradient_xy(rho, x, y)
            gn = math.sqrt(gx * gx + gy * gy)
            if gn < eps:
                gn = eps
            dx = gx / gn
            dy = gy / gn
            if fixed_step:
                nx = min(max(x + h * dx, xlo), xhi)
                ny = min(max(y + h * dy, ylo), yhi)
                if nx != x or ny != y:
                    moved += 1
                    disp += math.sqrt((nx - x) * (nx - x) + (ny - y) * (ny - y))
                pts[s + j, 0] = nx
                pts[s + j, 1] = ny
                continue
            r0 = bilinear_value(rho, x, y)
            m = h
            while m >= min_step:
                nx = min(max(x + m * dx, xlo), xhi)
                ny = min(max(y + m * dy, ylo), yhi)
                if bilinear_value(rho, nx, ny) >= r0:
                    if nx != x or ny != y:
                        moved += 1
                        disp += math.sqrt((nx - x) * (nx - x) +
                                          (ny - y) * (ny - y))
                    pts[s + j, 0] = nx
                    pts[s + j, 1] = ny
                    break
                m *= 0.5
    return interior, moved, disp


@njit(cache=True, nogil=True)
def resample_count(pts, starts, delta, counts, e_lo, e_hi):
    """First resampling pass: output point count per polyline.

    Walks each polyline merging points closer than 0.5*delta to the last
    kept point, then counts the power-of-two subdivision of every kept gap
    longer than 1.5*delta. Must stay in lockstep with resample_emit.
    """
    lo = 0.5 * delta
    hi = 1.5 * delta
    for e in range(e_lo, e_hi):
        s = starts[e]
        n = starts[e + 1] - s
        ax = pts[s, 0]
        ay = pts[s, 1]
        total = 1
        for j in range(1, n):
            x = pts[s + j, 0]
            y = pts[s + j, 1]
            g = math.sqrt((x - ax) * (x - ax) + (y - ay) * (y - ay))
            if j < n - 1 and g < lo:
                continue
            pieces = 1
            while g > hi:
                g *= 0.5
                pieces *= 2
            total += pieces
            ax = x
            ay = y
        counts[e] = total


@njit(cache=True, nogil=True)
def resample_emit(pts, starts, delta, new_starts, out, e_lo, e_hi):
    """Second resampling pass: write the resampled points.

    Kept points (including both endpoints) are copied bit-exactly; inserted
    points subdivide a kept gap at equal parameters k/pieces.
    """
    lo = 0.5 * delta
    hi = 1.5 * delta
    for e in range(e_lo, e_hi):
        s = starts[e]
        n = starts[e + 1] - s
        w = new_starts[e]
        ax = pts[s, 0]
        ay = pts[s, 1]
        out[w, 0] = ax
        out[w, 1] = ay
        w += 1
        for j in range(1, n):
            x = pts[s + j, 0]
            y = pts[s + j, 1]
            g = math.sqrt((x - ax) * (x - ax) + (y - ay) * (y - ay))
            if j < n - 1 and g < lo:
                continue
            pieces = 1
            while g > hi:
                g *= 0.5
                pieces *= 2
            for k in range(1, pieces):
                t = k / pieces
                out[w, 0] = ax + t * (x - ax)
                out[w, 1] = ay + t * (y - ay)
                w += 1
            out[w, 0] = x
            out[w, 1] = y
            w += 1
            ax = x
            ay = y


@njit(cache=True, nogil=True)
def laplacian(pts, starts, factor, passes, scratch, e_lo, e_hi):
    """Jacobi Laplacian smoothing of interior points, endpoints fixed.

    scratch is a caller-provided (N, 2) buffer sliced by the same starts;
    each pass reads pts and writes scratch, then copies back.
    """
    for _ in range(passes):
        for e in range(e_lo, e_hi):
            s = starts[e]
            n = starts[e + 1] - s
            for j in range(1, n - 1):
                mx = 0.5 * (pts[s + j - 1, 0] + pts[s + j + 1, 0])
                my = 0.5 * (pts[s + j - 1, 1] + pts[s + j + 1, 1])
                scratch[s + j, 0] = pts[s + j, 0] + factor * (mx - pts[s + j, 0])
                scratch[s + j, 1] = pts[s + j, 1] + factor * (my - pts[s + j, 1])
        for e in range(e_lo, e_hi):
            s = starts[e]
            n = starts[e + 1] - s
            for j in range(1, n - 1):
                pts[s + j, 0] = scratch[s + j, 0]
                pts[s + j, 1] = scratch[s + j, 1]
