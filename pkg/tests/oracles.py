"""Independent reference implementations used to verify the package.

Everything here is deliberately written as plain loops or explicit term
lists, re-deriving results from the documented discretizations rather than
reusing the package's vectorized code paths.
"""

from __future__ import annotations

import numpy as np

from viscid.grid import GridDims, MacVelocity2, VolumeFractions2
from viscid.unet import WeightManifest
from viscid.viscosity import FluidParams, n_dofs, u_index, v_index


class ObjectiveOracle:
    """Term-list form of the volume-weighted viscous objective.

    E(x) = sum_k w_k (l_k . x + c_k)^2 over the flat face-dof vector,
    built by straightforward per-sample loops. Supports batched
    evaluation, finite-difference system extraction, and dense solving.
    """

    def __init__(
        self,
        vel_old: MacVelocity2,
        vols: VolumeFractions2,
        params: FluidParams,
        dims: GridDims,
    ):
        self.dims = dims
        n = n_dofs(dims)
        dx = dims.dx
        mu = params.mu_cells(dims)
        terms = []  # (weight, [(dof, coef)...], offset)

        u_old = vel_old.u
        v_old = vel_old.v
        for i in range(dims.nx + 1):
            for j in range(dims.ny):
                m = params.rho * vols.u_face[i, j] * dx * dx
                if m > 0:
                    terms.append((m, [(u_index(i, j, dims), 1.0)], -u_old[i, j]))
        for i in range(dims.nx):
            for j in range(dims.ny + 1):
                m = params.rho * vols.v_face[i, j] * dx * dx
                if m > 0:
                    terms.append((m, [(v_index(i, j, dims), 1.0)], -v_old[i, j]))

        for i in range(dims.nx):
            for j in range(dims.ny):
                w = 2.0 * params.dt * mu[i, j] * vols.cell[i, j] * dx * dx
                if w > 0:
                    terms.append(
                        (w, [(u_index(i + 1, j, dims), 1.0 / dx), (u_index(i, j, dims), -1.0 / dx)], 0.0)
                    )
                    terms.append(
                        (w, [(v_index(i, j + 1, dims), 1.0 / dx), (v_index(i, j, dims), -1.0 / dx)], 0.0)
                    )

        for i in range(1, dims.nx):
            for j in range(1, dims.ny):
                mu_n = 0.25 * (mu[i - 1, j - 1] + mu[i, j - 1] + mu[i - 1, j] + mu[i, j])
                w = 2.0 * params.dt * mu_n * vols.node[i, j] * dx * dx
                if w > 0:
                    # 2 * w * ((du/dy + dv/dx)/2)^2 = (w/2) * (s/dx)^2
                    coefs = [
                        (u_index(i, j, dims), 1.0 / dx),
                        (u_index(i, j - 1, dims), -1.0 / dx),
                        (v_index(i, j, dims), 1.0 / dx),
                        (v_index(i - 1, j, dims), -1.0 / dx),
                    ]
                    terms.append((0.5 * w, coefs, 0.0))

        self.weights = np.array([t[0] for t in terms])
        self.offsets = np.array([t[2] for t in terms])
        self.L = np.zeros((len(terms), n))
        for k, (_, coefs, _) in enumerate(terms):
            for dof, coef in coefs:
                self.L[k, dof] += coef

    def evaluate(self, x: np.ndarray) -> float:
        r = self.L @ x + self.offsets
        return float(np.sum(self.weights * r * r))

    def evaluate_batch(self, X: np.ndarray, chunk: int = 2048) -> np.ndarray:
        out = np.empty(X.shape[0])
        for s in range(0, X.shape[0], chunk):
            r = X[s : s + chunk] @ self.L.T + self.offsets
            out[s : s + chunk] = np.sum(self.weights * r * r, axis=1)
        return out

    def fd_normal_equations(self, x_fix: np.ndarray, free: np.ndarray, h: float):
        """Gradient and Hessian on the free dofs via central differences.

        The objective is quadratic, so central differences are exact up to
        rounding at any step size.
        """
        idx = np.nonzero(free)[0]
        m = idx.shape[0]
        basis = np.zeros((m, x_fix.shape[0]))
        basis[np.arange(m), idx] = 1.0

        plus = x_fix[None, :] + h * basis
        minus = x_fix[None, :] - h * basis
        g = (self.evaluate_batch(plus) - self.evaluate_batch(minus)) / (2 * h)

        iu, ju = np.triu_indices(m)
        d_ij = basis[iu] + basis[ju]
        d_ij_m = basis[iu] - basis[ju]
        e_pp = self.evaluate_batch(x_fix[None, :] + h * d_ij)
        e_mm = self.evaluate_batch(x_fix[None, :] - h * d_ij)
        e_pm = self.evaluate_batch(x_fix[None, :] + h * d_ij_m)
        e_mp = self.evaluate_batch(x_fix[None, :] - h * d_ij_m)
        hvals = (e_pp + e_mm - e_pm - e_mp) / (4 * h * h)
        H = np.zeros((m, m))
        H[iu, ju] = hvals
        H[ju, iu] = hvals
        return g, H

    def dense_solve(self, x_fix: np.ndarray, free: np.ndarray, h: float = 1e-2) -> np.ndarray:
        """Minimize E over the free dofs with pinned values substituted."""
        g, H = self.fd_normal_equations(x_fix, free, h)
        y = np.linalg.solve(H, -g)
        x = x_fix.copy()
        x[free] += y
        return x


def scalar_loop_variational_loss(vel, vel_old, rho, mu, dt, dims: GridDims):
    """Literal per-sample evaluation of the normalized variational loss.

    Returns (inertia, dissipation). ``mu`` is a (nx, ny) array.
    """
    nx, ny, dx = dims.nx, dims.ny, dims.dx
    inertia = 0.0
    for i in range(nx + 1):
        for j in range(ny):
            inertia += rho * (vel.u[i, j] - vel_old.u[i, j]) ** 2 / ((nx + 1) * ny)
    for i in range(nx):
        for j in range(ny + 1):
            inertia += rho * (vel.v[i, j] - vel_old.v[i, j]) ** 2 / (nx * (ny + 1))

    def du_dy_node(i, j):
        jj = min(max(j, 1), ny - 1)
        return (vel.u[i, jj] - vel.u[i, jj - 1]) / dx

    def dv_dx_node(i, j):
        ii = min(max(i, 1), nx - 1)
        return (vel.v[ii, j] - vel.v[ii - 1, j]) / dx

    dissipation = 0.0
    for i in range(nx):
        for j in range(ny):
            a = (vel.u[i + 1, j] - vel.u[i, j]) / dx
            d = (vel.v[i, j + 1] - vel.v[i, j]) / dx
            b = 0.25 * (
                du_dy_node(i, j) + du_dy_node(i + 1, j) + du_dy_node(i, j + 1) + du_dy_node(i + 1, j + 1)
            )
            c = 0.25 * (
                dv_dx_node(i, j) + dv_dx_node(i + 1, j) + dv_dx_node(i, j + 1) + dv_dx_node(i + 1, j + 1)
            )
            e = 0.5 * (b + c)
            frob = a * a + d * d + 2.0 * e * e
            dissipation += 2.0 * dt * mu[i, j] * frob / (nx * ny)
    return inertia, dissipation


def naive_conv2d(x, kernel, bias, stride=1, padding="same"):
    """Direct convolution in float64: explicit loops over taps."""
    x = np.asarray(x, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    co, ci, kh, kw = kernel.shape
    if padding == "same":
        ph, pw = kh // 2, kw // 2
    else:
        ph = pw = 0
    c, h, w = x.shape
    xp = np.zeros((c, h + 2 * ph, w + 2 * pw))
    xp[:, ph : ph + h, pw : pw + w] = x
    oh = (h + 2 * ph - kh) // stride + 1
    ow = (w + 2 * pw - kw) // stride + 1
    out = np.zeros((co, oh, ow))
    for o in range(co):
        for i in range(ci):
            for a in range(kh):
                for b in range(kw):
                    patch = xp[i, a : a + oh * stride : stride, b : b + ow * stride : stride]
                    out[o] += kernel[o, i, a, b] * patch
        out[o] += bias[o]
    return out


def naive_avg_pool2(x):
    x = np.asarray(x, dtype=np.float64)
    c, h, w = x.shape
    out = np.zeros((c, h // 2, w // 2))
    for i in range(h // 2):
        for j in range(w // 2):
            out[:, i, j] = x[:, 2 * i : 2 * i + 2, 2 * j : 2 * j + 2].mean(axis=(1, 2))
    return out


def naive_tconv2_up(x, kernel, bias):
    x = np.asarray(x, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    ci, co, kh, kw = kernel.shape
    c, h, w = x.shape
    out = np.zeros((co, 2 * h, 2 * w))
    for o in range(co):
        for i in range(ci):
            for a in range(kh):
                for b in range(kw):
                    out[o, a::2, b::2] += kernel[i, o, a, b] * x[i]
        out[o] += bias[o]
    return out


def naive_forward(stack, manifest: WeightManifest):
    """Reference forward pass built from the naive layer oracles."""
    by_name = {l.name: l for l in manifest.layers}
    depth = manifest.depth

    def conv_tanh(name, h):
        l = by_name[name]
        return np.tanh(naive_conv2d(h, l.weight, l.bias))

    h = np.asarray(stack, dtype=np.float64)
    skips = []
    for level in range(depth):
        h = conv_tanh(f"enc{level}.conv0", h)
        h = conv_tanh(f"enc{level}.conv1", h)
        skips.append(h)
        h = naive_avg_pool2(h)
    h = conv_tanh("bottleneck.conv0", h)
    h = conv_tanh("bottleneck.conv1", h)
    for level in reversed(range(depth)):
        l = by_name[f"dec{level}.up"]
        h = naive_tconv2_up(h, l.weight, l.bias)
        h = np.concatenate([h, skips[level]], axis=0)
        h = conv_tanh(f"dec{level}.conv0", h)
        h = conv_tanh(f"dec{level}.conv1", h)
    head = by_name["head"]
    return naive_conv2d(h, head.weight, head.bias)


def smooth_random_phi(dims: GridDims, rng, wet_bias=0.0):
    """Low-frequency random corner level set with mixed wet/dry regions."""
    xs = np.linspace(0, 1, dims.nx + 1)
    ys = np.linspace(0, 1, dims.ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    phi = np.zeros_like(X)
    for _ in range(3):
        kx, ky = rng.uniform(1, 3, size=2)
        px, py = rng.uniform(0, 2 * np.pi, size=2)
        phi += rng.uniform(0.3, 1.0) * np.cos(kx * np.pi * X + px) * np.cos(ky * np.pi * Y + py)
    scale = max(dims.width, dims.height)
    return (phi - wet_bias) * 0.3 * scale
