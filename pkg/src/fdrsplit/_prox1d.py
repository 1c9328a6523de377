"""Exact non-iterative kernels used by the regularizer proxes."""
import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is optional
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


@njit(cache=True)
def _fill(out, start, stop, value):
    # do-while semantics: at least one write
    j = start
    out[j] = value
    j += 1
    while j <= stop:
        out[j] = value
        j += 1
    return j


@njit(cache=True)
def _tv1d_direct(y, lam, out):
    # Condat's direct algorithm for min_x 0.5||x - y||^2 + lam * sum |x[k+1] - x[k]|.
    n = y.shape[0]
    k = 0
    k0 = 0
    umin = lam
    umax = -lam
    vmin = y[0] - lam
    vmax = y[0] + lam
    kplus = 0
    kminus = 0
    twolam = 2.0 * lam
    minlam = -lam
    done = False
    while not done:
        if k == n - 1:
            if umin < 0.0:
                k0 = _fill(out, k0, kminus, vmin)
                k = k0
                kminus = k
                vmin = y[k]
                umin = lam
                umax = vmin + umin - vmax
            elif umax > 0.0:
                k0 = _fill(out, k0, kplus, vmax)
                k = k0
                kplus = k
                vmax = y[k]
                umax = minlam
                umin = vmax + umax - vmin
            else:
                vmin += umin / (k - k0 + 1)
                k0 = _fill(out, k0, k, vmin)
                done = True
            continue
        umin += y[k + 1] - vmin
        if umin < minlam:
            k0 = _fill(out, k0, kminus, vmin)
            k = k0
            kplus = k
            kminus = k
            vmin = y[k]
            vmax = vmin + twolam
            umin = lam
            umax = minlam
        else:
            umax += y[k + 1] - vmax
            if umax > lam:
                k0 = _fill(out, k0, kplus, vmax)
                k = k0
                kplus = k
                kminus = k
                vmax = y[k]
                vmin = vmax - twolam
                umin = lam
                umax = minlam
            else:
                k += 1
                if umin >= lam:
                    kminus = k
                    vmin += (umin - lam) / (kminus - k0 + 1)
                    umin = lam
                if umax <= minlam:
                    kplus = k
                    vmax += (umax + lam) / (kplus - k0 + 1)
                    umax = minlam


def prox_tv1d(y, lam):
    """Exact prox of ``lam * sum_i |x[i+1] - x[i]|`` at ``y``."""
    y = np.ascontiguousarray(y, dtype=float)
    out = np.empty_like(y)
    if y.shape[0] == 0:
        return out
    if lam <= 0.0:
        out[:] = y
        return out
    _tv1d_direct(y, float(lam), out)
    return out


def project_l1_ball(x, radius):
    """Euclidean projection onto ``{u : ||u||_1 <= radius}`` by sorting.

    Ties in the sort are broken by index order (stable sort).
    """
    x = np.asarray(x, dtype=float)
    if radius < 0:
        raise ValueError("radius must be non-negative")
    a = np.abs(x)
    if a.sum() <= radius:
        return x.copy()
    if radius == 0:
        return np.zeros_like(x)
    order = np.argsort(-a, kind="stable")
    s = a[order]
    css = np.cumsum(s)
    idx = np.arange(1, s.size + 1)
    cond = s - (css - radius) / idx > 0
    rho = np.nonzero(cond)[0][-1]
    theta = (css[rho] - radius) / (rho + 1.0)
    return np.sign(x) * np.maximum(a - theta, 0.0)
