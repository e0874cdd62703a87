"""Pure-numpy fallback for the per-row covered-information log-ratio."""
import numpy as np
from scipy.special import logsumexp

_CHUNK_ELEMENTS = 1 << 22
_TINY = 1e-280


def log_ratio_rows(log_d, log_F, log_e, xbin, ybin):
    M = log_d.shape[0]
    Bx, By = log_F.shape
    out = np.empty(M)
    step = max(1, _CHUNK_ELEMENTS // (Bx * By))
    for start in range(0, M, step):
        sl = slice(start, start + step)
        xb, yb = xbin[sl], ybin[sl]
        k = np.arange(len(xb))
        d, e = log_d[sl], log_e[sl]
        # the three sums are the full cell table, its row xb and its column yb
        cells = d[:, :, None] + log_F[None, :, :] + e[:, None, :]
        m = cells.max(axis=(1, 2))
        with np.errstate(invalid="ignore"):
            w = np.exp(cells - m[:, None, None])
        num = m + np.log(w.sum(axis=(1, 2)))
        s_row = w[k, xb, :].sum(axis=1)
        s_col = w[k, :, yb].sum(axis=1)
        with np.errstate(divide="ignore"):
            den_x = m + np.log(s_row) - d[k, xb]
            den_y = m + np.log(s_col) - e[k, yb]
        low = s_row <= _TINY
        if low.any():
            den_x[low] = logsumexp(log_F[xb[low]] + e[low], axis=1)
        low = s_col <= _TINY
        if low.any():
            den_y[low] = logsumexp(d[low] + log_F[:, yb[low]].T, axis=1)
        out[sl] = log_F[xb, yb] + num - den_y - den_x
    return out


def gaussian_log_ratio_rows(node_x, xs, field_x, node_y, ys, field_y, log_F, xbin, ybin, clamp):
    log_d = np.maximum(node_x[None, :] - field_x[:, None] * xs[None, :], clamp)
    log_e = np.maximum(node_y[None, :] - field_y[:, None] * ys[None, :], clamp)
    return log_ratio_rows(log_d, log_F, log_e, xbin, ybin)
