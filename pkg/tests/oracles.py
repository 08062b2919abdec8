"""Independent reference implementations used as test oracles."""

import math

import numpy as np
import scipy.linalg


def dft(x):
    """Direct O(L^2) forward DFT, unnormalized."""
    x = np.asarray(x, dtype=complex)
    L = x.size
    n = np.arange(L)
    out = np.empty(L, dtype=complex)
    for f in range(L):
        out[f] = np.sum(x * np.exp(-2j * np.pi * f * n / L))
    return out


def idft(X):
    """Direct O(L^2) inverse DFT carrying the 1/L factor."""
    X = np.asarray(X, dtype=complex)
    L = X.size
    f = np.arange(L)
    out = np.empty(L, dtype=complex)
    for n in range(L):
        out[n] = np.sum(X * np.exp(2j * np.pi * f * n / L)) / L
    return out


def moving_average_replicate(x, q):
    """Box filter of width q, edge-replicated, written as an explicit loop."""
    L = len(x)
    q = min(q, L)
    left = (q - 1) // 2
    out = np.empty(L)
    for i in range(L):
        acc = 0.0
        for j in range(i - left, i - left + q):
            acc += x[min(max(j, 0), L - 1)]
        out[i] = acc / q
    return out


def sr_window(x, q=3, floor=1e-8):
    X = dft(x)
    amp = np.abs(X)
    logamp = np.log(np.maximum(amp, floor))
    resid = logamp - moving_average_replicate(logamp, q)
    phase = np.angle(X)
    return np.abs(idft(np.exp(resid + 1j * phase)))


def saliency_map(u, tau=128, r=0.5, q=3):
    """Brute-force stitched map: per index, mean over every window containing it."""
    u = np.asarray(u, dtype=float)
    T = u.size
    s = math.floor(tau * (1 - r))
    windows = []
    t0 = 0
    while True:
        windows.append((t0, min(t0 + tau, T)))
        if t0 + tau >= T:
            break
        t0 += s
    per = [sr_window(u[a:b], q) for a, b in windows]
    out = np.empty(T)
    for j in range(T):
        vals = [p[j - a] for (a, b), p in zip(windows, per) if a <= j < b]
        out[j] = sum(vals) / len(vals)
    return out


def schur_radius(W):
    """Spectral radius from a complex Schur decomposition (a different LAPACK driver than geev)."""
    T, _ = scipy.linalg.schur(np.asarray(W, dtype=float), output="complex")
    return float(np.max(np.abs(np.diag(T))))


def power_radius(W, iters=20000, seed=0):
    """Spectral radius from growth of ||W^k v||, used where the dominant eigenvalue is simple."""
    v = np.random.default_rng(seed).normal(size=W.shape[0])
    log_norm = 0.0
    burn = iters // 2
    for k in range(iters):
        v = W @ v
        n = np.linalg.norm(v)
        if k >= burn:
            log_norm += math.log(n)
        v /= n
    return math.exp(log_norm / (iters - burn))


def weighted_nll(theta, X, d, w1=1.0, w0=1.0, ridge=0.0):
    """Cross-entropy written with explicit probabilities."""
    z = X @ theta[:-1] + theta[-1]
    y = 1.0 / (1.0 + np.exp(-z))
    w = np.where(d == 1, w1, w0)
    return float(-np.sum(w * (d * np.log(y) + (1 - d) * np.log(1 - y)))
                 + 0.5 * ridge * theta[:-1] @ theta[:-1])


def central_diff(fun, theta, h=1e-5):
    g = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        g[i] = (fun(theta + e) - fun(theta - e)) / (2 * h)
    return g


def gd_logistic(X, d, w1=1.0, w0=1.0, ridge=0.0, tol=1e-8, max_iter=2_000_000):
    """Batch gradient descent with a fixed 1/Lipschitz step."""
    Xb = np.column_stack([X, np.ones(len(d))])
    w = np.where(d == 1, w1, w0)
    lip = 0.25 * np.linalg.norm(Xb * np.sqrt(w)[:, None], 2) ** 2 + ridge
    theta = np.zeros(Xb.shape[1])
    pen = np.r_[np.full(X.shape[1], ridge), 0.0]
    for _ in range(max_iter):
        y = 1.0 / (1.0 + np.exp(-(Xb @ theta)))
        g = Xb.T @ (w * (y - d)) + pen * theta
        if np.max(np.abs(g)) < tol:
            break
        theta -= g / lip
    return theta
