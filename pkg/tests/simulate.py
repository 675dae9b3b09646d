import numpy as np


def simulate_arma(n, phi=(), theta=(), sphi=(), m=1, seed=0, level=50.0, burn=300):
    """Direct loop over y_t = sum phi y + sum theta e (+ seasonal AR) + e_t around ``level``.

    The seasonal AR part is applied multiplicatively by filtering the
    non-seasonal ARMA output through (1 - sum sphi_k B^{km}).
    """
    rng = np.random.default_rng(seed)
    total = n + burn
    e = rng.normal(size=total)
    x = np.zeros(total)
    for t in range(total):
        acc = e[t]
        for j, c in enumerate(phi, start=1):
            if t - j >= 0:
                acc += c * x[t - j]
        for j, c in enumerate(theta, start=1):
            if t - j >= 0:
                acc += c * e[t - j]
        x[t] = acc
    if sphi:
        y = np.zeros(total)
        for t in range(total):
            acc = x[t]
            for k, c in enumerate(sphi, start=1):
                if t - k * m >= 0:
                    acc += c * y[t - k * m]
            y[t] = acc
        x = y
    return level + x[burn:]
