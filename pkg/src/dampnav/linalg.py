"""Small dense eigenvalue routines.

``char_poly_roots`` gives closed-form eigenvalues for ``n <= 3`` (used on hot
paths).  ``eigenvalues_dense`` is a general Householder-Hessenberg plus Francis
double-shift QR solver that serves as an independent cross-check.
"""

from __future__ import annotations

import cmath
import math

import numpy as np

from .errors import NonConvergence

_EPS = np.finfo(float).eps


def char_poly_roots(A) -> np.ndarray:
    """Eigenvalues of a 1x1, 2x2 or 3x3 real matrix from its characteristic polynomial."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or n > 3:
        raise ValueError("char_poly_roots handles square matrices up to 3x3")
    if n == 1:
        return np.array([complex(A[0, 0])])
    if n == 2:
        a, b, c, d = A[0, 0], A[0, 1], A[1, 0], A[1, 1]
        # (a-d)^2 + 4bc avoids the cancellation in tr^2 - 4 det
        root = cmath.sqrt((a - d) ** 2 + 4.0 * b * c)
        mid = 0.5 * (a + d)
        return np.array([mid + 0.5 * root, mid - 0.5 * root])
    tr = float(np.trace(A))
    c2 = float(A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0] + A[0, 0] * A[2, 2] - A[0, 2] * A[2, 0]
               + A[1, 1] * A[2, 2] - A[1, 2] * A[2, 1])
    # cofactor expansion: exact for small-integer matrices, unlike LU
    det = float(A[0, 0] * (A[1, 1] * A[2, 2] - A[1, 2] * A[2, 1])
                - A[0, 1] * (A[1, 0] * A[2, 2] - A[1, 2] * A[2, 0])
                + A[0, 2] * (A[1, 0] * A[2, 1] - A[1, 1] * A[2, 0]))
    coeffs = (1.0, -tr, c2, -det)
    return np.array([_polish(r, coeffs) for r in _cubic_roots(*coeffs)])


def _cubic_roots(a: float, b: float, c: float, d: float) -> list[complex]:
    shift = -b / (3.0 * a)
    p = (3.0 * a * c - b * b) / (3.0 * a * a)
    q = (2.0 * b**3 - 9.0 * a * b * c + 27.0 * a * a * d) / (27.0 * a**3)
    if p == 0.0 and q == 0.0:
        return [complex(shift)] * 3
    disc = cmath.sqrt(q * q / 4.0 + p**3 / 27.0)
    # pick the branch that avoids cancellation
    u3 = -q / 2.0 + disc if abs(-q / 2.0 + disc) >= abs(-q / 2.0 - disc) else -q / 2.0 - disc
    u = u3 ** (1.0 / 3.0)
    omega = complex(-0.5, math.sqrt(3.0) / 2.0)
    roots = []
    for k in range(3):
        uk = u * omega**k
        roots.append(uk - p / (3.0 * uk) + shift)
    return roots


def _polish(z: complex, coeffs, iters: int = 3) -> complex:
    for _ in range(iters):
        val = 0j
        der = 0j
        for c in coeffs:
            der = der * z + val
            val = val * z + c
        if der == 0 or val == 0:
            break
        step = val / der
        if not cmath.isfinite(step):
            break
        z_new = z - step
        if abs(_peval(z_new, coeffs)) >= abs(val):
            break
        z = z_new
    return z


def _peval(z: complex, coeffs) -> complex:
    val = 0j
    for c in coeffs:
        val = val * z + c
    return val


def hessenberg(A) -> np.ndarray:
    """Upper Hessenberg form of ``A`` by Householder similarity transforms."""
    H = np.array(A, dtype=float)
    n = H.shape[0]
    for k in range(n - 2):
        x = H[k + 1:, k].copy()
        nx = np.linalg.norm(x)
        if nx == 0.0:
            continue
        alpha = -math.copysign(nx, x[0])
        v = x
        v[0] -= alpha
        nv = np.linalg.norm(v)
        if nv == 0.0:
            continue
        v /= nv
        H[k + 1:, k:] -= 2.0 * np.outer(v, v @ H[k + 1:, k:])
        H[:, k + 1:] -= 2.0 * np.outer(H[:, k + 1:] @ v, v)
        H[k + 2:, k] = 0.0
    return H


def eigenvalues_dense(A) -> np.ndarray:
    """All eigenvalues of a real square matrix (complex array, unordered).

    Francis double-shift QR on the Hessenberg form with deflation at machine
    precision and exceptional shifts after 10 and 20 stalled iterations.
    Raises :class:`NonConvergence` after ``100 * m`` iterations in total.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if A.ndim != 2 or A.shape[1] != n:
        raise ValueError("matrix must be square")
    if n == 0:
        return np.zeros(0, dtype=complex)
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    a = hessenberg(A).tolist()
    wr = [0j] * n
    anorm = sum(abs(a[i][j]) for i in range(n) for j in range(max(i - 1, 0), n))
    budget = 100 * n
    total = 0
    nn = n - 1
    t = 0.0
    while nn >= 0:
        its = 0
        while True:
            l = nn
            while l >= 1:
                s = abs(a[l - 1][l - 1]) + abs(a[l][l])
                if s == 0.0:
                    s = anorm
                if abs(a[l][l - 1]) <= _EPS * s:
                    a[l][l - 1] = 0.0
                    break
                l -= 1
            x = a[nn][nn]
            if l == nn:
                wr[nn] = complex(x + t)
                nn -= 1
                break
            y = a[nn - 1][nn - 1]
            w = a[nn][nn - 1] * a[nn - 1][nn]
            if l == nn - 1:
                p = 0.5 * (y - x)
                q = p * p + w
                if abs(q) <= 4.0 * _EPS * (p * p + abs(w)):
                    # discriminant is rounding noise: report the double root
                    q = 0.0
                z = math.sqrt(abs(q))
                x += t
                if q >= 0.0:
                    z = p + math.copysign(z, p)
                    wr[nn - 1] = wr[nn] = complex(x + z)
                    if z != 0.0:
                        wr[nn] = complex(x - w / z)
                else:
                    wr[nn - 1] = complex(x + p, -z)
                    wr[nn] = complex(x + p, z)
                nn -= 2
                break
            if total >= budget:
                raise NonConvergence("QR iteration did not converge")
            if its in (10, 20):
                t += x
                for i in range(nn + 1):
                    a[i][i] -= x
                s = abs(a[nn][nn - 1]) + abs(a[nn - 1][nn - 2])
                x = y = 0.75 * s
                w = -0.4375 * s * s
            its += 1
            total += 1
            m = nn - 2
            while m >= l:
                z = a[m][m]
                r = x - z
                s = y - z
                p = (r * s - w) / a[m + 1][m] + a[m][m + 1]
                q = a[m + 1][m + 1] - z - r - s
                r = a[m + 2][m + 1]
                s = abs(p) + abs(q) + abs(r)
                if s != 0.0:
                    p /= s
                    q /= s
                    r /= s
                if m == l:
                    break
                u = abs(a[m][m - 1]) * (abs(q) + abs(r))
                v = abs(p) * (abs(a[m - 1][m - 1]) + abs(z) + abs(a[m + 1][m + 1]))
                if u <= _EPS * v:
                    break
                m -= 1
            for i in range(m, nn - 1):
                a[i + 2][i] = 0.0
                if i != m:
                    a[i + 2][i - 1] = 0.0
            k = m
            while k <= nn - 1:
                if k != m:
                    p = a[k][k - 1]
                    q = a[k + 1][k - 1]
                    r = a[k + 2][k - 1] if k + 1 != nn else 0.0
                    x = abs(p) + abs(q) + abs(r)
                    if x != 0.0:
                        p /= x
                        q /= x
                        r /= x
                s = math.copysign(math.sqrt(p * p + q * q + r * r), p)
                if s != 0.0:
                    if k == m:
                        if l != m:
                            a[k][k - 1] = -a[k][k - 1]
                    else:
                        a[k][k - 1] = -s * x
                    p += s
                    x = p / s
                    y = q / s
                    z = r / s
                    q /= p
                    r /= p
                    for j in range(k, nn + 1):
                        p = a[k][j] + q * a[k + 1][j]
                        if k + 1 != nn:
                            p += r * a[k + 2][j]
                            a[k + 2][j] -= p * z
                        a[k + 1][j] -= p * y
                        a[k][j] -= p * x
                    mmin = nn if nn < k + 3 else k + 3
                    for i in range(l, mmin + 1):
                        p = x * a[i][k] + y * a[i][k + 1]
                        if k + 1 != nn:
                            p += z * a[i][k + 2]
                            a[i][k + 2] -= p * r
                        a[i][k + 1] -= p * q
                        a[i][k] -= p
                k += 1
    return np.array(wr, dtype=complex)


def match_multisets(a, b) -> float:
    """Largest distance in the best greedy pairing of two equal-size complex multisets."""
    a = list(np.asarray(a, dtype=complex))
    b = list(np.asarray(b, dtype=complex))
    if len(a) != len(b):
        return math.inf
    worst = 0.0
    for z in sorted(a, key=lambda c: (c.real, c.imag)):
        j = min(range(len(b)), key=lambda k: abs(b[k] - z))
        worst = max(worst, abs(b[j] - z))
        b.pop(j)
    return worst
