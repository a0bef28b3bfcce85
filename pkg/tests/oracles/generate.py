"""Regenerate the frozen oracle values in ``oracle_values.json``.

Every value here comes from mpmath at 30 significant digits, by direct
quadrature of defining integrals or root finding on independently written
distribution functions.  Nothing from the package under test is imported.
Run: python tests/oracles/generate.py
"""

import json
from pathlib import Path

import mpmath as mp

mp.mp.dps = 30


def gev_cdf(mu, s, xi, y):
    z = (y - mu) / s
    if xi == 0:
        return mp.exp(-mp.exp(-z))
    a = 1 + xi * z
    if a <= 0:
        return mp.mpf(0) if xi > 0 else mp.mpf(1)
    return mp.exp(-a ** (-1 / mp.mpf(xi)))


def gpd_cdf(u, s, xi, y):
    if y < u:
        return mp.mpf(0)
    z = (y - u) / s
    if xi == 0:
        return 1 - mp.exp(-z)
    a = 1 + xi * z
    if a <= 0:
        return mp.mpf(1)
    return 1 - a ** (-1 / mp.mpf(xi))


def gev_q(mu, s, xi, p):
    if xi == 0:
        return mu - s * mp.log(-mp.log(p))
    return mu + s * ((-mp.log(p)) ** (-xi) - 1) / xi


def gpd_q(u, s, xi, p):
    if xi == 0:
        return u - s * mp.log(1 - p)
    return u + s * ((1 - p) ** (-xi) - 1) / xi


def crps_prob_scale(q, cdf, y):
    """E|X - y| - E|X - X'|/2, both as integrals over probability levels.

    Uses E|X - X'| = 2 int (2p - 1) Q(p) dp.  tanh-sinh copes with the
    endpoint singularities of Q.
    """
    fy = cdf(y)
    if 0 < fy < 1:
        e_abs = mp.quad(lambda p: y - q(p), [0, fy]) + mp.quad(lambda p: q(p) - y, [fy, 1])
    else:
        e_abs = abs(mp.quad(lambda p: q(p) - y, [0, 1]))
    gini = mp.quad(lambda p: (2 * p - 1) * q(p), [0, mp.mpf(1) / 2, 1])
    return e_abs - gini


def gev_crps_oracle(mu, s, xi, y):
    mu, s, xi, y = map(mp.mpf, (mu, s, xi, y))
    return crps_prob_scale(lambda p: gev_q(mu, s, xi, p), lambda t: gev_cdf(mu, s, xi, t), y)


def gpd_crps_oracle(u, s, xi, y):
    u, s, xi, y = map(mp.mpf, (u, s, xi, y))
    return crps_prob_scale(lambda p: gpd_q(u, s, xi, p), lambda t: gpd_cdf(u, s, xi, t), y)


def normal_crps_oracle(m, sd, y):
    y = mp.mpf(y)
    f = lambda t: (mp.ncdf(t, m, sd) - (1 if t >= y else 0)) ** 2
    return mp.quad(f, [-mp.inf, y, mp.inf])


out = {}
out["gamma_1_5"] = mp.quad(lambda t: t ** mp.mpf("0.5") * mp.exp(-t), [0, 1, mp.inf])
out["upper_gamma_0_7_1_3"] = mp.quad(lambda t: t ** mp.mpf("-0.3") * mp.exp(-t), [mp.mpf("1.3"), 10, mp.inf])
out["lower_gamma_1_5_0_5"] = mp.quad(lambda t: t ** mp.mpf("0.5") * mp.exp(-t), [0, mp.mpf("0.5")])
out["ei_minus_1"] = mp.quad(lambda t: mp.exp(t) / t, [-mp.inf, -10, -1])
out["ei_minus_1e-6"] = mp.ei(mp.mpf("-1e-6"))
out["gev_quantile_1_2_m0_3_tau_0_9"] = mp.findroot(lambda y: gev_cdf(1, 2, mp.mpf("-0.3"), y) - mp.mpf("0.9"), (0, 5), solver="bisect")
out["gpd_quantile_2_1_5_0_3_tau_0_95"] = mp.findroot(lambda y: gpd_cdf(2, mp.mpf("1.5"), mp.mpf("0.3"), y) - mp.mpf("0.95"), (2, 30), solver="bisect")
out["gev_pdf_0_1_m0_5_y_1"] = mp.diff(lambda y: gev_cdf(0, 1, mp.mpf("-0.5"), y), 1)
out["gev_pdf_2_1_5_m0_2_y_2_3"] = mp.diff(lambda y: gev_cdf(2, mp.mpf("1.5"), mp.mpf("-0.2"), y), mp.mpf("2.3"))
out["crps_gev_0_1_0_5_y_1"] = gev_crps_oracle(0, 1, 0.5, 1)
out["crps_gpd_1_2_0_4_y_3"] = gpd_crps_oracle(1, 2, 0.4, 3)
out["crps_normal_0_1_y_1"] = normal_crps_oracle(0, 1, 1)

# grid used by the representation-agreement checks: 5 shapes x 5 observations
grid = {"gev": [], "gpd": []}
for xi in ("-0.5", "-0.1", "0", "0.1", "0.5"):
    for y in ("-1.5", "-0.3", "0.4", "1.2", "3.5"):
        grid["gev"].append([float(xi), float(y), float(gev_crps_oracle(0, 1, mp.mpf(xi), mp.mpf(y)))])
    for y in ("-0.5", "0.2", "0.9", "1.7", "4.0"):
        grid["gpd"].append([float(xi), float(y), float(gpd_crps_oracle(0, 1, mp.mpf(xi), mp.mpf(y)))])
out = {k: float(v) for k, v in out.items()}
out["crps_grid"] = grid

Path(__file__).with_name("oracle_values.json").write_text(json.dumps(out, indent=1) + "\n")
print(json.dumps(out, indent=1)[:1500])
