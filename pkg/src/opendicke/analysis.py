"""Steady-state theory and time-series post-processing.

Theory side: the linear-response susceptibility of a single dephasing
spin determines the critical coupling through

    g_c^2 = (Omega^2 + kappa^2) / (-2 * Omega * chi)

where chi < 0 is evaluated by nested adaptive quadrature (with a
closed-form cross-check for the exponential-cutoff ohmic bath at zero
temperature, via an independently implemented incomplete-gamma routine).

Fitting side: deterministic least-squares extraction of
 - the order-parameter exponent near threshold (joint threshold/exponent
   amplitude fit on log-transformed steady-sweep data),
 - rise times vs log N and the early exponential growth rate,
 - spin relaxation times and their power laws in N and coupling,
 - system-size scaling of connected spin-spin correlators.

Every fit returns a FitReport carrying the model form, parameters with
uncertainties, the fit window, the residual norm, and enough provenance
(per-series intermediate values, windows, flags) to regenerate it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate as _sint
from scipy import optimize as _sopt
from scipy.interpolate import CubicSpline

from .bath import SpectralDensity, eval_spectral_density

__all__ = [
    "ChiResult",
    "FitReport",
    "chi_susceptibility",
    "chi_ohmic_closed_form",
    "upper_incomplete_gamma",
    "critical_coupling",
    "critical_exponent_fit",
    "rise_time_fit",
    "relaxation_time_fit",
    "connected_scaling_fit",
]


# ---------------------------------------------------------------------------
# Susceptibility quadrature
# ---------------------------------------------------------------------------


@dataclass
class ChiResult:
    """Spin susceptibility of the dephasing problem with quadrature report."""

    chi: float
    residual: float  # quadrature error estimate (absolute)
    beta_T: float
    omega_z: float
    bath: SpectralDensity | None

    def critical_coupling(self, Omega=1.0, kappa=1.0):
        return critical_coupling(self.chi, Omega, kappa)


def _decay_exponent_zero_t(J, tau):
    """4 * int_0^inf dw J(w) (1 - exp(-tau*w)) / w^2, with error estimate."""
    if tau == 0.0:
        return 0.0, 0.0

    def integrand(w):
        return 4.0 * eval_spectral_density(J, w) * (
            -np.expm1(-tau * w)
        ) / (w * w)

    val, err = _sint.quad(integrand, 0.0, np.inf, limit=200)
    return val, err


def _decay_exponent_finite_t(J, beta, tau):
    """Finite-temperature decay exponent of the dephasing propagator.

    4 * int dw J/w^2 * [coth(bw/2)(1 - cosh(tau w)) + sinh(tau w)], written
    in the overflow-free form [cosh(x) - cosh(x - y)] / sinh(x) with
    x = beta*w/2, y = tau*w (valid for 0 <= tau <= beta).
    """
    if tau == 0.0:
        return 0.0, 0.0

    def kernel(w):
        x = 0.5 * beta * w
        y = tau * w
        if x < 1e-8:
            # coth(x) -> 1/x limit
            return y - y * y / (2.0 * x)
        # [1 - e^{-y} + e^{-2x} - e^{y-2x}] / (1 - e^{-2x}), y <= 2x
        num = -np.expm1(-y) + math.exp(-2.0 * x) - math.exp(y - 2.0 * x)
        return num / (-np.expm1(-2.0 * x))

    def integrand(w):
        return 4.0 * eval_spectral_density(J, w) * kernel(w) / (w * w)

    val, err = _sint.quad(integrand, 0.0, np.inf, limit=200)
    return val, err


def _exponent_spline(J, tau_max, evaluator, n_nodes=48):
    """Cache the inner decay exponent on a tau grid; spline in ln(1+wc*tau).

    The substitution makes the ohmic zero-temperature exponent exactly
    linear, so interpolation error is negligible there and small in
    general.  Returns (spline, max inner quadrature error).
    """
    w_c = J.omega_c
    tau_lo = 1e-7 / w_c
    taus = np.concatenate((
        [0.0], np.geomspace(tau_lo, tau_max, n_nodes)
    ))
    vals = np.empty_like(taus)
    max_err = 0.0
    vals[0] = 0.0
    for i, tau in enumerate(taus[1:], start=1):
        vals[i], err = evaluator(tau)
        max_err = max(max_err, err)
    u = np.log1p(w_c * taus)
    spline = CubicSpline(u, vals)
    return (lambda tau: spline(np.log1p(w_c * tau))), max_err


def chi_susceptibility(J, beta_T=np.inf, omega_z=0.025):
    """Static spin susceptibility of the local dephasing problem.

    At zero temperature (beta_T = inf):

        chi = -2 int_0^inf dtau exp(-2 tau omega_z) exp(-Gamma(tau)),
        Gamma(tau) = 4 int_0^inf dw J(w) (1 - exp(-tau w)) / w^2.

    At finite temperature the integral runs over tau in [0, beta_T] with
    the imaginary-time spin correlator weight
    cosh(beta_T omega_z - 2 tau omega_z)/cosh(beta_T omega_z) (evaluated
    in log-space) and the finite-temperature decay exponent.  J = None or
    a zero-coupling bath gives the free-spin result -1/omega_z.
    """
    if omega_z <= 0:
        raise ValueError("requires omega_z > 0")
    free = J is None or (J.form == "ohmic-exp-cutoff" and J.alpha == 0.0)

    if np.isinf(beta_T):
        tau_max = 40.0 / omega_z
        if free:
            decay, inner_err = (lambda tau: 0.0), 0.0
        else:
            decay, inner_err = _exponent_spline(
                J, tau_max, lambda tau: _decay_exponent_zero_t(J, tau))

        def outer(tau):
            return math.exp(-2.0 * tau * omega_z - decay(tau))

        val, err = _sint.quad(outer, 0.0, tau_max, limit=400)
        tail = math.exp(-2.0 * tau_max * omega_z) / (2.0 * omega_z)
        chi = -2.0 * val
        resid = 2.0 * (err + tail) + 2.0 * inner_err * abs(val)
        return ChiResult(chi=float(chi), residual=float(resid),
                         beta_T=float(beta_T), omega_z=float(omega_z),
                         bath=None if free else J)

    if beta_T <= 0:
        raise ValueError("beta_T must be positive (or inf)")
    half = 0.5 * beta_T
    if free:
        decay, inner_err = (lambda tau: 0.0), 0.0
    else:
        decay, inner_err = _exponent_spline(
            J, half, lambda tau: _decay_exponent_finite_t(J, beta_T, tau))

    def log_cosh(x):
        ax = abs(x)
        return ax + math.log1p(math.exp(-2.0 * ax)) - math.log(2.0)

    lc_beta = log_cosh(beta_T * omega_z)

    def outer(tau):
        weight = math.exp(
            log_cosh(beta_T * omega_z - 2.0 * tau * omega_z) - lc_beta)
        return weight * math.exp(-decay(tau))

    # integrand is symmetric about beta_T/2
    val, err = _sint.quad(outer, 0.0, half, limit=400)
    chi = -2.0 * val
    resid = 2.0 * err + 2.0 * inner_err * abs(val)
    return ChiResult(chi=float(chi), residual=float(resid),
                     beta_T=float(beta_T), omega_z=float(omega_z),
                     bath=None if free else J)


def upper_incomplete_gamma(a, x, tol=1e-15, max_iter=10 ** 5):
    """Upper incomplete gamma Gamma(a, x) for x > 0.

    Continued-fraction evaluation (modified Lentz) for x >= a + 1, with
    the standard lower-series complement for smaller x.  Implemented
    independently of any quadrature so it can serve as a cross-check
    oracle for the susceptibility integral.
    """
    if x <= 0:
        raise ValueError("requires x > 0")
    log_front = -x + a * math.log(x)
    if x >= a + 1.0:
        # Gamma(a,x) = e^{-x} x^a / (x+1-a - 1(1-a)/(x+3-a - ...))
        tiny = 1e-300
        b = x + 1.0 - a
        c = 1.0 / tiny
        d = 1.0 / b if b != 0 else 1.0 / tiny
        h = d
        for i in range(1, max_iter):
            an = -i * (i - a)
            b += 2.0
            d = an * d + b
            if abs(d) < tiny:
                d = tiny
            c = b + an / c
            if abs(c) < tiny:
                c = tiny
            d = 1.0 / d
            delta = d * c
            h *= delta
            if abs(delta - 1.0) < tol:
                return math.exp(log_front) * h
        raise RuntimeError("continued fraction failed to converge")
    # series for the lower function, then complement
    term = 1.0 / a
    total = term
    n = a
    for _ in range(max_iter):
        n += 1.0
        term *= x / n
        total += term
        if abs(term) < abs(total) * tol:
            lower = math.exp(log_front) * total
            return math.gamma(a) - lower
    raise RuntimeError("series failed to converge")


def chi_ohmic_closed_form(alpha, omega_z, omega_c=1.0):
    """Zero-temperature susceptibility for the s = 1 exponential-cutoff

    bath in closed form:

        chi = -(2/omega_c) e^z z^{2 alpha - 1} Gamma(1 - 2 alpha, z),
        z = 2 omega_z / omega_c,

    obtained by substituting the exact decay exponent
    2 alpha ln(1 + omega_c tau) into the susceptibility integral.  Valid
    for alpha < 1/2.
    """
    if not 0.0 < alpha < 0.5:
        raise ValueError("closed form requires 0 < alpha < 1/2")
    z = 2.0 * omega_z / omega_c
    g_upper = upper_incomplete_gamma(1.0 - 2.0 * alpha, z)
    return -(2.0 / omega_c) * math.exp(z) * z ** (2.0 * alpha - 1.0) * g_upper


def critical_coupling(chi, Omega=1.0, kappa=1.0):
    """Threshold coupling from the susceptibility:

    g_c = sqrt((Omega^2 + kappa^2) / (-2 Omega chi)); requires chi < 0.
    """
    if chi >= 0:
        raise ValueError("requires negative susceptibility")
    return math.sqrt((Omega * Omega + kappa * kappa) / (-2.0 * Omega * chi))


# ---------------------------------------------------------------------------
# Fit reports and helpers
# ---------------------------------------------------------------------------


@dataclass
class FitReport:
    """Deterministic fit result with enough provenance to regenerate it."""

    model: str
    params: dict
    uncertainties: dict
    window: tuple
    residual_norm: float
    details: dict = field(default_factory=dict)


def _linear_fit(x, y):
    """OLS y = slope*x + intercept with standard errors and rms residual."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    if n < 2:
        raise ValueError("need at least two points for a linear fit")
    A = np.column_stack([x, np.ones(n)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    rms = float(np.sqrt(np.mean(resid ** 2)))
    if n > 2:
        sigma2 = float(resid @ resid) / (n - 2)
        cov = sigma2 * np.linalg.inv(A.T @ A)
        errs = np.sqrt(np.diag(cov))
    else:
        errs = np.array([np.nan, np.nan])
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return {
        "slope": float(coef[0]), "intercept": float(coef[1]),
        "slope_err": float(errs[0]), "intercept_err": float(errs[1]),
        "rms": rms, "r_squared": r2,
    }


_COLUMN_ALIASES = {"n_total": ("n_total", "n"), "n": ("n", "n_total")}


def _column(series, name):
    for cand in _COLUMN_ALIASES.get(name, (name,)):
        if cand in series.data:
            return series.data[cand]
    raise KeyError(f"series has no column {name!r}")


# ---------------------------------------------------------------------------
# Order-parameter exponent
# ---------------------------------------------------------------------------


def critical_exponent_fit(sweep, g_c_hint, observable="re_a",
                          amplitude_floor=1e-4):
    """Joint fit of (g_c, exponent, amplitude) to |order param| = A(g-g_c)^b.

    Least squares on log-transformed data: for trial g_c the model is
    linear in (ln A, b); the threshold is then optimized on a bounded
    bracket below the first ordered point.  Requires at least six ordered
    points inside (g_c_hint, 1.2 * g_c_hint).
    """
    gs = np.array([pt.g for pt in sweep])
    vals = np.abs(np.array([getattr(pt, observable) for pt in sweep]))
    ordered = vals > amplitude_floor
    if not np.any(ordered):
        raise ValueError("no ordered points in sweep; cannot fit exponent")
    in_win = ordered & (gs > g_c_hint) & (gs < 1.2 * g_c_hint)
    if np.count_nonzero(in_win) < 6:
        raise ValueError(
            "need >= 6 ordered points within (g_c_hint, 1.2*g_c_hint); "
            f"got {int(np.count_nonzero(in_win))}"
        )
    g_fit = gs[in_win]
    y_fit = np.log(vals[in_win])
    g_min = float(g_fit.min())

    def sse(gc):
        x = np.log(g_fit - gc)
        A = np.column_stack([x, np.ones_like(x)])
        coef, *_ = np.linalg.lstsq(A, y_fit, rcond=None)
        r = y_fit - A @ coef
        return float(r @ r)

    lo = max(1e-6, g_c_hint - 0.5 * (g_min - 1e-9))
    lo = min(lo, g_min - 1e-6)
    res = _sopt.minimize_scalar(
        sse, bounds=(lo, g_min - 1e-9), method="bounded",
        options={"xatol": 1e-10})
    gc = float(res.x)
    x = np.log(g_fit - gc)
    lin = _linear_fit(x, y_fit)
    beta = lin["slope"]
    amp = math.exp(lin["intercept"])
    return FitReport(
        model="|order_param|(g) = A * (g - g_c)^beta",
        params={"g_c": gc, "beta": beta, "amplitude": amp},
        uncertainties={"beta": lin["slope_err"],
                       "amplitude": amp * lin["intercept_err"]},
        window=(float(g_fit.min()), float(g_fit.max())),
        residual_norm=lin["rms"],
        details={
            "observable": observable,
            "g_c_hint": float(g_c_hint),
            "n_points": int(len(g_fit)),
            "g_values": [float(g) for g in g_fit],
            "r_squared": lin["r_squared"],
        },
    )


# ---------------------------------------------------------------------------
# Rise time and early growth rate
# ---------------------------------------------------------------------------


def _first_upward_crossing(t, y, level):
    """First index where y crosses level upward; linear interpolation."""
    above = y >= level
    if not np.any(above):
        return None
    k = int(np.argmax(above))
    if k == 0:
        return float(t[0])
    t0, t1, y0, y1 = t[k - 1], t[k], y[k - 1], y[k]
    if y1 == y0:
        return float(t1)
    return float(t0 + (level - y0) * (t1 - t0) / (y1 - y0))


def _exp_growth_fit(t, y, window):
    """Fit y = a*exp(gamma*t) + c on the window, deterministic init."""
    mask = (t >= window[0]) & (t <= window[1])
    tw, yw = t[mask], y[mask]
    if len(tw) < 5:
        raise ValueError("growth-fit window contains fewer than 5 points")
    c0 = float(yw.min()) - 1e-12
    pos = yw - c0 > 0
    lin = _linear_fit(tw[pos], np.log(yw[pos] - c0))
    p0 = (math.exp(lin["intercept"]), lin["slope"], c0)

    def resid(p):
        a, gam, c = p
        return a * np.exp(np.clip(gam * tw, -700, 700)) + c - yw

    sol = _sopt.least_squares(resid, p0, method="lm", max_nfev=10000)
    a, gam, c = sol.x
    rms = float(np.sqrt(np.mean(sol.fun ** 2)))
    # 1-sigma from linearized covariance
    try:
        jtj = sol.jac.T @ sol.jac
        cov = np.linalg.inv(jtj) * (2 * sol.cost / max(len(tw) - 3, 1))
        g_err = float(np.sqrt(cov[1, 1]))
    except np.linalg.LinAlgError:
        g_err = float("nan")
    return {"amplitude": float(a), "gamma": float(gam), "offset": float(c),
            "gamma_err": g_err, "rms": rms,
            "window": (float(tw[0]), float(tw[-1]))}


def rise_time_fit(series_set, level_fraction=0.5, observable="n_total",
                  gamma_window=(10.0, 50.0), plateau_fraction=0.25):
    """Rise times vs log N, plus the early exponential growth rate.

    For each series the plateau is the mean over the final
    ``plateau_fraction`` of the run, the threshold level is
    ``level_fraction`` of that curve's own plateau, and the rise time is
    the first upward crossing (linear interpolation between grid points).
    A linear fit t_r = A ln N + B follows.  The growth rate comes from an
    exponential fit a*exp(gamma t) + c on ``gamma_window`` clipped per
    curve to its pre-saturation part (t <= t_r).  Series that never cross
    are flagged and excluded from the linear fit.
    """
    rows, flagged = [], []
    for ts in series_set:
        n_of_t = np.asarray(_column(ts, observable), dtype=float)
        t = np.asarray(ts.t, dtype=float)
        n_spins = ts.meta.get("N")
        k0 = int((1.0 - plateau_fraction) * len(t))
        plateau = float(np.mean(n_of_t[k0:]))
        level = level_fraction * plateau
        t_r = _first_upward_crossing(t, n_of_t, level)
        if t_r is None:
            flagged.append({"N": n_spins, "reason": "no upward crossing"})
            continue
        win = (gamma_window[0], min(gamma_window[1], t_r))
        try:
            growth = _exp_growth_fit(t, n_of_t, win)
        except ValueError as exc:
            growth = {"gamma": float("nan"), "error": str(exc),
                      "window": win}
        rows.append({"N": n_spins, "t_r": t_r, "plateau": plateau,
                     "level": level, "growth": growth})
    if len(rows) < 2:
        raise ValueError("need at least two crossing series for the fit")
    ln_n = np.log([r["N"] for r in rows])
    t_rs = np.array([r["t_r"] for r in rows])
    lin = _linear_fit(ln_n, t_rs)
    gammas = [r["growth"]["gamma"] for r in rows
              if np.isfinite(r["growth"].get("gamma", np.nan))]
    return FitReport(
        model="t_r(N) = A * ln(N) + B;  rise(t) = a * exp(gamma t) + c",
        params={"slope": lin["slope"], "intercept": lin["intercept"],
                "gamma_mean": float(np.mean(gammas)) if gammas else
                float("nan")},
        uncertainties={"slope": lin["slope_err"],
                       "intercept": lin["intercept_err"],
                       "gamma_spread": float(np.ptp(gammas)) if gammas
                       else float("nan")},
        window=tuple(float(v) for v in gamma_window),
        residual_norm=lin["rms"],
        details={
            "observable": observable,
            "level_fraction": level_fraction,
            "plateau_fraction": plateau_fraction,
            "series": rows,
            "flagged": flagged,
            "r_squared": lin["r_squared"],
            "gammas": gammas,
        },
    )


# ---------------------------------------------------------------------------
# Relaxation time scaling
# ---------------------------------------------------------------------------


def _exp_relax_fit(t, y):
    """Fit y = c + A exp(-t/tau), deterministic init from the tail."""
    c0 = float(y[-1])
    dev = y - c0
    scale = float(np.max(np.abs(dev)))
    if scale == 0:
        raise ValueError("flat series; nothing to fit")
    usable = np.abs(dev) > 1e-4 * scale
    lin = _linear_fit(t[usable], np.log(np.abs(dev[usable])))
    tau0 = -1.0 / lin["slope"] if lin["slope"] < 0 else (t[-1] - t[0])
    sign = 1.0 if dev[np.argmax(np.abs(dev))] > 0 else -1.0
    p0 = (c0, sign * math.exp(lin["intercept"]), tau0)

    def resid(p):
        c, a, tau = p
        return c + a * np.exp(-t / np.abs(tau)) - y

    sol = _sopt.least_squares(resid, p0, method="lm", max_nfev=20000)
    c, a, tau = sol.x
    rms = float(np.sqrt(np.mean(sol.fun ** 2)))
    return {"offset": float(c), "amplitude": float(a),
            "tau": float(abs(tau)), "rms": rms}


def relaxation_time_fit(series_set, observable="sz", tail_start=None,
                        normal_phase_tol=1e-6):
    """Per-series relaxation times and their power law in N or coupling.

    Each series must sit in the normal phase over the fit window
    (|q|, |p| below ``normal_phase_tol``); the observable tail is fit to
    c + A exp(-t/tau).  Whichever parameter (N at fixed g, or g at fixed
    N) varies across the set is used for the log-log power-law fit of
    tau.  Non-monotone tails produce warnings in the report details.
    """
    rows, warnings = [], []
    for ts in series_set:
        t = np.asarray(ts.t, dtype=float)
        y = np.asarray(_column(ts, observable), dtype=float)
        start = tail_start if tail_start is not None else t[-1] / 3.0
        mask = t >= start
        for comp in ("q", "p"):
            if comp in ts.data:
                amp = np.max(np.abs(ts.data[comp][mask]))
                if amp > normal_phase_tol:
                    raise ValueError(
                        "relaxation fit requires the normal phase: "
                        f"|{comp}| reaches {amp:.2e} in the fit window"
                    )
        tw, yw = t[mask], y[mask]
        fit = _exp_relax_fit(tw, yw)
        dev = np.abs(yw - fit["offset"])
        diffs = np.diff(dev)
        if np.any(diffs > 1e-12 * max(1.0, dev[0])):
            n_bad = int(np.count_nonzero(diffs > 1e-12 * max(1.0, dev[0])))
            warnings.append({
                "N": ts.meta.get("N"), "g": ts.meta.get("g"),
                "warning": f"non-monotone tail ({n_bad} increases)",
            })
        rows.append({"N": ts.meta.get("N"), "g": ts.meta.get("g"),
                     "tau": fit["tau"], "fit": fit,
                     "window": (float(tw[0]), float(tw[-1]))})

    n_vals = np.array([r["N"] for r in rows], dtype=float)
    g_vals = np.array([r["g"] for r in rows], dtype=float)
    taus = np.array([r["tau"] for r in rows])
    n_varies = np.unique(n_vals).size > 1
    g_varies = np.unique(g_vals).size > 1
    if n_varies and g_varies:
        raise ValueError("series set varies both N and g; split the set")
    if not (n_varies or g_varies):
        raise ValueError("series set varies neither N nor g")
    axis, xs = ("N", n_vals) if n_varies else ("g", g_vals)
    lin = _linear_fit(np.log(xs), np.log(taus))
    return FitReport(
        model=f"tau({axis}) = C * {axis}^slope;  "
              "relax(t) = c + A exp(-t/tau)",
        params={"slope": lin["slope"],
                "prefactor": math.exp(lin["intercept"])},
        uncertainties={"slope": lin["slope_err"]},
        window=rows[0]["window"],
        residual_norm=lin["rms"],
        details={"axis": axis, "observable": observable, "series": rows,
                 "warnings": warnings, "r_squared": lin["r_squared"]},
    )


# ---------------------------------------------------------------------------
# Connected-correlator scaling
# ---------------------------------------------------------------------------

_CONNECTED_COLUMNS = ("cxx", "cyy", "czz", "cxy", "cxz", "cyz")


def connected_scaling_fit(runs, t_star, floor=1e-12):
    """Log-log fit of each connected correlator magnitude against N.

    Samples every run at the grid time nearest ``t_star``.  Correlators
    whose magnitude falls below ``floor`` for any run are excluded from
    fitting and listed under the "excluded" key.  Returns a dict mapping
    correlator name to FitReport.
    """
    n_vals, samples = [], []
    for ts in runs:
        t = np.asarray(ts.t, dtype=float)
        k = int(np.argmin(np.abs(t - t_star)))
        n_vals.append(float(ts.meta["N"]))
        samples.append({c: abs(float(ts.data[c][k]))
                        for c in _CONNECTED_COLUMNS if c in ts.data})
    n_vals = np.array(n_vals)
    reports = {}
    excluded = {}
    for c in _CONNECTED_COLUMNS:
        if not all(c in s for s in samples):
            continue
        mags = np.array([s[c] for s in samples])
        if np.any(mags < floor):
            excluded[c] = {
                "note": "below numerical floor", "floor": floor,
                "magnitudes": [float(m) for m in mags],
            }
            continue
        lin = _linear_fit(np.log(n_vals), np.log(mags))
        reports[c] = FitReport(
            model=f"|{c}|(N) = C * N^slope at fixed sample time",
            params={"slope": lin["slope"],
                    "prefactor": math.exp(lin["intercept"])},
            uncertainties={"slope": lin["slope_err"]},
            window=(float(n_vals.min()), float(n_vals.max())),
            residual_norm=lin["rms"],
            details={"t_star": float(t_star),
                     "N_values": [float(n) for n in n_vals],
                     "magnitudes": [float(m) for m in mags],
                     "r_squared": lin["r_squared"]},
        )
    if excluded:
        for rep in reports.values():
            rep.details["excluded"] = excluded
    if not reports and excluded:
        # keep the exclusion record visible even when nothing was fit
        reports["_excluded"] = FitReport(
            model="no correlator above floor", params={}, uncertainties={},
            window=(float(n_vals.min()), float(n_vals.max())),
            residual_norm=0.0, details={"excluded": excluded},
        )
    return reports
