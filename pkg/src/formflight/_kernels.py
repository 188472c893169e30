"""Compiled numerical core of the predictive controller.

Single-shooting machinery over the 9-state vehicle model: Euler rollout,
penalized objective with analytic gradient via a discrete adjoint sweep, and
a projected-gradient descent loop wrapped in an augmented-Lagrangian outer
iteration.  Everything is plain float64 loops so the whole solve runs in
machine code; no randomness anywhere, so repeat calls are bit-identical.

The inequality treatment: each constraint residual g (positive = violated)
contributes ``mu * max(0, g + lambda / (2 mu))**2`` to the objective, which
is the standard augmented-Lagrangian term for inequalities up to a constant.
With all multipliers zero it reduces to the plain quadratic exterior
penalty.  Multiplier updates let the solve reach tight feasibility at
moderate penalty weights, where a pure weight escalation would need
weights so large that first-order descent stalls.

Constraints are only charged on stages the inputs can actually influence:
velocity from stage 1 (thrust enters the velocity within one step), and
position-type constraints (obstacle, reciprocal, flying-area box) from
stage 2, because positions respond to inputs with a two-step delay.  The
stage-0 and stage-1 positions are data; charging for them would stall the
outer iteration forever whenever a vehicle legitimately sits near a
boundary.

Constraint indexing (for the multiplier vector): stage ``l`` owns the block
``(l-1) * (7 + M)`` with layout [position-high xyz, position-low xyz,
velocity, obstacles 0..M-1]; the K reciprocal constraints follow after all
stage blocks.

Packed array conventions:
    state  x      -- (9,)   [p(3), v(3), phi, theta, psi]
    input  u      -- (4,)   [thrust, phi_ref, theta_ref, psi_rate]
    params par    -- (8,)   [tau_phi, tau_theta, k_phi, k_theta, d_x, d_y, d_z, g]
    obstacles obs -- (M, 3) [center_x, center_y, radius]
    reciprocal rec -- (K, 7) [l_c, point(3), outer semi-axes(3)]
"""

import math

import numpy as np
from numba import njit

STATUS_CONVERGED = 0
STATUS_MAX_ITER = 1
STATUS_INFEASIBLE = 2


@njit(cache=True)
def dyn_step(x, u, h, par, out):
    """One forward-Euler step of the vehicle dynamics, written into out."""
    tau_phi = par[0]
    tau_theta = par[1]
    k_phi = par[2]
    k_theta = par[3]
    cph = math.cos(x[6])
    sph = math.sin(x[6])
    cth = math.cos(x[7])
    sth = math.sin(x[7])
    cps = math.cos(x[8])
    sps = math.sin(x[8])
    bx = cps * sth * cph + sps * sph
    by = sps * sth * cph - cps * sph
    bz = cth * cph
    out[0] = x[0] + h * x[3]
    out[1] = x[1] + h * x[4]
    out[2] = x[2] + h * x[5]
    out[3] = x[3] + h * (u[0] * bx - par[4] * x[3])
    out[4] = x[4] + h * (u[0] * by - par[5] * x[4])
    out[5] = x[5] + h * (u[0] * bz - par[7] - par[6] * x[5])
    out[6] = x[6] + h * ((k_phi * u[1] - x[6]) / tau_phi)
    out[7] = x[7] + h * ((k_theta * u[2] - x[7]) / tau_theta)
    out[8] = x[8] + h * u[3]


@njit(cache=True)
def rollout(x0, U, h, par):
    """States produced by applying the input sequence from x0."""
    n = U.shape[0]
    X = np.empty((n + 1, 9))
    for s in range(9):
        X[0, s] = x0[s]
    for l in range(n):
        dyn_step(X[l], U[l], h, par, X[l + 1])
    return X


@njit(cache=True)
def _fill_jacobians(x, u, h, par, A, B):
    """A = d(next state)/d(state), B = d(next state)/d(input) at (x, u)."""
    for i in range(9):
        for j in range(9):
            A[i, j] = 0.0
        for j in range(4):
            B[i, j] = 0.0
        A[i, i] = 1.0
    thrust = u[0]
    cph = math.cos(x[6])
    sph = math.sin(x[6])
    cth = math.cos(x[7])
    sth = math.sin(x[7])
    cps = math.cos(x[8])
    sps = math.sin(x[8])
    A[0, 3] = h
    A[1, 4] = h
    A[2, 5] = h
    A[3, 3] = 1.0 - h * par[4]
    A[4, 4] = 1.0 - h * par[5]
    A[5, 5] = 1.0 - h * par[6]
    # thrust-direction partials under the Z-Y-X convention
    A[3, 6] = h * thrust * (-cps * sth * sph + sps * cph)
    A[4, 6] = h * thrust * (-sps * sth * sph - cps * cph)
    A[5, 6] = h * thrust * (-cth * sph)
    A[3, 7] = h * thrust * (cps * cth * cph)
    A[4, 7] = h * thrust * (sps * cth * cph)
    A[5, 7] = h * thrust * (-sth * cph)
    A[3, 8] = h * thrust * (-sps * sth * cph + cps * sph)
    A[4, 8] = h * thrust * (cps * sth * cph + sps * sph)
    A[6, 6] = 1.0 - h / par[0]
    A[7, 7] = 1.0 - h / par[1]
    B[3, 0] = h * (cps * sth * cph + sps * sph)
    B[4, 0] = h * (sps * sth * cph - cps * sph)
    B[5, 0] = h * (cth * cph)
    B[6, 1] = h * par[2] / par[0]
    B[7, 2] = h * par[3] / par[1]
    B[8, 3] = h


@njit(cache=True)
def _al_term(g, lam, mu):
    """Augmented-Lagrangian value for one inequality residual."""
    m = g + lam / (2.0 * mu)
    if m > 0.0:
        return mu * m * m
    return 0.0


@njit(cache=True)
def _al_coeff(g, lam, mu):
    """d(term)/d(residual): ``2 mu max(0, g + lam/(2 mu))``."""
    m = g + lam / (2.0 * mu)
    if m > 0.0:
        return 2.0 * mu * m
    return 0.0


@njit(cache=True)
def _stage_terms(x, xr, qd, obs, rec, l, pmin, pmax, vmax, mu, lam, n_obs_block, gx):
    """Tracking cost plus constraint terms of one stage; gradient into gx.

    ``n_obs_block`` is the per-stage constraint count ``7 + M``; stage ``l``
    owns multiplier entries ``(l - 1) * n_obs_block`` onward, reciprocal
    entries sit after all stage blocks.
    """
    val = 0.0
    for s in range(9):
        e = x[s] - xr[s]
        val += qd[s] * e * e
        gx[s] = 2.0 * qd[s] * e
    if l == 0:
        return val
    base = (l - 1) * n_obs_block
    if l > 1:
        for c in range(3):
            coef = _al_coeff(x[c] - pmax[c], lam[base + c], mu)
            val += _al_term(x[c] - pmax[c], lam[base + c], mu)
            gx[c] += coef
            coef = _al_coeff(pmin[c] - x[c], lam[base + 3 + c], mu)
            val += _al_term(pmin[c] - x[c], lam[base + 3 + c], mu)
            gx[c] -= coef
    vv = x[3] * x[3] + x[4] * x[4] + x[5] * x[5] - vmax * vmax
    coef = _al_coeff(vv, lam[base + 6], mu)
    if coef > 0.0:
        val += _al_term(vv, lam[base + 6], mu)
        gx[3] += coef * 2.0 * x[3]
        gx[4] += coef * 2.0 * x[4]
        gx[5] += coef * 2.0 * x[5]
    if l > 1:
        for m in range(obs.shape[0]):
            dx = x[0] - obs[m, 0]
            dy = x[1] - obs[m, 1]
            dist = math.sqrt(dx * dx + dy * dy)
            g = obs[m, 2] - dist
            coef = _al_coeff(g, lam[base + 7 + m], mu)
            if coef > 0.0:
                val += _al_term(g, lam[base + 7 + m], mu)
                if dist > 1e-12:
                    gx[0] -= coef * dx / dist
                    gx[1] -= coef * dy / dist
    return val


@njit(cache=True)
def _reciprocal_terms(X, rec, mu, lam, rec_base, G_add, add_grad):
    """Constraint terms of the reciprocal keep-out set; gradients w.r.t.
    the flat position entries are accumulated into ``G_add`` (N+1, 3)."""
    val = 0.0
    for r in range(rec.shape[0]):
        l = int(rec[r, 0])
        if l <= 1:
            continue
        ex = (X[l, 0] - rec[r, 1]) / rec[r, 4]
        ey = (X[l, 1] - rec[r, 2]) / rec[r, 5]
        ez = (X[l, 2] - rec[r, 3]) / rec[r, 6]
        sd = math.sqrt(ex * ex + ey * ey + ez * ez)
        g = 1.0 - sd
        coef = _al_coeff(g, lam[rec_base + r], mu)
        if coef > 0.0:
            val += _al_term(g, lam[rec_base + r], mu)
            if add_grad and sd > 1e-12:
                G_add[l, 0] -= coef * ex / (sd * rec[r, 4])
                G_add[l, 1] -= coef * ey / (sd * rec[r, 5])
                G_add[l, 2] -= coef * ez / (sd * rec[r, 6])
    return val


@njit(cache=True)
def constraint_violation(X, obs, rec, pmin, pmax, vmax):
    """Worst inequality residual over the controllable plan stages.

    Velocity constraints count from stage 1 (thrust acts on velocity within
    one step); position-type constraints count from stage 2, because the
    stage-1 position is already determined by the measured state and would
    otherwise report violations no input can influence.
    """
    worst = 0.0
    for l in range(1, X.shape[0]):
        vv = X[l, 3] ** 2 + X[l, 4] ** 2 + X[l, 5] ** 2 - vmax * vmax
        if vv > worst:
            worst = vv
        if l == 1:
            continue
        for c in range(3):
            hi = X[l, c] - pmax[c]
            if hi > worst:
                worst = hi
            lo = pmin[c] - X[l, c]
            if lo > worst:
                worst = lo
        for m in range(obs.shape[0]):
            dx = X[l, 0] - obs[m, 0]
            dy = X[l, 1] - obs[m, 1]
            viol = obs[m, 2] - math.sqrt(dx * dx + dy * dy)
            if viol > worst:
                worst = viol
    for r in range(rec.shape[0]):
        l = int(rec[r, 0])
        if l <= 1:
            continue
        ex = (X[l, 0] - rec[r, 1]) / rec[r, 4]
        ey = (X[l, 1] - rec[r, 2]) / rec[r, 5]
        ez = (X[l, 2] - rec[r, 3]) / rec[r, 6]
        viol = 1.0 - math.sqrt(ex * ex + ey * ey + ez * ez)
        if viol > worst:
            worst = viol
    return worst


@njit(cache=True)
def update_multipliers(X, obs, rec, pmin, pmax, vmax, mu, lam):
    """First-order multiplier update ``lam <- max(0, lam + 2 mu g)``."""
    n_obs_block = 7 + obs.shape[0]
    for l in range(1, X.shape[0]):
        base = (l - 1) * n_obs_block
        vv = X[l, 3] ** 2 + X[l, 4] ** 2 + X[l, 5] ** 2 - vmax * vmax
        lam[base + 6] = max(0.0, lam[base + 6] + 2.0 * mu * vv)
        if l == 1:
            continue
        for c in range(3):
            lam[base + c] = max(0.0, lam[base + c] + 2.0 * mu * (X[l, c] - pmax[c]))
            lam[base + 3 + c] = max(
                0.0, lam[base + 3 + c] + 2.0 * mu * (pmin[c] - X[l, c])
            )
        for m in range(obs.shape[0]):
            dx = X[l, 0] - obs[m, 0]
            dy = X[l, 1] - obs[m, 1]
            g = obs[m, 2] - math.sqrt(dx * dx + dy * dy)
            lam[base + 7 + m] = max(0.0, lam[base + 7 + m] + 2.0 * mu * g)
    rec_base = (X.shape[0] - 1) * n_obs_block
    for r in range(rec.shape[0]):
        l = int(rec[r, 0])
        if l <= 1:
            continue
        ex = (X[l, 0] - rec[r, 1]) / rec[r, 4]
        ey = (X[l, 1] - rec[r, 2]) / rec[r, 5]
        ez = (X[l, 2] - rec[r, 3]) / rec[r, 6]
        g = 1.0 - math.sqrt(ex * ex + ey * ey + ez * ez)
        lam[rec_base + r] = max(0.0, lam[rec_base + r] + 2.0 * mu * g)


@njit(cache=True)
def tracking_cost(X, U, xref, uref, qd, qud):
    """Unpenalized objective: state terms l=0..N, input terms l=0..N-1."""
    val = 0.0
    n = U.shape[0]
    for l in range(n + 1):
        for s in range(9):
            e = X[l, s] - xref[l, s]
            val += qd[s] * e * e
    for l in range(n):
        for c in range(4):
            e = U[l, c] - uref[l, c]
            val += qud[c] * e * e
    return val


@njit(cache=True)
def penalized_value(
    U, x0, xref, uref, qd, qud, obs, rec, pmin, pmax, vmax, par, h, mu, lam
):
    """Augmented objective and worst violation (no gradient)."""
    n = U.shape[0]
    n_obs_block = 7 + obs.shape[0]
    X = rollout(x0, U, h, par)
    gx = np.empty(9)
    dummy = np.empty((1, 3))
    val = 0.0
    for l in range(n):
        for c in range(4):
            e = U[l, c] - uref[l, c]
            val += qud[c] * e * e
    for l in range(n + 1):
        val += _stage_terms(
            X[l], xref[l], qd, obs, rec, l, pmin, pmax, vmax, mu, lam, n_obs_block, gx
        )
    val += _reciprocal_terms(X, rec, mu, lam, n * n_obs_block, dummy, False)
    viol = constraint_violation(X, obs, rec, pmin, pmax, vmax)
    return val, viol


@njit(cache=True)
def penalized_value_grad(
    U, x0, xref, uref, qd, qud, obs, rec, pmin, pmax, vmax, par, h, mu, lam, G
):
    """Augmented objective, worst violation, and gradient (into G).

    The gradient is computed by a reverse sweep with the exact Jacobians of
    the Euler step, so it matches finite differences of the same objective.
    """
    n = U.shape[0]
    n_obs_block = 7 + obs.shape[0]
    X = rollout(x0, U, h, par)
    val = 0.0
    for l in range(n):
        for c in range(4):
            e = U[l, c] - uref[l, c]
            val += qud[c] * e * e
            G[l, c] = 2.0 * qud[c] * e
    # stage-wise position gradients of the reciprocal terms, to be folded
    # into the adjoint sweep alongside the per-stage terms
    G_rec = np.zeros((n + 1, 3))
    val += _reciprocal_terms(X, rec, mu, lam, n * n_obs_block, G_rec, True)
    lam_adj = np.empty(9)
    lam_new = np.empty(9)
    gx = np.empty(9)
    A = np.empty((9, 9))
    B = np.empty((9, 4))
    val += _stage_terms(
        X[n], xref[n], qd, obs, rec, n, pmin, pmax, vmax, mu, lam, n_obs_block, gx
    )
    for s in range(9):
        lam_adj[s] = gx[s]
    for c in range(3):
        lam_adj[c] += G_rec[n, c]
    for l in range(n - 1, -1, -1):
        _fill_jacobians(X[l], U[l], h, par, A, B)
        for c in range(4):
            acc = 0.0
            for s in range(9):
                acc += B[s, c] * lam_adj[s]
            G[l, c] += acc
        val += _stage_terms(
            X[l], xref[l], qd, obs, rec, l, pmin, pmax, vmax, mu, lam, n_obs_block, gx
        )
        for s in range(9):
            acc = gx[s]
            for r in range(9):
                acc += A[r, s] * lam_adj[r]
            lam_new[s] = acc
        for c in range(3):
            lam_new[c] += G_rec[l, c]
        for s in range(9):
            lam_adj[s] = lam_new[s]
    viol = constraint_violation(X, obs, rec, pmin, pmax, vmax)
    return val, viol


@njit(cache=True)
def solve_ocp(
    U_init,
    x0,
    xref,
    uref,
    qd,
    qud,
    obs,
    rec,
    pmin,
    pmax,
    vmax,
    umin,
    umax,
    par,
    h,
    scale,
    lam_init,
    mu_start,
    mu_cap,
    eps_c,
    max_iters,
):
    """Augmented-Lagrangian projected-gradient solve of one control cycle.

    Inner iterations are spectral (Barzilai-Borwein) projected-gradient
    steps with monotone Armijo backtracking, which keep every iterate inside
    the input box; a fixed per-channel diagonal scaling evens out the
    thrust/attitude conditioning.  Whenever the inner descent stalls -- or
    spends 12 iterations while infeasible -- the multipliers are updated;
    the penalty weight also doubles (capped) unless the worst violation
    improved by at least 4x since the previous update.

    ``lam_init`` carries multiplier estimates (receding-horizon-shifted from
    the previous solve), so a constraint that stays active across steps does
    not have to be rediscovered from zero every cycle.

    Returns ``(U, iterations, status, mu_final, lam)`` with status one of
    the STATUS_* codes.
    """
    stage_cap = 12
    n = U_init.shape[0]
    lam = lam_init.copy()
    U = np.empty((n, 4))
    for l in range(n):
        for c in range(4):
            u = U_init[l, c]
            if u < umin[c]:
                u = umin[c]
            if u > umax[c]:
                u = umax[c]
            U[l, c] = u
    G = np.empty((n, 4))
    G_new = np.empty((n, 4))
    D = np.empty((n, 4))
    U_cand = np.empty((n, 4))
    sq = np.empty(4)
    for c in range(4):
        sq[c] = scale[c] * scale[c]
    mu = mu_start
    f, viol = penalized_value_grad(
        U, x0, xref, uref, qd, qud, obs, rec, pmin, pmax, vmax, par, h, mu, lam, G
    )
    gmax = 0.0
    for l in range(n):
        for c in range(4):
            ag = abs(G[l, c]) * sq[c]
            if ag > gmax:
                gmax = ag
    t = 1.0 / gmax if gmax > 0.0 else 1.0
    iters = 0
    stage_iters = 0
    viol_at_update = np.inf
    status = STATUS_MAX_ITER
    while iters < max_iters:
        # projected direction at the current spectral step length
        dinf = 0.0
        gd = 0.0
        for l in range(n):
            for c in range(4):
                w = U[l, c] - t * sq[c] * G[l, c]
                if w < umin[c]:
                    w = umin[c]
                if w > umax[c]:
                    w = umax[c]
                d = w - U[l, c]
                D[l, c] = d
                ad = abs(d)
                if ad > dinf:
                    dinf = ad
                gd += G[l, c] * d
        stalled = dinf <= 1e-12
        accepted = False
        f_new = f
        viol_new = viol
        if not stalled:
            alpha = 1.0
            while alpha >= 1e-10:
                for l in range(n):
                    for c in range(4):
                        U_cand[l, c] = U[l, c] + alpha * D[l, c]
                f_cand, viol_cand = penalized_value(
                    U_cand, x0, xref, uref, qd, qud, obs, rec,
                    pmin, pmax, vmax, par, h, mu, lam,
                )
                if f_cand <= f + 1e-4 * alpha * gd:
                    accepted = True
                    f_new = f_cand
                    viol_new = viol_cand
                    break
                alpha *= 0.5
        if accepted:
            iters += 1
            stage_iters += 1
            fg, vg = penalized_value_grad(
                U_cand, x0, xref, uref, qd, qud, obs, rec,
                pmin, pmax, vmax, par, h, mu, lam, G_new,
            )
            # spectral step from the accepted displacement (in scaled space)
            ss = 0.0
            sy = 0.0
            for l in range(n):
                for c in range(4):
                    s_lc = U_cand[l, c] - U[l, c]
                    y_lc = G_new[l, c] - G[l, c]
                    ss += s_lc * s_lc / sq[c]
                    sy += s_lc * y_lc
                    U[l, c] = U_cand[l, c]
                    G[l, c] = G_new[l, c]
            if sy > 1e-16:
                t = ss / sy
                if t < 1e-7:
                    t = 1e-7
                elif t > 1e7:
                    t = 1e7
            else:
                t = 1e7
            decrease = f - f_new
            f = f_new
            viol = viol_new
            if decrease > 1e-9 * (1.0 + abs(f)) and not (
                viol > eps_c and stage_iters >= stage_cap
            ):
                continue
        # inner descent stalled (tiny direction, line-search failure,
        # negligible decrease, or infeasible past the stage cap)
        if viol <= eps_c:
            status = STATUS_CONVERGED
            break
        if viol > 0.95 * viol_at_update and mu >= mu_cap:
            # neither multipliers nor the weight can make further progress
            status = STATUS_INFEASIBLE
            break
        X = rollout(x0, U, h, par)
        update_multipliers(X, obs, rec, pmin, pmax, vmax, mu, lam)
        if viol > 0.25 * viol_at_update and mu < mu_cap:
            mu *= 2.0
            if mu > mu_cap:
                mu = mu_cap
        viol_at_update = viol
        stage_iters = 0
        f, viol = penalized_value_grad(
            U, x0, xref, uref, qd, qud, obs, rec, pmin, pmax, vmax, par, h, mu, lam, G
        )
        gmax = 0.0
        for l in range(n):
            for c in range(4):
                ag = abs(G[l, c]) * sq[c]
                if ag > gmax:
                    gmax = ag
        t = 1.0 / gmax if gmax > 0.0 else 1.0
    if status == STATUS_MAX_ITER and viol > eps_c:
        status = STATUS_INFEASIBLE
    return U, iters, status, mu, lam
