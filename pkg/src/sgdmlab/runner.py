"""Seed-vectorized trajectory runner.

Trajectories are pure functions of (seed, config): every seed owns a
counter-addressed noise stream, the batched update applies the same
elementwise operations as the single-step reference, and independent
seeds evolve side by side in one array without interacting.  Running a
seed alone or inside a batch yields bitwise-identical records.

Per-window statistics (aggregated error, iterate spread, merit ledger at
anchors) are accumulated streaming so that million-step runs never hold
full iterate histories; a block buffer of recent iterates serves the
scalar record grid and the window segments.
"""

from __future__ import annotations

import numpy as np

from . import windows as win
from .noise import NoiseModel, NoiseStream
from .optimizer import MomentumParams, merit_zeta
from .problems import Problem
from .schedules import StepSchedule
from .trajectory import (RecordingPolicy, RunBatch, Trajectory, WindowTrace,
                         decade_of, n_decades, record_grid)

STEP_NORM_TOL = 1e-12


def _norms(A):
    """Euclidean norms over the trailing axis."""
    return np.sqrt(np.einsum("...d,...d->...", A, A))


class _WindowAccumulator:
    """Streaming per-window statistics over a run batch."""

    def __init__(self, partition: win.WindowPartition, problem: Problem,
                 params: MomentumParams, n_seeds: int, detail_lo: int,
                 profile: bool, horizon: int, keep_boundaries: bool = False):
        self.part = partition
        self.gammas = partition.gammas
        self.W = partition.n_windows
        self.problem = problem
        self.params = params
        self.lam = params.lam
        self.zeta = merit_zeta(problem, params)
        self.detail_lo = detail_lo
        S, d = n_seeds, problem.dim
        Wd = max(self.W - detail_lo + 1, 0)
        self.s_arr = np.zeros((Wd, S))
        self.xdev_arr = np.zeros((Wd, S))
        self.zdev_arr = np.zeros((Wd, S))
        nb = Wd + 1 if Wd > 0 else 0
        self.zx_arr = np.zeros((nb, S))
        self.fz_arr = np.zeros((nb, S))
        self.gz_arr = np.zeros((nb, S))
        self.merit_arr = np.zeros((nb, S))
        self.gm2_arr = np.zeros((nb, S))
        self.boundary_step = np.zeros((self.W, S)) if profile else None
        self.boundary_x = np.zeros((self.W + 1, S, d)) if keep_boundaries else None
        self.boundary_xp = np.zeros((self.W + 1, S, d)) if keep_boundaries else None
        nd = n_decades(horizon)
        self.decade_d_sum = np.zeros((nd, S))
        self.decade_d_cnt = np.zeros(nd)
        # running window state
        self.w = 1
        self.anchor_x = None
        self.anchor_z = None
        self.psum = np.zeros((S, d))
        self.smax = np.zeros(S)
        self.xmax = np.zeros(S)
        self.zmax = np.zeros(S)

    def start(self, X1: np.ndarray):
        self.anchor_x = X1.copy()
        self.anchor_z = X1.copy()      # the run starts from a standstill
        if self.boundary_x is not None:
            self.boundary_x[0] = X1
            self.boundary_xp[0] = X1   # x^0 = x^1
        self._boundary_eval(1, self.anchor_x, self.anchor_z)

    def _boundary_eval(self, bidx: int, ax: np.ndarray, az: np.ndarray):
        j = bidx - self.detail_lo
        if not 0 <= j < len(self.zx_arr):
            return
        diff = az - ax
        zx = _norms(diff)
        gzv = self.problem.grad_batch(az)
        gz = _norms(gzv)
        fz = self.problem.f_batch(az)
        gblock = gzv + (2.0 * self.zeta) * diff
        self.zx_arr[j] = zx
        self.fz_arr[j] = fz
        self.gz_arr[j] = gz
        self.merit_arr[j] = fz + self.zeta * zx**2
        self.gm2_arr[j] = (4.0 * self.zeta**2) * zx**2 + np.einsum("sd,sd->s", gblock, gblock)

    def _close_window(self, w: int, ax_new: np.ndarray, az_new: np.ndarray,
                      ax_prev: np.ndarray):
        j = w - self.detail_lo
        zmax = self.xmax if self.lam == 0.0 else self.zmax
        if 0 <= j < len(self.s_arr):
            self.s_arr[j] = self.smax
            self.xdev_arr[j] = self.xmax
            self.zdev_arr[j] = zmax
        if self.boundary_step is not None:
            self.boundary_step[w - 1] = _norms(ax_new - self.anchor_x)
        if self.boundary_x is not None:
            self.boundary_x[w] = ax_new
            self.boundary_xp[w] = ax_prev
        dec = int(decade_of(self.gammas[w - 1]))
        self.decade_d_sum[dec] += np.maximum(self.xmax, zmax)
        self.decade_d_cnt[dec] += 1
        self.anchor_x = ax_new.copy()
        self.anchor_z = az_new.copy()
        self._boundary_eval(w + 1, self.anchor_x, self.anchor_z)
        self.psum[:] = 0.0
        self.smax[:] = 0.0
        self.xmax[:] = 0.0
        self.zmax[:] = 0.0
        self.w = w + 1

    def process_block(self, b0: int, xrows: np.ndarray, zrows: np.ndarray,
                      wrows: np.ndarray, n: int):
        """Advance windows over iterates x^{b0}..x^{b0+n} (rows 0..n)."""
        w0 = self.w
        if w0 > self.W:
            return
        # fast path: the block is exactly a run of single-step windows
        hi = w0 + n
        if hi <= self.W + 1 and self.gammas[w0 - 1] == b0 \
                and np.array_equal(self.gammas[w0 - 1:hi],
                                   np.arange(b0, b0 + n + 1, dtype=np.int64)):
            self._singles_block(b0, xrows, zrows, wrows, n)
            return
        t_lo = b0 + 1
        end = b0 + n
        while t_lo <= end and self.w <= self.W:
            w = self.w
            gend = int(self.gammas[w])
            t_hi = min(gend, end)
            j0, j1 = t_lo - b0, t_hi - b0
            seg_w = wrows[j0 - 1:j1]
            P = np.cumsum(np.concatenate([self.psum[None], seg_w], axis=0), axis=0)[1:]
            self.smax = np.maximum(self.smax, _norms(P).max(axis=0))
            self.psum = P[-1]
            dx = xrows[j0:j1 + 1] - self.anchor_x
            self.xmax = np.maximum(self.xmax, _norms(dx).max(axis=0))
            if self.lam != 0.0:
                dz = zrows[j0:j1 + 1] - self.anchor_z
                self.zmax = np.maximum(self.zmax, _norms(dz).max(axis=0))
            if t_hi == gend:
                self._close_window(w, xrows[j1], zrows[j1], xrows[j1 - 1])
            t_lo = t_hi + 1

    def _singles_block(self, b0, xrows, zrows, wrows, n):
        w0 = self.w
        s_blk = _norms(wrows)                       # (n, S)
        xdev = _norms(np.diff(xrows, axis=0))
        zdev = xdev if self.lam == 0.0 else _norms(np.diff(zrows, axis=0))
        d_blk = np.maximum(xdev, zdev)
        dec = decade_of(np.arange(b0, b0 + n))
        np.add.at(self.decade_d_sum, dec, d_blk)
        np.add.at(self.decade_d_cnt, dec, 1.0)
        lo = self.detail_lo
        a0 = max(w0, lo)
        a1 = min(w0 + n - 1, self.W)                # windows w0..w0+n-1
        if a0 <= a1:
            src = slice(a0 - w0, a1 - w0 + 1)
            dst = slice(a0 - lo, a1 - lo + 1)
            self.s_arr[dst] = s_blk[src]
            self.xdev_arr[dst] = xdev[src]
            self.zdev_arr[dst] = zdev[src]
        # anchors created by the closed windows are boundaries w0+1..w0+n
        for b in range(max(w0 + 1, lo), min(w0 + n, self.W + 1) + 1):
            self._boundary_eval(b, xrows[b - w0], zrows[b - w0])
        if self.boundary_step is not None:
            self.boundary_step[w0 - 1:w0 - 1 + n] = xdev
        if self.boundary_x is not None:
            self.boundary_x[w0:w0 + n] = xrows[1:n + 1]
            self.boundary_xp[w0:w0 + n] = xrows[0:n]
        self.anchor_x = xrows[n].copy()
        self.anchor_z = zrows[n].copy()
        self.w = w0 + n

    def finish(self) -> WindowTrace:
        return WindowTrace(
            n_windows=self.W, detail_lo=self.detail_lo,
            s=self.s_arr, xdev=self.xdev_arr, zdev=self.zdev_arr,
            zx=self.zx_arr, f_z=self.fz_arr, gz=self.gz_arr,
            merit=self.merit_arr, merit_grad_sq=self.gm2_arr,
            boundary_step=self.boundary_step,
            decade_d_sum=self.decade_d_sum, decade_d_cnt=self.decade_d_cnt,
            boundary_x=self.boundary_x, boundary_x_prev=self.boundary_xp)


def run_batch(problem: Problem, params: MomentumParams, schedule: StepSchedule,
              noise: NoiseModel, seeds, horizon: int, x0=None,
              recording: RecordingPolicy | None = None,
              partition: win.WindowPartition | None = None) -> RunBatch:
    """Run one trajectory per seed, vectorized across seeds."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    rp = recording or RecordingPolicy()
    seeds = [int(s) for s in seeds]
    S, d = len(seeds), problem.dim
    steps = horizon - 1
    alphas = schedule.prefix(steps)
    if x0 is None:
        x0 = np.ones(d)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (d,):
        raise ValueError(f"x0 must have shape ({d},)")
    noise.check_dim(d)

    config = {"problem": problem, "params": params, "schedule": schedule,
              "noise": noise, "x0": x0.copy(), "horizon": horizon}

    grid = record_grid(horizon, rp)
    G = len(grid)
    rec_f = np.empty((G, S))
    rec_g = np.empty((G, S))
    rec_xz = np.empty((G, S))
    rec_dist = np.empty((G, S)) if problem.x_star is not None else None

    acc = None
    if partition is not None:
        if partition.horizon != horizon:
            raise ValueError("partition horizon must equal the run horizon")
        if rp.window_profile or rp.window_detail == "full":
            detail_lo = 1
        elif rp.window_detail == "off":
            detail_lo = partition.n_windows + 1
        else:
            kt = win.applicability_index(partition, schedule, problem, params)
            detail_lo = kt if kt is not None else partition.n_windows + 1
        acc = _WindowAccumulator(partition, problem, params, S, detail_lo,
                                 rp.window_profile, horizon,
                                 keep_boundaries=rp.store_boundary_vectors)

    lam, nu = params.lam, params.nu
    c2 = lam / (1.0 - lam) if lam != 0.0 else 0.0
    streams = [NoiseStream(noise, d, s) for s in seeds]

    X = np.tile(x0, (S, 1))
    Xp = X.copy()
    active = np.ones(S, dtype=bool)
    all_active = True
    mask_col = active[:, None].astype(float)
    diverged_at = np.zeros(S, dtype=np.int64)
    box_exits = np.zeros(S, dtype=np.int64)
    box = problem.box_radius
    cap = rp.divergence_cap

    X_hist = np.empty((horizon, S, d)) if rp.store_vectors else None
    E_hist = np.empty((steps, S, d)) if rp.store_noise else None
    if X_hist is not None:
        X_hist[0] = X
    sn_ok = np.zeros(S, dtype=np.int64) if rp.track_step_norms else None
    sn_total = np.zeros(S) if rp.track_step_norms else None

    if acc is not None:
        acc.start(X)

    # records at k = 1
    gp = 0
    if G and grid[0] == 1:
        rec_f[0] = problem.f_batch(X)
        rec_g[0] = _norms(problem.grad_batch(X))
        rec_xz[0] = 0.0
        if rec_dist is not None:
            rec_dist[0] = _norms(X - problem.x_star)
        gp = 1

    B = max(rp.block_size, 2)
    xrows = np.empty((B + 1, S, d))
    prev_row = None
    for b0 in range(1, steps + 1, B):
        n = min(B, steps + 1 - b0)
        E = np.stack([st.take(n) for st in streams], axis=1)   # (n, S, d)
        if E_hist is not None:
            E_hist[b0 - 1:b0 - 1 + n] = E
        xrows[0] = X
        with np.errstate(over="ignore", invalid="ignore"):
            for i in range(n):
                dX = X - Xp
                xl = X + nu * dX if nu else X
                g = problem.grad_batch(xl) - E[i]
                dXn = lam * dX - alphas[b0 - 1 + i] * g
                if not all_active:
                    np.multiply(dXn, mask_col, out=dXn)
                Xn = xrows[i + 1]
                np.add(X, dXn, out=Xn)
                Xp = X
                X = Xn
        rows = xrows[:n + 1]
        # divergence scan: non-finite values or norm beyond the cap
        with np.errstate(invalid="ignore", over="ignore"):
            rnorm = _norms(rows[1:])                           # (n, S)
            bad = ~np.isfinite(rows[1:]).all(axis=2) | ~np.isfinite(rnorm) | (rnorm > cap)
        if bad.any():
            for s_idx in np.nonzero(bad.any(axis=0) & active)[0]:
                ib = int(np.argmax(bad[:, s_idx])) + 1
                diverged_at[s_idx] = b0 + ib - 1
                rows[ib:, s_idx] = rows[ib - 1, s_idx]
                active[s_idx] = False
            all_active = False
            mask_col = active[:, None].astype(float)
            X = rows[n].copy()
            Xp = rows[n - 1].copy()
            rnorm = _norms(rows[1:])
        if np.isfinite(box):
            box_exits += (rnorm > box).sum(axis=0)

        if X_hist is not None:
            X_hist[b0:b0 + n] = rows[1:]

        # interpolation rows: z^t = x^t/(1-lam) - lam x^{t-1}/(1-lam)
        if lam == 0.0:
            zrows = rows
        else:
            c1 = 1.0 / (1.0 - lam)
            lagged = np.empty_like(rows)
            lagged[1:] = rows[:-1]
            lagged[0] = rows[0] if b0 == 1 else prev_row
            zrows = rows * c1 - (lam * c1) * lagged
            if b0 == 1:
                zrows[0] = rows[0]      # the run starts from a standstill
            prev_row = rows[n - 1].copy()

        if sn_ok is not None:
            dn = _norms(np.diff(rows, axis=0))
            sn_ok += (dn >= alphas[b0 - 1:b0 - 1 + n, None] - STEP_NORM_TOL).sum(axis=0)
            sn_total += dn.sum(axis=0)

        if acc is not None:
            wrows = E * alphas[b0 - 1:b0 - 1 + n, None, None]
            acc.process_block(b0, rows, zrows, wrows, n)

        while gp < G and grid[gp] <= b0 + n:
            row = int(grid[gp] - b0)
            xk = rows[row]
            rec_f[gp] = problem.f_batch(xk)
            rec_g[gp] = _norms(problem.grad_batch(xk))
            rec_xz[gp] = c2 * _norms(xk - rows[row - 1]) if lam != 0.0 else 0.0
            if rec_dist is not None:
                rec_dist[gp] = _norms(xk - problem.x_star)
            gp += 1

    return RunBatch(
        seeds=seeds, horizon=horizon, config=config, ks=grid,
        f=rec_f, grad_norm=rec_g, dist=rec_dist, xz=rec_xz,
        x_final=X.copy(), x_prev_final=Xp.copy(),
        diverged_at=diverged_at, box_exits=box_exits,
        window=acc.finish() if acc is not None else None,
        X_hist=X_hist, E_hist=E_hist,
        step_norm_ok=sn_ok, step_norm_total=sn_total)


def run_trajectory(problem: Problem, params: MomentumParams, schedule: StepSchedule,
                   noise: NoiseModel, seed: int, horizon: int, x0=None,
                   recording: RecordingPolicy | None = None,
                   partition: win.WindowPartition | None = None) -> Trajectory:
    """Single-seed run; identical to the matching slice of any batch."""
    batch = run_batch(problem, params, schedule, noise, [seed], horizon,
                      x0=x0, recording=recording, partition=partition)
    return batch.trajectory(0)
