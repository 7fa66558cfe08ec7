"""Vectorized simulation engine: many independent worlds advanced in lockstep.

One engine call simulates K = genomes x worlds_per_genome worlds that share
(L, N, B, T, scenario) but have independent seeds. Every world is a pure
function of (genome, seed) and reproduces the single-world reference in
``world.py`` bit-exactly.

Per-world RNG contract (PCG64 seeded with the world seed):
  1. ``sample_placement`` draws: N + B distinct cells, then N headings.
  2. One block of T x N uniform doubles; the actuation order at step t is
     the argsort of row t.

Per-step event order: sense all robots; compare the pending prediction (or
the scenario's fixed vector) against the fresh sensors; run the action
network; in emergent mode run the prediction network; actuate robots
sequentially in the step's shuffled order. Emergent mode therefore yields
T - 1 comparisons (a prediction meets the *next* step's sensors), fixed
vectors yield T.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .networks import (
    ACTION_OUTPUTS,
    HIDDEN_UNITS,
    NET_INPUTS,
    Genome,
    Scenario,
    decode,
    scenario_prediction,
    sigmoid_inplace,
    stable_rows_matmul,
)
from .world import (
    SENSOR_COUNT,
    SENSOR_FRAME,
    HEADING_VECTORS,
    Heading,
    RobotPose,
    SimConfig,
    render_cells,
    sample_placement,
)

# Occupancy codes used by the engine grids.
_FREE, _ROBOT, _BLOCK = 0, 1, 2

_TABLE_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _tables(L: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-grid lookup tables indexed by cell * 4 + heading.

    ahead[i]: flat cell one step forward. sensed[i]: the six sensed flat
    cells in sensor index order.
    """
    cached = _TABLE_CACHE.get(L)
    if cached is not None:
        return cached
    cells = np.arange(L * L, dtype=np.int64)
    x, y = cells % L, cells // L
    ahead = np.empty(L * L * 4, dtype=np.int64)
    sensed = np.empty((L * L * 4, 6), dtype=np.int64)
    for h in Heading:
        fx, fy = HEADING_VECTORS[h]
        lx, ly = HEADING_VECTORS[h.turned(-1)]
        ahead[cells * 4 + h] = ((y + fy) % L) * L + (x + fx) % L
        for s_idx, (f, s) in enumerate(SENSOR_FRAME):
            sx = (x + f * fx + s * lx) % L
            sy = (y + f * fy + s * ly) % L
            sensed[cells * 4 + h, s_idx] = sy * L + sx
    _TABLE_CACHE[L] = (ahead, sensed)
    return ahead, sensed


@dataclass
class RunTrace:
    """Everything the post-evaluation metrics need from one recorded run."""

    side_length: int
    n_robots: int
    n_blocks: int
    steps: int
    n_sensors: int
    comparisons: int
    error_sum: float
    tau: int
    start_blocks: frozenset[tuple[int, int]]
    end_blocks: frozenset[tuple[int, int]]
    robot_window: np.ndarray  # (tau + 1, N, 2) of (x, y), times T-tau .. T
    block_window: np.ndarray  # (tau + 1, B, 2), block identity preserved
    predictions: Optional[np.ndarray] = None  # (comparisons, N, 12)
    sensor_log: Optional[np.ndarray] = None  # (comparisons, N, 12)
    snapshots: Optional[list[tuple[int, str]]] = None


class _Recorder:
    """Collects windows, optional prediction/sensor logs and snapshots."""

    def __init__(self, K: int, N: int, B: int, T: int, L: int,
                 record_io: bool, snapshot_every: Optional[int]):
        self.L = L
        self.tau = (L * L) // 2
        if T < self.tau:
            raise ValueError(
                f"run of {T} steps is shorter than the metrics window "
                f"tau={self.tau}"
            )
        self.window_start = T - self.tau
        self.robot_window = np.zeros((K, self.tau + 1, N, 2), dtype=np.int64)
        self.block_window = np.zeros((K, self.tau + 1, max(B, 1), 2), dtype=np.int64)
        self.record_io = record_io
        self.preds: list[np.ndarray] = []
        self.sensors: list[np.ndarray] = []
        self.snapshot_every = snapshot_every
        self.snapshots: list[list[tuple[int, str]]] = [[] for _ in range(K)]

    def record_positions(self, t: int, pos_x, pos_y, blk_x, blk_y) -> None:
        if t >= self.window_start:
            i = t - self.window_start
            self.robot_window[:, i, :, 0] = pos_x
            self.robot_window[:, i, :, 1] = pos_y
            if blk_x.shape[1]:
                self.block_window[:, i, :, 0] = blk_x
                self.block_window[:, i, :, 1] = blk_y

    def record_io_pair(self, preds: np.ndarray, sensors: np.ndarray) -> None:
        if self.record_io:
            self.preds.append(preds.copy())
            self.sensors.append(sensors.copy())

    def maybe_snapshot(self, t: int, T: int, pos_x, pos_y, rh, blk_x, blk_y) -> None:
        if self.snapshot_every is None:
            return
        if t % self.snapshot_every == 0 or t == T:
            for k in range(len(self.snapshots)):
                robots = [
                    RobotPose(int(pos_x[k, n]), int(pos_y[k, n]),
                              Heading(int(rh[k, n])))
                    for n in range(pos_x.shape[1])
                ]
                blocks = [
                    (int(blk_x[k, j]), int(blk_y[k, j]))
                    for j in range(blk_x.shape[1])
                ]
                self.snapshots[k].append((t, render_cells(self.L, robots, blocks)))


def _verify_state(L, N, B, occ, pos, bcell, bid, woff):
    """Invariant sweep used by fuzz tests (verify_every mode)."""
    K = pos.shape[0]
    grid = occ.reshape(K, L * L)
    assert np.all((grid == _ROBOT).sum(axis=1) == N), "robot count violated"
    assert np.all((grid == _BLOCK).sum(axis=1) == B), "block count violated"
    assert np.all((pos >= 0) & (pos < L * L)), "robot cell out of range"
    assert np.all(occ[(woff[:, None] + pos).ravel()] == _ROBOT), \
        "robot cell not marked occupied"
    sorted_pos = np.sort(pos, axis=1)
    assert np.all(sorted_pos[:, 1:] != sorted_pos[:, :-1]), "robots overlap"
    if B:
        assert np.all((bcell >= 0) & (bcell < L * L)), "block cell out of range"
        assert np.all(occ[(woff[:, None] + bcell).ravel()] == _BLOCK), \
            "block cell not marked occupied"
        sorted_b = np.sort(bcell, axis=1)
        assert np.all(sorted_b[:, 1:] != sorted_b[:, :-1]), "blocks overlap"
        assert np.all(
            bid[(woff[:, None] + bcell).ravel()]
            == np.tile(np.arange(B), K)
        ), "block id map inconsistent"


def _stack(arrays: Sequence[np.ndarray]) -> np.ndarray:
    return np.ascontiguousarray(np.stack(arrays))


def _run_batch(
    genomes: Sequence[Genome],
    L: int,
    N: int,
    B: int,
    T: int,
    scenario: Scenario,
    seeds: np.ndarray,
    recorder: Optional[_Recorder] = None,
    verify_every: int = 0,
) -> tuple[np.ndarray, int]:
    """Simulate len(genomes) x worlds_per_genome worlds; return error sums.

    seeds has shape (G, W); world k = g * W + w runs genome g with seed
    seeds[g, w]. Returns (error_sums with shape (G, W), comparison count).
    """
    G = len(genomes)
    seeds = np.asarray(seeds, dtype=np.uint64)
    if seeds.shape[0] != G:
        raise ValueError("one seed row per genome required")
    W = seeds.shape[1]
    K = G * W
    M = W * N
    emergent = scenario is Scenario.EMERGENT

    decoded = [decode(g) for g in genomes]
    a_wh = _stack([d[0].w_hidden for d in decoded])  # (G, 13, 8)
    a_bh = _stack([d[0].b_hidden for d in decoded])[:, None, :]  # (G, 1, 8)
    a_wo = _stack([d[0].w_out for d in decoded])
    a_bo = _stack([d[0].b_out for d in decoded])[:, None, :]
    if emergent:
        p_wh = _stack([d[1].w_hidden for d in decoded])
        p_bh = _stack([d[1].b_hidden for d in decoded])[:, None, :]
        p_self = _stack([d[1].w_self for d in decoded])[:, None, :]
        p_wo = _stack([d[1].w_out for d in decoded])
        p_bo = _stack([d[1].b_out for d in decoded])[:, None, :]
        hidden = np.zeros((G, M, HIDDEN_UNITS), dtype=np.float64)
        pred_prev = np.zeros((G, M, SENSOR_COUNT), dtype=np.float64)
    else:
        fixed = scenario_prediction(scenario)
        fixed_robot = fixed[:6].astype(bool)  # all zeros by construction
        fixed_block = fixed[6:].astype(bool)

    L2 = L * L
    pos = np.empty((K, N), dtype=np.int64)  # robot flat cells
    rh = np.empty((K, N), dtype=np.int64)  # headings
    bcell = np.empty((K, B), dtype=np.int64)  # block flat cells by id
    perm_dtype = np.int16 if N < 2**15 else np.int64
    perms = np.empty((K, T, N), dtype=perm_dtype)
    for k in range(K):
        rng = np.random.default_rng(int(seeds[k // W, k % W]))
        cells, headings = sample_placement(L, N, B, rng)
        pos[k] = cells[:N]
        bcell[k] = cells[N:]
        rh[k] = headings
        keys = rng.random((T, N))
        perms[k] = np.argsort(keys, axis=-1)

    occ = np.zeros(K * L2, dtype=np.int8)
    bid = np.full(K * L2, -1, dtype=np.int64)
    woff = np.arange(K, dtype=np.int64) * L2
    rowoff = np.arange(K, dtype=np.int64) * N
    boff = np.arange(K, dtype=np.int64) * B
    occ[(woff[:, None] + pos).ravel()] = _ROBOT
    if B:
        flat_b = (woff[:, None] + bcell).ravel()
        occ[flat_b] = _BLOCK
        bid[flat_b] = np.tile(np.arange(B, dtype=np.int64), K)

    ahead, sensed_tbl = _tables(L)
    X = np.zeros((G, M, NET_INPUTS), dtype=np.float64)
    err = np.zeros(K, dtype=np.float64)
    pos_f = pos.reshape(-1)
    rh_f = rh.reshape(-1)
    bcell_f = bcell.reshape(-1)

    # Scratch buffers reused every step; all writes below keep the exact
    # operation order of the naive expressions, so results stay bit-equal
    # to the single-world reference.
    sense_idx = np.empty((K, N), dtype=np.int64)
    scell_buf = np.empty((K, N, 6), dtype=np.int64)
    occv = np.empty((K, N, 6), dtype=np.int8)
    robots_seen = np.empty((K, N, 6), dtype=bool)
    blocks_seen = np.empty((K, N, 6), dtype=bool)
    a_hid = np.empty((G, M, HIDDEN_UNITS), dtype=np.float64)
    a_out = np.empty((G, M, ACTION_OUTPUTS), dtype=np.float64)
    if emergent:
        diff = np.empty((G, M, SENSOR_COUNT), dtype=np.float64)
        p_hid = np.empty((G, M, HIDDEN_UNITS), dtype=np.float64)
    step_err = np.empty(K, dtype=np.float64)
    order = np.empty((K, N), dtype=np.int64)
    rf = np.empty(K, dtype=np.int64)
    woff3 = woff[:, None, None]

    if recorder is not None:
        recorder.record_positions(0, pos % L, pos // L, bcell % L, bcell // L)
        recorder.maybe_snapshot(0, T, pos % L, pos // L, rh, bcell % L, bcell // L)
        start_blocks_snapshot = bcell.copy()

    for t in range(T):
        # Sense: occupancy codes of the six cells ahead, both entity banks.
        np.multiply(pos, 4, out=sense_idx)
        sense_idx += rh
        np.take(sensed_tbl, sense_idx, axis=0, out=scell_buf)
        scell_buf += woff3
        np.take(occ, scell_buf, out=occv)
        np.equal(occv, _ROBOT, out=robots_seen)
        np.equal(occv, _BLOCK, out=blocks_seen)
        X[:, :, 0:6] = robots_seen.reshape(G, M, 6)
        X[:, :, 6:12] = blocks_seen.reshape(G, M, 6)
        sensors = X[:, :, :SENSOR_COUNT]

        # Score the prediction pending from the previous step (emergent) or
        # the scenario's fixed vector (predefined; exact integer mismatches).
        if emergent:
            if t > 0:
                np.subtract(pred_prev, sensors.reshape(G, M, SENSOR_COUNT),
                            out=diff)
                np.abs(diff, out=diff)
                np.sum(diff.reshape(K, N * SENSOR_COUNT), axis=1, out=step_err)
                err += step_err
                if recorder is not None:
                    recorder.record_io_pair(
                        pred_prev.reshape(K, N, SENSOR_COUNT),
                        sensors.reshape(K, N, SENSOR_COUNT),
                    )
        else:
            # Binary targets against binary sensors: |p - s| is exactly the
            # mismatch count, so the error sum stays integer-exact.
            err += (
                (robots_seen != fixed_robot).reshape(K, -1).sum(axis=1)
                + (blocks_seen != fixed_block).reshape(K, -1).sum(axis=1)
            )
            if recorder is not None:
                fixed_full = np.concatenate([fixed_robot, fixed_block]).astype(
                    np.float64
                )
                recorder.record_io_pair(
                    np.broadcast_to(fixed_full, (K, N, SENSOR_COUNT)),
                    sensors.reshape(K, N, SENSOR_COUNT),
                )

        # Action network (X holds sensors + previous action).
        stable_rows_matmul(X, a_wh, out=a_hid)
        a_hid += a_bh
        np.tanh(a_hid, out=a_hid)
        stable_rows_matmul(a_hid, a_wo, out=a_out)
        a_out += a_bo
        sigmoid_inplace(a_out)
        moving = a_out[:, :, 0] >= 0.5
        turn_dir = np.where(a_out[:, :, 1] >= 0.5, 1, -1).astype(np.int64)

        # Prediction network, fed the chosen action; the final step's
        # prediction would never meet a sensor reading, so skip it.
        if emergent and t + 1 < T:
            X[:, :, SENSOR_COUNT] = moving
            stable_rows_matmul(X, p_wh, out=p_hid)
            # same term order as the reference: (x @ w) + self * hidden + bias
            p_hid += p_self * hidden
            p_hid += p_bh
            np.tanh(p_hid, out=p_hid)
            hidden, p_hid = p_hid, hidden
            stable_rows_matmul(hidden, p_wo, out=pred_prev)
            pred_prev += p_bo
            sigmoid_inplace(pred_prev)

        X[:, :, SENSOR_COUNT] = moving  # becomes A(t-1) for the next step

        # Actuate sequentially in this step's shuffled order, worlds in
        # lockstep; later robots see the cells earlier ones just claimed.
        moving_f = moving.reshape(-1)
        turn_f = turn_dir.reshape(-1)
        np.copyto(order, perms[:, t, :], casting="unsafe")
        for k in range(N):
            np.add(rowoff, order[:, k], out=rf)
            h = rh_f[rf]
            a = moving_f[rf]
            rh_f[rf] = np.where(a, h, (h + turn_f[rf]) & 3)
            cell = pos_f[rf]
            c1 = ahead[cell * 4 + h]
            wc1 = woff + c1
            o1 = occ[wc1]
            c2 = ahead[c1 * 4 + h]
            wc2 = woff + c2
            push = a & (o1 == _BLOCK) & (occ[wc2] == _FREE)
            advance = (a & (o1 == _FREE)) | push
            pidx = np.nonzero(push)[0]
            if pidx.size:
                bids = bid[wc1[pidx]]
                bcell_f[boff[pidx] + bids] = c2[pidx]
                occ[wc2[pidx]] = _BLOCK
                bid[wc2[pidx]] = bids
                bid[wc1[pidx]] = -1
            aidx = np.nonzero(advance)[0]
            if aidx.size:
                occ[(woff + cell)[aidx]] = _FREE
                occ[wc1[aidx]] = _ROBOT
                pos_f[rf[aidx]] = c1[aidx]

        if recorder is not None:
            recorder.record_positions(t + 1, pos % L, pos // L,
                                      bcell % L, bcell // L)
            recorder.maybe_snapshot(t + 1, T, pos % L, pos // L, rh,
                                    bcell % L, bcell // L)
        if verify_every and ((t + 1) % verify_every == 0 or t + 1 == T):
            _verify_state(L, N, B, occ, pos, bcell, bid, woff)

    comparisons = T - 1 if emergent else T
    if recorder is not None:
        recorder.start_blocks = start_blocks_snapshot  # type: ignore[attr-defined]
        recorder.end_blocks = bcell.copy()  # type: ignore[attr-defined]
    return err.reshape(G, W), comparisons


def simulate_batch(
    genomes: Sequence[Genome],
    sim: SimConfig,
    scenario: Scenario,
    seeds: np.ndarray,
    verify_every: int = 0,
) -> tuple[np.ndarray, int]:
    """Run seeds.shape[1] simulations per genome; return (error_sums, C).

    error_sums[g, w] is the total absolute prediction error of genome g's
    w-th world, to be turned into a fitness by ``metrics.score_run``.
    """
    return _run_batch(
        genomes, sim.side_length, sim.swarm_size, sim.block_count, sim.steps,
        scenario, np.asarray(seeds), verify_every=verify_every,
    )


def simulate_traced(
    genome: Genome,
    sim: SimConfig,
    scenario: Scenario,
    seed: int,
    record_io: bool = False,
    snapshot_every: Optional[int] = None,
) -> RunTrace:
    """Run one fully recorded simulation (positions window, optional I/O)."""
    traces = simulate_traced_many(
        [genome], sim, scenario, [seed],
        record_io=record_io, snapshot_every=snapshot_every,
    )
    return traces[0]


def simulate_traced_many(
    genomes: Sequence[Genome],
    sim: SimConfig,
    scenario: Scenario,
    seeds: Sequence[int],
    record_io: bool = False,
    snapshot_every: Optional[int] = None,
) -> list[RunTrace]:
    """Recorded single-world runs, one per (genome, seed) pair."""
    if len(genomes) != len(seeds):
        raise ValueError("need exactly one seed per genome")
    L, N, B, T = sim.side_length, sim.swarm_size, sim.block_count, sim.steps
    recorder = _Recorder(len(genomes), N, B, T, L, record_io, snapshot_every)
    seed_arr = np.asarray(seeds, dtype=np.uint64).reshape(len(genomes), 1)
    err, comparisons = _run_batch(
        genomes, L, N, B, T, scenario, seed_arr, recorder=recorder,
    )
    preds_all = sensors_all = None
    if record_io:
        preds_all = np.stack(recorder.preds, axis=1)  # (K, C, N, 12)
        sensors_all = np.stack(recorder.sensors, axis=1)
    traces = []
    for k in range(len(genomes)):
        start = frozenset(
            (int(c % L), int(c // L)) for c in recorder.start_blocks[k]
        )
        end = frozenset(
            (int(c % L), int(c // L)) for c in recorder.end_blocks[k]
        )
        preds = preds_all[k] if record_io else None
        sensors = sensors_all[k] if record_io else None
        traces.append(RunTrace(
            side_length=L,
            n_robots=N,
            n_blocks=B,
            steps=T,
            n_sensors=SENSOR_COUNT,
            comparisons=comparisons,
            error_sum=float(err[k, 0]),
            tau=recorder.tau,
            start_blocks=start,
            end_blocks=end,
            robot_window=recorder.robot_window[k],
            block_window=recorder.block_window[k][:, :B, :],
            predictions=preds,
            sensor_log=sensors,
            snapshots=recorder.snapshots[k] if snapshot_every else None,
        ))
    return traces
