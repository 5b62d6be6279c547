"""End-to-end acceptance checks, one verdict line per criterion."""

import math
import time

import numpy as np
import pytest

from acceptance_log import record_criterion
from gradcheck import max_relative_error
from mrpirnn import datagen, trainer
from mrpirnn.dynamics import ElbowGeometry, integrate_activations, muscle_torque
from mrpirnn.muscle import BICEPS, TRICEPS, ActivationParams, active_force_length, emg_to_activation, passive_force_length
from mrpirnn.physics import LITERATURE_ANCHORS, PARAM_NAMES, IdentMode, IdentTargets, finite_differences, residual
from mrpirnn.wavelet import DB2, decompose, reconstruct

REPLICATION_SEEDS = (0, 1, 2)
REPLICATION_SCALES = {1: (0,), 2: (-1, 0), 3: (-2, -1, 0)}
IDENT_TOLERANCE = 2.0


def test_criterion_1_wavelet():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for i in range(100):
        n = (500, 512)[i % 2]
        x = rng.normal(size=n)
        for depth in range(1, 5):
            worst = max(worst, float(np.max(np.abs(reconstruct(decompose(x, depth)) - x))))
    d, g = DB2.lowpass, DB2.highpass
    identities = [d @ d - 1, g @ g - 1, d[0] * d[2] + d[1] * d[3], g[0] * g[2] + g[1] * g[3], d @ g,
                  d[2] * g[0] + d[3] * g[1], d[0] * g[2] + d[1] * g[3], d.sum() - math.sqrt(2)]
    ortho = float(max(abs(v) for v in identities))
    seconds = time.perf_counter() - start
    passed = worst < 1e-10 and ortho < 1e-12 and seconds < 5
    record_criterion(1, "wavelet correctness", passed,
                     f"round-trip max error {worst:.1e}, orthonormality {ortho:.1e}, {seconds:.2f} s")
    assert passed


def test_criterion_2_hill_curves():
    gaps = []
    for knot in (0.6, 1.4):
        below, above = np.nextafter(knot, 0.0), np.nextafter(knot, 2.0)
        gaps.append(abs(float(active_force_length(below)) - float(active_force_length(above))))
    for knot in (1.0, 1.4):
        below, above = np.nextafter(knot, 0.0), np.nextafter(knot, 2.0)
        gaps.append(abs(float(passive_force_length(below)) - float(passive_force_length(above))))
    # branch formulas evaluated by hand at each breakpoint
    hand = [abs(9 * 0.2**2 - (1 - 4 * 0.4**2)), abs((1 - 4 * 0.4**2) - 9 * 0.2**2)]
    peak = float(active_force_length(1.0))
    passive = float(passive_force_length(1.4))
    expected = 0.075 * (math.exp(2.64) - 1)
    passed = max(gaps) < 1e-12 and max(hand) < 1e-12 and peak == 1.0 and abs(passive - expected) < 1e-12
    record_criterion(2, "Hill-curve fidelity", passed,
                     f"max knot gap {max(gaps):.1e}, peak {peak}, passive(1.4) off by {abs(passive - expected):.1e}")
    assert passed


def _period_error():
    geom = ElbowGeometry()
    dt, n = 0.001, 8001
    q, _ = integrate_activations(np.zeros(n), np.zeros(n), dt, 0.0, 0.01, muscles=False)
    t = np.arange(n) * dt
    idx = np.where((q[:-1] < 0) & (q[1:] >= 0))[0]
    crossings = t[idx] - q[idx] * dt / (q[idx + 1] - q[idx])
    return abs(np.mean(np.diff(crossings)) / (2 * math.pi * math.sqrt(geom.l_fa / geom.g)) - 1)


def _rk4_order():
    # biceps-driven flexion that stays on one smooth branch of every muscle curve
    horizon, base_dt = 0.25, 0.01
    knots = np.arange(0, horizon + 1e-12, base_dt)
    a_bi = 0.6 + 0.2 * np.sin(2 * np.pi * knots)
    finals = []
    for ratio in (1, 2, 4, 8):
        dt = base_dt / ratio
        t = np.arange(0, horizon + 1e-12, dt)
        q, _ = integrate_activations(np.interp(t, knots, a_bi), np.zeros_like(t), dt, math.pi / 6, 1.0)
        finals.append(q[-1])
    errs = [abs(a - b) for a, b in zip(finals, finals[1:])]
    return min(math.log2(a / b) for a, b in zip(errs, errs[1:]))


def _closure_ratio():
    geom, ratios = ElbowGeometry(), []
    for trial in datagen.clean_trials().trials:
        a_bi = emg_to_activation(trial.emg_bi, datagen.DT, ActivationParams())
        a_tri = emg_to_activation(trial.emg_tri, datagen.DT, ActivationParams())
        r = residual(trial.q, a_bi, a_tri, datagen.truth_parameters(), geom, datagen.DT)
        q_dot, _ = finite_differences(trial.q, datagen.DT)
        torque = muscle_torque(a_bi, a_tri, trial.q, q_dot, geom, BICEPS, TRICEPS)
        ratios.append(np.sqrt(np.mean(torque**2)) / np.sqrt(np.mean(r**2)))
    return min(ratios)


def test_criterion_3_dynamics_oracle():
    period = _period_error()
    order = _rk4_order()
    closure = _closure_ratio()
    passed = period < 0.005 and order >= 3.5 and closure >= 100
    record_criterion(3, "dynamics oracle", passed,
                     f"period error {100 * period:.3f}%, RK4 order {order:.2f}, closure ratio {closure:.0f}x")
    assert passed


def test_criterion_4_gradient_integrity():
    start = time.perf_counter()
    errors = {mode.value: max_relative_error(mode) for mode in IdentMode}
    seconds = time.perf_counter() - start
    passed = max(errors.values()) < 1e-5 and seconds < 10
    detail = ", ".join(f"{k} max rel error {v:.1e}" for k, v in errors.items())
    record_criterion(4, "gradient integrity", passed, f"{detail}, {seconds:.1f} s")
    assert passed


@pytest.fixture(scope="module")
def replication():
    """Every (scale count, seed) run of the identification study at sigma = 0.1."""
    trialset = datagen.build_verification_set(0.1)
    start = time.perf_counter()
    runs = {}
    for count, scales in REPLICATION_SCALES.items():
        config = trainer.TrainConfig(scales=scales, seeds=REPLICATION_SEEDS)
        runs[count] = trainer.run_experiment(trialset, config)
    return {"runs": runs, "truth": trialset.truth, "minutes": (time.perf_counter() - start) / 60}


def _summary(results):
    ok = [r for r in results if not r.diverged]
    if not ok:
        return None
    return {
        "mse": float(np.mean([r.reports[-1].mean_metrics.mse for r in ok])),
        "r2": float(np.mean([r.reports[-1].mean_metrics.r2 for r in ok])),
        "identified": {n: float(np.mean([r.identified[n] for r in ok])) for n in PARAM_NAMES},
        "diverged": len(results) - len(ok),
    }


@pytest.mark.xfail(strict=True, reason="noisy-input bias in the residual and surrogate error let the muscle parameters drift")
def test_criterion_5a_identification(replication):
    summary = _summary(replication["runs"][3])
    truth = replication["truth"]
    if summary is None:
        errors = {n: math.inf for n in PARAM_NAMES}
    else:
        errors = {n: 100 * abs(summary["identified"][n] - truth[n]) / truth[n] for n in PARAM_NAMES}
    diverged = sum(r.diverged for r in replication["runs"][3])
    passed = diverged == 0 and max(errors.values()) < IDENT_TOLERANCE
    detail = ", ".join(f"{n} {e:.1f}%" for n, e in errors.items())
    record_criterion("5a", "identification within 2%", passed,
                     f"3-scale mean over seeds: {detail}; diverged seeds {diverged}; "
                     f"{replication['minutes']:.1f} min for the whole study")
    assert passed


@pytest.mark.xfail(strict=True, reason="the surrogate underfits at every scale count, so the ordering is not monotone")
def test_criterion_5b_multiresolution_trend(replication):
    summaries = {k: _summary(v) for k, v in replication["runs"].items()}
    if any(s is None for s in summaries.values()):
        passed, detail = False, "a configuration diverged on every seed"
    else:
        mse = [summaries[k]["mse"] for k in (1, 2, 3)]
        r2 = [summaries[k]["r2"] for k in (1, 2, 3)]
        passed = mse[0] >= mse[1] >= mse[2] and r2[0] <= r2[1] <= r2[2]
        detail = ("test MSE " + " -> ".join(f"{v:.4f}" for v in mse) + ", test R2 "
                  + " -> ".join(f"{v:.4f}" for v in r2) + " for 1 -> 2 -> 3 scales")
    record_criterion("5b", "multi-resolution trend", passed, detail)
    assert passed


def test_criterion_6_substitute_runs():
    trialset = datagen.build_verification_set(0.1)
    upper = {n: float(np.mean(LITERATURE_ANCHORS[n])) for n in PARAM_NAMES}
    initial = {n: 0.6 * upper[n] for n in PARAM_NAMES}
    sigmoid = trainer.TrainConfig(scales=(-2, -1, 0), total_epochs=60,
                                  ident=IdentTargets(IdentMode.SIGMOID, initial, LITERATURE_ANCHORS))
    inside = []

    def check(_, __, params):
        _, ident = trainer.TrainState.split(params)
        values = trainer.identified_params(ident, sigmoid)
        inside.append(all(0 < values[n] < upper[n] for n in PARAM_NAMES))

    try:
        trainer.train_multiresolution(trialset, sigmoid, seed=0, on_epoch=check)
        box_ok = bool(inside) and all(inside)
    except trainer.TrainingDiverged:
        box_ok = False
    five = trainer.TrainConfig(scales=(-4, -3, -2, -1, 0), total_epochs=25)
    try:
        result = trainer.train_multiresolution(trialset, five, seed=0)
        five_ok = [r.scale for r in result.reports] == [-4, -3, -2, -1, 0]
        five_ok = five_ok and all(np.isfinite(r.mean_metrics.mse) for r in result.reports)
    except trainer.TrainingDiverged:
        five_ok = False
    passed = box_ok and five_ok
    record_criterion(6, "substitute subject-data runs", passed,
                     f"sigmoid box held on {sum(inside)}/{len(inside)} epochs, 5-scale run completed: {five_ok}")
    assert passed


def test_criterion_7_baseline_reduction():
    trialset = datagen.build_verification_set(0.1)
    config = trainer.TrainConfig(scales=(0,), total_epochs=40)
    via_loop = trainer.train_multiresolution(trialset, config, seed=5).final
    rng = np.random.default_rng(5)
    state = trainer.init_state(config, rng)
    data = trainer.prepare_scale(trialset.subset(config.train_trial_ids), 0, trialset.dt, 2)
    direct = trainer.train_scale(data, state, config, rng)
    same = direct.losses == via_loop.losses and all(
        np.array_equal(direct.params()[k], v) for k, v in via_loop.params().items())
    record_criterion(7, "baseline reduction", same, f"bit-identical parameters and losses over {len(direct.losses)} epochs")
    assert same
