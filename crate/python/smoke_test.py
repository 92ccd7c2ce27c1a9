#!/usr/bin/env python3
"""Smoke test for the sisr_py extension module.

Build the module first:

    cargo build -p sisr-py --release

then run this script from the repository root:

    python3 python/smoke_test.py
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path


def load_module():
    root = Path(__file__).resolve().parent.parent
    candidates = [
        root / "target" / "release" / "libsisr_py.so",
        root / "target" / "debug" / "libsisr_py.so",
        root / "target" / "release" / "libsisr_py.dylib",
        root / "target" / "debug" / "libsisr_py.dylib",
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit("sisr_py not built; run `cargo build -p sisr-py --release` first")
    staging = Path(tempfile.mkdtemp(prefix="sisr_py_"))
    suffix = ".so" if built.suffix == ".so" else ".so"
    shutil.copy2(built, staging / f"sisr_py{suffix}")
    sys.path.insert(0, str(staging))
    import sisr_py

    return sisr_py


CHECKS = []


def check(name):
    def wrap(fn):
        CHECKS.append((name, fn))
        return fn

    return wrap


@check("autocorrelation normalization and white-noise case")
def _(m):
    assert m.fgn_autocorrelation(0, 0.7) == 1.0
    assert abs(m.fgn_autocorrelation(1, 0.5)) <= 1e-12
    assert abs(m.fgn_autocorrelation(1, 0.7) - 0.31950791077289426) < 1e-12
    assert m.fgn_autocorrelation(-3, 0.7) == m.fgn_autocorrelation(3, 0.7)


@check("covariance symmetry and scaling")
def _(m):
    cov = m.fgn_covariance(6, 0.8, 2.0)
    for i in range(6):
        assert abs(cov[i][i] - 2.0) < 1e-12
        for j in range(6):
            assert cov[i][j] == cov[j][i]


@check("joint sampling is seed-deterministic")
def _(m):
    a = m.sample_fgn(32, 0.7, 1.0, seed=5)
    b = m.sample_fgn(32, 0.7, 1.0, seed=5)
    c = m.sample_fgn(32, 0.7, 1.0, seed=6)
    assert a == b
    assert a != c
    assert m.sample_fgn(8, 0.7, 0.0, seed=1) == [0.0] * 8


@check("conditional law matches the two-point closed form")
def _(m):
    mean, var = m.fgn_conditional([1.0], 0.7, 1.0)
    rho = m.fgn_autocorrelation(1, 0.7)
    assert abs(mean - rho) < 1e-12
    assert abs(var - (1.0 - rho * rho)) < 1e-12
    mean0, var0 = m.fgn_conditional([], 0.5, 1.5)
    assert mean0 == 0.0 and var0 == 1.5


@check("gamma channel moments and likelihood")
def _(m):
    assert m.noise_mean(0.5, 1.0) == 0.5
    assert m.noise_mean(2.0, 3.0) == 6.0
    assert abs(m.log_likelihood(1.0, 0.0, 0.5, 1.0) - (math.log(2.0) - 2.0)) < 1e-12
    draws = m.sample_noise(0.5, 1.0, 20000, seed=3)
    assert all(v >= 0.0 for v in draws)
    assert abs(sum(draws) / len(draws) - 0.5) < 0.02
    z = m.observe(0.0, 0.5, 1.0, seed=9)
    assert z >= 0.0
    try:
        m.log_likelihood(-1.0, 0.0, 0.5, 1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("negative observation accepted")


@check("gamma KL closed form")
def _(m):
    assert m.kl_gamma(1.0, 1.0, 1.0, 1.0) == 0.0
    assert abs(m.kl_gamma(1.0, 1.0, 2.0, 1.0) - (math.log(2.0) - 0.5)) < 1e-12
    assert m.kl_gamma(0.7, 2.0, 1.3, 0.8) >= 0.0


@check("ARMA simulation agrees with the transfer matrix")
def _(m):
    model = m.ArmaModel([0.85], [0.8], 0.7, 1.0)
    states, innovations = model.simulate(32, seed=11)
    theta = model.transfer_matrix(32)
    for i in range(32):
        via = sum(theta[i][j] * innovations[j] for j in range(i + 1))
        assert abs(states[i] - via) < 1e-10
    cov = model.state_covariance(8)
    assert all(cov[i][i] > 0 for i in range(8))


@check("particle filter beats the zero predictor and is deterministic")
def _(m):
    model = m.ArmaModel([0.85], [0.8], 0.7, 1.0)
    states, _ = model.simulate(60, seed=21)
    observations = [
        m.observe(x, 0.5, 1.0, seed=1000 + i) for i, x in enumerate(states)
    ]
    report = m.run_filter(
        model, observations, truth=states, n_particles=400, resampling="systematic", seed=7
    )
    baseline = math.sqrt(sum(x * x for x in states) / len(states))
    assert report.final_rmse is not None and report.final_rmse < baseline
    assert all(1.0 <= e <= 400.0 for e in report.ess_trace)
    again = m.run_filter(
        model, observations, truth=states, n_particles=400, resampling="systematic", seed=7
    )
    assert report.estimates == again.estimates


@check("VAR simulation and imputation round trip")
def _(m):
    model = m.VarModel([[[0.5, 0.2], [0.1, 0.5]]], 0.7, 1.0)
    latent = model.simulate(24, seed=3)
    values = [
        [m.observe(x, 0.5, 1.0, seed=5000 + 100 * d + t) for t, x in enumerate(row)]
        for d, row in enumerate(latent)
    ]
    mask = [[False] * 24 for _ in range(2)]
    mask[0][5] = True
    mask[1][20] = True
    imputed, estimates = m.filter_impute(
        model, values, mask, n_particles=200, resampling="systematic", seed=13
    )
    for d in range(2):
        for t in range(24):
            if mask[d][t]:
                assert imputed[d][t] == estimates[d][t]
            else:
                assert imputed[d][t] == values[d][t]


def main():
    module = load_module()
    failures = 0
    for name, fn in CHECKS:
        try:
            fn(module)
            print(f"PASS {name}")
        except AssertionError as exc:
            failures += 1
            print(f"FAIL {name}: {exc}")
    if failures:
        sys.exit(f"{failures} of {len(CHECKS)} checks failed")
    print(f"all {len(CHECKS)} checks passed")


if __name__ == "__main__":
    main()
