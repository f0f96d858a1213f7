"""Acceptance criteria A1-A9.

Run with ``pytest tests/test_acceptance.py -v``; a PASS/FAIL line per
criterion is printed in the terminal summary.
"""

import math
import subprocess
import sys

import numpy as np
import pytest
from scipy import optimize

from photocount.bayes import posterior
from photocount.channels import apply_forward, composed_matrix, confidence, dark_matrix, loss_matrix
from photocount.distributions import (
    CountHistogram,
    DetectorModel,
    PhotonNumberDistribution,
    coherent_source,
    mean,
    poisson_pmf,
)
from photocount.inversion import (
    composed_inverse_analytic,
    composed_inverse_series,
    dark_inverse,
    invert_counts,
    loss_inverse,
)
from photocount.maxent import MaxEntConfig, reconstruct_maxent
from photocount.montecarlo import SimulationSpec, empirical_pmf, simulate

from . import oracles

# pre-registered seeds; fixed before any acceptance run and never tuned
A5_SEEDS = (101, 202, 303)
A7_SEEDS = (7, 2024)
A9_SEED = 12345


def _posterior(mean_photons, eta, k, truncation=40):
    prior = coherent_source(mean_photons, truncation)
    return posterior(prior, composed_matrix(DetectorModel(eta), truncation), k).probs


@pytest.mark.acceptance("A1")
@pytest.mark.parametrize(
    "eta, q11, q21",
    [(0.2, 0.45, 0.36), (0.9, 0.90, 0.09)],
)
def test_a1_posterior_mean_one(eta, q11, q21):
    q = _posterior(1.0, eta, 1)
    print(f"A1 eta={eta}: Q(1|1)={q[1]:.4f} Q(2|1)={q[2]:.4f}")
    assert q[1] == pytest.approx(q11, abs=0.005)
    assert q[2] == pytest.approx(q21, abs=0.005)


@pytest.mark.acceptance("A2")
@pytest.mark.parametrize(
    "eta, q11, q21",
    [(0.2, 0.85, 0.14), (0.9, 0.98, 0.02)],
)
def test_a2_posterior_mean_fifth(eta, q11, q21):
    q = _posterior(0.2, eta, 1)
    print(f"A2 eta={eta}: Q(1|1)={q[1]:.4f} Q(2|1)={q[2]:.4f}")
    assert q[1] == pytest.approx(q11, abs=0.005)
    assert q[2] == pytest.approx(q21, abs=0.005)


@pytest.mark.acceptance("A3")
@pytest.mark.parametrize("mean_photons", [0.5, 1.0, 4.0])
@pytest.mark.parametrize("eta", [0.1, 0.5, 0.9])
def test_a3_coherent_stays_poisson(mean_photons, eta):
    counted = apply_forward(composed_matrix(DetectorModel(eta), 60), coherent_source(mean_photons, 60)).probs
    expected = np.array([oracles.poisson(k, mean_photons * eta) for k in range(31)])
    assert np.abs(counted[:31] - expected).max() <= 1e-10


@pytest.mark.acceptance("A4")
@pytest.mark.parametrize("eta", [0.2, 0.5, 0.9])
def test_a4_loss_inverse(eta):
    det = DetectorModel(eta)
    inv = loss_inverse(det, 25, dtype=np.longdouble).entries
    fwd = loss_matrix(det, 25, dtype=np.longdouble).entries
    err = float(np.abs(inv @ fwd - np.eye(26)).max())
    print(f"A4 loss eta={eta}: max |inv P - I| = {err:.2e}")
    assert err <= 1e-8


@pytest.mark.acceptance("A4")
@pytest.mark.parametrize("dark", [0.2, 0.5, 2.0])
def test_a4_dark_inverse(dark):
    det = DetectorModel(1.0, dark)
    err = float(np.abs(dark_inverse(det, 25).entries @ dark_matrix(det, 25).entries - np.eye(26)).max())
    print(f"A4 dark lambda={dark}: max |inv D - I| = {err:.2e}")
    assert err <= 1e-8


@pytest.mark.acceptance("A4")
def test_a4_composed_inverse():
    det = DetectorModel(0.5, 0.5)
    analytic = composed_inverse_analytic(det, 15).entries
    series = composed_inverse_series(det, 15)
    rel = float((np.abs(analytic - series) / np.abs(series)).max())
    padded = np.array(oracles.padded_composed_inverse(0.5, 0.5, 15, 120))
    pad_err = float(np.abs(analytic - padded).max())
    print(f"A4 composed: rel vs series {rel:.2e}, abs vs padded product {pad_err:.2e}")
    assert rel <= 1e-9
    assert pad_err <= 1e-6


@pytest.mark.acceptance("A5")
@pytest.mark.slow
@pytest.mark.parametrize("seed", A5_SEEDS)
def test_a5_reconstruction_at_twenty_photons(seed):
    det = DetectorModel(0.2)
    hist = simulate(SimulationSpec(coherent_source(20.0, 70), det, 100_000, seed))
    detected = float(np.dot(np.arange(len(hist)), hist.counts)) / hist.total
    res = reconstruct_maxent(hist, det, MaxEntConfig(truncation=70, seed=seed))
    recon = mean(res.distribution)
    print(
        f"A5 seed={seed}: detected mean {detected:.3f}, source mean {recon:.3f}, "
        f"chi2 {res.chi2:.3f} / {res.chi2_threshold:.3f}, entropy {res.entropy:.4f}"
    )
    assert res.converged
    assert 18.0 <= recon <= 22.0
    assert res.chi2 <= res.chi2_threshold


def _a6_data():
    det = DetectorModel(0.1)
    exact = apply_forward(composed_matrix(det, 20), coherent_source(2.0, 20)).probs.copy()
    k = np.arange(21)
    exact[k >= 10] += np.where(k[k >= 10] % 2 == 0, 1e-3, -1e-3)
    return det, exact


@pytest.mark.acceptance("A6")
def test_a6_linear_inversion_breaks():
    det, perturbed = _a6_data()
    candidate, diag = invert_counts(perturbed, det, 20)
    print(f"A6 invert: min entry {diag.min_entry:.3e}, condition {diag.condition_estimate:.3e}")
    assert not diag.physical


@pytest.mark.acceptance("A6")
def test_a6_maxent_stays_physical():
    det, perturbed = _a6_data()
    hist = CountHistogram(np.round(1e5 * np.maximum(perturbed, 0.0)).astype(np.int64))
    res = reconstruct_maxent(hist, det, MaxEntConfig(truncation=20, generations=500, seed=6))
    print(f"A6 maxent: converged={res.converged}, chi2 {res.chi2:.1f} / {res.chi2_threshold:.1f}")
    # constructing the distribution re-validates non-negativity and normalization
    PhotonNumberDistribution(res.distribution.probs)
    assert np.all(res.distribution.probs >= 0.0)
    assert math.fsum(res.distribution.probs) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.acceptance("A7")
@pytest.mark.slow
@pytest.mark.parametrize("seed", A7_SEEDS)
def test_a7_monte_carlo_matches_forward_model(seed):
    det = DetectorModel(0.2, 0.5)
    source = coherent_source(1.0, 20)
    trials = 1_000_000
    hist = simulate(SimulationSpec(source, det, trials, seed), workers=4)
    emp = empirical_pmf(hist).probs
    model = apply_forward(composed_matrix(det, 20), source).probs
    size = max(len(emp), 12)
    emp = np.pad(emp, (0, max(0, size - len(emp))))
    model = model[:size]
    sigma = np.sqrt(model * (1 - model) / trials)
    z = np.abs(emp - model) / np.where(sigma > 0, sigma, np.inf)
    print(f"A7 seed={seed}: max |z| = {z.max():.2f} over {size} bins")
    assert np.all(np.abs(emp - model) <= 5 * sigma + 1e-15)


def _diag(eta, dark, k):
    return oracles.composed_entry(k, k, eta, dark)


@pytest.mark.acceptance("A8")
def test_a8_two_photon_threshold():
    root = optimize.brentq(lambda eta: confidence(DetectorModel(eta), 2) - 0.5, 0.5, 0.9, xtol=1e-15)
    assert root == pytest.approx(2**-0.5, abs=1e-12)
    assert confidence(DetectorModel(2**-0.5), 2) == pytest.approx(0.5, abs=1e-15)
    assert round(root, 2) == 0.71


@pytest.mark.acceptance("A8")
def test_a8_dark_count_claim_tabulated():
    # recorded, not asserted: which k (if any) has its one-half threshold at eta = 0.78
    rows = []
    for k in range(0, 7):
        at_078 = confidence(DetectorModel(0.78, 0.5), k)
        assert at_078 == pytest.approx(_diag(0.78, 0.5, k), abs=1e-12)
        # k = 0 is eta-independent (exp(-lambda*tau)), so it has no crossing
        if k > 0 and confidence(DetectorModel(1.0, 0.5), k) > 0.5:
            eta_half = optimize.brentq(lambda e: confidence(DetectorModel(e, 0.5), k) - 0.5, 1e-9, 1.0)
        else:
            eta_half = math.nan
        rows.append((k, at_078, eta_half))
    print("A8 lambda*tau=0.5:  k  P_D(k|k) at eta=0.78  eta where P_D(k|k)=0.5")
    for k, value, eta_half in rows:
        print(f"A8               {k:2d}  {value:.4f}               {eta_half:.4f}")
    # P_D(k|k) at eta = 1 is exp(-lambda*tau) for every k, so a threshold exists for all k
    assert all(0.0 < e < 1.0 for _, _, e in rows[1:])


def _cli(*args, cwd):
    return subprocess.run([sys.executable, "-m", "photocount", *args], cwd=cwd, capture_output=True, check=True)


@pytest.mark.acceptance("A9")
def test_a9_simulate_byte_identical(tmp_path):
    common = ["simulate", "--coherent", "1", "--truncation", "20", "--efficiency", "0.2", "--dark-mean", "0.5",
              "--trials", "200000", "--seed", str(A9_SEED)]
    outs = []
    for i, workers in enumerate((1, 1, 4)):
        out = tmp_path / f"h{i}.json"
        _cli(*common, "--workers", str(workers), "--out", str(out), cwd=tmp_path)
        outs.append(out.read_bytes())
    assert outs[0] == outs[1] == outs[2]


@pytest.mark.acceptance("A9")
def test_a9_reconstruct_byte_identical(tmp_path):
    hist = tmp_path / "h.json"
    _cli("simulate", "--coherent", "3", "--truncation", "30", "--efficiency", "0.4", "--trials", "50000",
         "--seed", str(A9_SEED), "--out", str(hist), cwd=tmp_path)
    outs = []
    for i, workers in enumerate((1, 1, 3)):
        out = tmp_path / f"r{i}.json"
        _cli("reconstruct", "--input", str(hist), "--efficiency", "0.4", "--truncation", "30",
             "--generations", "150", "--seed", str(A9_SEED), "--workers", str(workers), "--out", str(out),
             cwd=tmp_path)
        outs.append(out.read_bytes())
    assert outs[0] == outs[1] == outs[2]
