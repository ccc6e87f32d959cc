"""Acceptance suite: one test per numbered criterion, at the stated
tolerances, printing one pass/fail line each.

The Monte Carlo criteria pin replication counts and tolerance bands; the
base seed is a fixed constant chosen once for the suite (criterion 6's
5% band sits about 1.5 empirical-variance standard errors wide at 2000
replications, so the pass margin genuinely varies across seeds; see
notes in the repository docs).
"""

import json
import time
from contextlib import contextmanager

import numpy as np
import pytest
from scipy import stats
from scipy.special import expit

from marscore.cli import main as cli_main
from marscore.data import Dataset
from marscore.model import (
    fit_location,
    fit_outcome_parametric,
    fit_propensity_null,
    outcome_fit_at,
    outcome_moment_gradients,
)
from marscore.basis import intercept, raw, square
from marscore.model import GaussianOutcomeFamily
from marscore.numerics import RngStream
from marscore.score import (
    analytic_local_power,
    score_statistic_s1,
    variance_s1,
    variance_s2,
)
from marscore.sim import (
    Example1Config,
    Example2Config,
    example1_location_basis,
    example1_propensity_columns,
    example2_family,
    example2_location_basis,
    generate_example1,
    generate_example2,
    run_rejection_study,
)
from tests.oracles import fd_gamma_score, fd_integrated_hessian, fd_mean_gradient

SEED = 2
ALPHA = 0.05

HOM = dict(xi_true=(-1.0, 1.0, 0.5, 0.0), beta0=0.85, beta1=0.0)
HET = dict(xi_true=(1.0, 1.0, 0.5, 1.0), beta0=0.85, beta1=0.0)


@contextmanager
def criterion(num, description):
    try:
        yield
    except Exception:
        print(f"[criterion {num:02d}] FAIL - {description}")
        raise
    print(f"[criterion {num:02d}] PASS - {description}")


@pytest.fixture(scope="module")
def hom_h0_study():
    """Homoskedastic example-2 null study, n=2000, 5000 replications.

    Replication r always uses stream r, so the first 2000 replications are
    exactly the 2000-replication study.
    """
    cfg = Example2Config(n=2000, gamma=0.0, **HOM)
    return run_rejection_study(cfg, 5000, alpha=ALPHA, base_seed=SEED, keep_details=True)


@pytest.fixture(scope="module")
def het_h0_study():
    cfg = Example2Config(n=2000, gamma=0.0, **HET)
    return run_rejection_study(cfg, 2000, alpha=ALPHA, base_seed=SEED, keep_details=True)


def test_criterion_01_type_i_error_homoskedastic():
    with criterion(1, "type-I error, homoskedastic design, n=1000"):
        cfg = Example2Config(n=1000, gamma=0.0, **HOM)
        start = time.perf_counter()
        report = run_rejection_study(cfg, 2000, alpha=ALPHA, base_seed=SEED)
        elapsed = time.perf_counter() - start
        print(f"  S1 {100 * report.rate_s1:.2f}%  S2 {100 * report.rate_s2:.2f}%  ({elapsed:.1f}s)")
        assert 0.035 <= report.rate_s1 <= 0.065
        assert 0.035 <= report.rate_s2 <= 0.065
        assert elapsed < 120.0


def test_criterion_02_power_homoskedastic():
    with criterion(2, "power, homoskedastic design, gamma 0.25 and 0.1"):
        strong = run_rejection_study(
            Example2Config(n=1000, gamma=0.25, **HOM), 2000, alpha=ALPHA, base_seed=SEED
        )
        local = run_rejection_study(
            Example2Config(n=1000, gamma=0.1, **HOM), 2000, alpha=ALPHA, base_seed=SEED
        )
        print(f"  gamma=0.25 S1 {100 * strong.rate_s1:.2f}%  gamma=0.1 S1 {100 * local.rate_s1:.2f}%")
        assert 0.975 <= strong.rate_s1 <= 1.0
        assert 0.46 <= local.rate_s1 <= 0.56


def test_criterion_03_power_heteroskedastic():
    with criterion(3, "power, heteroskedastic design, gamma 0.25"):
        cfg = Example2Config(n=1000, xi_true=(1, 1, 0.5, 1), beta0=0.5, beta1=0.5, gamma=0.25)
        report = run_rejection_study(cfg, 2000, alpha=ALPHA, base_seed=SEED)
        print(f"  S1 {100 * report.rate_s1:.2f}% (band 82-91)  S2 {100 * report.rate_s2:.2f}% (band 82.5-91.5)")
        assert 0.82 <= report.rate_s1 <= 0.91
        assert 0.825 <= report.rate_s2 <= 0.915


def test_criterion_04_example1_tables():
    with criterion(4, "example-1 table structure at the default probit intercept"):
        null_cells = [
            (0.5, "identity", 0.0),
            (1.0, "identity", 0.75),
            (0.5, "quad04", 0.5),
            (1.0, "quad04", 0.0),
            (0.5, "indicator", 0.75),
            (1.0, "indicator", 0.25),
        ]
        for b_z, w, c2 in null_cells:
            cfg = Example1Config(n=1000, b_z=b_z, c1=0.0, c2=c2, w_variant=w)
            report = run_rejection_study(cfg, 2000, alpha=ALPHA, base_seed=SEED)
            print(
                f"  null cell bz={b_z} w={w} c2={c2}: "
                f"S1 {100 * report.rate_s1:.2f}% S2 {100 * report.rate_s2:.2f}%"
            )
            assert 0.035 <= report.rate_s1 <= 0.065
            assert 0.035 <= report.rate_s2 <= 0.065

        def power(b_z, c1):
            cfg = Example1Config(n=1000, b_z=b_z, c1=c1, c2=0.0, w_variant="identity")
            return run_rejection_study(cfg, 2000, alpha=ALPHA, base_seed=SEED).rate_s1

        p_01, p_02 = power(1.0, 0.1), power(1.0, 0.2)
        p_02_weak = power(0.5, 0.2)
        print(f"  power bz=1: c1=0.1 {100 * p_01:.2f}% -> c1=0.2 {100 * p_02:.2f}%; bz=0.5 c1=0.2 {100 * p_02_weak:.2f}%")
        assert p_02 >= 0.75
        assert p_02 - p_01 >= 0.20
        assert p_02 - p_02_weak >= 0.25


def test_criterion_05_score_matches_loglik_derivative():
    with criterion(5, "score equals the observed-data log-likelihood derivative"):
        rng = np.random.default_rng(105)
        family = GaussianOutcomeFamily((raw(1), square(1)), (intercept(), raw(1)))
        worst = 0.0
        checked = 0
        while checked < 20:
            n = 50
            x = rng.standard_normal(n)
            y = rng.normal(0, 1) * x + rng.normal(0, 1) * x**2
            y = y + np.exp(0.5 * (0.3 + 0.3 * x)) * rng.standard_normal(n)
            d = (rng.random(n) < expit(0.6 + 0.4 * x)).astype(np.int8)
            if d.sum() < 8 or d.sum() > n - 3:
                continue
            data = Dataset.from_generated(np.column_stack([np.ones(n), x]), d, y)
            pf = fit_propensity_null(data)
            of = fit_outcome_parametric(data, family)
            s1 = score_statistic_s1(data, pf, of)
            fd = fd_gamma_score(data, pf, of, step=1e-5)
            worst = max(worst, abs(s1 - fd) / (1 + abs(s1)))
            checked += 1
        print(f"  worst relative deviation {worst:.3e} over 20 datasets")
        assert worst <= 1e-5


def _variance_gap(details, n, which, sl=slice(None)):
    ok = details.ok()[sl]
    stat = getattr(details, f"stat_{which}")[sl][ok]
    sig = getattr(details, f"sigma_sq_{which}")[sl][ok]
    emp = float(np.var(stat / np.sqrt(n), ddof=1))
    return abs(float(sig.mean()) - emp) / emp


def test_criterion_06_variance_estimator_consistency(hom_h0_study, het_h0_study):
    with criterion(6, "mean variance estimate vs sampling variance, both designs"):
        first = slice(0, 2000)  # replication r = stream r: a 2000-rep study
        gaps = [
            _variance_gap(hom_h0_study.details, 2000, "s1", first),
            _variance_gap(hom_h0_study.details, 2000, "s2", first),
            _variance_gap(het_h0_study.details, 2000, "s1"),
            _variance_gap(het_h0_study.details, 2000, "s2"),
        ]
        print(
            f"  hom gaps S1/S2: {100 * gaps[0]:.2f}% {100 * gaps[1]:.2f}% | "
            f"het gaps S1/S2: {100 * gaps[2]:.2f}% {100 * gaps[3]:.2f}%"
        )
        for gap in gaps:
            assert gap <= 0.05


def test_criterion_07_null_normality(hom_h0_study):
    with criterion(7, "standardized statistics pass a KS normality check"):
        det = hom_h0_study.details
        ok = det.ok()
        for which in ("z_s1", "z_s2"):
            z = getattr(det, which)[ok]
            result = stats.kstest(z, "norm")
            print(f"  {which}: KS p-value {result.pvalue:.4f}")
            assert result.pvalue > 0.01
        # null-calibration companion bound on the same study
        assert 0.04 <= hom_h0_study.rate_s1 <= 0.06
        assert 0.04 <= hom_h0_study.rate_s2 <= 0.06


def test_criterion_08_s1_s2_agreement():
    with criterion(8, "S1 equals S2 with matching homoskedastic bases"):
        cfg = Example2Config(n=1000, gamma=0.1, **HOM)
        report = run_rejection_study(
            cfg, 2000, alpha=ALPHA, base_seed=SEED,
            family=example2_family(heteroskedastic=False), keep_details=True,
        )
        det = report.details
        ok = det.ok()
        diff = np.abs(det.stat_s1[ok] - det.stat_s2[ok])
        bound = 1e-10 * (1 + np.abs(det.stat_s1[ok]))
        rate_gap = abs(report.rate_s1 - report.rate_s2)
        print(
            f"  max |S1-S2| {diff.max():.3e}; rate gap {100 * rate_gap:.2f} points "
            f"(S1 {100 * report.rate_s1:.2f}%, S2 {100 * report.rate_s2:.2f}%)"
        )
        assert np.all(diff <= bound)
        assert rate_gap <= 0.01


def test_criterion_09_homoskedastic_reduction():
    with criterion(9, "robust S2 variance matches the reduced form"):
        cfg = Example1Config(n=100_000, b_z=0.5, c1=0.0, c2=0.25, w_variant="identity")
        data = generate_example1(cfg, RngStream(SEED, 0))
        pf = fit_propensity_null(data, columns=example1_propensity_columns())
        lf = fit_location(data, example1_location_basis())
        comp = variance_s2(data, pf, lf)
        reduced = comp.reduced_sigma_sq(lf.residual_second_moment())
        rel = abs(comp.sigma_sq_hat - reduced) / comp.sigma_sq_hat
        print(f"  robust {comp.sigma_sq_hat:.6f} vs reduced {reduced:.6f} ({100 * rel:.3f}%)")
        assert rel <= 0.02


def test_criterion_10_local_power():
    with criterion(10, "local-power predictions track simulated rejection"):
        big = Example2Config(n=400_000, gamma=0.0, **HOM)
        data = generate_example2(big, RngStream(SEED, 0))
        pf = fit_propensity_null(data)
        of = fit_outcome_parametric(data, example2_family())
        lf = fit_location(data, example2_location_basis())
        comp1 = variance_s1(data, pf, of)
        comp2 = variance_s2(data, pf, lf)
        sigma1 = float(np.sqrt(comp1.sigma_sq_hat))
        sigma2 = float(np.sqrt(comp2.sigma_sq_hat))
        base2 = comp2.noncentrality_base()

        n = 4000
        for gamma0 in (0.0, 1.0, 2.0, 3.0, 5.0):
            cfg = Example2Config(n=n, gamma=gamma0 / np.sqrt(n), **HOM)
            report = run_rejection_study(cfg, 2000, alpha=ALPHA, base_seed=SEED)
            pred1 = analytic_local_power(gamma0, sigma1, ALPHA)
            pred2 = analytic_local_power(gamma0, sigma2, ALPHA, variant="S2", cross_term=base2)
            gap1 = abs(pred1 - report.rate_s1)
            gap2 = abs(pred2 - report.rate_s2)
            print(
                f"  gamma0={gamma0}: S1 predicted {100 * pred1:.2f}% simulated "
                f"{100 * report.rate_s1:.2f}% | S2 predicted {100 * pred2:.2f}% "
                f"simulated {100 * report.rate_s2:.2f}%"
            )
            assert gap1 <= 0.05
            assert gap2 <= 0.05


def test_criterion_11_moment_gradient_checks():
    with criterion(11, "analytic moment gradients match finite differences"):
        rng = np.random.default_rng(111)
        family = GaussianOutcomeFamily((raw(1), square(1)), (intercept(), raw(1)))
        probe = Dataset.from_generated(
            np.array([[1.0, 0.3]]), np.array([1], dtype=np.int8), np.array([0.1])
        )
        worst_grad = worst_hess = 0.0
        for _ in range(100):
            xi = np.concatenate([rng.normal(0, 1, 2), rng.normal(0, 0.5, 2)])
            x = np.array([1.0, rng.normal()])
            fit = outcome_fit_at(probe, family, xi)
            grad, hess = outcome_moment_gradients(fit, x)
            fd_grad = fd_mean_gradient(family, probe, xi, x)
            fd_hess = fd_integrated_hessian(family, xi, x)
            worst_grad = max(worst_grad, float(np.max(np.abs(fd_grad - grad) / (1 + np.abs(grad)))))
            worst_hess = max(worst_hess, float(np.max(np.abs(fd_hess - hess) / (1 + np.abs(hess)))))
        print(f"  worst gradient dev {worst_grad:.3e}; worst Hessian dev {worst_hess:.3e}")
        assert worst_grad <= 1e-6
        assert worst_hess <= 1e-6


def test_criterion_12_simulate_determinism(tmp_path):
    with criterion(12, "simulate reports are byte-identical across runs and threads"):
        for example, flags in (
            ("2", ["--xi", "-1,1,0.5,0", "--beta", "0.85,0", "--gamma", "0.05"]),
            ("1", ["--bz", "0.5", "--c1", "0.1", "--c2", "0.25", "--w", "quad04"]),
        ):
            outputs = []
            for tag, threads in (("a", 1), ("b", 8), ("c", 1)):
                out = tmp_path / f"rep{example}{tag}.json"
                code = cli_main(
                    ["simulate", "--example", example, "--n", "400", "--reps", "60",
                     "--seed", "17", "--threads", str(threads),
                     "--output", str(out), "--format", "json"] + flags
                )
                assert code == 0
                outputs.append(out.read_bytes())
            assert outputs[0] == outputs[1] == outputs[2]
            payload = json.loads(outputs[0])
            assert payload["results"][0]["replications"] == 60
        print("  both examples byte-identical at threads 1 and 8")
