import numpy as np
import pytest
from scipy.special import expit

from r2p.datasets import (
    CsvFormatError,
    CsvSchema,
    SyntheticSpec,
    gen_synthetic_a,
    gen_synthetic_b,
    gen_zero_effect_noise,
    generate,
    load_semisynthetic_csv,
    synthetic_a_effect,
    synthetic_b_effect,
)

DATA = __import__("pathlib").Path(__file__).parent / "data"
SCHEMA = CsvSchema(("x1", "x2"), "treatment", "outcome", "tau")


def test_a_effect_at_two():
    assert synthetic_a_effect(np.array([[2.0, -7.3]]))[0] == 1.0


def test_a_truth_matches_formula():
    ds = gen_synthetic_a(500, seed=1)
    assert np.array_equal(ds.truth.tau, 0.5 * ds.covariates[:, 0])
    assert np.allclose(ds.truth.y1 - ds.truth.y0, ds.truth.tau)


def test_a_effect_mean_near_zero():
    n = 20_000
    tau = gen_synthetic_a(n, seed=2).truth.tau
    assert abs(tau.mean()) < 3 * 0.5 / np.sqrt(n)


def test_a_effect_variance_quarter():
    tau = gen_synthetic_a(100_000, seed=3).truth.tau
    assert tau.var() == pytest.approx(0.25, rel=0.02)


def test_a_noise_scale():
    ds = gen_synthetic_a(20_000, seed=4)
    x = ds.covariates
    eta = 0.5 * x[:, 0] + x[:, 1]
    eps = ds.truth.y0 - (eta - 0.25 * x[:, 0])
    assert eps.std() == pytest.approx(0.1, rel=0.03)
    eps_sd = gen_synthetic_a(20_000, seed=4, noise_as_sd=True)
    x = eps_sd.covariates
    assert (eps_sd.truth.y0 - (0.25 * x[:, 0] + x[:, 1])).std() == pytest.approx(0.01, rel=0.03)


def test_generators_reproducible():
    for gen in (gen_synthetic_a, gen_synthetic_b, gen_zero_effect_noise):
        a, b = gen(50, 9), gen(50, 9)
        assert np.array_equal(a.covariates, b.covariates)
        assert np.array_equal(a.outcomes, b.outcomes)
        assert np.array_equal(a.treatments, b.treatments)


def test_b_effect_values():
    assert synthetic_b_effect(9.0) == -3.0
    assert synthetic_b_effect(14.0) == pytest.approx(4 / (1 + np.exp(-5)) - 5, abs=1e-12)
    assert synthetic_b_effect(14.0) == pytest.approx(-1.0268, abs=1e-4)
    assert synthetic_b_effect(4.0) == pytest.approx(-4.9732, abs=1e-4)
    assert abs(synthetic_b_effect(4.0)) > abs(synthetic_b_effect(14.0))


def test_b_truth_is_analytic():
    ds = gen_synthetic_b(400, seed=5)
    onset = ds.covariates[:, 0]
    assert np.allclose(ds.truth.tau, 4 * expit(onset - 9) - 5, atol=1e-12)
    assert onset.min() >= 4 and onset.max() <= 14
    assert ds.d == 10


def test_generate_split_sizes():
    tr, te = generate(SyntheticSpec("B", 30, 70, seed=1))
    assert (tr.n, te.n) == (30, 70)


def test_spec_validation():
    with pytest.raises(ValueError):
        SyntheticSpec("C")


def test_zero_effect_generator():
    ds = gen_zero_effect_noise(5000, seed=0)
    assert ds.d == 1 and np.all(ds.truth.tau == 0)
    diff = ds.truth.y1 - ds.truth.y0
    assert abs(diff.mean()) < 0.01 and diff.std() == pytest.approx(0.1, rel=0.05)


def test_csv_three_rows():
    ds = load_semisynthetic_csv(DATA / "tiny.csv", SCHEMA)
    assert ds.n == 3 and ds.d == 2
    assert list(ds.treatments) == [1, 0, 0]
    assert np.allclose(ds.truth.tau, [0.4, 0.1, 0.9])


def test_csv_missing_column(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("x1,x2,outcome,tau\n1,2,3,4\n")
    with pytest.raises(CsvFormatError, match="treatment"):
        load_semisynthetic_csv(p, SCHEMA)


def test_csv_bad_treatment(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("x1,x2,treatment,outcome,tau\n1,2,1,3,0\n1,2,2,3,0\n")
    with pytest.raises(CsvFormatError, match="row 3"):
        load_semisynthetic_csv(p, SCHEMA)


def test_csv_non_numeric(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("x1,x2,treatment,outcome,tau\n1,abc,1,3,0\n")
    with pytest.raises(CsvFormatError, match="x2"):
        load_semisynthetic_csv(p, SCHEMA)


def test_schema_names_distinct():
    with pytest.raises(ValueError):
        CsvSchema(("a", "a"), "t", "y")
