import math
from dataclasses import asdict

import numpy as np
import pytest

from stochwave import experiments as ex
from stochwave.model import preset
from stochwave.spectral_basis import make_basis


def small_strong(**kw):
    base = dict(n_modes=16, steps=(4, 8, 16), ref_steps=32, samples=8, seed=3, batch_size=4)
    base.update(kw)
    return ex.StrongStudyConfig(**base)


def small_weak(**kw):
    base = dict(n_modes=16, steps=(4, 8, 16), ref_steps=64, samples=32, seed=3, batch_size=8)
    base.update(kw)
    return ex.WeakStudyConfig(**base)


# -- fit_rate ---------------------------------------------------------------

@pytest.mark.parametrize("order", [1.0, 0.5, 2.0])
def test_fit_rate_exact_power(order):
    taus = 2.0 ** -np.arange(3, 9)
    slope, _, resid = ex.fit_rate(taus, 0.3 * taus**order)
    assert slope == pytest.approx(order, abs=1e-12)
    assert resid <= 1e-12


def test_fit_rate_with_jitter():
    rng = np.random.default_rng(0)
    taus = 2.0 ** -np.arange(3, 9)
    for _ in range(200):
        errs = 2.0 * taus * rng.uniform(0.95, 1.05, taus.size)
        slope, _, _ = ex.fit_rate(taus, errs)
        assert 0.9 <= slope <= 1.1


@pytest.mark.parametrize("taus, errs", [([0.1], [0.2]), ([0.1, -0.2], [1, 2]),
                                        ([0.1, 0.2], [0.0, 1.0]), ([0.1, 0.1], [1.0, 2.0])])
def test_fit_rate_errors(taus, errs):
    with pytest.raises(ValueError):
        ex.fit_rate(taus, errs)


def test_predicted_rates():
    assert ex.predicted_strong_rate(0.5) == 0.5
    assert ex.predicted_strong_rate(1.0) == 1.0
    assert ex.predicted_weak_rate(0.5) == 1.0
    assert ex.predicted_weak_rate(0.2) == pytest.approx(0.4)


# -- functionals -------------------------------------------------------------

def test_paper_phi_examples():
    b = make_basis(8)
    u = np.zeros(8)
    assert ex.functional("paper_phi", b, u) == 0.0
    u[0] = np.sqrt(2)
    assert ex.functional("paper_phi", b, u) == pytest.approx(10.0, rel=1e-15)
    v = np.random.default_rng(0).standard_normal(8)
    v[0] = 0.0
    assert ex.functional("paper_phi", b, v) == 0.0


def test_paper_phi_matches_quadrature():
    from scipy.integrate import quad

    b = make_basis(4)
    c = np.array([0.3, -1.0, 0.2, 0.5])

    def u(x):
        return sum(c[k] * np.sqrt(2) * np.sin((k + 1) * np.pi * x) for k in range(4))

    want = 10 * quad(lambda x: u(x) * np.sin(np.pi * x), 0, 1)[0]
    assert ex.functional("paper_phi", b, c) == pytest.approx(want, rel=1e-12)


def test_phi_of_weak_initial_state_is_five():
    p = preset("sine_gordon_weak_additive", 64)
    assert ex.functional("paper_phi", p.basis, p.initial.u) == pytest.approx(5.0, abs=1e-13)


def test_other_functionals():
    b = make_basis(4)
    u = np.array([[1.0, 2.0, 3.0, 4.0]])
    assert ex.functional("h_norm_sq", b, u)[0] == 30.0
    for name in ("mode_3", "mode_k(3)", ("mode", 3)):
        assert ex.functional(name, b, u)[0] == 3.0
    with pytest.raises(ValueError):
        ex.functional("energy", b, u)
    with pytest.raises(ValueError):
        ex.functional("mode_9", b, u)


# -- strong study --------------------------------------------------------------

def test_self_comparison_is_zero():
    r = ex.strong_study(small_strong(schemes=("CN",), steps=(32,)))
    assert r.point("CN", 32).error == 0.0


def test_linear_homogeneous_ee_exact():
    r = ex.strong_study(small_strong(preset="linear_homogeneous", schemes=("EE",), ref_scheme="EE"))
    assert max(p.error for p in r.points) <= 1e-10


def test_strong_reproducible():
    a = ex.strong_study(small_strong())
    b = ex.strong_study(small_strong())
    assert [asdict(p) for p in a.points] == [asdict(p) for p in b.points]


def test_strong_threads_do_not_change_result():
    a = ex.strong_study(small_strong())
    b = ex.strong_study(small_strong(threads=3, batch_size=2))
    for p, q in zip(a.points, b.points):
        assert p.error == pytest.approx(q.error, rel=1e-12)


def test_strong_report_fields():
    r = ex.strong_study(small_strong(sup_norm=True))
    assert len(r.points) == 9
    for p in r.points:
        assert p.stderr >= 0 and p.n_samples == 8 and p.n_failed == 0
        assert p.sup_error >= p.error
    assert r.fits["EE"].predicted == 0.5
    assert r.fits["LIE"].predicted is None
    assert all(math.isfinite(f.slope) for f in r.fits.values())


def test_strong_config_validation():
    with pytest.raises(ValueError):
        ex.strong_study(small_strong(steps=(5,)))
    with pytest.raises(ValueError):
        ex.strong_study(small_strong(samples=1))


def test_blowups_are_counted():
    # a huge noise amplitude drives the Sine-Gordon nonlinearity to overflow
    p = preset("sine_gordon_strong_white", 8, sigma1=1e200)
    with pytest.raises(ex.StudyError):
        ex.strong_study(small_strong(n_modes=8), problem=p)


# -- weak study ----------------------------------------------------------------

def test_weak_report_fields():
    r = ex.weak_study(small_weak())
    assert r.reference_value is not None and r.reference_stderr > 0
    assert r.fits["EE"].predicted == 1.0
    for p in r.points:
        assert p.value is not None and p.stderr >= 0 and p.n_samples == 32


def test_weak_reproducible():
    a = ex.weak_study(small_weak())
    b = ex.weak_study(small_weak())
    assert [asdict(p) for p in a.points] == [asdict(p) for p in b.points]


def test_coupling_shrinks_stderr():
    kw = dict(n_modes=32, steps=(16,), ref_steps=256, samples=100, antithetic=False)
    coupled = ex.weak_study(small_weak(variance_reduction=True, **kw))
    loose = ex.weak_study(small_weak(variance_reduction=False, **kw))
    for s in ("EE", "LIE", "CN"):
        assert coupled.point(s, 16).stderr < loose.point(s, 16).stderr


def test_antithetic_shrinks_value_stderr():
    kw = dict(n_modes=32, steps=(16,), ref_steps=256, samples=100)
    anti = ex.weak_study(small_weak(antithetic=True, **kw))
    plain = ex.weak_study(small_weak(antithetic=False, **kw))
    assert anti.reference_stderr < plain.reference_stderr


def test_weak_config_validation():
    with pytest.raises(ValueError):
        ex.weak_study(small_weak(functional="nope"))
    with pytest.raises(ValueError):
        ex.weak_study(small_weak(samples=2))


# -- output --------------------------------------------------------------------

def test_csv_round_trip_and_fitted_rate(tmp_path):
    r = ex.strong_study(small_strong())
    f = tmp_path / "s.csv"
    r.to_csv(f)
    assert f.read_text().startswith("# generated")
    rows = ex.read_csv(f)
    assert list(rows[0]) == ex.CSV_COLUMNS
    for s in ("EE", "LIE", "CN"):
        sub = [row for row in rows if row["scheme"] == s]
        slope, _, resid = ex.fit_rate([row["tau"] for row in sub], [row["error"] for row in sub])
        for row in sub:
            assert abs(row["fitted_rate"] - slope) <= 1e-12
            assert abs(row["residual"] - resid) <= 1e-12


def test_csv_without_timestamp_is_deterministic(tmp_path):
    r1 = ex.strong_study(small_strong())
    r2 = ex.strong_study(small_strong())
    r1.to_csv(tmp_path / "a.csv", timestamp=False)
    r2.to_csv(tmp_path / "b.csv", timestamp=False)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_gnuplot_script(tmp_path):
    r = ex.strong_study(small_strong())
    r.to_csv(tmp_path / "s.csv")
    ex.emit_gnuplot(tmp_path / "s.csv", tmp_path / "s.gp", title="t")
    text = (tmp_path / "s.gp").read_text()
    assert "set logscale xy" in text
    assert "'s.csv'" in text
    assert "**0.5" in text and "slope 1'" in text


def test_table1_layout():
    r = ex.weak_study(small_weak(steps=(8, 16, 32, 64), ref_steps=64, samples=8))
    lines = ex.format_table1(r).splitlines()
    assert "Linear implicit Euler" in lines[1] and "Exponential Euler" in lines[1]
    body = lines[3:]
    assert [ln.split()[0] for ln in body] == ["2^-3", "2^-4", "2^-5", "2^-6"]
    assert all(len(ln.split()) == 4 for ln in body)
