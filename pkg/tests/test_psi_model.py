import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wlab.errors import InvalidSpec, OutOfRange, StructureViolation
from wlab.psi_model import PsiSpec, beta_coeffs, check_structure, eval_psi

params = st.tuples(
    st.floats(0.1, 10), st.floats(0, 0.99), st.floats(0, 5)
)


def sampled_table(spec, s_max=20.0, n=2001):
    s = np.linspace(0, s_max, n)
    psi, dpsi, ddpsi, _ = eval_psi(spec, s)
    return PsiSpec.tabulated(s, psi, dpsi, ddpsi)


@pytest.mark.parametrize("abc", [(0, 0, 0), (-1, 0, 0), (1, -0.1, 0), (1, 0, -2), (math.nan, 0, 0)])
def test_rejects_invalid_parameters(abc):
    with pytest.raises(InvalidSpec):
        PsiSpec.sqrt_family(*abc)


def test_closed_form_values():
    psi, dpsi, ddpsi, chi = eval_psi(PsiSpec.sqrt_family(4, 3, 1), 2.0)
    assert psi == pytest.approx(5.0)  # sqrt(4 + 12) + 1
    assert dpsi == pytest.approx(1.5)
    assert ddpsi == pytest.approx(12 / 64)
    assert chi == pytest.approx(0.75)


def test_chi_limit_at_zero():
    _, _, ddpsi, chi = eval_psi(PsiSpec.sqrt_family(4, 1, 0), 0.0)
    assert chi == pytest.approx(ddpsi) == pytest.approx(0.5)  # b / sqrt(a)


def test_negative_argument_rejected():
    with pytest.raises(OutOfRange):
        eval_psi(PsiSpec.sqrt_family(1, 0, 0), -0.5)


@settings(max_examples=50, deadline=None)
@given(params, st.floats(0.05, 15))
def test_derivatives_match_differences(abc, s):
    spec = PsiSpec.sqrt_family(*abc)
    h = 1e-5
    p_plus, dp_plus = eval_psi(spec, s + h)[:2]
    p_minus, dp_minus = eval_psi(spec, s - h)[:2]
    _, dpsi, ddpsi, _ = eval_psi(spec, s)
    assert (p_plus - p_minus) / (2 * h) == pytest.approx(dpsi, abs=1e-8)
    assert (dp_plus - dp_minus) / (2 * h) == pytest.approx(ddpsi, abs=1e-7)


@settings(max_examples=50, deadline=None)
@given(params, st.floats(0, 50))
def test_scalar_and_array_paths_agree(abc, s):
    spec = PsiSpec.sqrt_family(*abc)
    arr = eval_psi(spec, np.array([s]))
    assert spec.psi1(s) == pytest.approx(arr[0][0], rel=1e-15)
    assert spec.dpsi1(s) == pytest.approx(arr[1][0], rel=1e-15, abs=1e-300)
    assert spec.ddpsi1(s) == pytest.approx(arr[2][0], rel=1e-15)


def test_structure_pass_and_fail():
    good = check_structure(PsiSpec.sqrt_family(1, 0.5, 0), 20.0)
    assert good.passed
    bad = check_structure(PsiSpec.sqrt_family(1, 1.5, 0), 20.0)
    assert not bad.passed and bad.margin_a < 0


def test_structure_report_serializes():
    doc = check_structure(PsiSpec.sqrt_family(1, 0, 0), 5.0, n=100).to_dict()
    assert doc["name"] == "structure" and doc["pass"] is True
    assert set(doc["worst_s"]) == {"a", "b", "c", "d"}


def test_structure_rejects_bad_range():
    with pytest.raises(ValueError):
        check_structure(PsiSpec.sqrt_family(1, 0, 0), 0.0)


def test_beta_weights():
    b1, b2 = beta_coeffs(PsiSpec.sqrt_family(1, 0.5, 0), np.linspace(0, 10, 11))
    np.testing.assert_allclose(b1 + b2, 2.0)
    assert np.all(b1 > 0)
    with pytest.raises(StructureViolation):
        beta_coeffs(PsiSpec.sqrt_family(1, 4, 0), 10.0)


def test_tabulated_matches_family():
    spec = PsiSpec.sqrt_family(1, 0.5, 0)
    s = np.linspace(0.013, 19.9, 777)
    errs = []
    for n in (2001, 4001):
        tab = sampled_table(spec, n=n)
        errs.append([np.max(np.abs(g - w)) for g, w in zip(eval_psi(tab, s)[:3], eval_psi(spec, s)[:3])])
    # Hermite cubics for psi and psi' are fourth order; psi'' is a monotone spline.
    assert max(errs[0][:2]) < 1e-10
    assert errs[0][2] < 5e-6
    assert errs[0][2] / errs[1][2] > 8
    assert check_structure(sampled_table(spec), 19.9).passed


def test_tabulated_range_enforced():
    tab = sampled_table(PsiSpec.sqrt_family(1, 0.5, 0), s_max=5.0)
    assert tab.s_range == (0.0, 5.0)
    with pytest.raises(OutOfRange):
        eval_psi(tab, 6.0)


def test_tabulated_validation():
    s = np.linspace(0, 1, 20)
    with pytest.raises(InvalidSpec):
        PsiSpec.tabulated(s + 0.1, np.ones(20), np.zeros(20), np.zeros(20))
    with pytest.raises(InvalidSpec):
        PsiSpec.tabulated(s, np.ones(20), np.full(20, 0.3), np.zeros(20))
    with pytest.raises(InvalidSpec):
        PsiSpec.tabulated(s[:3], np.ones(3), np.zeros(3), np.zeros(3))


def test_csv_round_trip(tmp_path):
    spec = PsiSpec.sqrt_family(2, 0.3, 0.1)
    s = np.linspace(0, 8, 801)
    psi, dpsi, ddpsi, _ = eval_psi(spec, s)
    path = tmp_path / "psi.csv"
    rows = ["s,psi,dpsi,ddpsi"] + [",".join(repr(float(x)) for x in row) for row in zip(s, psi, dpsi, ddpsi)]
    path.write_text("\n".join(rows) + "\n")
    tab = PsiSpec.from_csv(path)
    assert tab.to_dict()["n_rows"] == 801
    assert eval_psi(tab, 3.3)[0] == pytest.approx(spec.psi1(3.3), abs=1e-8)
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y\n1,2\n")
    with pytest.raises(InvalidSpec):
        PsiSpec.from_csv(bad)
