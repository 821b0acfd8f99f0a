import math

import numpy as np
import pytest

from bbmlab.fronts import (CorrectionSpec, FrontAdmissibilityError, FrontSpec,
                           constants, directional_constant, eta, predicted_tail)
from bbmlab.spectral import principal_eigenvalue, principal_eigenvalue_shell


@pytest.fixture(scope="module")
def unit():
    sd = principal_eigenvalue([(0.0, 1.0)], with_lambda2=False)
    return sd, constants(sd, [(0.0, 1.0)])


def test_unit_atom_constants(unit):
    sd, c = unit
    assert abs(c.c_star - 2.0) < 1e-10
    assert abs(c.c_d - 2.0) < 1e-10
    assert abs(c.c_zero - 1.0) < 1e-10


def test_two_sided_constant_closed_form():
    # c_* = C_0 = 2 / sqrt((2p-1) beta): two independent routes to 1e-10
    for beta, p in [(1.0, 1.0), (4.0, 1.0), (2.0, 0.75), (0.5, 0.9)]:
        w = (2 * p - 1) * beta
        sd = principal_eigenvalue([(0.0, w)], with_lambda2=False)
        c = constants(sd, [(0.0, w)])
        assert abs(c.c_star - 2.0 / math.sqrt(w)) < 1e-10


def test_cstar_consistency_identity(unit):
    sd, c = unit
    assert abs(c.c_star - c.c_d * sd.speed ** ((sd.d - 1) / 2.0)) < 1e-12


def test_directional_additivity_d1():
    nu = [(-0.5, 0.8), (1.0, 0.6)]
    sd = principal_eigenvalue(nu, with_lambda2=False)
    c = constants(sd, nu)
    right = directional_constant(sd, nu, +1)
    left = directional_constant(sd, nu, -1)
    assert abs(right + left - c.c_d) < 1e-12


def test_symmetric_one_sided_is_half(unit):
    sd, c = unit
    assert abs(c.c_zero - c.c_d / 2.0) < 1e-12


def test_eta_exact_for_unit_atom_r1_front(unit):
    sd, c = unit
    f = FrontSpec(kind="R1", shift=0.0)
    for t in (5.0, 50.0):
        exact, asym = eta(sd, c, f, t)
        assert abs(exact / asym - 1.0) < 1e-12
        assert abs(exact - 2.0) < 1e-12


def test_eta_kappa_shift_limit(unit):
    sd, c = unit
    f = FrontSpec(kind="R1", shift=1.3)
    exact, _ = eta(sd, c, f, 50.0)
    assert abs(exact - c.c_star * math.exp(-sd.kappa * 1.3)) < 1e-12


def test_eta_degenerate_full_mass(unit):
    sd, c = unit
    f = FrontSpec(kind="R1", shift=0.0)
    exact, _ = eta(sd, c, f, 0.0)
    assert abs(exact - sd.l1_norm()) < 1e-12


def test_eta_ratio_tends_to_one_shell():
    from bbmlab.fronts import eta_log
    sd = principal_eigenvalue_shell(1.0, 6.0, 1.0)
    c = constants(sd, 6.0)
    f = FrontSpec(kind="R2", delta=0.9 * sd.kappa)
    ratios = []
    for t in (5.0, 10.0, 20.0, 40.0):
        le, la = eta_log(sd, c, f, t)
        ratios.append(math.exp(le - la))
    assert np.all(np.diff(np.abs(np.array(ratios) - 1.0)) < 0)
    assert abs(ratios[-1] - 1.0) < 1e-2


def test_predicted_tail_values(unit):
    sd, c = unit
    f = FrontSpec(kind="R2", delta=0.9)
    assert abs(predicted_tail(sd, c, f, 10.0, 0.0) - 2 * math.exp(-4.0)) < 1e-12
    f3 = FrontSpec(kind="R3", gamma=0.0, correction=CorrectionSpec("loglog", 1.0))
    t = math.exp(math.e)
    assert abs(predicted_tail(sd, c, f3, t, 0.0) - 2.0 / math.e) < 1e-12
    f1 = FrontSpec(kind="R1", shift=0.0)
    assert abs(predicted_tail(sd, c, f1, 99.0, 0.0) - 2.0) < 1e-12


def test_predicted_tail_rightmost_mode(unit):
    sd, c = unit
    f = FrontSpec(kind="R2", delta=0.9, side="right")
    assert abs(predicted_tail(sd, c, f, 10.0, 0.0) - math.exp(-4.0)) < 1e-12


def test_front_values(unit):
    sd, _ = unit
    f1 = FrontSpec(kind="R1", shift=0.7)
    # d = 1: no log correction
    assert abs(f1.value(10.0, sd) - (0.5 * 10.0 + 0.7)) < 1e-12
    f2 = FrontSpec(kind="R2", delta=0.8, correction=CorrectionSpec("sqrtlog", 2.0))
    assert abs(f2.value(10.0, sd) - (8.0 + 2.0 * math.sqrt(math.log(10.0)))) < 1e-12


def test_admissibility_rejections(unit):
    sd, c = unit
    with pytest.raises(FrontAdmissibilityError):
        FrontSpec(kind="R2", delta=1.2).validate(sd)       # above sqrt(-2 lambda)
    with pytest.raises(FrontAdmissibilityError):
        FrontSpec(kind="R2", delta=0.5).validate(sd)       # at sqrt(-lambda/2)
    with pytest.raises(FrontAdmissibilityError):
        FrontSpec(kind="R3", gamma=-0.5).validate(sd)      # below d - 1
    with pytest.raises(FrontAdmissibilityError):
        FrontSpec(kind="R3", gamma=0.0).validate(sd)       # needs diverging b
    with pytest.raises(FrontAdmissibilityError):
        predicted_tail(sd, c, FrontSpec(kind="R2", delta=1.5), 5.0, 0.0)
    with pytest.raises(FrontAdmissibilityError):
        FrontSpec(kind="R4")
    with pytest.raises(FrontAdmissibilityError):
        CorrectionSpec("cube", 1.0)


def test_front_roundtrip_dict():
    f = FrontSpec(kind="R3", gamma=1.0, correction=CorrectionSpec("loglog", 0.5),
                  side="right")
    assert FrontSpec.from_dict(f.to_dict()) == f


def test_shell_constants_quadrature_route():
    sd = principal_eigenvalue_shell(1.0, 1.0, 1.0)
    ca = constants(sd, 1.0)
    cb = constants(sd, 1.0, use_quadrature=True)
    assert abs(ca.c_d / cb.c_d - 1.0) < 1e-10
    halves = directional_constant(sd, 1.0, +1) + directional_constant(sd, 1.0, -1)
    assert abs(halves / ca.c_d - 1.0) < 1e-10
