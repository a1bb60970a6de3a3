import math
import random
from fractions import Fraction

import pytest

from pretzel import costs
from pretzel.errors import ParameterError


def test_beta_exact_division():
    cm = costs.CostModel(B=2048, p_pail=24, p_xpir=1024)
    assert cm.beta_xpir == 2
    assert cm.beta_prime_xpir == Fraction(2)
    assert cm.beta_pail == math.ceil(2048 / 24)


def test_beta_prime_residual_formula():
    cm = costs.CostModel(B=2, p_pail=24, p_xpir=1024)
    assert cm.beta_prime_xpir == Fraction(1, 512)  # 0 + 1/floor(1024/2)


def test_beta_pp_depends_on_function():
    cm = costs.CostModel(B=40, B_prime=5, p_pail=24, p_xpir=8)
    assert cm.beta_pp_xpir("spam") == Fraction(5)  # ceil(40/8)
    assert cm.beta_pp_xpir("topics") == Fraction(5)  # B'
    assert cm.b_pp("spam") == 40 and cm.b_pp("topics") == 5


def test_nonprivate_zero_constants():
    cm = costs.CostModel(L=100, B=50, p_pail=1, p_xpir=1)
    cell = costs.estimate_costs(cm, "nonprivate", "spam", "per_email")
    assert cell["provider_cpu"] == 0 and cell["network"] == 0
    assert cell["client_cpu"] is None
    setup = costs.estimate_costs(cm, "nonprivate", "spam", "setup")
    assert all(v is None for v in setup.values())


def test_cells_match_hand_evaluation():
    rnd = random.Random(99)
    for _ in range(20):
        cm = costs.CostModel(
            N=rnd.randrange(1, 10**6),
            N_prime=rnd.randrange(1, 10**5),
            B=rnd.randrange(1, 3000),
            B_prime=rnd.randrange(1, 50),
            L=rnd.randrange(1, 1000),
            p_pail=rnd.randrange(1, 64),
            p_xpir=1 << rnd.randrange(0, 11),
            e_pail=rnd.random(),
            d_pail=rnd.random(),
            a_pail=rnd.random(),
            c_pail=256.0,
            e_xpir=rnd.random(),
            d_xpir=rnd.random(),
            a_xpir=rnd.random(),
            c_xpir=16384.0,
            h=rnd.random(),
            s=rnd.random(),
            y_per_in=rnd.random(),
            sz_per_in=rnd.random(),
            sz_email=rnd.random(),
            K_cpu=rnd.random(),
            K_net=rnd.random(),
        )
        F = Fraction
        bp = F(cm.beta_pail)
        setup = costs.estimate_costs(cm, "baseline", "topics", "setup")
        assert setup["provider_cpu"] == F(cm.N) * bp * F(cm.e_pail) + F(cm.K_cpu)
        assert setup["client_storage"] == F(cm.N) * bp * F(cm.c_pail)
        per = costs.estimate_costs(cm, "baseline", "topics", "per_email")
        assert per["provider_cpu"] == bp * F(cm.d_pail) + F(cm.B) * F(cm.y_per_in)
        assert per["client_cpu"] == (
            F(cm.L) * bp * F(cm.a_pail) + bp * F(cm.e_pail) + F(cm.B) * F(cm.y_per_in)
        )
        assert per["network"] == (
            F(cm.sz_email) + bp * F(cm.c_pail) + F(cm.B) * F(cm.sz_per_in)
        )

        bpx = cm.beta_prime_xpir
        psetup = costs.estimate_costs(cm, "pretzel", "topics", "setup")
        assert psetup["provider_cpu"] == F(cm.N_prime) * bpx * F(cm.e_xpir) + F(cm.K_cpu)
        assert psetup["network"] == F(cm.N_prime) * bpx * F(cm.c_xpir) + F(cm.K_net)
        pper = costs.estimate_costs(cm, "pretzel", "topics", "per_email")
        bpp, b2 = cm.beta_pp_xpir("topics"), F(cm.b_pp("topics"))
        assert pper["provider_cpu"] == bpp * F(cm.d_xpir) + b2 * F(cm.y_per_in)
        assert pper["client_cpu"] == (
            F(cm.L) * F(cm.beta_xpir) * F(cm.a_xpir)
            + (F(cm.L) + F(cm.B_prime)) * F(cm.s)
            + bpp * F(cm.e_xpir)
            + b2 * F(cm.y_per_in)
        )
        assert pper["network"] == (
            F(cm.sz_email) + bpp * F(cm.c_xpir) + b2 * F(cm.sz_per_in)
        )
        # everything stays rational end to end
        for cell in (setup, per, psetup, pper):
            assert all(isinstance(v, Fraction) for v in cell.values() if v is not None)


def test_full_table_shape():
    cm = costs.CostModel(N=10, N_prime=5, B=4, B_prime=2, L=3, p_pail=2, p_xpir=4)
    table = costs.full_table(cm, "spam")
    assert set(table) == {(s, p) for s in costs.SYSTEMS for p in costs.PHASES}
    assert "client_storage" in table[("baseline", "setup")]
    assert "client_storage" not in table[("baseline", "per_email")]


def test_validation():
    with pytest.raises(ParameterError):
        costs.CostModel(N=-1)
    cm = costs.CostModel(B=4)
    with pytest.raises(ParameterError):
        _ = cm.beta_pail  # p_pail missing
    with pytest.raises(ParameterError):
        costs.estimate_costs(cm, "bogus", "spam", "setup")
    with pytest.raises(ParameterError):
        costs.estimate_costs(cm, "baseline", "bogus", "setup")
    with pytest.raises(ParameterError):
        costs.estimate_costs(cm, "baseline", "spam", "bogus")
