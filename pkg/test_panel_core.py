import numpy as np
import pandas as pd
import pytest

import policybound.panel_core as panel_core
from policybound.errors import (
    BalanceError,
    DomainError,
    DuplicateError,
    EmptyPoolError,
    PoolError,
    SchemaError,
)


#################### Fixtures ####################
# https://docs.pytest.org/en/stable/fixture.html


SMALL_CSV = """unit,time,outcome,m,g
a,1,1.0,1,0
a,2,2.0,1,0
a,3,4.5,1,0
b,1,0.5,0,0
b,2,1.0,0,0
b,3,1.25,0,0
c,1,3.0,2,1
c,2,3.5,2,1
c,3,6.0,2,1
d,1,2.0,0,1
d,2,2.5,0,1
d,3,3.0,0,1
"""


@pytest.fixture
def small_panel():
    """
    Four units over three periods: a and c treated with versions 1 and 2,
    b and d untreated, one static grouping column g.
    """
    yield panel_core.load_panel(SMALL_CSV)


#################### Loading ####################


def test_load_shape(small_panel):
    assert small_panel.units == ("a", "b", "c", "d")
    assert small_panel.times == (1, 2, 3)
    assert small_panel.T == 3
    assert small_panel.outcome("a", 3) == 4.5
    assert list(small_panel.treatment) == [1, 0, 2, 0]
    assert list(small_panel.coarsened) == [1, 0, 1, 0]
    assert small_panel.covariate_columns == ("g",)


def test_units_keep_first_appearance_and_times_sort():
    text = "unit,time,outcome,m\nz,2,1,0\nz,1,0,0\ny,1,5,1\ny,2,7,1\n"
    panel = panel_core.load_panel(text)
    assert panel.units == ("z", "y")
    assert panel.times == (1, 2)
    assert panel.outcome("z", 1) == 0.0


def test_missing_column():
    with pytest.raises(SchemaError):
        panel_core.load_panel("unit,time,outcome\na,1,1\n")


def test_duplicate_row():
    text = SMALL_CSV + "a,3,9.0,1,0\n"
    with pytest.raises(DuplicateError):
        panel_core.load_panel(text)


def test_unbalanced_panel_lists_holes():
    lines = SMALL_CSV.splitlines()
    text = "\n".join(l for l in lines if not l.startswith("b,2,")) + "\n"
    with pytest.raises(BalanceError) as e:
        panel_core.load_panel(text)
    assert e.value.missing == [("b", 2)]


def test_treatment_must_be_static():
    text = SMALL_CSV.replace("a,3,4.5,1,0", "a,3,4.5,2,0")
    with pytest.raises(SchemaError):
        panel_core.load_panel(text)


def test_non_integer_code():
    text = SMALL_CSV.replace("a,1,1.0,1,0", "a,1,1.0,1.5,0")
    with pytest.raises(SchemaError):
        panel_core.load_panel(text)


def test_covariates_are_not_imputed():
    text = SMALL_CSV.replace("d,2,2.5,0,1", "d,2,2.5,0,")
    with pytest.raises(SchemaError):
        panel_core.load_panel(text)


def test_non_numeric_outcome():
    text = SMALL_CSV.replace("b,2,1.0,0,0", "b,2,x,0,0")
    with pytest.raises(SchemaError):
        panel_core.load_panel(text)


@pytest.mark.parametrize("text", ["", SMALL_CSV + "d,4,1.0,0,1,extra\n"])
def test_malformed_csv(text):
    with pytest.raises(SchemaError):
        panel_core.load_panel(text)


def test_read_panel_errors(tmp_path):
    with pytest.raises(SchemaError):
        panel_core.read_panel(str(tmp_path / "nope.csv"))
    garbled = tmp_path / "latin1.csv"
    garbled.write_bytes(SMALL_CSV.replace("a,", "\xe9,").encode("latin-1"))
    with pytest.raises(SchemaError):
        panel_core.read_panel(str(garbled))


def test_single_period_rejected():
    with pytest.raises(SchemaError):
        panel_core.load_panel("unit,time,outcome,m\na,1,1,0\nb,1,2,1\n")


def test_serialize_round_trip(small_panel):
    noisy = small_panel.replace(outcomes=small_panel.outcomes + np.pi / 7.0)
    text = panel_core.serialize_panel(noisy)
    again = panel_core.load_panel(text)
    assert again == noisy
    assert np.array_equal(again.outcomes, noisy.outcomes)


#################### Panel ####################


def test_panel_is_read_only(small_panel):
    with pytest.raises(ValueError):
        small_panel.outcomes[0, 0] = 7.0


def test_coarsened_must_match_codes():
    with pytest.raises(SchemaError):
        panel_core.Panel(["a", "b"], [1, 2], [[0, 1], [0, 1]], np.array([2, 0]), coarsened=[0, 0])


def test_derive_coarsened_is_idempotent(small_panel):
    assert panel_core.derive_coarsened(small_panel) is small_panel


def test_unknown_unit(small_panel):
    with pytest.raises(DomainError):
        small_panel.row("zz")


def test_first_difference(small_panel):
    assert panel_core.first_difference(small_panel, "a", 3) == 2.5
    assert panel_core.first_difference(small_panel, "b", 2) == 0.5
    np.testing.assert_array_equal(
        small_panel.first_differences()[:, 1], [2.5, 0.25, 2.5, 0.5]
    )
    for t in (1, 4):
        with pytest.raises(DomainError):
            panel_core.first_difference(small_panel, "a", t)


#################### Comparator pools ####################


def test_pool_by_code(small_panel):
    pool = panel_core.comparator_pool(small_panel, "a", 0)
    assert pool.members == ("b", "d")
    assert len(pool) == 2
    assert not pool.coarsened


def test_pool_excludes_target(small_panel):
    pool = panel_core.comparator_pool(small_panel, "b", 0)
    assert pool.members == ("d",)


def test_pool_by_code_keeps_versions_apart(small_panel):
    pool = panel_core.comparator_pool(small_panel, "b", 2)
    assert pool.members == ("c",)


def test_opposite_arm_pool(small_panel):
    pool = panel_core.opposite_arm_pool(small_panel, "b")
    assert pool.coarsened
    assert pool.target_code == 1
    assert pool.members == ("a", "c")


def test_matched_pool(small_panel):
    pool = panel_core.comparator_pool(small_panel, "a", 0, match_columns=["g"])
    assert pool.members == ("b",)
    with pytest.raises(EmptyPoolError):
        panel_core.comparator_pool(small_panel, "c", 2, match_columns=["g"])


def test_pool_rejects_unknown_column(small_panel):
    with pytest.raises(SchemaError):
        panel_core.comparator_pool(small_panel, "a", 0, match_columns=["nope"])


def test_pool_cannot_contain_target():
    with pytest.raises(PoolError):
        panel_core.ComparatorPool("a", 0, ("a", "b"))
    with pytest.raises(EmptyPoolError):
        panel_core.ComparatorPool("a", 0, ())


def test_covariate_matrix(small_panel):
    block = small_panel.covariate_matrix(small_panel.rows(["c", "a"]), ["g"])
    np.testing.assert_array_equal(block, [[1.0], [0.0]])
    labelled = small_panel.replace(
        covariates=pd.DataFrame({"g": ["x", "x", "y", "y"]}, index=list(small_panel.units))
    )
    with pytest.raises(SchemaError):
        labelled.covariate_matrix([0], ["g"])
