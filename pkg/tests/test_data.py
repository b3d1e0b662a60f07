import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bargain_lab.data import (
    Dataset,
    HouseholdRecord,
    Schema,
    SelectionRules,
    load_dataset,
    select_sample,
    write_dataset,
)
from bargain_lab.errors import EmptySampleError, RowError, ValidationError

HEADER = ("id,year,teen_gender,teen_age,schooling,teen_market_hours,teen_wage,teen_domestic_hours,"
          "parent_wage,parent_market_hours,parent_domestic_hours,nonlabor_income,treated,"
          "transfer_amount,instrument,father_age,mother_age\n")


def row(i, **kw):
    base = dict(id=f"h{i}", year=2015, teen_gender="son", teen_age=16, schooling=1,
                teen_market_hours=0, teen_wage="", teen_domestic_hours=5, parent_wage=1.8,
                parent_market_hours=48, parent_domestic_hours=6, nonlabor_income=0.3,
                treated=0, transfer_amount=0, instrument=0.2, father_age=45, mother_age=42)
    base.update(kw)
    return ",".join(str(v) for v in base.values()) + "\n"


def write(tmp_path, rows, name="d.csv"):
    p = tmp_path / name
    p.write_text(HEADER + "".join(rows))
    return p


def make(n, rng, **over):
    cols = dict(
        id=[f"r{i}" for i in range(n)], year=np.full(n, 2014), teen_gender=["son"] * n,
        teen_age=rng.integers(15, 21, n).astype(float), schooling=np.ones(n, int),
        teen_market_hours=np.zeros(n), teen_wage=np.full(n, np.nan),
        teen_domestic_hours=rng.uniform(0, 10, n), parent_wage=rng.lognormal(0.4, 0.4, n),
        parent_market_hours=rng.uniform(20, 60, n), parent_domestic_hours=rng.uniform(0, 10, n),
        nonlabor_income=rng.normal(0, 1, n), treated=np.zeros(n, int),
        transfer_amount=np.zeros(n), instrument=rng.uniform(0, 1, n),
    )
    cols.update(over)
    covs = {"father_age": rng.integers(30, 65, n).astype(float),
            "mother_age": rng.integers(30, 65, n).astype(float)}
    return Dataset(cols, covs)


def test_load_three_rows(tmp_path):
    p = write(tmp_path, [row(1), row(2, schooling=0, teen_market_hours=20, teen_wage=0.9), row(3)])
    d = load_dataset(p)
    assert len(d) == 3
    assert math.isnan(d.teen_wage[0]) and d.teen_wage[1] == 0.9
    assert d.covariate_names == ("father_age", "mother_age")
    rec = d.records[1]
    assert isinstance(rec, HouseholdRecord) and rec.teen_market_hours == 20
    assert rec.covariates["father_age"] == 45


def test_conditionality_violation(tmp_path):
    p = write(tmp_path, [row(1), row(2, treated=1, schooling=0, transfer_amount=0.1)])
    with pytest.raises(ValidationError, match="conditionality violated") as err:
        load_dataset(p)
    assert err.value.violations[0][0] == "h2"


def test_parent_wage_zero(tmp_path):
    p = write(tmp_path, [row(1, parent_wage=0)])
    with pytest.raises(ValidationError, match="parent_wage"):
        load_dataset(p)


def test_row_error_has_line_number(tmp_path):
    p = write(tmp_path, [row(1), row(2, parent_wage="abc")])
    with pytest.raises(RowError, match="line 3"):
        load_dataset(p)


def test_header_mismatch(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("id,year\nh1,2015\n")
    with pytest.raises(RowError, match="header"):
        load_dataset(p)


def test_schema_column_map(tmp_path):
    p = tmp_path / "renamed.csv"
    p.write_text(HEADER.replace("parent_wage", "wage_father") + row(1))
    d = load_dataset(p, Schema(columns={"parent_wage": "wage_father"}))
    assert d.parent_wage[0] == 1.8
    with pytest.raises(RowError, match="unexpected"):
        load_dataset(p, Schema(columns={"parent_wage": "wage_father"}, covariates=("father_age",)))


def test_roundtrip_bit_identical(tmp_path):
    rng = np.random.default_rng(0)
    d = make(50, rng)
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    write_dataset(d, a)
    d1 = load_dataset(a)
    write_dataset(d1, b)
    assert d1.equals(d)
    assert load_dataset(b).equals(d1)
    assert a.read_bytes() == b.read_bytes()


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=3, max_size=3))
def test_roundtrip_arbitrary_floats(tmp_path_factory, vals):
    rng = np.random.default_rng(1)
    d = make(3, rng, nonlabor_income=np.array(vals))
    p = tmp_path_factory.mktemp("rt") / "x.csv"
    write_dataset(d, p)
    assert load_dataset(p).equals(d)


def test_arrays_are_read_only():
    d = make(5, np.random.default_rng(0))
    with pytest.raises(ValueError):
        d.parent_wage[0] = 3.0
    with pytest.raises(ValueError):
        d.covariate("father_age")[0] = 3.0


def test_selection_drops_old_teen():
    rng = np.random.default_rng(0)
    ages = np.full(4, 16.0)
    ages[2] = 21
    d = make(4, rng, teen_age=ages)
    out = select_sample(d, SelectionRules())
    assert len(out) == 3 and "r2" not in set(out.id)
    assert len(d) == 4


def test_selection_counts_ten_percent():
    rng = np.random.default_rng(3)
    n = 1000
    ages = rng.uniform(15, 20, n)
    bad = rng.choice(n, 100, replace=False)
    ages[bad[:50]] = rng.uniform(21, 25, 50)
    ages[bad[50:]] = rng.uniform(10, 14.5, 50)
    d = make(n, rng, teen_age=ages, parent_market_hours=rng.uniform(1, 60, n))
    report = []
    out = select_sample(d, SelectionRules(), report=report)
    expected = int(np.sum((ages >= 15) & (ages <= 20)))
    assert expected == 900 and len(out) == 900
    assert report[0][1:] == (900, 100)


def test_selection_idempotent_and_trim():
    rng = np.random.default_rng(4)
    d = make(300, rng)
    rules = SelectionRules(trim={"parent_wage": (0.5, 3.0), "teen_wage": (0.1, 5.0)})
    once = select_sample(d, rules)
    twice = select_sample(once, rules)
    assert once.equals(twice)
    assert np.all((once.parent_wage >= 0.5) & (once.parent_wage <= 3.0))


def test_selection_empty_raises():
    d = make(10, np.random.default_rng(0))
    with pytest.raises(EmptySampleError, match="empty sample"):
        select_sample(d, SelectionRules(teen_age=(30, 40)))


def test_take_renames_duplicates():
    d = make(3, np.random.default_rng(0))
    t = d.take([0, 0, 2])
    assert list(t.id) == ["r0", "r0#1", "r2"]
