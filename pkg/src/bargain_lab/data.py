"""Household observations: schema, CSV input/output, validation, sample selection.

A ``Dataset`` stores one read-only numpy array per field and a named map of
covariate arrays. Missing values are NaN and are written as empty CSV fields.
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from types import MappingProxyType

import numpy as np

from .errors import EmptySampleError, RowError, ValidationError

log = logging.getLogger(__name__)

SCHEMA_VERSION = "1"
GENDERS = ("daughter", "son")

# (name, kind, required); kind is one of "id", "gender", "int", "float"
CORE_FIELDS = (
    ("id", "id", True),
    ("year", "int", True),
    ("teen_gender", "gender", True),
    ("teen_age", "float", True),
    ("schooling", "int", True),
    ("teen_market_hours", "float", True),
    ("teen_wage", "float", False),
    ("teen_domestic_hours", "float", True),
    ("parent_wage", "float", True),
    ("parent_market_hours", "float", True),
    ("parent_domestic_hours", "float", True),
    ("nonlabor_income", "float", True),
    ("treated", "int", True),
    ("transfer_amount", "float", True),
    ("instrument", "float", True),
)
OPTIONAL_FIELDS = (
    ("cf_residual", "float", False),
    ("wage_imputed", "int", False),
)
ALL_FIELDS = CORE_FIELDS + OPTIONAL_FIELDS
FIELD_KIND = {name: kind for name, kind, _ in ALL_FIELDS}
FIELD_NAMES = tuple(name for name, _, _ in ALL_FIELDS)
HOURS = ("teen_market_hours", "teen_domestic_hours", "parent_market_hours", "parent_domestic_hours")


@dataclass(frozen=True)
class HouseholdRecord:
    id: str
    year: int
    teen_gender: str
    teen_age: float
    schooling: int
    teen_market_hours: float
    teen_wage: float
    teen_domestic_hours: float
    parent_wage: float
    parent_market_hours: float
    parent_domestic_hours: float
    nonlabor_income: float
    treated: int
    transfer_amount: float
    instrument: float
    covariates: MappingProxyType = field(default_factory=lambda: MappingProxyType({}))
    cf_residual: float = math.nan
    wage_imputed: int = 0

    @property
    def teen_wage_missing(self):
        return math.isnan(self.teen_wage)


def _readonly(a):
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


def _coerce(name, values):
    kind = FIELD_KIND[name]
    if kind in ("id", "gender"):
        return np.asarray([str(v) for v in values], dtype=object)
    if kind == "int":
        return np.asarray(values, dtype=np.int64)
    return np.asarray(values, dtype=float)


class Dataset:
    """Immutable column store of household records.

    Parameters
    ----------
    columns : mapping
        Arrays for every core field; ``cf_residual`` and ``wage_imputed`` are
        optional and default to NaN and 0.
    covariates : mapping, optional
        Named covariate arrays.
    validate : bool
        Check every record invariant and raise ``ValidationError`` on failure.
    """

    def __init__(self, columns, covariates=None, schema_version=SCHEMA_VERSION, validate=True):
        cols = {}
        n = None
        for name, _, _ in CORE_FIELDS:
            if name not in columns:
                raise ValueError(f"missing column {name!r}")
            cols[name] = _coerce(name, columns[name])
            n = len(cols[name]) if n is None else n
            if len(cols[name]) != n:
                raise ValueError(f"column {name!r} has length {len(cols[name])}, expected {n}")
        cols["cf_residual"] = _coerce("cf_residual", columns.get("cf_residual", np.full(n, np.nan)))
        cols["wage_imputed"] = _coerce("wage_imputed", columns.get("wage_imputed", np.zeros(n, dtype=int)))
        unknown = set(columns) - set(FIELD_NAMES)
        if unknown:
            raise ValueError(f"unknown columns: {sorted(unknown)}")
        covs = {}
        for key, val in (covariates or {}).items():
            if key in FIELD_NAMES:
                raise ValueError(f"covariate name {key!r} clashes with a core field")
            arr = np.asarray(val, dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"covariate {key!r} has shape {arr.shape}, expected ({n},)")
            covs[key] = _readonly(arr)
        self._cols = {k: _readonly(v) for k, v in cols.items()}
        self._covs = MappingProxyType(covs)
        self.schema_version = str(schema_version)
        self._records = None
        if validate:
            violations = validation_errors(self)
            if violations:
                raise ValidationError(violations)

    def __len__(self):
        return len(self._cols["id"])

    def __getattr__(self, name):
        cols = self.__dict__.get("_cols")
        if cols is not None and name in cols:
            return cols[name]
        raise AttributeError(name)

    def __repr__(self):
        return f"Dataset(n={len(self)}, covariates={list(self._covs)})"

    @property
    def columns(self):
        return MappingProxyType(self._cols)

    @property
    def covariates(self):
        return self._covs

    @property
    def covariate_names(self):
        return tuple(self._covs)

    def covariate(self, name):
        try:
            return self._covs[name]
        except KeyError:
            raise KeyError(f"unknown covariate {name!r}") from None

    def design(self, names):
        """Covariates ``names`` stacked as an (n, k) matrix."""
        if not names:
            return np.empty((len(self), 0))
        return np.column_stack([self.covariate(k) for k in names])

    @property
    def records(self):
        if self._records is None:
            cols = {k: v.tolist() for k, v in self._cols.items()}
            covs = {k: v.tolist() for k, v in self._covs.items()}
            recs = []
            for i in range(len(self)):
                kw = {k: cols[k][i] for k in FIELD_NAMES}
                kw["covariates"] = MappingProxyType({k: covs[k][i] for k in covs})
                recs.append(HouseholdRecord(**kw))
            self._records = tuple(recs)
        return self._records

    @classmethod
    def from_records(cls, records, schema_version=SCHEMA_VERSION, validate=True):
        records = list(records)
        cols = {k: [getattr(r, k) for r in records] for k in FIELD_NAMES}
        names = list(records[0].covariates) if records else []
        covs = {k: [r.covariates.get(k, math.nan) for r in records] for k in names}
        return cls(cols, covs, schema_version, validate)

    def take(self, idx):
        """Rows ``idx`` (indices or boolean mask) as a new Dataset.

        Repeated indices get unique ids by suffixing ``#k``.
        """
        idx = np.asarray(idx)
        if idx.dtype == bool:
            idx = np.flatnonzero(idx)
        cols = {k: v[idx] for k, v in self._cols.items()}
        ids = cols["id"]
        if len(np.unique(idx)) != len(idx):
            seen = {}
            new = []
            for rid in ids:
                k = seen.get(rid, 0)
                seen[rid] = k + 1
                new.append(rid if k == 0 else f"{rid}#{k}")
            cols["id"] = np.asarray(new, dtype=object)
        covs = {k: v[idx] for k, v in self._covs.items()}
        return Dataset(cols, covs, self.schema_version, validate=False)

    def filter(self, mask):
        return self.take(np.asarray(mask, dtype=bool))

    def replace(self, columns=None, covariates=None, drop_covariates=(), validate=True):
        """New Dataset with some columns or covariates replaced or added."""
        cols = dict(self._cols)
        cols.update(columns or {})
        covs = {k: v for k, v in self._covs.items() if k not in drop_covariates}
        covs.update(covariates or {})
        return Dataset(cols, covs, self.schema_version, validate=validate)

    def equals(self, other):
        """Bitwise equality of all columns, covariates and their order."""
        if not isinstance(other, Dataset) or len(self) != len(other):
            return False
        if tuple(self._covs) != tuple(other._covs):
            return False
        for k in FIELD_NAMES:
            a, b = self._cols[k], other._cols[k]
            if a.dtype == float:
                if a.tobytes() != b.tobytes():
                    return False
            elif not np.array_equal(a, b):
                return False
        return all(self._covs[k].tobytes() == other._covs[k].tobytes() for k in self._covs)

    def split_by_gender(self):
        return {g: self.filter(self.teen_gender == g) for g in GENDERS if np.any(self.teen_gender == g)}


def validation_errors(d):
    """List of ``(record_id, rule)`` for every violated invariant."""
    out = []
    ids = d.id

    def flag(mask, rule):
        for i in np.flatnonzero(mask):
            out.append((ids[i], rule))

    _, first = np.unique(ids.astype(str), return_index=True)
    dup = np.ones(len(d), dtype=bool)
    dup[first] = False
    flag(dup, "duplicate id")
    for name, kind, required in CORE_FIELDS:
        if kind == "float" and required:
            flag(np.isnan(d.columns[name]), f"{name} missing")
    flag(~np.isin(d.teen_gender, GENDERS), "teen_gender must be 'daughter' or 'son'")
    flag(~(d.parent_wage > 0), "parent_wage must be > 0")
    flag(~np.isin(d.schooling, (0, 1)), "schooling must be 0 or 1")
    flag(~np.isin(d.treated, (0, 1)), "treated must be 0 or 1")
    flag((d.treated == 1) & (d.schooling == 0), "conditionality violated: treated teen not in school")
    flag((d.teen_market_hours > 0) & (d.schooling != 0), "teen_market_hours > 0 requires schooling = 0")
    flag((d.instrument < 0) | (d.instrument > 1), "instrument outside [0, 1]")
    for h in HOURS:
        flag(d.columns[h] < 0, f"{h} negative")
    flag(d.teen_wage <= 0, "teen_wage must be > 0 when present")
    flag(d.transfer_amount < 0, "transfer_amount negative")
    flag(~np.isin(d.wage_imputed, (0, 1)), "wage_imputed must be 0 or 1")
    return out


@dataclass(frozen=True)
class Schema:
    """Map from record fields to CSV header names.

    ``covariates=None`` treats every non-field column as a covariate; a tuple
    restricts them and makes any other column an error.
    """

    columns: dict = field(default_factory=dict)
    covariates: tuple = None

    def column(self, name):
        return self.columns.get(name, name)


def _parse(kind, text, name, line):
    text = text.strip()
    if kind in ("id", "gender"):
        if not text:
            raise RowError(line, f"{name} is empty")
        return text
    if text == "":
        return math.nan if kind == "float" else None
    try:
        if kind == "int":
            v = float(text)
            if v != int(v):
                raise ValueError
            return int(v)
        return float(text)
    except ValueError:
        raise RowError(line, f"cannot parse {name}={text!r}") from None


def load_dataset(path, schema=None):
    """Read and validate a household CSV.

    Raises ``RowError`` (with the file line number) for unparseable rows and
    ``ValidationError`` for records that break an invariant.
    """
    schema = schema or Schema()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise RowError(1, "file is empty") from None
        pos = {h: j for j, h in enumerate(header)}
        if len(pos) != len(header):
            raise RowError(1, "duplicate header names")
        for name, _, required in CORE_FIELDS:
            if required and schema.column(name) not in pos:
                raise RowError(1, f"header lacks column {schema.column(name)!r}")
        mapped = {schema.column(n) for n in FIELD_NAMES}
        extra = [h for h in header if h not in mapped]
        if schema.covariates is not None:
            bad = [h for h in extra if h not in schema.covariates]
            if bad:
                raise RowError(1, f"unexpected columns {bad}")
            missing = [c for c in schema.covariates if c not in pos]
            if missing:
                raise RowError(1, f"header lacks covariates {missing}")
            extra = list(schema.covariates)
        present = [n for n in FIELD_NAMES if schema.column(n) in pos]
        cols = {n: [] for n in present}
        covs = {c: [] for c in extra}
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise RowError(line, f"expected {len(header)} fields, found {len(row)}")
            for n in present:
                v = _parse(FIELD_KIND[n], row[pos[schema.column(n)]], n, line)
                if v is None:
                    if n == "wage_imputed":
                        v = 0
                    else:
                        raise RowError(line, f"{n} is empty")
                cols[n].append(v)
            for c in extra:
                covs[c].append(_parse("float", row[pos[c]], c, line))
    if "teen_wage" not in cols:
        cols["teen_wage"] = [math.nan] * len(cols["id"])
    return Dataset(cols, covs)


def _fmt(kind, v):
    if kind in ("id", "gender"):
        return str(v)
    if kind == "int":
        return str(int(v))
    v = float(v)
    return "" if math.isnan(v) else repr(v)


def write_dataset(d, path):
    """Write ``d`` as CSV; floats use ``repr`` so a reload is bit-identical."""
    header = list(FIELD_NAMES) + list(d.covariate_names)
    kinds = [FIELD_KIND[n] for n in FIELD_NAMES] + ["float"] * len(d.covariate_names)
    arrays = [d.columns[n] for n in FIELD_NAMES] + [d.covariate(c) for c in d.covariate_names]
    lists = [a.tolist() for a in arrays]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(len(d)):
            w.writerow([_fmt(k, col[i]) for k, col in zip(kinds, lists)])


@dataclass(frozen=True)
class SelectionRules:
    """Sample filter.

    Parameters
    ----------
    teen_age, parent_age : (low, high) or None
        Inclusive windows. Parent ages come from the covariates named in
        ``parent_age_columns``; every listed column present must fall inside.
    father_works : bool
        Keep only households with ``parent_market_hours > 0``.
    trim : mapping
        Field or covariate name to inclusive ``(low, high)`` bounds. Missing
        values are kept. No default thresholds.
    gender : str or None
        Keep one teen gender.
    """

    teen_age: tuple = (15, 20)
    parent_age: tuple = (30, 64)
    parent_age_columns: tuple = ("father_age", "mother_age")
    father_works: bool = True
    trim: dict = field(default_factory=dict)
    gender: str = None


def _values(d, name):
    if name in d.columns:
        return np.asarray(d.columns[name], dtype=float)
    return d.covariate(name)


def selection_masks(d, rules):
    """Ordered ``(rule, keep_mask)`` pairs."""
    masks = []
    if rules.gender is not None:
        masks.append((f"teen_gender == {rules.gender}", d.teen_gender == rules.gender))
    if rules.teen_age is not None:
        lo, hi = rules.teen_age
        masks.append((f"teen_age in [{lo}, {hi}]", (d.teen_age >= lo) & (d.teen_age <= hi)))
    if rules.parent_age is not None:
        lo, hi = rules.parent_age
        cols = [c for c in rules.parent_age_columns if c in d.covariates]
        if not cols:
            raise ValueError(f"parent-age rule needs one of the covariates {rules.parent_age_columns}")
        for c in cols:
            a = d.covariate(c)
            masks.append((f"{c} in [{lo}, {hi}]", (a >= lo) & (a <= hi)))
    if rules.father_works:
        masks.append(("father works (parent_market_hours > 0)", d.parent_market_hours > 0))
    for name, (lo, hi) in rules.trim.items():
        a = _values(d, name)
        masks.append((f"{name} in [{lo}, {hi}]", np.isnan(a) | ((a >= lo) & (a <= hi))))
    return masks


def select_sample(d, rules=None, report=None):
    """Apply ``rules`` in order and return the kept records.

    ``report``, if a list, receives ``(rule, kept, dropped)`` per rule with
    counts taken sequentially. Raises ``EmptySampleError`` when nothing is kept.
    """
    rules = rules or SelectionRules()
    keep = np.ones(len(d), dtype=bool)
    rows = []
    for rule, mask in selection_masks(d, rules):
        before = int(keep.sum())
        keep &= mask
        after = int(keep.sum())
        rows.append((rule, after, before - after))
        log.info("selection %s: kept %d, dropped %d", rule, after, before - after)
    if report is not None:
        report.extend(rows)
    if not keep.any():
        raise EmptySampleError("empty sample: no record satisfies the selection rules "
                               + "; ".join(f"{r}: dropped {k}" for r, _, k in rows))
    if keep.all():
        return d
    return d.filter(keep)
