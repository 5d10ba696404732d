"""CSV readers and writers, posterior summaries and curve tables.

File schemas
------------
longitudinal  ``id,time_years,y_sqrt_cd4``
survival      ``id,event_time_years,event,gender,age50,prevoi``
draws         ``chain,iter,<parameter names>``
loglik        ``chain,iter,<subject ids>``
curves        ``g,label,t,mean,lo2.5,hi97.5``
summary       ``parameter,mean,lo2.5,hi97.5``
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from pathlib import Path

import numpy as np

from .errors import InvalidArgument, ParseError
from .model import Dataset, Linking, ModelSpec, Subject, parameter_names
from .posterior import PosteriorChain
from .splines import eval_basis

LONG_COLUMNS = ["id", "time_years", "y_sqrt_cd4"]
SURV_COLUMNS = ["id", "event_time_years", "event", "gender", "age50", "prevoi"]


def fmt(x) -> str:
    return f"{float(x):.17g}"


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def _rows(path, expected):
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if header != expected:
            raise ParseError(f"{path}:1: expected header {','.join(expected)}, got {','.join(header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected):
                raise ParseError(f"{path}:{lineno}: expected {len(expected)} fields, got {len(row)}")
            if any(not v.strip() for v in row):
                raise ParseError(f"{path}:{lineno}: blank field")
            yield lineno, [v.strip() for v in row]


def _num(path, lineno, text, kind=float):
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"{path}:{lineno}: malformed number {text!r}") from None
    if not math.isfinite(value):
        raise ParseError(f"{path}:{lineno}: non-finite value {text!r}")
    if kind is int:
        if value not in (0.0, 1.0):
            raise ParseError(f"{path}:{lineno}: expected 0 or 1, got {text!r}")
        return int(value)
    return value


def parse_dataset(longitudinal_file, survival_file) -> Dataset:
    """Join the two CSV files on subject id; subjects keep survival-file order."""
    exams = defaultdict(list)
    seen = {}
    for lineno, (sid, t, y) in _rows(longitudinal_file, LONG_COLUMNS):
        t = _num(longitudinal_file, lineno, t)
        y = _num(longitudinal_file, lineno, y)
        if t < 0:
            raise ParseError(f"{longitudinal_file}:{lineno}: negative exam time")
        if (sid, t) in seen:
            raise ParseError(f"{longitudinal_file}:{lineno}: duplicate exam ({sid}, {t}), first at line {seen[sid, t]}")
        seen[sid, t] = lineno
        exams[sid].append((t, y))
    subjects = []
    surv_lines = {}
    for lineno, (sid, T, ev, g, a, p) in _rows(survival_file, SURV_COLUMNS):
        if sid in surv_lines:
            raise ParseError(f"{survival_file}:{lineno}: duplicate id {sid!r}, first at line {surv_lines[sid]}")
        surv_lines[sid] = lineno
        T = _num(survival_file, lineno, T)
        if T < 0:
            raise ParseError(f"{survival_file}:{lineno}: negative event time")
        if sid not in exams:
            raise ParseError(f"{survival_file}:{lineno}: subject {sid!r} has no longitudinal rows")
        rows = sorted(exams[sid])
        subjects.append(Subject(
            id=sid, times=[r[0] for r in rows], y=[r[1] for r in rows], event_time=T,
            event=_num(survival_file, lineno, ev, int), gender=_num(survival_file, lineno, g, int),
            age=_num(survival_file, lineno, a, int), prevoi=_num(survival_file, lineno, p, int),
        ))
    orphans = sorted(set(exams) - set(surv_lines))
    if orphans:
        raise ParseError(f"{longitudinal_file}: subject {orphans[0]!r} has no survival row")
    if not subjects:
        raise ParseError(f"{survival_file}: no subjects")
    return Dataset(subjects)


def write_dataset(data: Dataset, longitudinal_file, survival_file) -> None:
    with open(longitudinal_file, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(LONG_COLUMNS)
        for s in data:
            for t, y in zip(s.times, s.y):
                w.writerow([s.id, fmt(t), fmt(y)])
    with open(survival_file, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(SURV_COLUMNS)
        for s in data:
            w.writerow([s.id, fmt(s.event_time), s.event, s.gender, s.age, s.prevoi])


# ---------------------------------------------------------------------------
# chains

def write_draws(chains, path) -> None:
    """All chains in one file, one row per retained draw."""
    chains = list(chains)
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["chain", "iter"] + chains[0].names)
        for ch in chains:
            its = ch.iterations if ch.iterations is not None else np.arange(1, ch.S + 1)
            for s in range(ch.S):
                w.writerow([ch.chain_id, int(its[s])] + [fmt(v) for v in ch.draws[s]])


def write_loglik(chains, ids, path) -> None:
    chains = list(chains)
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["chain", "iter"] + list(ids))
        for ch in chains:
            its = ch.iterations if ch.iterations is not None else np.arange(1, ch.S + 1)
            for s in range(ch.S):
                w.writerow([ch.chain_id, int(its[s])] + [fmt(v) for v in ch.pointwise_loglik[s]])


def _read_matrix(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [r for r in reader if r]
    if header[:2] != ["chain", "iter"]:
        raise ParseError(f"{path}:1: expected leading chain,iter columns")
    try:
        arr = np.array([[float(v) for v in r] for r in rows]).reshape(len(rows), len(header))
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None
    return header[2:], arr


def _infer_N(spec: ModelSpec, n_cols: int) -> int:
    base = len(parameter_names(spec, 0))
    per = len(parameter_names(spec, 1)) - base
    N, rem = divmod(n_cols - base, per)
    if rem or N < 1:
        raise ParseError(f"draw file has {n_cols} parameter columns, inconsistent with {spec.label}")
    return N


def read_chains(spec: ModelSpec, draws_path, loglik_path=None) -> list[PosteriorChain]:
    names, arr = _read_matrix(draws_path)
    N = _infer_N(spec, len(names))
    if names != parameter_names(spec, N):
        raise ParseError(f"{draws_path}:1: column names do not match {spec.label}")
    ll = None
    if loglik_path is not None and Path(loglik_path).exists():
        ids, ll = _read_matrix(loglik_path)
        if len(ids) != N or ll.shape[0] != arr.shape[0]:
            raise ParseError(f"{loglik_path}: shape does not match the draw file")
    chains = []
    for c in np.unique(arr[:, 0]).astype(int):
        rows = arr[:, 0] == c
        chains.append(PosteriorChain(
            spec=spec, N=N, draws=arr[rows, 2:],
            pointwise_loglik=ll[rows, 2:] if ll is not None else np.zeros((int(rows.sum()), N)),
            chain_id=int(c), iterations=arr[rows, 1].astype(np.int64),
        ))
    return chains


def pooled_draws(chains) -> np.ndarray:
    return np.concatenate([np.asarray(c.draws) for c in chains], axis=0)


# ---------------------------------------------------------------------------
# summaries and curves

_PER_SUBJECT = ("b_", "log_sigma_", "gamma", "sigma_inv_")


def summarize(chains) -> list[tuple[str, float, float, float]]:
    """Posterior mean and equal-tailed 95% interval per population-level scalar.

    Random-effect covariance entries are reported as ``sigma_b_rc`` after
    inverting every precision draw. Per-subject quantities and spline
    coefficients are left to the draw file and the curve table.
    """
    chains = [chains] if isinstance(chains, PosteriorChain) else list(chains)
    spec, N = chains[0].spec, chains[0].N
    draws = pooled_draws(chains)
    if draws.shape[0] < 2:
        raise InvalidArgument("summaries need at least two draws")
    names = parameter_names(spec, N)
    out = []

    def add(name, values):
        lo, hi = np.quantile(values, [0.025, 0.975])
        out.append((name, float(np.mean(values)), float(lo), float(hi)))

    for j, name in enumerate(names):
        if name.startswith(_PER_SUBJECT):
            continue
        add(name, draws[:, j])
        if name == "log_sigma0":
            add("sigma0", np.exp(draws[:, j]))
    p = spec.p
    iu = np.triu_indices(p)
    start = names.index("sigma_inv_1_1")
    prec = np.zeros((draws.shape[0], p, p))
    prec[:, iu[0], iu[1]] = draws[:, start:start + len(iu[0])]
    prec = prec + np.triu(prec, 1).transpose(0, 2, 1)
    cov = np.linalg.inv(prec)
    for r, c in zip(*iu):
        add(f"sigma_b_{r + 1}{c + 1}", cov[:, r, c])
    return out


def write_summary(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["parameter", "mean", "lo2.5", "hi97.5"])
        for name, mean, lo, hi in rows:
            w.writerow([name, fmt(mean), fmt(lo), fmt(hi)])


_G_LABELS = {0: "log_baseline_hazard", 1: "b1_intercept", 2: "b1_slope"}


def _g3_label(spec: ModelSpec) -> str:
    return "b2" if spec.linking is Linking.SHARED_B2 else "sigma"


def export_curves(chains, spec: ModelSpec, grid) -> list[tuple[str, str, float, float, float, float]]:
    """Posterior mean and 95% band of every spline function on ``grid``.

    g3 additionally gets ``hazard_ratio`` rows for exp(g3(t)).
    """
    chains = [chains] if isinstance(chains, PosteriorChain) else list(chains)
    N = chains[0].N
    draws = pooled_draws(chains)
    if draws.shape[0] < 2:
        raise InvalidArgument("curves need at least two draws")
    grid = np.asarray(grid, dtype=float)
    B = eval_basis(spec.basis, grid)
    names = parameter_names(spec, N)
    Q = spec.basis.Q
    rows = []

    def emit(g, label, values):
        mean = values.mean(axis=0)
        lo, hi = np.quantile(values, [0.025, 0.975], axis=0)
        for k, t in enumerate(grid):
            rows.append((g, label, float(t), float(mean[k]), float(lo[k]), float(hi[k])))

    for l in spec.spline_indices:
        start = names.index(f"gamma{l}_1")
        curves = draws[:, start:start + Q] @ B.T
        label = _G_LABELS.get(l) or _g3_label(spec)
        emit(f"g{l}", label, curves)
        if l == 3:
            emit("g3", "hazard_ratio", np.exp(curves))
    return rows


def write_curves(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["g", "label", "t", "mean", "lo2.5", "hi97.5"])
        for g, label, t, mean, lo, hi in rows:
            w.writerow([g, label, fmt(t), fmt(mean), fmt(lo), fmt(hi)])


def write_basis(basis, grid, path) -> None:
    """Basis values on ``grid``: one row per point, columns ``t,B1..BQ``."""
    B = eval_basis(basis, grid)
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        w.writerow(["t"] + [f"B{q + 1}" for q in range(basis.Q)])
        for t, row in zip(grid, B):
            w.writerow([fmt(t)] + [fmt(v) for v in row])


def write_matrix(M, path) -> None:
    with open(path, "w", newline="") as fh:
        w = _writer(fh)
        for row in np.atleast_2d(M):
            w.writerow([fmt(v) if not float(v).is_integer() else str(int(v)) for v in row])
