"""Multiple-membership dataset: ingest, validation and membership weights.

Input is three CSV files::

    outcomes.csv    client_id,treatment,time_months,wave,outcome
    attendance.csv  client_id,module_id
    modules.csv     module_id,group_id,order_in_group

Times are continuous months. Missing follow-up waves are absent rows.
"""
from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)

OUTCOMES_HEADER = ("client_id", "treatment", "time_months", "wave", "outcome")
ATTENDANCE_HEADER = ("client_id", "module_id")
MODULES_HEADER = ("module_id", "group_id", "order_in_group")


class DataError(ValueError):
    pass


class ParseError(DataError):
    def __init__(self, path, line, msg):
        super().__init__(f"{path}:{line}: {msg}")
        self.path, self.line = path, line


class ReferentialError(DataError):
    pass


class ValidationError(DataError):
    pass


def build_weights(attendance: Sequence[Iterable[int]], S: int, ddp_form: bool = False,
                  module_index: Mapping[int, int] | None = None) -> np.ndarray:
    """Row i has 1/S_i on each attended module (0-based index), 0 elsewhere.

    ``attendance`` holds module ids; by default ids are 1..S and map to
    column id-1. With ``ddp_form`` a constant-1 column is prepended.
    """
    X = np.zeros((len(attendance), S))
    for i, mods in enumerate(attendance):
        mods = sorted(set(mods))
        if not mods:
            continue
        cols = [module_index[m] if module_index is not None else m - 1 for m in mods]
        if min(cols) < 0 or max(cols) >= S:
            raise ValueError(f"client row {i}: module ids {mods} outside 1..{S}")
        X[i, cols] = 1.0 / len(cols)
    if ddp_form:
        X = np.hstack([np.ones((X.shape[0], 1)), X])
    return X


@dataclass(frozen=True)
class MMDataset:
    """Validated repeated-measures multiple-membership data.

    Observations are stored sorted by (client, time, wave); ``obs_client``
    indexes into ``client_ids``.
    """

    client_ids: np.ndarray
    treatment: np.ndarray
    obs_client: np.ndarray
    obs_time: np.ndarray
    obs_wave: np.ndarray
    y: np.ndarray
    attendance: tuple[frozenset, ...]
    module_ids: tuple[int, ...]
    module_group: Mapping[int, int]
    module_order: Mapping[int, int]
    flagged: tuple = field(default=())

    @property
    def n_clients(self) -> int:
        return len(self.client_ids)

    @property
    def n_modules(self) -> int:
        return len(self.module_ids)

    @property
    def n_groups(self) -> int:
        return len(set(self.module_group.values()))

    @property
    def n_obs(self) -> int:
        return len(self.y)

    @cached_property
    def module_index(self) -> dict[int, int]:
        return {m: k for k, m in enumerate(self.module_ids)}

    @cached_property
    def weights(self) -> np.ndarray:
        return build_weights(self.attendance, self.n_modules, module_index=self.module_index)

    @cached_property
    def ddp_weights(self) -> np.ndarray:
        return build_weights(self.attendance, self.n_modules, ddp_form=True, module_index=self.module_index)

    @cached_property
    def obs_counts(self) -> np.ndarray:
        return np.bincount(self.obs_client, minlength=self.n_clients)

    @cached_property
    def obs_start(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.obs_counts)[:-1]]).astype(int)

    def adjacency(self):
        from .graph import build_adjacency
        return build_adjacency(self.module_group, self.module_order)


def make_dataset(client_ids, treatment, obs_client_ids, obs_time, obs_wave, y, attendance: Mapping,
                 module_group: Mapping[int, int], module_order: Mapping[int, int],
                 max_waves: int | None = None) -> MMDataset:
    """Assemble and validate an MMDataset from raw arrays keyed by client id."""
    client_ids = np.asarray(client_ids)
    order = np.argsort(client_ids, kind="stable")
    client_ids = client_ids[order]
    treatment = np.asarray(treatment, dtype=int)[order]
    if len(np.unique(client_ids)) != len(client_ids):
        raise ValidationError("duplicate client ids")
    if np.any((treatment != 0) & (treatment != 1)):
        raise ValidationError("treatment must be 0 or 1")
    cindex = {c.item() if hasattr(c, "item") else c: k for k, c in enumerate(client_ids)}
    try:
        oc = np.array([cindex[c.item() if hasattr(c, "item") else c] for c in np.asarray(obs_client_ids)], dtype=int)
    except KeyError as exc:
        raise ReferentialError(f"observation references unknown client {exc}") from None
    obs_time = np.asarray(obs_time, dtype=float)
    obs_wave = np.asarray(obs_wave, dtype=int)
    y = np.asarray(y, dtype=float)
    if np.any(obs_time < 0) or not np.all(np.isfinite(obs_time)):
        raise ValidationError("times must be finite and >= 0")
    if not np.all(np.isfinite(y)):
        raise ValidationError("outcomes must be finite")
    perm = np.lexsort((obs_wave, obs_time, oc))
    oc, obs_time, obs_wave, y = oc[perm], obs_time[perm], obs_wave[perm], y[perm]
    keys = np.stack([oc, obs_wave], axis=1)
    _, cnt = np.unique(keys, axis=0, return_counts=True)
    if np.any(cnt > 1):
        dup = np.unique(keys, axis=0)[cnt > 1][0]
        raise ValidationError(f"duplicate (client, wave) = ({client_ids[dup[0]]}, {dup[1]})")
    counts = np.bincount(oc, minlength=len(client_ids))
    if np.any(counts == 0):
        raise ValidationError(f"client {client_ids[np.argmax(counts == 0)]} has no observations")
    if max_waves is not None and counts.max() > max_waves:
        raise ValidationError(f"a client has {counts.max()} observations > max_waves={max_waves}")

    module_ids = tuple(sorted(int(m) for m in module_group))
    if set(module_order) != set(module_group):
        raise ValidationError("module order and group maps cover different modules")
    att = []
    attended = dict.fromkeys(module_ids, 0)
    for c in client_ids:
        key = c.item() if hasattr(c, "item") else c
        mods = frozenset(int(m) for m in attendance.get(key, ()))
        unknown = mods.difference(attended)
        if unknown:
            raise ReferentialError(f"client {key} references unknown module(s) {sorted(unknown)}")
        for m in mods:
            attended[m] += 1
        att.append(mods)
    for k, c in enumerate(client_ids):
        if treatment[k] == 0 and att[k]:
            raise ValidationError(f"usual-care client {c} has module attendance")
    empty = [m for m, n in attended.items() if n == 0]
    if empty:
        raise ValidationError(f"module(s) {empty} have no attending client")
    flagged = tuple(client_ids[k].item() for k in range(len(client_ids)) if treatment[k] == 1 and not att[k])
    if flagged:
        log.warning("%d CBT client(s) attended no module; weighted as usual care: %s", len(flagged), flagged[:10])
    return MMDataset(client_ids=client_ids, treatment=treatment, obs_client=oc, obs_time=obs_time,
                     obs_wave=obs_wave, y=y, attendance=tuple(att), module_ids=module_ids,
                     module_group=dict(module_group), module_order=dict(module_order), flagged=flagged)


def _read_rows(path, header):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise ParseError(path, 1, "empty file") from None
        if tuple(h.strip() for h in first) != header:
            raise ParseError(path, 1, f"expected header {','.join(header)}, got {','.join(first)}")
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(path, reader.line_num, f"expected {len(header)} fields, got {len(row)}")
            yield reader.line_num, [c.strip() for c in row]


def _conv(path, line, fn, value, name):
    try:
        return fn(value)
    except ValueError:
        raise ParseError(path, line, f"bad {name} value {value!r}") from None


def load_dataset(outcomes_path, attendance_path, modules_path, max_waves: int | None = None) -> MMDataset:
    module_group, module_order = {}, {}
    for line, (m, g, o) in _read_rows(modules_path, MODULES_HEADER):
        m = _conv(modules_path, line, int, m, "module_id")
        if m in module_group:
            raise ParseError(modules_path, line, f"duplicate module {m}")
        module_group[m] = _conv(modules_path, line, int, g, "group_id")
        module_order[m] = _conv(modules_path, line, int, o, "order_in_group")

    treat: dict[int, int] = {}
    oc, ot, ow, oy = [], [], [], []
    for line, (c, t, tm, w, y) in _read_rows(outcomes_path, OUTCOMES_HEADER):
        c = _conv(outcomes_path, line, int, c, "client_id")
        t = _conv(outcomes_path, line, int, t, "treatment")
        if treat.setdefault(c, t) != t:
            raise ValidationError(f"client {c} has inconsistent treatment values")
        oc.append(c)
        ot.append(_conv(outcomes_path, line, float, tm, "time_months"))
        ow.append(_conv(outcomes_path, line, int, w, "wave"))
        oy.append(_conv(outcomes_path, line, float, y, "outcome"))

    attendance: dict[int, set] = {}
    for line, (c, m) in _read_rows(attendance_path, ATTENDANCE_HEADER):
        c = _conv(attendance_path, line, int, c, "client_id")
        m = _conv(attendance_path, line, int, m, "module_id")
        if c not in treat:
            raise ReferentialError(f"{attendance_path}:{line}: attendance for unknown client {c}")
        if m not in module_group:
            raise ReferentialError(f"{attendance_path}:{line}: client {c} references unknown module {m}")
        attendance.setdefault(c, set()).add(m)

    clients = sorted(treat)
    return make_dataset(clients, [treat[c] for c in clients], oc, ot, ow, oy, attendance,
                        module_group, module_order, max_waves=max_waves)


def load_dataset_dir(directory, **kw) -> MMDataset:
    d = os.fspath(directory)
    return load_dataset(os.path.join(d, "outcomes.csv"), os.path.join(d, "attendance.csv"),
                        os.path.join(d, "modules.csv"), **kw)


def write_dataset(ds: MMDataset, directory) -> None:
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "outcomes.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(OUTCOMES_HEADER)
        for c, t, wave, y in zip(ds.obs_client, ds.obs_time, ds.obs_wave, ds.y):
            w.writerow([ds.client_ids[c], ds.treatment[c], repr(float(t)), int(wave), repr(float(y))])
    with open(os.path.join(directory, "attendance.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(ATTENDANCE_HEADER)
        for c, mods in zip(ds.client_ids, ds.attendance):
            for m in sorted(mods):
                w.writerow([c, m])
    with open(os.path.join(directory, "modules.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(MODULES_HEADER)
        for m in ds.module_ids:
            w.writerow([m, ds.module_group[m], ds.module_order[m]])
