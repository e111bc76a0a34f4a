"""File formats: observation CSVs, flat ``key=value`` parameter files."""

from __future__ import annotations

import csv
import io
from dataclasses import fields

import numpy as np

from .model import (
    DiscreteHmmParams,
    GrowthModelParams,
    LinearGaussianParams,
    ObservationRecord,
    discrete_hmm_model,
    growth_model,
    linear_gaussian_model,
)

__all__ = [
    "MODEL_NAMES",
    "read_key_values",
    "write_key_values",
    "make_params",
    "make_model",
    "params_to_dict",
    "write_observations",
    "read_observations",
    "write_states",
    "format_float",
]

MODEL_NAMES = ("growth", "lgss", "hmm")

_TIME_NOTE = {
    "growth": "# k is 0-based; growth-model time is k + 1",
}


def format_float(x) -> str:
    """Shortest repr that round-trips a double (at most 17 significant digits)."""
    return repr(float(x))


def read_key_values(path_or_text, *, is_text=False) -> dict:
    """Parse ``key=value`` lines; blank lines and ``#`` comments are skipped."""
    text = path_or_text if is_text else open(path_or_text).read()
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        out[key.strip()] = value.strip()
    return out


def write_key_values(values: dict, path) -> None:
    with open(path, "w") as fh:
        for key, value in values.items():
            fh.write(f"{key}={value}\n")


def _floats(text):
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


def make_params(name: str, values: dict | None = None):
    """Build the parameter object of a named built-in model from strings."""
    values = dict(values or {})
    if name == "growth":
        cls = GrowthModelParams
    elif name == "lgss":
        cls = LinearGaussianParams
    elif name == "hmm":
        try:
            s = int(values.pop("n_states"))
            a = np.array(_floats(values.pop("transition_matrix"))).reshape(s, s)
            b = np.array(_floats(values.pop("emission_matrix"))).reshape(s, -1)
            pi = np.array(_floats(values.pop("initial_distribution")))
        except KeyError as err:
            raise ValueError(f"hmm parameter {err.args[0]} missing") from None
        if values:
            raise ValueError(f"unknown hmm parameters: {sorted(values)}")
        return DiscreteHmmParams(a, b, pi)
    else:
        raise ValueError(f"unknown model {name!r}; choose from {MODEL_NAMES}")
    known = {f.name for f in fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ValueError(f"unknown {name} parameters: {sorted(unknown)}")
    return cls(**{k: float(v) for k, v in values.items()})


def params_to_dict(params) -> dict:
    if isinstance(params, DiscreteHmmParams):
        return {
            "n_states": params.n_states,
            "transition_matrix": ",".join(map(format_float, params.transition_matrix.ravel())),
            "emission_matrix": ",".join(map(format_float, params.emission_matrix.ravel())),
            "initial_distribution": ",".join(map(format_float, params.initial_distribution)),
        }
    return {f.name: format_float(getattr(params, f.name)) for f in fields(params)}


def make_model(name: str, params):
    if name == "growth":
        return growth_model(params)
    if name == "lgss":
        return linear_gaussian_model(params)
    if name == "hmm":
        return discrete_hmm_model(params)
    raise ValueError(f"unknown model {name!r}")


def _value_cells(v, discrete):
    v = np.atleast_1d(v)
    return [str(int(x)) if discrete else format_float(x) for x in v]


def _write_series(path, values, column, note, discrete):
    values = np.asarray(values)
    d = 1 if values.ndim == 1 else values.shape[1]
    header = ["k", column] if d == 1 else ["k", *(f"{column}{j}" for j in range(d))]
    buf = io.StringIO()
    if note:
        buf.write(note + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for k, v in enumerate(values):
        writer.writerow([k, *_value_cells(v, discrete)])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def write_observations(obs: ObservationRecord, path, model_name: str | None = None) -> None:
    """Write ``k,y`` (or ``k,y0,y1,...``) rows; 0-based ``k``."""
    discrete = model_name == "hmm"
    _write_series(path, obs.y, "y", _TIME_NOTE.get(model_name), discrete)


def write_states(x, path, model_name: str | None = None) -> None:
    _write_series(path, x, "x", _TIME_NOTE.get(model_name), model_name == "hmm")


def read_observations(path, discrete: bool = False) -> ObservationRecord:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows or rows[0][0] != "k":
        raise ValueError(f"{path}: expected a header starting with 'k'")
    body = rows[1:]
    if not body:
        raise ValueError(f"{path}: no observations")
    ks = [int(r[0]) for r in body]
    if ks != list(range(len(body))):
        raise ValueError(f"{path}: time indices must run 0..n in order")
    data = np.array([[float(v) for v in r[1:]] for r in body])
    y = data[:, 0] if data.shape[1] == 1 else data
    if discrete:
        y = y.astype(int)
    return ObservationRecord(y)
