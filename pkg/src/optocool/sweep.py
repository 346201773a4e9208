"""Parameter sweeps, figure presets, peak finding and CSV/JSON output.

Parameter paths address :class:`~optocool.model.EffectiveParams` (or
:class:`~optocool.model.PhysicalParams`) fields, with 1-based brackets for
per-mode entries: ``kappa1``, ``omega[2]``, ``Lambda[3]``. An axis may be
relative to another path, e.g. the ``Lambda[3]`` axis in units of
``Lambda[1]``.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
import csv
import io
import json
import math
import re
import sys
import time

import numpy as np
from scipy.signal import find_peaks as _scipy_find_peaks

from . import __version__
from .darkmode import DEFAULT_THRESHOLD, hybrid_params, pairwise_dark_scan
from .dynamics import DEFAULT_MARGIN, cooling_point
from .model import EffectiveParams, PhysicalParams, ValidationError, validate
from .numkernel import NumericalError

__all__ = [
    "Axis",
    "SweepSpec",
    "SweepResult",
    "PRESETS",
    "preset",
    "preset_ids",
    "get_path",
    "set_path",
    "grid",
    "run_sweep",
    "find_peaks",
    "emit",
    "load_json_result",
]

_PATH_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)(?:\[(\d+)\])?$")


def _parse_path(path):
    m = _PATH_RE.match(path.strip())
    if not m:
        raise ValidationError(path, "malformed parameter path")
    name, idx = m.group(1), m.group(2)
    return name, None if idx is None else int(idx)


def get_path(params, path):
    name, idx = _parse_path(path)
    if name not in {f.name for f in fields(params)}:
        raise ValidationError(path, f"no such parameter on {type(params).__name__}")
    value = getattr(params, name)
    if idx is None:
        return value
    if not isinstance(value, tuple):
        if name == "n_th":
            return value
        raise ValidationError(path, "parameter is not per-mode")
    if not 1 <= idx <= len(value):
        raise ValidationError(path, f"mode index out of range 1..{len(value)}")
    return value[idx - 1]


def set_path(params, path, value):
    """Copy of ``params`` with the field at ``path`` replaced."""
    name, idx = _parse_path(path)
    if name not in {f.name for f in fields(params)}:
        raise ValidationError(path, f"no such parameter on {type(params).__name__}")
    if idx is None:
        return replace(params, **{name: value})
    current = getattr(params, name)
    if not isinstance(current, tuple):
        if name == "n_th":
            current = (current,) * params.n_modes
        else:
            raise ValidationError(path, "parameter is not per-mode")
    if not 1 <= idx <= len(current):
        raise ValidationError(path, f"mode index out of range 1..{len(current)}")
    new = list(current)
    new[idx - 1] = float(value)
    return replace(params, **{name: tuple(new)})


def grid(start, stop, num):
    """Linear grid rounded to 12 decimals, so 0.8 lands on 0.8 exactly."""
    if num < 1:
        raise ValueError("grid needs at least one point")
    return np.round(np.linspace(start, stop, int(num)), 12)


@dataclass
class Axis:
    """Sweep axis. ``values`` are in units of ``relative_to`` when given."""

    path: str
    values: np.ndarray
    relative_to: str = None

    def __post_init__(self):
        self.values = np.atleast_1d(np.asarray(self.values, dtype=float))

    @property
    def label(self):
        return f"{self.path}/{self.relative_to}" if self.relative_to else self.path

    def apply(self, params, x):
        scale = 1.0 if self.relative_to is None else get_path(params, self.relative_to)
        return set_path(params, self.path, x * scale)

    def check(self):
        v = self.values
        if v.size == 0:
            raise ValidationError(self.path, "axis grid is empty")
        if v.size > 1 and not (np.all(np.diff(v) > 0) or np.all(np.diff(v) < 0)):
            raise ValidationError(self.path, "axis grid must be strictly monotone")


OUTPUTS = ("n", "n_cavity", "stable", "xi")


@dataclass
class SweepSpec:
    """What to sweep.

    ``required`` lists parameter paths the preset leaves open; they must be
    supplied through :meth:`resolve` before it can run. ``notes`` records the documented best reading.
    """

    base: EffectiveParams
    axis1: Axis
    axis2: Axis = None
    outputs: tuple = ("n", "n_cavity", "stable")
    preset_id: str = None
    required: tuple = ()
    notes: str = ""
    margin: float = DEFAULT_MARGIN
    dark_threshold: float = DEFAULT_THRESHOLD

    def resolve(self, overrides):
        """Apply ``{path: value}`` overrides and drop them from ``required``."""
        base = self.base
        for path, value in overrides.items():
            base = set_path(base, path, value)
        # a whole-array override such as Lambda=... covers Lambda[1], Lambda[2]
        left = tuple(r for r in self.required
                     if r not in overrides and r.split("[")[0] not in overrides)
        return replace(self, base=base, required=left)

    def validate(self):
        if self.required:
            raise ValidationError(
                self.required[0],
                f"value required for preset {self.preset_id} (not fixed by the "
                f"preset); pass it with --set {self.required[0]}=...",
            )
        if not isinstance(self.base, EffectiveParams):
            raise ValidationError("base", "sweeps run on effective parameters")
        validate(self.base)
        for ax in (self.axis1, self.axis2):
            if ax is not None:
                ax.check()
                get_path(self.base, ax.path)
                if ax.relative_to:
                    get_path(self.base, ax.relative_to)
        for o in self.outputs:
            if o not in OUTPUTS:
                raise ValidationError("outputs", f"unknown output column {o!r}")
        return self

    def points(self):
        """Grid points in emission order: axis2-major, axis1 fastest."""
        a2 = self.axis2.values if self.axis2 is not None else [None]
        pts = []
        for y in a2:
            for x in self.axis1.values:
                p = self.axis1.apply(self.base, float(x))
                if y is not None:
                    p = self.axis2.apply(p, float(y))
                pts.append((float(x), None if y is None else float(y), p))
        return pts


@dataclass
class SweepResult:
    columns: list
    rows: list
    metadata: dict = field(default_factory=dict)

    def column(self, name):
        if name not in self.columns:
            raise KeyError(f"column {name!r} not in result")
        return [r.get(name) for r in self.rows]

    def to_dict(self):
        return {"metadata": self.metadata, "columns": self.columns, "rows": self.rows}


# ---------------------------------------------------------------------------
# presets

_HALF_PI = 0.5 * math.pi


def _two_mode(**kw):
    base = dict(omega=(1.0, 1.0), gamma=(1e-6, 1e-6), G1=(0.1, 0.1), Lambda=(0.0, 0.0),
                kappa1=1.0, delta_c=1.0, chi_mag=0.0, phi=_HALF_PI, n_th=1000.0)
    base.update(kw)
    return EffectiveParams(**base)


def _preset_fig3(n):
    return SweepSpec(
        base=_two_mode(),
        axis1=Axis("omega[2]", grid(0.5, 1.5, n)),
        axis2=Axis("kappa1", grid(0.1, 10.0, n)),
        preset_id="fig3",
        required=("Lambda[1]", "Lambda[2]"),
        notes="Panels (a,b) have no mechanical nonlinearity: Lambda[1]=Lambda[2]=0. "
              "Panels (c,d) use unequal Lambdas, left open here.",
    )


def _preset_fig4(n):
    return SweepSpec(
        base=_two_mode(Lambda=(0.1, 0.1)),
        axis1=Axis("Lambda[2]", grid(0.0, 2.0, n), relative_to="Lambda[1]"),
        axis2=Axis("kappa1", grid(0.1, 10.0, n)),
        preset_id="fig4",
        required=("omega[2]",),
        notes="Panels (a,b) take omega[2] equal to omega[1]; panels (c,d) a detuned "
              "omega[2], left open here.",
    )


def _preset_fig5(n):
    return SweepSpec(
        base=_two_mode(Lambda=(0.1, 0.1)),
        axis1=Axis("Lambda[2]", grid(0.0, 1.0, n), relative_to="Lambda[1]"),
        preset_id="fig5",
        required=("kappa1", "chi_mag"),
        notes="Lines: |chi| in {0, 5, 10} at kappa1=20; other panels need their own "
              "kappa1.",
    )


def _preset_fig6(n):
    return SweepSpec(
        base=EffectiveParams(omega=(1.0,) * 3, gamma=(1e-6,) * 3, G1=(0.3,) * 3,
                             Lambda=(0.1, 0.08, 0.1), kappa1=1.0, delta_c=1.0,
                             chi_mag=0.0, phi=_HALF_PI, n_th=1000.0),
        axis1=Axis("Lambda[3]", grid(0.5, 1.5, n), relative_to="Lambda[1]"),
        preset_id="fig6",
        required=("kappa1", "chi_mag"),
        notes="(a) kappa1=0.1, chi_mag=0; (b) kappa1=10, chi_mag=0; (c) chi_mag=5 with "
              "an unresolved-sideband kappa1 (10 is the natural reading).",
    )


def _preset_fig7(n):
    return SweepSpec(
        base=EffectiveParams(omega=(1.0,) * 4, gamma=(1e-6,) * 4, G1=(0.1,) * 4,
                             Lambda=(0.2, 0.16, 0.18, 0.2), kappa1=1.0, delta_c=1.0,
                             chi_mag=0.0, phi=_HALF_PI, n_th=1000.0),
        axis1=Axis("Lambda[4]", grid(0.5, 1.5, n), relative_to="Lambda[1]"),
        preset_id="fig7",
        required=("kappa1", "chi_mag"),
        notes="(a) resolved sideband, kappa1=0.1 as in fig6(a), chi_mag=0; "
              "(b) kappa1=10, chi_mag=0; (c) chi_mag>0 in the unresolved regime. "
              "gamma[4] is taken equal to gamma[1..3].",
    )


def fig2_physical():
    """Physical parameters of the mean-field figure at P = 4 uW.

    Couplings are bare couplings g1, g2. omega_L is placed so
    that the bare detuning omega_c - omega_L equals delta_c.
    """
    w1 = 2.0 * math.pi * 20e6
    wc = 2.0 * math.pi * 500e12
    return PhysicalParams(
        omega=(w1, w1), gamma=(1e-6 * w1,) * 2, g1=(1e-4 * w1,) * 2, g2=(1e-4 * w1,) * 2,
        eta=(1e-4 * w1,) * 2, omega_c=wc, omega_L=wc - 10.0 * w1, kappa1=100.0 * w1,
        kappa2=2000.0 * w1, chi0=1e-3 * w1, P1=4e-6, P2=4e-6, delta_c=10.0 * w1,
        delta_c_prime=20.0 * w1,
    )


PRESETS = {
    "fig2": "mean-field amplitudes |alpha2|, |beta_j| versus drive power P1 = P2 = P",
    "fig3": "n1, n2 versus omega2/omega1 and kappa1 (2D)",
    "fig4": "n1, n2 versus Lambda2/Lambda1 and kappa1 (2D)",
    "fig5": "n1, n2 versus Lambda2/Lambda1, two modes",
    "fig6": "n1..n3 versus Lambda3/Lambda1, three modes",
    "fig7": "n1..n4 versus Lambda4/Lambda1, four modes",
}

_BUILDERS = {"fig3": _preset_fig3, "fig4": _preset_fig4, "fig5": _preset_fig5,
             "fig6": _preset_fig6, "fig7": _preset_fig7}


def preset_ids():
    return list(PRESETS)


def preset(figure_id, n=None):
    """Sweep spec for a figure.

    ``n`` is the number of grid points per axis (default 101 for 1D sweeps and
    61 for 2D). ``fig2`` is a mean-field power sweep; use
    :func:`fig2_physical` with :func:`optocool.meanfield.sweep_meanfield`.
    """
    if figure_id == "fig2":
        raise ValidationError("preset", "fig2 is a mean-field sweep; use fig2_physical()")
    if figure_id not in _BUILDERS:
        raise ValidationError("preset", f"unknown figure id {figure_id!r}; "
                              f"choose from {', '.join(PRESETS)}")
    two_d = figure_id in ("fig3", "fig4")
    return _BUILDERS[figure_id](n or (61 if two_d else 101))


# ---------------------------------------------------------------------------
# execution


def _evaluate(args):
    p, margin, want_xi, threshold = args
    out = {}
    try:
        r = cooling_point(p, margin=margin)
        out.update(stable=r.stable, max_re_eigenvalue=r.max_re_eigenvalue,
                   n=None if r.n is None else [float(v) for v in r.n],
                   n_cavity=r.n_cavity, residual=r.lyapunov_residual, error="")
    except (NumericalError, ValidationError, ValueError) as exc:
        out.update(stable=None, max_re_eigenvalue=None, n=None, n_cavity=None,
                   residual=None, error=f"{type(exc).__name__}: {exc}")
    if want_xi:
        out["dark_pairs"] = ";".join(f"{j}-{k}" for j, k in
                                     pairwise_dark_scan(p, threshold)) if p.n_modes > 1 else ""
        if p.n_modes >= 2 and (p.G1[0] or p.G1[1]):
            h = hybrid_params(p.omega[0], p.omega[1], p.Lambda[0], p.Lambda[1],
                              p.G1[0], p.G1[1])
            out["xi_w"], out["xi_L"] = h.xi_w, h.xi_L
        else:
            out["xi_w"] = out["xi_L"] = None
    return out


def _columns(spec):
    cols = [spec.axis1.label]
    if spec.axis2 is not None:
        cols.append(spec.axis2.label)
    N = spec.base.n_modes
    if "stable" in spec.outputs:
        cols += ["stable", "max_re_eigenvalue"]
    if "n" in spec.outputs:
        cols += [f"n_{j + 1}" for j in range(N)]
    if "n_cavity" in spec.outputs:
        cols.append("n_cavity")
    if "xi" in spec.outputs:
        cols += ["xi_w", "xi_L", "dark_pairs"]
    cols += ["residual", "error"]
    return cols


def run_sweep(spec, jobs=1, progress=False, timestamps=False, order=None):
    """Evaluate every grid point of ``spec``.

    Rows come out axis2-major regardless of ``jobs`` or the evaluation
    ``order`` (a permutation of point indices, used to test schedule
    independence). Unstable points carry no phonon numbers; kernel failures
    are recorded in the ``error`` column.
    """
    spec.validate()
    pts = spec.points()
    idx = list(range(len(pts))) if order is None else list(order)
    if sorted(idx) != list(range(len(pts))):
        raise ValueError("order must be a permutation of the grid indices")
    want_xi = "xi" in spec.outputs
    tasks = [(pts[i][2], spec.margin, want_xi, spec.dark_threshold) for i in idx]
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    results = [None] * len(pts)
    step = max(1, len(pts) // 10)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            it = pool.map(_evaluate, tasks, chunksize=max(1, len(tasks) // (4 * jobs)))
            for k, (i, out) in enumerate(zip(idx, it)):
                results[i] = out
                if progress and (k + 1) % step == 0:
                    print(f"sweep: {k + 1}/{len(pts)}", file=sys.stderr)
    else:
        for k, (i, task) in enumerate(zip(idx, tasks)):
            results[i] = _evaluate(task)
            if progress and (k + 1) % step == 0:
                print(f"sweep: {k + 1}/{len(pts)}", file=sys.stderr)

    cols = _columns(spec)
    rows = []
    N = spec.base.n_modes
    for (x, y, _), out in zip(pts, results):
        row = {spec.axis1.label: x}
        if spec.axis2 is not None:
            row[spec.axis2.label] = y
        n = out.pop("n")
        for j in range(N):
            out[f"n_{j + 1}"] = None if n is None else n[j]
        row.update({c: out.get(c) for c in cols if c not in row})
        rows.append(row)

    meta = {
        "preset": spec.preset_id,
        "base": spec.base.to_dict(),
        "axis1": {"path": spec.axis1.path, "relative_to": spec.axis1.relative_to},
        "axis2": None if spec.axis2 is None else
        {"path": spec.axis2.path, "relative_to": spec.axis2.relative_to},
        "stability_margin": spec.margin,
        "dark_threshold": spec.dark_threshold,
        "version": __version__,
    }
    if timestamps:
        meta["started"] = started
        meta["finished"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    n_unstable = sum(1 for r in rows if r.get("stable") is False)
    meta["n_unstable"] = n_unstable
    return SweepResult(cols, rows, meta)


def find_peaks(result, column, prominence=0.05, axis=None):
    """Axis locations of local maxima of ``column`` in a 1D sweep.

    A maximum counts when its topographic prominence is at least
    ``prominence`` times the column's range, which makes the result invariant
    under positive affine rescaling of the column. Rows with missing values
    split the column into independent segments.
    """
    if not prominence > 0:
        raise ValueError("prominence must be positive")
    if column not in result.columns:
        raise KeyError(f"column {column!r} not in result")
    axis = axis or result.columns[0]
    if result.metadata.get("axis2"):
        raise ValueError("find_peaks needs a 1D sweep")
    xs = np.array([r[axis] for r in result.rows], dtype=float)
    ys = np.array([np.nan if r[column] is None else r[column] for r in result.rows],
                  dtype=float)
    finite = ys[np.isfinite(ys)]
    if finite.size < 3:
        return []
    span = float(finite.max() - finite.min())
    if span == 0.0:
        return []
    peaks = []
    # contiguous finite segments
    ok = np.isfinite(ys)
    start = None
    for i in range(len(ys) + 1):
        if i < len(ys) and ok[i]:
            if start is None:
                start = i
        elif start is not None:
            seg = ys[start:i]
            pk, _ = _scipy_find_peaks((seg - finite.min()) / span, prominence=prominence)
            peaks.extend(float(xs[start + k]) for k in pk)
            start = None
    return peaks


# ---------------------------------------------------------------------------
# output


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _to_csv(result):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(result.columns)
    for r in result.rows:
        w.writerow([_fmt(r.get(c)) for c in result.columns])
    return buf.getvalue()


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _to_json(result):
    return json.dumps(result.to_dict(), indent=1, default=_json_default,
                      allow_nan=True) + "\n"


def emit(result, format="csv", destination=None):
    """Write ``result`` as CSV or JSON.

    ``destination`` may be a path, a text stream, or ``None`` to return the
    text. Floats are written with 17 significant digits (CSV) or the shortest
    round-tripping repr (JSON); both are byte-stable for identical inputs.
    """
    if format == "csv":
        text = _to_csv(result)
    elif format == "json":
        text = _to_json(result)
    else:
        raise ValueError(f"unknown format {format!r}; use csv or json")
    if destination is None:
        return text
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        with open(destination, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return None


def load_json_result(source):
    """Inverse of ``emit(..., 'json')``."""
    if hasattr(source, "read"):
        data = json.load(source)
    else:
        with open(source, encoding="utf-8") as fh:
            data = json.load(fh)
    return SweepResult(data["columns"], data["rows"], data["metadata"])
