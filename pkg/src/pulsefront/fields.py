"""Periodic coefficient fields, grids, and scenario files.

Coefficients are trigonometric polynomials (a mean plus cosine harmonics),
which keeps the exact bounds computable and makes scenario files bit-exact
round-trippable.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field, replace

import numpy as np

from .errors import BadPeriod, ParseError, PositivityViolation

COEFFICIENT_NAMES = ("r_u", "r_v", "gamma_u", "gamma_v", "mu")
_SECTION_NAMES = COEFFICIENT_NAMES + ("grid", "solver", "simulation", "output", "sweep")

#: oversampling factor used to tighten analytic bounds (relative to the
#: default grid resolution of 256 cells per period)
BOUND_SAMPLING = 4096


@dataclass(frozen=True)
class Harmonic:
    amplitude: float
    wavenumber: int
    phase: float = 0.0


@dataclass(frozen=True)
class CoefficientSpec:
    """One periodic coefficient: mean + sum of cosine harmonics."""

    mean: float
    harmonics: tuple[Harmonic, ...] = ()

    def sample(self, x, period_L):
        x = np.asarray(x, dtype=float)
        out = np.full_like(x, self.mean, dtype=float)
        for h in self.harmonics:
            out += h.amplitude * np.cos(2.0 * np.pi * h.wavenumber * x / period_L + h.phase)
        return out

    def analytic_bounds(self):
        spread = sum(abs(h.amplitude) for h in self.harmonics)
        return self.mean - spread, self.mean + spread


@dataclass(frozen=True)
class Bounds:
    r0: float
    r_inf: float
    gamma0: float
    gamma_inf: float
    mu0: float
    mu_inf: float


@dataclass(frozen=True)
class CoefficientField:
    """Validated periodic environment: coefficients, period, and bounds.

    `bounds` holds the (tighter) densely sampled extrema; `outer_bounds`
    keeps the certified analytic ones (mean +/- sum of amplitudes).
    Immutable, safe to share across workers.
    """

    period_L: float
    r_u: CoefficientSpec
    r_v: CoefficientSpec
    gamma_u: CoefficientSpec
    gamma_v: CoefficientSpec
    mu: CoefficientSpec
    bounds: Bounds
    outer_bounds: Bounds

    @classmethod
    def from_specs(cls, period_L, r_u, r_v, gamma_u, gamma_v, mu):
        if not (period_L > 0):
            raise BadPeriod(f"period_L must be positive, got {period_L}")
        xs = np.arange(BOUND_SAMPLING) * (period_L / BOUND_SAMPLING)

        def minmax(*specs):
            vals = [s.sample(xs, period_L) for s in specs]
            lo = min(float(v.min()) for v in vals)
            hi = max(float(v.max()) for v in vals)
            # round outward so coarser sampling grids always stay bracketed
            pad = 1e-12 * (1.0 + abs(lo) + abs(hi))
            return lo - pad, hi + pad

        r0, r_inf = minmax(r_u, r_v)
        gamma0, gamma_inf = minmax(gamma_u, gamma_v)
        mu0, mu_inf = minmax(mu)
        if gamma0 <= 0:
            raise PositivityViolation(f"gamma must stay positive (min sampled value {gamma0:.6g})")
        if mu0 <= 0:
            raise PositivityViolation(f"mu must stay positive (min sampled value {mu0:.6g})")

        def outer(*specs):
            bs = [s.analytic_bounds() for s in specs]
            return min(b[0] for b in bs), max(b[1] for b in bs)

        ro0, ro_inf = outer(r_u, r_v)
        go0, go_inf = outer(gamma_u, gamma_v)
        mo0, mo_inf = outer(mu)
        return cls(
            period_L=float(period_L),
            r_u=r_u, r_v=r_v, gamma_u=gamma_u, gamma_v=gamma_v, mu=mu,
            bounds=Bounds(r0, r_inf, gamma0, gamma_inf, mu0, mu_inf),
            outer_bounds=Bounds(ro0, ro_inf, go0, go_inf, mo0, mo_inf),
        )

    def coefficient(self, name):
        if name not in COEFFICIENT_NAMES:
            raise KeyError(name)
        return getattr(self, name)

    def sample(self, name, x):
        return self.coefficient(name).sample(x, self.period_L)


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform grid over one period with cyclic index arithmetic."""

    n_cells: int
    period_L: float

    def __post_init__(self):
        if self.n_cells < 8:
            raise ValueError("n_cells must be >= 8")
        if not (self.period_L > 0):
            raise BadPeriod(f"period_L must be positive, got {self.period_L}")

    @property
    def h(self):
        return self.period_L / self.n_cells

    @property
    def x(self):
        return np.arange(self.n_cells) * self.h


@dataclass(frozen=True)
class IntervalGrid:
    """Uniform grid on (a, b); boundary nodes carry 0 when Dirichlet."""

    a: float
    b: float
    n_points: int  # interior nodes
    dirichlet: bool = True

    def __post_init__(self):
        if not (self.b > self.a):
            raise ValueError("need b > a")
        if self.n_points < 8:
            raise ValueError("n_points must be >= 8")

    @classmethod
    def symmetric(cls, half_width, n_points, center=0.0, dirichlet=True):
        return cls(center - half_width, center + half_width, n_points, dirichlet)

    @property
    def h(self):
        return (self.b - self.a) / (self.n_points + 1)

    @property
    def x_interior(self):
        return self.a + self.h * np.arange(1, self.n_points + 1)

    @property
    def x_full(self):
        return self.a + self.h * np.arange(self.n_points + 2)


def sample_matrix_A(field: CoefficientField, grid: PeriodicGrid):
    """Linearization matrix A(x) = [[r_u-mu, mu], [mu, r_v-mu]] at each node."""
    x = grid.x
    ru = field.sample("r_u", x)
    rv = field.sample("r_v", x)
    mu = field.sample("mu", x)
    A = np.empty((len(x), 2, 2))
    A[:, 0, 0] = ru - mu
    A[:, 0, 1] = mu
    A[:, 1, 0] = mu
    A[:, 1, 1] = rv - mu
    return A


# --------------------------------------------------------------------------
# Scenario files
# --------------------------------------------------------------------------

_GRID_DEFAULTS = {"n_cells": 256}
_SOLVER_DEFAULTS = {"tol": 1e-10, "max_iter": 500}
_SIMULATION_DEFAULTS = {
    "width_periods": 20,
    "n_per_period": 64,
    "dt": 0.01,
    "t_max": 40.0,
    "kappa": 0.0,
    "emit_stride": 25,
}
_OUTPUT_DEFAULTS = {"dir": "runs"}


@dataclass
class ScenarioConfig:
    period_L: float
    coefficients: dict = dc_field(default_factory=dict)
    grid: dict = dc_field(default_factory=dict)
    solver: dict = dc_field(default_factory=dict)
    simulation: dict = dc_field(default_factory=dict)
    output: dict = dc_field(default_factory=dict)
    sweep: list = dc_field(default_factory=list)

    def grid_opt(self, key):
        return self.grid.get(key, _GRID_DEFAULTS.get(key))

    def solver_opt(self, key):
        return self.solver.get(key, _SOLVER_DEFAULTS.get(key))

    def simulation_opt(self, key):
        return self.simulation.get(key, _SIMULATION_DEFAULTS.get(key))

    def output_opt(self, key):
        return self.output.get(key, _OUTPUT_DEFAULTS.get(key))


def _parse_scalar(text):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _parse_number(text, key, lineno):
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"{key} must be a number, got {text!r}", lineno) from None


def _parse_harmonic(value, lineno):
    body = value.strip()
    if not (body.startswith("(") and body.endswith(")")):
        raise ParseError(f"harmonic must look like (amplitude, wavenumber, phase), got {value!r}", lineno)
    parts = [p.strip() for p in body[1:-1].split(",")]
    if len(parts) not in (2, 3):
        raise ParseError(f"harmonic needs 2 or 3 entries, got {len(parts)}", lineno)
    try:
        amplitude = float(parts[0])
        wavenumber = int(parts[1])
        phase = float(parts[2]) if len(parts) == 3 else 0.0
    except ValueError as exc:
        raise ParseError(f"bad harmonic entry: {exc}", lineno) from None
    return Harmonic(amplitude, wavenumber, phase)


def parse_scenario(text: str) -> ScenarioConfig:
    """Parse the flat key/value scenario format (sections in brackets)."""
    period_L = None
    coeff_raw = {}
    sections = {"grid": {}, "solver": {}, "simulation": {}, "output": {}}
    sweep = []
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in _SECTION_NAMES:
                raise ParseError(f"unknown section [{name}]", lineno)
            current = name
            if name in COEFFICIENT_NAMES and name not in coeff_raw:
                coeff_raw[name] = {"mean": None, "harmonics": []}
            continue
        if "=" not in line:
            raise ParseError(f"expected key = value, got {line!r}", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if current is None:
            if key == "period_L":
                period_L = _parse_number(value, "period_L", lineno)
            else:
                raise ParseError(f"unexpected top-level key {key!r} (only period_L allowed)", lineno)
        elif current in COEFFICIENT_NAMES:
            if key == "mean":
                coeff_raw[current]["mean"] = _parse_number(value, "mean", lineno)
            elif key == "harmonic":
                coeff_raw[current]["harmonics"].append(_parse_harmonic(value, lineno))
            else:
                raise ParseError(f"unknown coefficient key {key!r}", lineno)
        elif current == "sweep":
            if key != "axis":
                raise ParseError(f"unknown sweep key {key!r}", lineno)
            parts = value.split()
            if len(parts) != 4:
                raise ParseError("sweep axis must be: axis = <name> <lo> <hi> <n>", lineno)
            try:
                sweep.append((parts[0], float(parts[1]), float(parts[2]), int(parts[3])))
            except ValueError as exc:
                raise ParseError(f"bad sweep axis: {exc}", lineno) from None
        else:
            sections[current][key] = _parse_scalar(value)

    if period_L is None:
        raise ParseError("missing required key period_L")
    coefficients = {}
    for name, raw in coeff_raw.items():
        if raw["mean"] is None:
            raise ParseError(f"section [{name}] is missing its mean")
        coefficients[name] = CoefficientSpec(float(raw["mean"]), tuple(raw["harmonics"]))
    return ScenarioConfig(
        period_L=float(period_L),
        coefficients=coefficients,
        grid=sections["grid"],
        solver=sections["solver"],
        simulation=sections["simulation"],
        output=sections["output"],
        sweep=sweep,
    )


def load_scenario(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def _fmt(value):
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def serialize_scenario(config: ScenarioConfig) -> str:
    """Canonical text form; parse(serialize(c)) reproduces c exactly."""
    lines = [f"period_L = {_fmt(config.period_L)}"]
    for name in COEFFICIENT_NAMES:
        if name not in config.coefficients:
            continue
        spec = config.coefficients[name]
        lines.append(f"[{name}]")
        lines.append(f"mean = {_fmt(spec.mean)}")
        for h in spec.harmonics:
            lines.append(f"harmonic = ({_fmt(h.amplitude)}, {h.wavenumber}, {_fmt(h.phase)})")
    for section in ("grid", "solver", "simulation", "output"):
        items = getattr(config, section)
        if items:
            lines.append(f"[{section}]")
            for key in sorted(items):
                lines.append(f"{key} = {_fmt(items[key])}")
    if config.sweep:
        lines.append("[sweep]")
        for name, lo, hi, n in config.sweep:
            lines.append(f"axis = {name} {_fmt(lo)} {_fmt(hi)} {n}")
    return "\n".join(lines) + "\n"


def build_field(config: ScenarioConfig) -> CoefficientField:
    """Build the validated coefficient field from a parsed scenario."""
    missing = [name for name in COEFFICIENT_NAMES if name not in config.coefficients]
    if missing:
        raise ParseError(f"scenario is missing coefficient sections: {', '.join(missing)}")
    return CoefficientField.from_specs(
        config.period_L,
        r_u=config.coefficients["r_u"],
        r_v=config.coefficients["r_v"],
        gamma_u=config.coefficients["gamma_u"],
        gamma_v=config.coefficients["gamma_v"],
        mu=config.coefficients["mu"],
    )


def field_to_config(field: CoefficientField, base: ScenarioConfig | None = None) -> ScenarioConfig:
    """Serialize a field back into a scenario config (round-trip support)."""
    coefficients = {name: field.coefficient(name) for name in COEFFICIENT_NAMES}
    if base is None:
        return ScenarioConfig(period_L=field.period_L, coefficients=coefficients)
    return replace(base, period_L=field.period_L, coefficients=coefficients)


def constant_field(period_L=1.0, r_u=1.0, r_v=1.0, gamma_u=1.0, gamma_v=1.0, mu=0.1):
    """Convenience constructor for constant-coefficient fields."""
    return CoefficientField.from_specs(
        period_L,
        r_u=CoefficientSpec(r_u),
        r_v=CoefficientSpec(r_v),
        gamma_u=CoefficientSpec(gamma_u),
        gamma_v=CoefficientSpec(gamma_v),
        mu=CoefficientSpec(mu),
    )
