# cli.py — Scenario runner for nodal-lab

from __future__ import annotations

import argparse
import json
import math
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import jn_zeros

from config import (
    ENGINE_NAME,
    FSS_TOL,
    MP_IMAGES,
    OUTPUT_DIGITS,
    OUTPUT_DIR,
    SADDLE_TOL_FACTOR,
    STRING_IMAGES,
    THREADS,
    VERSION,
    log
)
from bifurcation import (
    branch_summary,
    continue_branch,
    default_lambda_grid,
    energy_identity_check,
    energy_ratio_check,
    expected_ratio,
    analytic_sigma,
    u_form_morse_index,
    write_branch_csv,
)
from flow import FlowConfig
from grid import DomainSpec, GridError, ScalarField, build_mesh, neg_laplacian, write_field
from nonlinearity import DerivativeSingularityError, NonlinearitySpec, check_assumptions
from solutions import (
    constructive_mp_path,
    dumbbell_scan,
    morse_index,
    newton_refine,
    nodal_search,
    positive_solution,
    string_saddle,
)
from symmetry import (
    UnreliableProjectionError,
    classify_square_branch,
    foliated_schwarz_check,
    nodal_domains,
    polarize,
    second_eigenspace,
    symmetry_tags,
)


class ConfigError(Exception):
    pass


SCENARIOS = (
    "eig", "positive", "nodal", "morse", "mp", "bifurcate",
    "square-validate", "disk-symmetry", "dumbbell-gap",
)

EXIT_OK, EXIT_COMPUTE, EXIT_CHECK, EXIT_CONFIG = 0, 1, 2, 3


# ==============================================================================
# VALUE PARSING
# ==============================================================================

_NUMBER_RE = re.compile(
    r"^(?P<coef>[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)?\s*\*?\s*"
    r"(?P<pi>pi|π)?\s*(?:/\s*(?P<den>\d+(?:\.\d*)?))?$"
)


def parse_number(text) -> float:
    """Reals with optional pi factor: '0.5', '1e-3', 'pi', 'pi/64', '2*pi', '3pi/4'."""
    if isinstance(text, bool):
        raise ConfigError(f"Expected a number, got {text!r}")
    if isinstance(text, (int, float)):
        return float(text)

    s = str(text).strip().lower()
    m = _NUMBER_RE.match(s)
    if not s or not m or not (m.group("coef") or m.group("pi")):
        raise ConfigError(f"Cannot parse number: {text!r}")

    value = float(m.group("coef")) if m.group("coef") else 1.0
    if m.group("pi"):
        value *= math.pi
    if m.group("den"):
        den = float(m.group("den"))
        if den == 0:
            raise ConfigError(f"Division by zero in {text!r}")
        value /= den
    return value


def _parse_int(text) -> int:
    value = parse_number(text)
    if value != int(value):
        raise ConfigError(f"Expected an integer, got {text!r}")
    return int(value)


def _parse_bool(text) -> bool:
    if isinstance(text, bool):
        return text
    s = str(text).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"Expected a boolean, got {text!r}")


def _parse_list(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [parse_number(x) for x in text]
    return [parse_number(x) for x in str(text).replace(";", ",").split(",") if x.strip()]


def _parse_kappa(text):
    if text is None or str(text).strip().lower() == "auto":
        return None
    return parse_number(text)


def _parse_str(text) -> str:
    return str(text).strip()


# key -> parser
KEYS = {
    "scenario": _parse_str,
    "h": parse_number,
    "out": _parse_str,
    "seed": _parse_int,
    "domain.kind": _parse_str,
    "domain.side": parse_number,
    "domain.width": parse_number,
    "domain.height": parse_number,
    "domain.radius": parse_number,
    "domain.inner": parse_number,
    "domain.outer": parse_number,
    "domain.lobe_radius": parse_number,
    "domain.delta": parse_number,
    "domain.channel_length": parse_number,
    "nonlinearity.family": _parse_str,
    "nonlinearity.p": parse_number,
    "nonlinearity.lambda": parse_number,
    "flow.tau": parse_number,
    "flow.kappa": _parse_kappa,
    "flow.residual_tol": parse_number,
    "flow.max_steps": _parse_int,
    "flow.backtracking": _parse_bool,
    "lambda_offset": parse_number,
    "lambda_min": parse_number,
    "lambda_max": parse_number,
    "branch.alpha": parse_number,
    "branch.points": _parse_int,
    "nodal.random_seeds": _parse_int,
    "mp.images": _parse_int,
    "string.images": _parse_int,
    "symmetry.tol": parse_number,
    "delta": parse_number,
    "deltas": _parse_list,
}

DEFAULTS = {
    "h": math.pi / 32,
    "out": OUTPUT_DIR,
    "seed": 0,
    "domain.kind": "square",
    "domain.side": math.pi,
    "nonlinearity.family": "allen_cahn",
    "nonlinearity.p": 3.0,
    "nonlinearity.lambda": 5.2,
    "flow.kappa": None,
    "branch.alpha": 0.0,
    "nodal.random_seeds": 0,
    "mp.images": MP_IMAGES,
    "string.images": STRING_IMAGES,
    "symmetry.tol": FSS_TOL,
    "deltas": [0.2, 0.1, 0.05],
}


# ==============================================================================
# SCENARIO CONFIG
# ==============================================================================

@dataclass
class ScenarioConfig:
    scenario: str
    domain: DomainSpec
    h: float
    nonlinearity: NonlinearitySpec
    flow: FlowConfig
    out: Path
    seed: int
    options: dict = field(default_factory=dict)

    def opt(self, key: str, default=None):
        return self.options.get(key, default)


def _flatten(obj: dict, prefix: str = "") -> dict:
    flat = {}
    for k, v in obj.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            flat.update(_flatten(v, key + "."))
        else:
            flat[key] = v
    return flat


def parse_config_text(text: str) -> dict:
    """key = value lines with optional [section] headers, or a JSON object."""
    stripped = text.strip()
    if stripped.startswith("{"):
        try:
            data = json.loads(stripped)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Invalid JSON config: {e}") from e
        return _flatten(data)

    raw = {}
    section = ""
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            section = f"{section}." if section else ""
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = line.split("=", 1)
        raw[f"{section}{key.strip()}"] = value.strip()
    return raw


def build_config(raw: dict, scenario: str | None = None, overrides: dict | None = None) -> ScenarioConfig:
    """Validates every key before anything is computed; unknown keys are rejected."""

    merged = dict(raw)
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    if scenario:
        merged["scenario"] = scenario

    unknown = sorted(k for k in merged if k not in KEYS)
    if unknown:
        raise ConfigError(f"Unknown config key(s): {', '.join(unknown)}")

    values = dict(DEFAULTS)
    for k, v in merged.items():
        values[k] = KEYS[k](v)

    name = values.get("scenario")
    if name not in SCENARIOS:
        raise ConfigError(f"Unknown scenario {name!r}; expected one of {', '.join(SCENARIOS)}")

    kind = values["domain.kind"]
    try:
        if kind == "square":
            domain = DomainSpec.square(values["domain.side"])
        elif kind == "rectangle":
            domain = DomainSpec.rectangle(values.get("domain.width"), values.get("domain.height"))
        elif kind == "disk":
            domain = DomainSpec.disk(values.get("domain.radius", 1.0))
        elif kind == "annulus":
            domain = DomainSpec.annulus(values.get("domain.inner"), values.get("domain.outer"))
        elif kind == "dumbbell":
            delta = values.get("domain.delta", values.get("delta", min(values["deltas"])))
            domain = DomainSpec.dumbbell(
                values.get("domain.lobe_radius", 1.0), delta, values.get("domain.channel_length", 1.0)
            )
        else:
            raise ConfigError(f"Unknown domain.kind {kind!r}")

        family = values["nonlinearity.family"]
        if family == "power":
            p = values["nonlinearity.p"] if "nonlinearity.p" in merged else 0.5
            spec = NonlinearitySpec.sublinear_power(p)
        else:
            spec = NonlinearitySpec(family, p=values["nonlinearity.p"], lam=values["nonlinearity.lambda"])

        flow_cfg = FlowConfig(
            tau=values.get("flow.tau", FlowConfig.tau),
            kappa=values["flow.kappa"],
            residual_tol=values.get("flow.residual_tol"),
            max_steps=values.get("flow.max_steps", FlowConfig.max_steps),
            backtracking=values.get("flow.backtracking", FlowConfig.backtracking),
        )
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e)) from e

    h = values["h"]
    if not (math.isfinite(h) and h > 0):
        raise ConfigError(f"h must be positive, got {h}")

    options = {k: v for k, v in values.items() if not k.startswith(("domain.", "nonlinearity.", "flow."))}
    options["lambda_given"] = "nonlinearity.lambda" in merged
    options["h_given"] = "h" in merged

    return ScenarioConfig(
        scenario=name,
        domain=domain,
        h=h,
        nonlinearity=spec,
        flow=flow_cfg,
        out=Path(values["out"]),
        seed=values["seed"],
        options=options,
    )


def load_config(path: str | Path | None, scenario: str | None = None,
                overrides: dict | None = None) -> ScenarioConfig:
    raw = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"Cannot read config {path}: {e}") from e
        raw = parse_config_text(text)
    return build_config(raw, scenario, overrides)


# ==============================================================================
# RUN CONTEXT
# ==============================================================================

def _rounded(obj):
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return str(obj)
        return float(f"{obj:.{OUTPUT_DIGITS}g}")
    if isinstance(obj, (np.floating,)):
        return _rounded(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, dict):
        return {str(k): _rounded(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_rounded(v) for v in obj]
    return obj


class RunContext:
    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.out = cfg.out
        self.summary: dict = {}
        self.checks: list[dict] = []
        self.artifacts: list[str] = []

    def check(self, name: str, passed: bool | None, measured=None, expected=None):
        verdict = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
        self.checks.append({"name": name, "verdict": verdict, "measured": measured, "expected": expected})
        print(f"{verdict} {name}: measured={measured} expected={expected}")

    def dump(self, name: str, u: ScalarField) -> str:
        write_field(self.out / name, u)
        self.artifacts.append(name)
        return name

    def csv(self, name: str, branch) -> str:
        write_branch_csv(branch, self.out / name)
        self.artifacts.append(name)
        return name

    def write_summary(self, status: str):
        self.artifacts.append("summary.json")
        doc = {
            "engine": ENGINE_NAME,
            "version": VERSION,
            "scenario": self.cfg.scenario,
            "status": status,
            "h": self.cfg.h,
            "domain": {k: v for k, v in vars(self.cfg.domain).items() if v is not None},
            "nonlinearity": {
                "family": self.cfg.nonlinearity.family,
                "p": self.cfg.nonlinearity.p,
                "lambda": self.cfg.nonlinearity.lam,
            },
            "checks": self.checks,
            "artifacts": sorted(set(self.artifacts)),
            **self.summary,
        }
        with open(self.out / "summary.json", "w", encoding="utf-8") as f:
            json.dump(_rounded(doc), f, indent=2, sort_keys=True, ensure_ascii=False)
            f.write("\n")


# ==============================================================================
# SHARED PIECES
# ==============================================================================

def _mesh(ctx: RunContext, h: float | None = None):
    return build_mesh(ctx.cfg.domain, h or ctx.cfg.h)


def _spec_with_lambda(ctx: RunContext, basis) -> NonlinearitySpec:
    """nonlinearity.lambda, or lambda2h + lambda_offset when an offset is configured."""
    spec = ctx.cfg.nonlinearity
    offset = ctx.cfg.opt("lambda_offset")
    if offset is not None and spec.family == "allen_cahn" and not ctx.cfg.opt("lambda_given"):
        spec = NonlinearitySpec.allen_cahn(basis.eigenvalue + offset, spec.p)
        log(f"lambda set to lambda2h + {offset:g} = {spec.lam:.8g}")
    return spec


def _extra_seeds(ctx: RunContext, mesh) -> list[ScalarField]:
    n = ctx.cfg.opt("nodal.random_seeds", 0)
    if not n:
        return []
    rng = np.random.default_rng(ctx.cfg.seed)
    return [ScalarField(mesh, 0.1 * rng.uniform(-1, 1, mesh.M)) for _ in range(n)]


def _solution_entry(ctx: RunContext, rep, spec, basis, w=None) -> dict:
    u = rep.field
    entry = {
        "energy": rep.energy,
        "residual": rep.residual,
        "sign_class": rep.sign_class,
        "nodal_domains": nodal_domains(u),
        "symmetry_tags": symmetry_tags(u),
        "morse": None,
        "zeros_flagged": None,
    }
    if spec.is_c1:
        m = morse_index(rep, spec)
        entry["morse"], entry["zeros_flagged"] = m["index"], m["zeros_flagged"]
    if basis is not None and basis.aligned:
        try:
            cls = classify_square_branch(u, basis)
            entry["type"], entry["alpha_deg"] = cls["type"], math.degrees(cls["alpha"])
        except UnreliableProjectionError:
            entry["type"] = "unclassified"
    if w is not None:
        entry["excess_over_w"] = float(np.max(np.abs(u.values) - w.field.values))
    return entry


def _catalog(ctx: RunContext, mesh, spec, basis):
    return nodal_search(mesh, spec, cfg=ctx.cfg.flow, basis=basis, extra_seeds=_extra_seeds(ctx, mesh))


# ==============================================================================
# SCENARIOS
# ==============================================================================

def _stencil_eigenvalue(h: float, side: float, k: int, l: int) -> float:
    a = k * math.pi * h / (2 * side)
    b = l * math.pi * h / (2 * side)
    return 4.0 / h ** 2 * (math.sin(a) ** 2 + math.sin(b) ** 2)


def scenario_eig(ctx: RunContext):
    dom = ctx.cfg.domain
    rows = []
    for factor in (1, 2, 4):
        h = ctx.cfg.h * factor
        try:
            mesh = build_mesh(dom, h)
            basis = second_eigenspace(mesh)
        except (GridError, ValueError) as e:
            log(f"WARNING: convergence level h={h:.6g} skipped: {e}")
            continue
        rows.append({"h": h, "M": mesh.M, "lambda1h": basis.lambda1, "lambda2h": basis.eigenvalue,
                     "lambda3h": basis.third_eigenvalue, "degenerate": basis.degenerate})
        if factor == 1:
            ctx.dump("phi1.txt", basis.phi1)
            ctx.dump("psi1.txt", basis.psi1)
            ctx.dump("psi2.txt", basis.psi2)

    if not rows:
        raise GridError("No valid mesh for the eigenvalue study")
    fine = rows[0]
    ctx.summary.update({"lambda1h": fine["lambda1h"], "lambda2h": fine["lambda2h"],
                        "lambda3h": fine["lambda3h"], "degenerate": fine["degenerate"], "levels": rows})

    if dom.kind == "square":
        L = dom.side
        exact = (2 * (math.pi / L) ** 2, 5 * (math.pi / L) ** 2)
        if abs(L / ctx.cfg.h - round(L / ctx.cfg.h)) < 1e-9:
            d1 = _stencil_eigenvalue(ctx.cfg.h, L, 1, 1)
            d2 = _stencil_eigenvalue(ctx.cfg.h, L, 1, 2)
            ctx.check("stencil_lambda1", abs(fine["lambda1h"] - d1) <= 1e-8 * d1, fine["lambda1h"], d1)
            ctx.check("stencil_lambda2", abs(fine["lambda2h"] - d2) <= 1e-8 * d2, fine["lambda2h"], d2)
        ctx.check("lambda1_continuum", abs(fine["lambda1h"] - exact[0]) <= 1e-2 * exact[0] / 2,
                  fine["lambda1h"], exact[0])
        ctx.check("lambda2_continuum", abs(fine["lambda2h"] - exact[1]) <= 3e-2 * exact[1] / 5,
                  fine["lambda2h"], exact[1])
        ctx.check("lambda2_multiplicity", fine["degenerate"], "degenerate" if fine["degenerate"] else "simple", "2")
    elif dom.kind == "disk":
        j01, j11 = jn_zeros(0, 1)[0], jn_zeros(1, 1)[0]
        exact = ((j01 / dom.radius) ** 2, (j11 / dom.radius) ** 2)
        ctx.check("lambda2_multiplicity", fine["degenerate"], "degenerate" if fine["degenerate"] else "simple", "2")
    else:
        exact = None

    if exact is not None and len(rows) == 3:
        rates = []
        for key, ex in zip(("lambda1h", "lambda2h"), exact):
            e = [abs(r[key] - ex) for r in rows]
            rate = math.log2(e[1] / e[0]) if e[0] > 0 and e[1] > 0 else math.nan
            rates.append(rate)
        ctx.summary["convergence_rates"] = {"lambda1h": rates[0], "lambda2h": rates[1]}
        if dom.kind == "square":
            ctx.check("convergence_rate_lambda1", abs(rates[0] - 2.0) <= 0.2, rates[0], 2.0)
            ctx.check("convergence_rate_lambda2", abs(rates[1] - 2.0) <= 0.2, rates[1], 2.0)
        else:
            ctx.check("convergence_rate_lambda2", None, rates[1], "curved boundary, O(h)")


def scenario_positive(ctx: RunContext):
    mesh = _mesh(ctx)
    basis = second_eigenspace(mesh)
    spec = _spec_with_lambda(ctx, basis)
    assumptions = check_assumptions(spec, basis.lambda1, basis.eigenvalue)
    ctx.summary["assumptions"] = assumptions.as_dict()

    w = positive_solution(mesh, spec, ctx.cfg.flow)
    ctx.dump("w.txt", w.field)
    ctx.summary["positive"] = {**w.summary(), "cross_validation": w.diagnostics.get("cross_validation")}
    ctx.summary["m"] = w.energy

    if not assumptions.a3:
        ctx.check("zero_below_lambda1", w.sign_class == "zero", w.sign_class, "zero")
        return

    ctx.check("positive_converged", w.converged and w.sign_class == "positive", w.sign_class, "positive")
    ctx.check("energy_negative", w.energy < 0, w.energy, "< 0")
    ctx.check("cross_validation", w.diagnostics.get("cross_validation", math.inf) <= 1e-6,
              w.diagnostics.get("cross_validation"), "<= 1e-6")

    if spec.is_c1:
        ctx.check("sup_norm_bound", w.field.sup_norm() <= 1 + 1e-8, w.field.sup_norm(), "<= 1")
        m = morse_index(w, spec)
        ctx.summary["positive"]["morse"] = m["index"]
        ctx.check("morse_w", m["index"] == 0, m["index"], 0)
    else:
        refused = []
        for name, call in (("morse", lambda: morse_index(w, spec)),
                           ("newton", lambda: newton_refine(w.field, spec))):
            try:
                call()
            except DerivativeSingularityError:
                refused.append(name)
        ctx.check("c1_requirement_enforced", refused == ["morse", "newton"], refused, ["morse", "newton"])


def scenario_nodal(ctx: RunContext, with_paths: bool = False):
    mesh = _mesh(ctx)
    basis = second_eigenspace(mesh)
    spec = _spec_with_lambda(ctx, basis)
    assumptions = check_assumptions(spec, basis.lambda1, basis.eigenvalue)
    ctx.summary["assumptions"] = assumptions.as_dict()
    ctx.summary["lambda"] = spec.lam

    w = positive_solution(mesh, spec, ctx.cfg.flow)
    ctx.dump("w.txt", w.field)
    ctx.summary["m"] = w.energy

    catalog = _catalog(ctx, mesh, spec, basis)
    entries = [_solution_entry(ctx, rep, spec, basis, w) for rep in catalog.entries]
    for k, rep in enumerate(catalog.entries):
        ctx.dump(f"nodal_{k:02d}.txt", rep.field)
    ctx.summary.update({"c_nod": catalog.c_nod, "solutions": entries, "seed_failures": catalog.failures})

    if not assumptions.a3prime:
        ctx.check("no_nodal_below_lambda2", len(catalog) == 0, len(catalog), 0)
        return catalog, w, basis, spec, mesh

    ctx.check("catalog_nonempty", len(catalog) > 0, len(catalog), "> 0")
    if not len(catalog):
        return catalog, w, basis, spec, mesh

    excess = max(e["excess_over_w"] for e in entries)
    ctx.check("bounded_by_w", excess <= 1e-6, excess, "<= 1e-6")
    ctx.check("m_le_cnod_lt_0", w.energy <= catalog.c_nod < 0, [w.energy, catalog.c_nod], "m <= c_nod < 0")
    best = entries[0]
    if best["morse"] is not None:
        ctx.check("least_energy_morse_le_1", best["morse"] <= 1, best["morse"], "<= 1")
    if basis.aligned:
        ctx.check("least_energy_type_M", best.get("type") == "M", best.get("type"), "M")
    return catalog, w, basis, spec, mesh


def scenario_morse(ctx: RunContext):
    catalog, w, basis, spec, mesh = scenario_nodal(ctx)
    spec.require_c1()
    mw = morse_index(w, spec)
    ctx.summary["morse_w"] = mw["index"]
    ctx.check("morse_w", mw["index"] == 0, mw["index"], 0)

    for k, (rep, entry) in enumerate(zip(catalog.entries, ctx.summary["solutions"])):
        if spec.p == 3.0:
            uf = u_form_morse_index(rep.field * math.sqrt(spec.lam), spec.lam)
            ctx.check(f"scaling_consistency_{k}", uf["index"] == entry["morse"], uf["index"], entry["morse"])
        if basis.aligned and entry.get("type") in ("M", "D"):
            expected = 1 if entry["type"] == "M" else 2
            ctx.check(f"morse_type_{entry['type']}_{k}", entry["morse"] == expected and entry["zeros_flagged"] == 0,
                      [entry["morse"], entry["zeros_flagged"]], [expected, 0])


def scenario_mp(ctx: RunContext):
    catalog, w, basis, spec, mesh = scenario_nodal(ctx)
    if not len(catalog):
        ctx.check("mountain_pass", None, "empty catalog", "nodal solution")
        return

    best = catalog.best
    path = constructive_mp_path(best, w, spec, ctx.cfg.flow, n_images=ctx.cfg.opt("mp.images"))
    ctx.summary["constructive_path"] = path.summary()
    ctx.check("mp_certificate", path.certificate, path.max_energy, best.energy)

    saddle = string_saddle(mesh, spec, ctx.cfg.flow, n_images=ctx.cfg.opt("string.images"), w=w,
                           direction=basis.nodal_mode, c_nod=catalog.c_nod)
    c_nod = catalog.c_nod
    tol = SADDLE_TOL_FACTOR * abs(c_nod)
    ctx.summary.update({"c_mp_est": saddle.max_energy, "gap": saddle.max_energy - c_nod,
                        "string": saddle.summary()})
    ctx.check("c_nod_le_c_mp", c_nod <= saddle.max_energy + tol, [c_nod, saddle.max_energy], "c_nod <= c_mp")
    ctx.check("string_matches_c_nod", abs(saddle.max_energy - c_nod) <= 1e-2 * abs(c_nod),
              saddle.max_energy, c_nod)


def _run_branches(ctx: RunContext, mesh, basis, alphas: list[float]):
    lam2 = basis.eigenvalue
    n = ctx.cfg.opt("branch.points") or 12
    lam_min = ctx.cfg.opt("lambda_min")
    lam_max = ctx.cfg.opt("lambda_max")
    if lam_min is None and lam_max is None:
        grid = default_lambda_grid(lam2, n)
    else:
        lo = lam_min if lam_min is not None else lam2 + 0.02
        hi = lam_max if lam_max is not None else lam2 + 0.4
        grid = [float(x) for x in np.linspace(lo, hi, n)]

    def run(alpha: float):
        return continue_branch(mesh, alpha, grid, cfg=ctx.cfg.flow, basis=basis)

    with ThreadPoolExecutor(max_workers=THREADS) as pool:
        branches = list(pool.map(run, alphas))

    out = []
    for alpha, br in zip(alphas, branches):
        name = f"branch_alpha_{math.degrees(alpha):.0f}.csv"
        ctx.csv(name, br)
        out.append(br)
    return out


def scenario_bifurcate(ctx: RunContext):
    mesh = _mesh(ctx)
    basis = second_eigenspace(mesh)
    alpha = ctx.cfg.opt("branch.alpha", 0.0)
    branch = _run_branches(ctx, mesh, basis, [alpha])[0]
    ctx.summary["lambda2h"] = basis.eigenvalue
    ctx.summary["branches"] = [branch_summary(branch)]
    ctx.check("branch_points", len(branch.points) >= 4, len(branch.points), ">= 4")
    s = [p.s for p in branch.points]
    ctx.check("amplitude_increasing", all(b > a for a, b in zip(s, s[1:])), s, "increasing")
    worst = max(energy_identity_check(p) for p in branch.points)
    ctx.check("energy_identity", worst <= 1e-4, worst, "<= 1e-4")


def scenario_square_validate(ctx: RunContext):
    if ctx.cfg.domain.kind != "square":
        raise ConfigError("square-validate needs domain.kind = square")
    mesh = _mesh(ctx)
    basis = second_eigenspace(mesh)
    lam2 = basis.eigenvalue
    bm, bd = _run_branches(ctx, mesh, basis, [0.0, math.pi / 4])
    ctx.summary["lambda2h"] = lam2
    ctx.summary["branches"] = [branch_summary(bm), branch_summary(bd)]

    for br, label, morse_expected in ((bm, "M", 1), (bd, "D", 2)):
        sigma_ref = analytic_sigma(br.alpha_target)
        if br.sigma_hat is None:
            ctx.check(f"sigma_{label}", False, None, sigma_ref)
        else:
            ctx.check(f"sigma_{label}", abs(br.sigma_hat - sigma_ref) <= 0.07 * sigma_ref, br.sigma_hat, sigma_ref)

        mid = min(br.points, key=lambda p: abs(p.lam - (lam2 + 0.2)))
        ctx.check(f"morse_{label}", mid.morse == morse_expected and mid.zeros_flagged == 0,
                  [mid.morse, mid.zeros_flagged], [morse_expected, 0])
        ctx.check(f"types_{label}", all(p.kind == label for p in br.points),
                  sorted({p.kind for p in br.points}), label)

        ratio = energy_ratio_check(br)[0]["ratio"]
        ref = expected_ratio(br.alpha_target)
        ctx.check(f"energy_ratio_{label}", abs(ratio - ref) <= 0.1 * abs(ref), ratio, ref)

    common = sorted({p.lam for p in bm.points} & {p.lam for p in bd.points})
    if common:
        jm = next(p.energy_J for p in bm.points if p.lam == common[0])
        jd = next(p.energy_J for p in bd.points if p.lam == common[0])
        ctx.check("least_energy_is_M", jm < jd, [jm, jd], "J_M < J_D")


def scenario_disk_symmetry(ctx: RunContext):
    if not ctx.cfg.domain.is_radial:
        raise ConfigError("disk-symmetry needs a disk or annulus domain")
    if ctx.cfg.opt("lambda_offset") is None and not ctx.cfg.opt("lambda_given"):
        ctx.cfg.options["lambda_offset"] = 1.0

    catalog, w, basis, spec, mesh = scenario_nodal(ctx)
    if not len(catalog):
        return

    best = catalog.best
    tol = ctx.cfg.opt("symmetry.tol", FSS_TOL)
    rep = foliated_schwarz_check(best.field, tol=tol)
    ctx.summary["foliated_schwarz"] = rep.as_dict()
    ctx.check("nonradial", rep.radial_variance > 10 * tol, rep.radial_variance, f"> {10 * tol:g}")
    ctx.check("foliated_schwarz", rep.is_foliated_schwarz,
              [rep.axial_deviation, rep.monotonicity_violation], f"<= {tol:g}")
    ctx.check("odd_across_diameter", rep.odd_deviation <= 0.02, rep.odd_deviation, "<= 0.02")
    ctx.check("nodal_domains", nodal_domains(best.field) == 2, nodal_domains(best.field), 2)

    if spec.is_c1:
        m = morse_index(best, spec)
        ctx.check("morse_least_energy", m["index"] == 1, m["index"], 1)
        path = constructive_mp_path(best, w, spec, ctx.cfg.flow, n_images=ctx.cfg.opt("mp.images"))
        ctx.summary["constructive_path"] = path.summary()
        ok = path.max_energy <= best.energy + 1e-2 * abs(best.energy)
        ctx.check("c_mp_equals_c_nod", ok, path.max_energy, best.energy)

    polar = {}
    for axis in ("x_axis", "y_axis", "diagonal", "anti_diagonal"):
        pu = polarize(best.field, axis)
        A = neg_laplacian(mesh)
        before = float(best.field.values @ (A @ best.field.values))
        after = float(pu.values @ (A @ pu.values))
        polar[axis] = {"dirichlet_change": mesh.h ** 2 * (after - before)}
    ctx.summary["polarization"] = polar


def scenario_dumbbell_gap(ctx: RunContext):
    dom = ctx.cfg.domain
    if dom.kind != "dumbbell":
        raise ConfigError("dumbbell-gap needs domain.kind = dumbbell")
    deltas = [ctx.cfg.opt("delta")] if ctx.cfg.opt("delta") is not None else ctx.cfg.opt("deltas")

    scan = dumbbell_scan(dom.lobe_radius, deltas, dom.channel_length, ctx.cfg.nonlinearity,
                         ctx.cfg.flow, ctx.cfg.h if ctx.cfg.opt("h_given") else None,
                         ctx.cfg.opt("string.images"))

    rows = []
    for res in scan["results"]:
        name = f"u_W_delta_{res['delta']:g}.txt"
        ctx.dump(name, res["reports"]["u_W"].field)
        rows.append({
            "delta": res["delta"],
            "c_nod": res["c_nod"],
            "c_mp_est": res["c_mp_est"],
            "gap": res["gap"],
            "morse": res["morse"]["index"],
            "zeros_flagged": res["morse"]["zeros_flagged"],
            "h": res["h"],
            "saddle_morse": res["saddle_morse"],
            "distances": res["distances"],
        })
    ctx.summary["scan"] = rows
    ctx.summary["failures"] = scan["failures"]

    sel = scan["selected"]
    if sel is None:
        ctx.check("nodal_W_limit", False, "none", "some delta with a nodal W-limit")
        return

    ctx.summary.update({"delta": sel["delta"], "c_nod": sel["c_nod"], "c_mp_est": sel["c_mp_est"], "gap": sel["gap"]})
    ctx.check("morse_W_limit", sel["morse"]["index"] == 0, sel["morse"]["index"], 0)
    ctx.check("saddle_morse_1", sel["saddle_morse"] == 1, sel["saddle_morse"], 1)
    ctx.check("gap_positive", sel["gap"] > 0.05 * abs(sel["c_nod"]), sel["gap"], f"> {0.05 * abs(sel['c_nod']):.6g}")


RUNNERS = {
    "eig": scenario_eig,
    "positive": scenario_positive,
    "nodal": scenario_nodal,
    "morse": scenario_morse,
    "mp": scenario_mp,
    "bifurcate": scenario_bifurcate,
    "square-validate": scenario_square_validate,
    "disk-symmetry": scenario_disk_symmetry,
    "dumbbell-gap": scenario_dumbbell_gap,
}


# ==============================================================================
# ENTRY POINTS
# ==============================================================================

def run(cfg: ScenarioConfig) -> int:
    """Runs one scenario; exit code 0 all checks pass, 1 compute error, 2 failed check, 3 config error."""

    try:
        cfg.out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        log(f"ERROR: cannot create output directory {cfg.out}: {e}")
        return EXIT_CONFIG

    ctx = RunContext(cfg)
    log(f"=== {ENGINE_NAME} {VERSION}: scenario {cfg.scenario}, h={cfg.h:.6g}, out={cfg.out} ===")

    try:
        RUNNERS[cfg.scenario](ctx)
    except ConfigError as e:
        log(f"ERROR: {e}")
        ctx.summary["error"] = str(e)
        ctx.write_summary("config_error")
        return EXIT_CONFIG
    except Exception as e:
        log(f"ERROR: scenario {cfg.scenario} failed: {type(e).__name__}: {e}")
        ctx.summary["error"] = f"{type(e).__name__}: {e}"
        ctx.write_summary("compute_error")
        return EXIT_COMPUTE

    failed = any(c["verdict"] == "FAIL" for c in ctx.checks)
    ctx.write_summary("checks_failed" if failed else "ok")
    return EXIT_CHECK if failed else EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog=ENGINE_NAME, description="Nodal and mountain-pass solutions of -Delta u = f(u)")
    parser.add_argument("scenario", choices=SCENARIOS)
    parser.add_argument("--config", help="key = value or JSON scenario file")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--h", help="grid spacing, e.g. pi/64")
    parser.add_argument("--lambda", dest="lam", help="Allen-Cahn lambda")
    args = parser.parse_args(argv)

    overrides = {"out": args.out, "h": args.h, "nonlinearity.lambda": args.lam}
    try:
        cfg = load_config(args.config, args.scenario, overrides)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
