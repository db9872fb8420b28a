"""Scenario files and the tasks they run.

A scenario names a model (files or a generator), an ordered list of tasks
and a seed.  Each replicate draws its random streams from
``SeedSequence([seed, replicate, stream])`` so runs are reproducible and
independent of execution order.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import io as pio
from .algorithms import (
    expected_td_lambda,
    representative_value_iteration,
    residual_gradient,
    sampled_td_lambda,
)
from .ambiguity import (
    construct_f,
    detect_ambiguity,
    environment_from_f,
    sutton_barto_pair,
    witness_from_nullspace,
)
from .builders import (
    aggregation_model,
    plateau_basis,
    tent,
    trapezoid_features,
    uniform_grid,
    diffusion_mdp,
)
from .errors import NumericalError, PbeLabError, SchemaError, ValidationError
from .flatness import flatness_audit, sample_directions
from .mdp import (
    FiniteMdp,
    Measure,
    bellman_error,
    exact_value,
    g_factor,
    mu_norm,
    stationary_distribution,
)
from .projection import (
    FeatureSet,
    ProjectionBasis,
    SingularReport,
    adjoint_image_dim_check,
    assemble_system,
    normalize_basis,
    solve_system,
)

TASKS = ("analyze", "audit-features", "witness", "simulate", "counterexample")
STREAMS = {"model": 0, "audit": 1, "witness": 2, "simulate": 3}
SEED_SCHEME = (
    "numpy SeedSequence([seed, replicate, stream]); "
    "streams: model=0, audit=1, witness=2, simulate=3"
)
EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC = 0, 2, 3


def stream_seed(seed: int, replicate: int, stream: str) -> int:
    """Integer seed of one named stream of one replicate."""
    ss = np.random.SeedSequence([int(seed), int(replicate), STREAMS[stream]])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def exit_code(exc: BaseException) -> int:
    return EXIT_NUMERIC if isinstance(exc, NumericalError) else EXIT_VALIDATION


@dataclass(frozen=True)
class Model:
    """Everything a task needs: environment, features, basis and measure."""

    mdp: FiniteMdp
    phi: FeatureSet
    psi: ProjectionBasis
    mu: Measure
    label: str = "model"


def model_from_parts(
    mdp: FiniteMdp, phi_table, psi_table=None, normalize_psi: bool = False, label: str = "model"
) -> Model:
    """Combine loaded parts; a missing basis defaults to the normalized features."""
    mu = stationary_distribution(mdp)
    phi = FeatureSet(phi_table)
    if psi_table is None:
        psi = normalize_basis(phi.table, mu)
    elif normalize_psi:
        psi = normalize_basis(psi_table, mu)
    else:
        psi = ProjectionBasis(psi_table)
    for name, obj in (("features", phi), ("projection basis", psi)):
        if obj.n_states != mdp.n_states:
            raise ValidationError(
                f"{name} cover {obj.n_states} states but the MDP has {mdp.n_states}"
            )
    return Model(mdp, phi, psi, mu, label)


def _override(mdp: FiniteMdp, gamma=None, lam=None) -> FiniteMdp:
    changes = {}
    if gamma is not None:
        changes["gamma"] = float(gamma)
    if lam is not None:
        changes["lam"] = float(lam)
    return mdp.replace(**changes) if changes else mdp


def _choose(value, replicate: int):
    """Lists in generator specs are cycled over replicates."""
    if isinstance(value, list):
        return value[replicate % len(value)]
    return value


def generate_model(spec: dict, replicate: int, seed: int, base: Path | None = None) -> Model:
    """Build the model described by a generator spec or by file paths."""
    kind = spec.get("generator", "files")
    rng = np.random.default_rng(stream_seed(seed, replicate, "model"))
    if kind == "files":
        base = base or Path(".")
        for key in ("mdp", "features"):
            if key not in spec:
                raise SchemaError(f"model spec lacks {key!r}")
        mdp = pio.load_mdp(base / spec["mdp"])
        phi = pio.load_table(base / spec["features"])
        psi = pio.load_table(base / spec["psi"]) if spec.get("psi") else None
        return model_from_parts(mdp, phi, psi, bool(spec.get("normalize_psi", False)), spec["mdp"])
    if kind == "sutton-barto":
        pair = sutton_barto_pair(float(spec.get("gamma", 0.9)), float(spec.get("lambda", 0.0)))
        variant = int(spec.get("variant", 2))
        if variant not in (1, 2):
            raise ValidationError("sutton-barto variant must be 1 or 2")
        mdp, phi, psi = (pair.mdp1, pair.phi1, pair.psi1) if variant == 1 else (pair.mdp2, pair.phi2, pair.psi2)
        return Model(mdp, phi, psi, stationary_distribution(mdp), f"sutton-barto-{variant}")
    if kind == "random-aggregation":
        n = int(_choose(spec.get("n_states", 8), replicate))
        k = int(_choose(spec.get("k", [2, 3, 4]), replicate))
        mdp, phi, psi, mu = aggregation_model(
            n, k, rng, float(spec.get("gamma", 0.9)), float(spec.get("lambda", 0.0))
        )
        return Model(mdp, phi, psi, mu, f"aggregation-n{n}-k{k}")
    if kind == "tent":
        n = int(spec.get("n_cells", 2001))
        x, h = uniform_grid(n)
        T = np.full((n, n), 1.0 / n)
        mdp = FiniteMdp(T, np.zeros(n), float(spec.get("gamma", 0.99)), 0.0, h)
        mu = Measure.uniform(n, h)
        phi = FeatureSet(tent(x, float(spec.get("peak", 0.5))))
        return Model(mdp, phi, normalize_basis(np.ones((1, n)), mu), mu, f"tent-{n}")
    if kind == "trapezoid":
        n = int(spec.get("n_cells", 200))
        x, h = uniform_grid(n)
        phi, masks = trapezoid_features(x, int(spec.get("k", 5)), float(spec.get("plateau", 0.5)))
        mdp = diffusion_mdp(
            x,
            float(spec.get("bandwidth", 0.05)),
            float(spec.get("gamma", 0.9)),
            float(spec.get("lambda", 0.0)),
            reward=np.sin(2 * np.pi * x),
            widths=h,
        )
        mu = stationary_distribution(mdp)
        return Model(mdp, phi, plateau_basis(masks, mu), mu, f"trapezoid-{n}")
    raise SchemaError(f"unknown model generator {kind!r}")


# -- tasks ---------------------------------------------------------------------


def task_analyze(model: Model, **_) -> dict:
    system = assemble_system(model.mdp, model.phi, model.psi, model.mu)
    sol = solve_system(system)
    sv = system.singular_values
    doc = {
        "kind": "analysis",
        "model": model.label,
        "n_states": model.mdp.n_states,
        "k": system.k,
        "n": system.n,
        "gamma": system.gamma,
        "lambda": system.lam,
        "G": g_factor(system.gamma, system.lam),
        "A": system.A,
        "B": system.B,
        "b": system.b,
        "rank": system.rank,
        "singular_values": sv,
        "sv_ratio": float(sv[-1] / sv[0]) if sv.size and sv[0] > 0 else 0.0,
        "singular": system.is_singular,
        "generalized": system.generalized,
        "projection": adjoint_image_dim_check(model.phi, model.psi, model.mu).kind,
    }
    if isinstance(sol, SingularReport):
        doc.update(solution=None, consistent=sol.consistent, nullspace=sol.nullspace.T)
        doc["ambiguous"] = "yes (null space)"
    else:
        v_true = exact_value(model.mdp)
        doc.update(solution=sol, nullspace=None)
        doc["bellman_error"] = bellman_error(model.mdp, model.phi, sol, model.mu)
        doc["value_error"] = mu_norm(model.phi.table.T @ sol - v_true, model.mu)
        doc["ambiguous"] = "no null space"
    return doc


def task_audit(model: Model, seed: int = 0, n_random: int = 512, alpha: float = 1.0, **_) -> dict:
    verdict = flatness_audit(model.phi, model.mu, alpha=alpha, n_random=n_random, seed=seed)
    return {
        "kind": "audit",
        "model": model.label,
        "overall": verdict.overall,
        "certificate_kind": verdict.certificate_kind,
        "n_directions": len(verdict.reports),
        "n_failing": len(verdict.failing),
        "cell_masses": verdict.cell_masses,
        "seed": seed,
        "reports": verdict.reports,
    }


def _solution_doc(sol) -> dict:
    return {"w": sol.w, "R": sol.R, "T": pio.matrix_doc(sol.T)}


def _witness_doc(model: Model, wit, route: str, tried: int, feasible: int) -> dict:
    return {
        "kind": "witness",
        "model": model.label,
        "verdict": f"ambiguous ({route})",
        "base": _solution_doc(wit.base),
        "alternate": _solution_doc(wit.alternate),
        "xi": wit.xi,
        "null_vector": wit.null_vector,
        "w_gap": wit.w_gap,
        "discrepancy": wit.max_abc_discrepancy,
        "base_adjusted": wit.base_adjusted,
        "directions_tried": tried,
        "feasible_directions": feasible,
    }


def task_witness(model: Model, seed: int = 0, n_random: int = 256, xi: float = 1.0, **_) -> dict:
    """Witness from the null space, else from a feasible extremal-cut construction."""
    system = assemble_system(model.mdp, model.phi, model.psi, model.mu)
    ns = detect_ambiguity(system)
    if ns is not None:
        wit = witness_from_nullspace(model.mdp, model.phi, model.psi, model.mu, ns[:, 0], xi)
        return _witness_doc(model, wit, "null space", 0, 0)

    G = g_factor(model.mdp.gamma, model.mdp.lam)
    directions = sample_directions(model.phi.k, n_random=n_random, seed=seed)
    feasible, first = 0, None
    for c in directions:
        phi_dir = model.phi.values(c)
        if np.ptp(phi_dir[model.mu.support()]) == 0.0:
            continue
        fc = construct_f(phi_dir, model.psi, model.mu, G)
        if fc.feasible:
            feasible += 1
            first = (c, fc) if first is None else first
    doc = {
        "kind": "witness",
        "model": model.label,
        "verdict": "no witness found",
        "base": None,
        "alternate": None,
        "xi": xi,
        "G": G,
        "directions_tried": len(directions),
        "feasible_directions": feasible,
        "seed": seed,
    }
    if first is None:
        return doc
    c, fc = first
    if model.mdp.lam != 0.0:
        doc["verdict"] = "feasible f found; environment synthesis needs lambda = 0"
        doc["direction"] = c
        return doc
    env = environment_from_f(fc.f, model.phi.values(c), model.mdp)
    env_system = assemble_system(env, model.phi, model.psi, model.mu)
    env_ns = detect_ambiguity(env_system)
    if env_ns is None:
        doc["verdict"] = "feasible f found; synthesized system nonsingular"
        return doc
    v = env_ns[:, 0]
    wit = witness_from_nullspace(env, model.phi, model.psi, model.mu, v, xi)
    out = _witness_doc(model, wit, "constructed environment", len(directions), feasible)
    out.update(G=G, direction=c, seed=seed)
    return out


def default_rep_states(phi: FeatureSet) -> list[int]:
    """Lowest-index argmax of every feature."""
    return [int(np.argmax(row)) for row in phi.table]


def task_simulate(
    model: Model,
    seed: int = 0,
    algo: str = "td",
    steps: int = 20_000,
    step: float | None = None,
    sampled: bool = False,
    rep_states=None,
    tol: float = 1e-8,
    **_,
) -> dict:
    if algo == "td" and sampled:
        trace = sampled_td_lambda(model.mdp, model.phi, steps, step, seed=seed)
    elif algo == "td":
        trace = expected_td_lambda(model.mdp, model.phi, model.psi, model.mu, step, steps, tol=tol)
    elif algo == "rg":
        trace = residual_gradient(model.mdp, model.phi, model.mu, step, steps, tol=tol)
    elif algo == "rvi":
        reps = default_rep_states(model.phi) if rep_states is None else list(rep_states)
        trace = representative_value_iteration(model.mdp, model.phi, reps, steps, tol=tol)
    else:
        raise ValidationError(f"unknown algorithm {algo!r}")
    return {
        "kind": "trace",
        "model": model.label,
        "algo": algo + ("-sampled" if sampled and algo == "td" else ""),
        "verdict": trace.verdict,
        "step_size": trace.step_size,
        "seed": seed,
        "n_recorded": len(trace.iterates),
        "final": trace.final,
        "final_residual": trace.residuals[-1],
        "target": trace.target,
        "trace": trace,
    }


def task_counterexample(model: Model = None, gamma: float = 0.9, lam: float = 0.0, **_) -> dict:
    """The aliased two-state / three-state pair with its verification trace."""
    pair = sutton_barto_pair(gamma, lam)
    mu1 = stationary_distribution(pair.mdp1)
    mu2 = stationary_distribution(pair.mdp2)
    s1 = assemble_system(pair.mdp1, pair.phi1, pair.psi1, mu1)
    s2 = assemble_system(pair.mdp2, pair.phi2, pair.psi2, mu2)
    w0 = np.zeros(2)
    gap = max(np.abs(s1.A - s2.A).max(), np.abs(s1.B - s2.B).max(), np.abs(s1.b - s2.b).max())
    td1 = expected_td_lambda(pair.mdp1, pair.phi1, pair.psi1, mu1)
    td2 = expected_td_lambda(pair.mdp2, pair.phi2, pair.psi2, mu2)
    v2 = exact_value(pair.mdp2)
    return {
        "kind": "counterexample",
        "name": "sutton-barto",
        "gamma": gamma,
        "lambda": lam,
        "mdp1": pio.mdp_to_dict(pair.mdp1),
        "mdp2": pio.mdp_to_dict(pair.mdp2),
        "features1": pair.phi1.table,
        "features2": pair.phi2.table,
        "stationary1": mu1.weights,
        "stationary2": mu2.weights,
        "bellman_error_at_zero1": bellman_error(pair.mdp1, pair.phi1, w0, mu1),
        "bellman_error_at_zero2": bellman_error(pair.mdp2, pair.phi2, w0, mu2),
        "system1": {"A": s1.A, "B": s1.B, "b": s1.b},
        "system2": {"A": s2.A, "B": s2.B, "b": s2.b},
        "max_abc_discrepancy": float(gap),
        "true_value1": exact_value(pair.mdp1),
        "true_value2": v2,
        "td_limit1": td1.final,
        "td_limit2": td2.final,
        "td_verdicts": [td1.verdict, td2.verdict],
        "ambiguous": "yes (aliasing)" if gap <= 1e-12 and np.any(np.abs(v2) > 1e-12) else "no",
    }


TASK_FUNCS = {
    "analyze": task_analyze,
    "audit-features": task_audit,
    "witness": task_witness,
    "simulate": task_simulate,
    "counterexample": task_counterexample,
}
TASK_STREAM = {"audit-features": "audit", "witness": "witness", "simulate": "simulate"}


# -- scenarios -----------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    name: str
    model: dict
    tasks: list
    seed: int = 0
    replicates: int = 1
    gamma: float | None = None
    lam: float | None = None
    output_dir: str | None = None
    fmt: str = "structured"
    base: Path = field(default_factory=Path)


def _task_spec(entry) -> dict:
    spec = {"task": entry} if isinstance(entry, str) else dict(entry)
    if spec.get("task") not in TASKS:
        raise SchemaError(f"unknown task {spec.get('task')!r}; expected one of {', '.join(TASKS)}")
    return spec


def bundled_scenarios() -> list[str]:
    root = resources.files("pbelab") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def resolve_scenario_path(path) -> Path:
    """A filesystem path, or the name of a bundled scenario."""
    p = Path(path)
    if p.exists():
        return p
    bundled = resources.files("pbelab") / "scenarios" / f"{p.stem}.json"
    if str(path) in bundled_scenarios() or (p.suffix == "" and bundled.is_file()):
        return Path(str(bundled))
    return p


def load_scenario(path) -> Scenario:
    path = resolve_scenario_path(path)
    doc = pio.read_json(path)
    pio.check_version(doc, str(path))
    for key in ("name", "model", "tasks"):
        if key not in doc:
            raise SchemaError(f"{path}: missing field {key!r}")
    tasks = [_task_spec(t) for t in doc["tasks"]]
    if not tasks:
        raise ValidationError(f"{path}: tasks must be non-empty")
    model = doc["model"]
    if not isinstance(model, dict):
        raise SchemaError(f"{path}: model must be an object")
    replicates = int(doc.get("replicates", 1))
    if replicates < 1:
        raise ValidationError(f"{path}: replicates must be positive")
    fmt = doc.get("format", "structured")
    if fmt not in ("csv", "structured"):
        raise ValidationError(f"{path}: unknown format {fmt!r}")
    return Scenario(
        name=str(doc["name"]),
        model=model,
        tasks=tasks,
        seed=int(doc.get("seed", 0)),
        replicates=replicates,
        gamma=doc.get("gamma"),
        lam=doc.get("lambda"),
        output_dir=doc.get("output_dir"),
        fmt=fmt,
        base=path.parent,
    )


def _summarize(results: list[dict]) -> dict:
    """Verdicts of one replicate: flatness, ambiguity and convergence."""
    out = {"flatness": None, "ambiguous": None, "convergence": [], "bellman_errors": None}
    for r in results:
        kind = r.get("kind")
        if kind == "audit":
            out["flatness"] = r["overall"]
            out["flatness_certificate"] = r["certificate_kind"]
        elif kind == "analysis" and out["ambiguous"] is None:
            out["ambiguous"] = r["ambiguous"]
            out["singular"] = r["singular"]
        elif kind == "witness":
            found = r["verdict"].startswith("ambiguous")
            out["witness_found"] = found
            if found:
                out["ambiguous"] = "yes" + r["verdict"][len("ambiguous"):]
            elif out["ambiguous"] in (None, "no null space"):
                out["ambiguous"] = r["verdict"]
        elif kind == "trace":
            out["convergence"].append(f"{r['algo']}: {r['verdict']}")
        elif kind == "counterexample":
            out["ambiguous"] = r["ambiguous"]
            out["bellman_errors"] = [r["bellman_error_at_zero1"], r["bellman_error_at_zero2"]]
    return out


def run_replicate(scn: Scenario, replicate: int, out_dir: Path, tol: float | None = None) -> dict:
    """Run the tasks of one replicate in order; stop at the first failure."""
    record = {"replicate": replicate, "status": "ok", "model": None, "reports": [], "error": None}
    results = []
    try:
        model = generate_model(scn.model, replicate, scn.seed, scn.base)
        mdp = _override(model.mdp, scn.gamma, scn.lam)
        if mdp is not model.mdp:
            model = Model(mdp, model.phi, model.psi, model.mu, model.label)
        record["model"] = model.label
        for index, spec in enumerate(scn.tasks):
            name = spec["task"]
            kwargs = {k: v for k, v in spec.items() if k != "task"}
            if name in TASK_STREAM and "seed" not in kwargs:
                kwargs["seed"] = stream_seed(scn.seed, replicate, TASK_STREAM[name])
            if tol is not None and name == "simulate":
                kwargs["tol"] = tol
            if name == "counterexample":
                kwargs.setdefault("gamma", model.mdp.gamma)
                kwargs.setdefault("lam", model.mdp.lam)
            result = TASK_FUNCS[name](model, **kwargs)
            results.append(result)
            fname = f"r{replicate:03d}_{index:02d}_{name}"
            written = pio.emit_report(result, scn.fmt, out_dir / fname)
            record["reports"].append(written.name)
    except PbeLabError as exc:
        record["status"] = "failed"
        record["error"] = f"{type(exc).__name__}: {exc}"
        record["exit_code"] = exit_code(exc)
    record.update(_summarize(results))
    return record


def thread_cap() -> int:
    raw = os.environ.get("PBE_LAB_THREADS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValidationError(f"PBE_LAB_THREADS must be an integer, got {raw!r}") from exc
    if n < 1:
        raise ValidationError("PBE_LAB_THREADS must be at least 1")
    return n


def summary_text(summary: dict) -> str:
    lines = [
        f"scenario: {summary['scenario']}",
        f"seed: {summary['seed']}",
        f"seed scheme: {summary['seed_scheme']}",
        f"status: {summary['status']}",
    ]
    for rec in summary["replicates"]:
        lines.append(f"replicate {rec['replicate']} ({rec['model']}): {rec['status']}")
        if rec["flatness"] is not None:
            lines.append(f"  flat extrema: {'yes' if rec['flatness'] else 'no'}")
        if rec["ambiguous"] is not None:
            lines.append(f"  ambiguous: {rec['ambiguous']}")
        if rec["bellman_errors"] is not None:
            lines.append("  bellman errors at w=0: " + ", ".join(pio.fmt_float(e) for e in rec["bellman_errors"]))
        for c in rec["convergence"]:
            lines.append(f"  convergence {c}")
        if rec["error"]:
            lines.append(f"  error: {rec['error']}")
    return "\n".join(lines) + "\n"


def run_scenario(path, out=None, fmt: str | None = None, seed: int | None = None, tol: float | None = None) -> tuple[int, dict]:
    """Execute a scenario and write its reports plus ``summary.json``/``summary.txt``.

    Returns the exit code and the summary document.  Replicates may run on
    up to ``PBE_LAB_THREADS`` threads; their tasks always run in order.
    """
    scn = load_scenario(path)
    if fmt is not None:
        scn = Scenario(**{**scn.__dict__, "fmt": fmt})
    if seed is not None:
        scn = Scenario(**{**scn.__dict__, "seed": int(seed)})
    out_dir = Path(out if out is not None else (scn.output_dir or f"pbe-out/{scn.name}"))
    out_dir.mkdir(parents=True, exist_ok=True)
    workers = min(thread_cap(), scn.replicates)
    reps = range(scn.replicates)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(lambda r: run_replicate(scn, r, out_dir, tol), reps))
    else:
        records = []
        for r in reps:
            records.append(run_replicate(scn, r, out_dir, tol))
            if records[-1]["status"] != "ok":
                break
    failed = [r for r in records if r["status"] != "ok"]
    code = failed[0].get("exit_code", EXIT_VALIDATION) if failed else EXIT_OK
    summary = {
        "schema_version": pio.SCHEMA_VERSION,
        "scenario": scn.name,
        "seed": scn.seed,
        "seed_scheme": SEED_SCHEME,
        "replicates_requested": scn.replicates,
        "status": "failed" if failed else "ok",
        "exit_code": code,
        "replicates": records,
        "totals": {
            "flat": sum(1 for r in records if r["flatness"]),
            "witnesses_found": sum(1 for r in records if r.get("witness_found")),
            "converged": sum(1 for r in records for c in r["convergence"] if c.endswith("converged")),
        },
    }
    pio.write_text(pio.dumps(summary), out_dir / "summary.json")
    pio.write_text(summary_text(summary), out_dir / "summary.txt")
    return code, summary
