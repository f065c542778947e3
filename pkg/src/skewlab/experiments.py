# src/skewlab/experiments.py
from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from . import config, runtime
from .coupling import (
    envelope_fraction,
    estimate_profile,
    frame_of,
    run_coupling,
    shadow_fit,
    tail_fit,
    tau_statistic,
)
from .estimators import ks_uniform
from .gibbs import EmpiricalMeasure, estimate_mu, integrate, invariance_gap, merge_measures, u_saturation
from .hitting import (
    STATUS_CONVERGED,
    STATUS_OK,
    center_atom_probe,
    check_holonomy_invariance,
    estimate_transverse,
    first_hit_depth,
    hitting_series,
    transverse_average,
    with_fit,
)
from .observables import Observable, log_derivative_observable, observable, standard_observables
from .partition import (
    MarkovPartition,
    chart_point,
    locate_with_chart,
    rectangle_frame,
    transition_frame,
    verify_markov,
)
from .reference import (
    ReferenceMeasure,
    boundary_nullity,
    check_constant_jacobian,
    check_cs_invariance,
    overlap_equivalence,
    reference_measure,
    sample,
)
from .stats import (
    birkhoff_tail,
    correlation_decay,
    cumulant_bound,
    iid_control,
    reference_tail,
    stride_consistency,
    within_envelope,
)
from .storage import ExperimentArtifacts, Provenance, Summary, write_experiment
from .system import CenterExponent, SkewSystem, center_exponent, cross_section, validate_system

logger = logging.getLogger(__name__)

EXPERIMENTS: tuple[str, ...] = (
    "verify-partition",
    "properties",
    "estimate-mu",
    "hitting",
    "transverse",
    "coupling",
    "ldp",
    "correlations",
    "center-atoms",
)

# one independent seed stream per stage; positions are part of the output contract
_STAGES: tuple[str, ...] = (
    "gate",
    "markov",
    "jacobian",
    "cs",
    "boundary",
    "exponent",
    "mu",
    "mu-check",
    "integrate",
    "hitting",
    "transverse",
    "profile",
    "coupling",
    "tails",
    "correlations",
)

GATE_SAMPLES = 10_000
PERRON_TOL = 1e-9
JACOBIAN_TOL = 1e-10
JACOBIAN_PLAQUES = 20
CS_SAMPLES = 10_000
CS_KS_MAX = 0.03
OVERLAP_DEPTH = 4
EXPONENT_ORBITS = 1000
EXPONENT_STEPS = 200
MARGINAL_KS_MAX = 0.02
MASS_TOL = 0.01
RATIO_SPREAD_MAX = 0.1
TAIL_R2_MIN = 0.9
ENVELOPE_MIN = 0.99
TAU_KS_MAX = 0.03
CUMULANT_FIT_DEPTH = 6


@dataclass(frozen=True, slots=True)
class ExperimentResult:
    summary: Summary
    tables: dict[str, pd.DataFrame] = field(default_factory=dict)


@dataclass(frozen=True, slots=True, eq=False)
class ExperimentContext:
    sys: SkewSystem
    P: MarkovPartition
    seed: int
    threads: int
    chunks: int

    def section(self, name: str) -> dict[str, Any]:
        return config.get_section(name)

    def seeds(self, stage: str) -> np.random.SeedSequence:
        return np.random.SeedSequence(self.seed, spawn_key=(_STAGES.index(stage),))

    def rng(self, stage: str) -> np.random.Generator:
        return np.random.default_rng(self.seeds(stage))

    def source(self) -> ReferenceMeasure:
        return reference_measure(self.sys, self.P, self.section("sampling-settings")["source"])


def package_version() -> str:
    try:
        return metadata.version("skewlab")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _close(a: float, b: float, tol: float) -> bool:
    return math.isfinite(a) and math.isfinite(b) and abs(a - b) <= tol


def _agree(a: float, sa: float, b: float, sb: float, *, factor: float = 3.0, floor: float = 1e-12) -> bool:
    return abs(a - b) <= factor * math.hypot(sa, sb) + floor


def _observable(ctx: ExperimentContext, name: str) -> Observable:
    """Catalog observables by name; "log_derivative" is log g′ of the configured fiber map."""
    if name == "log_derivative":
        return log_derivative_observable(ctx.sys.kappa)
    return observable(name)


def build_context() -> ExperimentContext:
    sys = config.build_system()
    P = config.build_partition(sys.base)
    return ExperimentContext(
        sys=sys,
        P=P,
        seed=config.get_seed(),
        threads=config.get_threads(),
        chunks=config.get_chunks(),
    )


def source_exponent(ctx: ExperimentContext) -> CenterExponent:
    """Center exponent along orbits started from ν^u samples on the source plaque."""
    rng = ctx.rng("exponent")
    start = sample(ctx.sys, ctx.P, ctx.source(), rng, EXPONENT_ORBITS)
    return center_exponent(ctx.sys, rng, EXPONENT_ORBITS, EXPONENT_STEPS, start=start)


def gate(ctx: ExperimentContext, *, markov: bool = True, contracting: bool = True) -> dict[str, Any]:
    """
    Standing hypotheses of the system, then the Markov property of the partition.

    With `contracting` the center exponent must be certified negative as well;
    every lab that samples the Gibbs state depends on it.
    """
    report = validate_system(ctx.sys, ctx.rng("gate"), P=ctx.P)
    out: dict[str, Any] = {"system": report.to_dict()}
    if contracting:
        exp = source_exponent(ctx)
        if not exp.mostly_contracting:
            raise ValueError(
                f"system is not c-mostly contracting: center exponent {exp.fiber:.3e}, "
                f"confidence interval upper end {exp.ci_high:.3e} is not negative"
            )
        out["center_exponent"] = exp.to_dict()
    if markov:
        part = config.get_section("partition-settings")
        n = int(part["verify_samples"]) if part.get("rectangles") else min(GATE_SAMPLES, int(part["verify_samples"]))
        tol = float(config.get_section("tolerance-settings")["markov_tol"])
        mk = verify_markov(ctx.P, n, ctx.rng("markov"), tol=tol)
        if not mk.passed:
            raise ValueError(f"partition rejected by verify_markov: {mk.violations} violations over {n} samples")
        out["markov"] = {"violations": mk.violations, "n_samples": mk.n_samples}
    return out


def sample_mu(ctx: ExperimentContext, *, stage: str = "mu", n_particles: int | None = None) -> EmpiricalMeasure:
    """The Gibbs-state cloud, estimated chunk by chunk from independent streams and merged."""
    samp = ctx.section("sampling-settings")
    total = int(samp["n_particles"] if n_particles is None else n_particles)
    counts = runtime.split_counts(total, ctx.chunks)
    source = ctx.source()

    def one(i: int, rng: np.random.Generator) -> EmpiricalMeasure:
        return estimate_mu(
            ctx.sys,
            ctx.P,
            source,
            counts[i],
            int(samp["n_iterates"]),
            int(samp["burn_in"]),
            rng,
            estimator=str(samp["estimator"]),
            seed=ctx.seed,
        )

    parts = [p for p in runtime.parallel_sweep(ctx.seeds(stage), ctx.chunks, ctx.threads, one) if len(p)]
    return merge_measures(parts, [len(p) for p in parts])


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


def run_verify_partition(ctx: ExperimentContext) -> ExperimentResult:
    part = ctx.section("partition-settings")
    tol = float(ctx.section("tolerance-settings")["markov_tol"])
    report = verify_markov(ctx.P, int(part["verify_samples"]), ctx.rng("markov"), tol=tol)
    lam = ctx.sys.base.lambda_u
    checks = {
        "markov": report.passed,
        "perron_matches_lambda_u": _close(report.perron, lam, PERRON_TOL),
    }
    values = {"markov": report.to_dict(), "lambda_u": lam, "rectangles": ctx.P.k}
    return ExperimentResult(
        Summary("verify-partition", checks, values),
        {"rectangles": rectangle_frame(ctx.P), "transitions": transition_frame(ctx.P)},
    )


def _cs_partner(ctx: ExperimentContext, x: np.ndarray) -> np.ndarray:
    """A point on the center-stable plaque of x: same chart u, shifted height and fiber."""
    idx, _, chart = locate_with_chart(ctx.P, x[:2])
    i = int(idx[0])
    u, s = float(chart[0, 0]), float(chart[0, 1])
    ls = float(ctx.P.ls[i])
    s2 = s - 0.25 * ls if s > 0 else s + 0.25 * ls
    base = chart_point(ctx.P, np.array([i]), np.array([u]), np.array([s2]))[0]
    return np.array([base[0], base[1], (x[2] + 0.3) % 1.0])


def run_properties(ctx: ExperimentContext) -> ExperimentResult:
    sys, P = ctx.sys, ctx.P
    system = validate_system(sys, ctx.rng("gate"), P=P)

    rng = ctx.rng("jacobian")
    rows = []
    for i in range(P.k):
        for j in P.successors(i):
            jc = check_constant_jacobian(sys, P, i, int(j), JACOBIAN_PLAQUES, rng)
            rows.append({"i": jc.i, "j": jc.j, "spread": jc.spread, "mean": jc.mean, "weight": jc.weight})
    jac = pd.DataFrame(rows)
    max_spread = float(jac["spread"].max())
    weight_error = float(np.max(np.abs(jac["mean"] - jac["weight"])))

    source = ctx.source()
    x = np.asarray(source.marked, dtype=float)
    cs_ks = check_cs_invariance(sys, P, x, _cs_partner(ctx, x), CS_SAMPLES, ctx.rng("cs"))
    nullity = boundary_nullity(source, ctx.rng("boundary"), CS_SAMPLES)
    overlap = overlap_equivalence(P, OVERLAP_DEPTH)
    exponent = source_exponent(ctx)

    checks = {
        "system_valid": system.passed,
        "constant_jacobian": max_spread < JACOBIAN_TOL,
        "cs_invariance": cs_ks < CS_KS_MAX,
        "overlap_equivalence": overlap < 1e-9,
        "mostly_contracting": exponent.mostly_contracting,
    }
    values = {
        "system": system.to_dict(),
        "jacobian_max_spread": max_spread,
        "jacobian_weight_error": weight_error,
        "cs_invariance_ks": cs_ks,
        "overlap_deviation": overlap,
        "center_exponent": exponent.to_dict(),
    }
    return ExperimentResult(Summary("properties", checks, values), {"jacobian": jac, "boundary_nullity": nullity})


def run_estimate_mu(ctx: ExperimentContext) -> ExperimentResult:
    sys, P = ctx.sys, ctx.P
    gate_info = gate(ctx)
    n_boot = int(ctx.section("sampling-settings")["n_boot"])
    mu = sample_mu(ctx, stage="mu")
    mu_b = sample_mu(ctx, stage="mu-check")

    ks_x1 = ks_uniform(mu.points[:, 0], 0.0, 1.0)
    ks_x2 = ks_uniform(mu.points[:, 1], 0.0, 1.0)

    idx, _, _ = locate_with_chart(P, mu.points[:, :2])
    masses = pd.DataFrame(
        {
            "rectangle": np.arange(P.k),
            "mass": [float(mu.weights[idx == j].sum()) for j in range(P.k)],
            "area": [P.area(j) for j in range(P.k)],
        }
    )
    mass_error = float(np.max(np.abs(masses["mass"] - masses["area"])))

    rng = ctx.rng("integrate")
    rows = []
    for name, phi in standard_observables(P).items():
        a, sa = integrate(mu, phi, rng, n_boot=n_boot)
        b, sb = integrate(mu_b, phi, rng, n_boot=n_boot)
        rows.append({"observable": name, "mean": a, "stderr": sa, "mean_check": b, "stderr_check": sb, "agree": _agree(a, sa, b, sb)})
    obs = pd.DataFrame(rows)

    gap, gap_se = invariance_gap(sys, mu, observable("cos_theta"), rng, n_boot=n_boot)
    saturation = u_saturation(sys, mu, rng)

    checks = {
        "base_marginal_uniform": max(ks_x1, ks_x2) < MARGINAL_KS_MAX,
        "rectangle_masses": mass_error <= MASS_TOL,
        "seeds_agree": bool(obs["agree"].all()),
        "invariant": _agree(gap, gap_se, 0.0, 0.0),
    }
    values = {
        **gate_info,
        "ks_x1": ks_x1,
        "ks_x2": ks_x2,
        "max_mass_error": mass_error,
        "invariance_gap": gap,
        "invariance_gap_stderr": gap_se,
        "u_saturation": saturation,
        "n_particles": len(mu),
    }
    return ExperimentResult(Summary("estimate-mu", checks, values), {"masses": masses, "observables": obs})


def run_hitting(ctx: ExperimentContext) -> ExperimentResult:
    sys, P = ctx.sys, ctx.P
    gate_info = gate(ctx)
    hit = ctx.section("hitting-settings")
    phi = _observable(ctx, str(hit["observable"]))
    source = ctx.source()
    S = cross_section(P, hit["section"])
    n0 = first_hit_depth(P, source.index, S.index)

    rng = ctx.rng("hitting")
    series = hitting_series(
        sys,
        P,
        source,
        S,
        phi,
        rng,
        exact_n=[n for n in hit["exact_n"] if n >= n0],
        mc_n=[n for n in hit["mc_n"] if n >= n0],
        n_samples=int(hit["n_samples"]),
    )

    mu = sample_mu(ctx)
    est = estimate_transverse(sys, P, mu, S)
    t_avg, t_se = transverse_average(est, phi, ctx.rng("transverse"))
    limit = t_avg if hit["limit"] is None else float(hit["limit"])
    series = with_fit(series, limit)
    fit = series.rate_fit
    assert fit is not None

    last = int(np.argmax(series.n_values))
    frame = series.to_frame()
    # exact and Monte Carlo estimates at depths present in both
    both = frame.groupby("n")["method"].nunique()
    shared = [int(n) for n in both[both > 1].index]
    agree = True
    for n in shared:
        rows = frame[frame["n"] == n]
        ex = rows[rows["method"] == "exact"].iloc[0]
        mc = rows[rows["method"] == "monte-carlo"].iloc[0]
        agree = agree and _agree(float(ex["average"]), 0.0, float(mc["average"]), float(mc["stderr"]))

    checks = {
        "converging": fit.status == STATUS_CONVERGED or (fit.status == STATUS_OK and fit.slope < 0.0),
        "limit_consistent": _agree(float(series.averages[last]), float(series.stderr[last]), t_avg, t_se, floor=1e-3),
    }
    if shared:
        checks["exact_mc_agree"] = agree
    values = {
        **gate_info,
        "first_hit_depth": n0,
        "limit": limit,
        "transverse_average": t_avg,
        "transverse_stderr": t_se,
        "rate_fit": fit.to_dict(),
        "section": {"index": S.index, "anchor": list(S.anchor)},
    }
    return ExperimentResult(Summary("hitting", checks, values), {"series": frame})


def run_transverse(ctx: ExperimentContext) -> ExperimentResult:
    sys, P = ctx.sys, ctx.P
    gate_info = gate(ctx)
    tv = ctx.section("transverse-settings")
    phi = _observable(ctx, str(tv["observable"]))
    S1 = cross_section(P, tv["sections"][0])
    S2 = cross_section(P, tv["sections"][1])
    if S1.index == S2.index:
        raise ValueError("transverse sections must lie in different rectangles")

    mu = sample_mu(ctx)
    est1 = estimate_transverse(sys, P, mu, S1)
    est2 = estimate_transverse(sys, P, mu, S2)
    kw = {"budget": float(tv["budget"]), "n_bins": int(tv["n_bins"])}
    check = check_holonomy_invariance(sys, P, est1, est2, **kw)
    faulty = check_holonomy_invariance(sys, P, est1, est2, fault=float(tv["fault"]), **kw)

    rng = ctx.rng("transverse")
    rows = []
    for label, est in (("first", est1), ("second", est2)):
        avg, se = transverse_average(est, phi, rng)
        rows.append(
            {
                "section": label,
                "rectangle": est.section.index,
                "mass": est.total_mass,
                "mass_stderr": est.mass_stderr,
                "scale": est.scale,
                "average": avg,
                "stderr": se,
            }
        )
    bins = pd.DataFrame({"bin": np.arange(len(check.ratios)), "ratio": list(check.ratios)})

    checks = {
        "ratio_spread": check.ratio_spread < RATIO_SPREAD_MAX,
        "mean_ratio": abs(check.mean_ratio - 1.0) < RATIO_SPREAD_MAX,
        "fault_detected": abs(faulty.mean_ratio - 1.0) >= RATIO_SPREAD_MAX,
    }
    values = {**gate_info, "holonomy": check.to_dict(), "faulty": faulty.to_dict(), "fault": float(tv["fault"])}
    return ExperimentResult(Summary("transverse", checks, values), {"bins": bins, "sections": pd.DataFrame(rows)})


def _profile(ctx: ExperimentContext, mu: EmpiricalMeasure) -> Any:
    cp = ctx.section("coupling-settings")
    return estimate_profile(
        ctx.sys,
        ctx.P,
        int(cp["depth_cap"]),
        int(cp["profile_plaques"]),
        ctx.rng("profile"),
        support=mu.points,
        q1=float(cp["q1"]),
        u_depth=int(cp["u_depth"]),
        epsilon=None if cp["epsilon"] is None else float(cp["epsilon"]),
        n_points=int(cp["cylinder_points"]),
    )


def run_coupling_experiment(ctx: ExperimentContext) -> ExperimentResult:
    sys, P = ctx.sys, ctx.P
    gate_info = gate(ctx)
    cp = ctx.section("coupling-settings")
    mu = sample_mu(ctx)
    profile = _profile(ctx, mu)

    Y1 = ctx.source()
    Y2 = reference_measure(sys, P, cp["second"])
    n_pairs = int(cp["n_pairs"])
    run = run_coupling(
        sys,
        P,
        Y1,
        Y2,
        profile,
        n_pairs,
        int(cp["horizon"]),
        ctx.rng("coupling"),
        budget=int(cp["anchor_budget"]),
        max_pairs=int(cp["max_pairs"]),
        shadow_length=int(cp["shadow_length"]),
        n_points=int(cp["cylinder_points"]),
    )

    notes: dict[str, str] = {}
    p = run.root_anchor_fraction
    sigma = math.sqrt(max(p * (1.0 - p), 0.0) / n_pairs) if math.isfinite(p) else math.nan
    first_ok = math.isfinite(p) and p >= (1.0 - profile.q1) - 3.0 * sigma

    try:
        tail = tail_fit(run.records)
        tail_ok = tail.rho < 1.0 and tail.r2 > TAIL_R2_MIN
        tail_info: dict[str, Any] | None = tail.to_dict()
    except ValueError as e:
        tail_ok, tail_info = False, None
        notes["tail_fit"] = str(e)

    try:
        shadow_info: dict[str, Any] | None = shadow_fit(run.records).to_dict()
    except ValueError as e:
        shadow_info = None
        notes["shadow_fit"] = str(e)

    envelope = envelope_fraction(run.records, profile)
    try:
        tau_ks = tau_statistic(run, Y1, Y2)
    except ValueError as e:
        tau_ks = math.nan
        notes["tau"] = str(e)

    checks = {
        "first_stage": first_ok,
        "tail_exponential": tail_ok,
        "shadow_envelope": math.isfinite(envelope) and envelope >= ENVELOPE_MIN,
        "tau_preserves_measure": math.isfinite(tau_ks) and tau_ks < TAU_KS_MAX,
    }
    values = {
        **gate_info,
        "profile": profile.to_dict(),
        "first_stage_fraction": run.first_stage_fraction,
        "root_anchor_fraction": p,
        "tail_fit": tail_info,
        "shadow_fit": shadow_info,
        "envelope_fraction": envelope,
        "tau_ks": tau_ks,
        "matched": int(sum(r.matched for r in run.records)),
        "nodes": run.nodes,
    }
    return ExperimentResult(Summary("coupling", checks, values, notes), {"records": run.to_frame(), "stages": run.stage})


def run_ldp(ctx: ExperimentContext) -> ExperimentResult:
    sys, P = ctx.sys, ctx.P
    gate_info = gate(ctx)
    ld = ctx.section("ldp-settings")
    phi = _observable(ctx, str(ld["observable"]))
    alpha = float(ld["alpha"])
    n_values = [int(n) for n in ld["n_values"]]
    n_samples = int(ld["n_samples"])
    stride = int(ld["stride"])

    mu = sample_mu(ctx)
    center = float(np.sum(mu.weights * phi(mu.points)))
    rng = ctx.rng("tails")
    report = birkhoff_tail(sys, mu, phi, alpha, n_values, n_samples, rng, center=center)
    tables = {"tails": report.to_frame()}
    values: dict[str, Any] = {**gate_info, "center": center, "tails": report.to_dict()}
    checks = {
        "tail_decay": report.status == STATUS_OK and report.c_alpha > 0.0,
        "monotone": report.monotone,
    }

    if stride > 1:
        strided_n = sorted({n // stride for n in n_values if n // stride >= 1})
        strided = birkhoff_tail(sys, mu, phi, alpha, strided_n, n_samples, rng, center=center, stride=stride)
        tables["tails_strided"] = strided.to_frame()
        values["tails_strided"] = strided.to_dict()
        checks["stride_consistent"] = stride_consistency(report, strided)

    if ld["iid_control"]:
        control = iid_control(sys, mu, phi, alpha, n_values, n_samples, rng, center=center)
        tables["tails_iid"] = control.to_frame()
        values["tails_iid"] = control.to_dict()

    if ld["reference_tail"]:
        ref = reference_tail(sys, P, ctx.source(), phi, alpha, n_values, n_samples, rng, center=center)
        tables["tails_reference"] = ref.to_frame()
        values["tails_reference"] = ref.to_dict()
        checks["reference_decay"] = ref.status == STATUS_OK and ref.c_alpha > 0.0

    n_max = int(ld["cumulant_n_max"])
    if n_max > 0:
        profile = _profile(ctx, mu)
        # recentred so that ∫φ_α dμ = −α
        phi_alpha = phi.shifted(-(center + alpha))
        fit_depth = min(CUMULANT_FIT_DEPTH, max(n_max // 2, 1))
        cum = cumulant_bound(
            sys,
            P,
            profile,
            phi_alpha,
            n_max,
            frame=frame_of(P, ctx.source()),
            n_points=int(ctx.section("coupling-settings")["cylinder_points"]),
            fit_depth=fit_depth,
        )
        tables["cumulant"] = cum
        beyond = cum[~cum["in_fit"]]
        values["profile"] = profile.to_dict()
        values["cumulant"] = {
            "observable": phi_alpha.tag,
            "fit_depth": fit_depth,
            "theta": float(cum["bound"].iloc[0]) ** (1.0 / profile.s1),
            "beyond_fit": len(beyond),
        }
        checks["cumulant_bound"] = bool((beyond if len(beyond) else cum)["holds"].all())

    return ExperimentResult(Summary("ldp", checks, values), tables)


def run_correlations(ctx: ExperimentContext) -> ExperimentResult:
    sys = ctx.sys
    gate_info = gate(ctx)
    cs = ctx.section("correlation-settings")
    n_boot = int(ctx.section("sampling-settings")["n_boot"])
    n_values = [int(n) for n in cs["n_values"]]

    mu = sample_mu(ctx)
    rng = ctx.rng("correlations")
    tables: dict[str, pd.DataFrame] = {}
    values: dict[str, Any] = {**gate_info}
    checks: dict[str, bool] = {}
    for a, b in cs["pairs"]:
        phi, psi = _observable(ctx, a), _observable(ctx, b)
        series = correlation_decay(sys, mu, phi, psi, n_values, int(cs["n_samples"]), rng, n_boot=n_boot)
        key = f"{a}__{b}"
        tables[f"correlation_{key}"] = series.to_frame()
        values[key] = series.to_dict()
        if series.fit is not None:
            checks[f"{key}_decay"] = series.tau < 1.0 and series.fit.r2 > TAIL_R2_MIN
        elif series.oracle is not None:
            err = np.abs(np.asarray(series.values) - series.oracle)
            checks[f"{key}_oracle"] = bool(np.all(err <= 3.0 * np.asarray(series.stderr) + 1e-12))
        if sys.delta == 0.0 and phi.terms and all(t.k[:2] == (0, 0) for t in phi.terms + psi.terms):
            checks[f"{key}_fiber_envelope"] = within_envelope(series, 1.0 - sys.kappa)
    return ExperimentResult(Summary("correlations", checks, values), tables)


def run_center_atoms(ctx: ExperimentContext) -> ExperimentResult:
    gate_info = gate(ctx)
    at = ctx.section("atom-settings")
    mu = sample_mu(ctx)
    probe = center_atom_probe(
        ctx.sys,
        ctx.P,
        mu,
        at["anchor"],
        slab=float(at["slab"]),
        eps=float(at["eps"]),
        min_particles=int(at["min_particles"]),
    )
    clusters = pd.DataFrame({"centre": list(probe.centres), "size": list(probe.sizes)})
    checks = {"finitely_many_atoms": not probe.diffuse}
    values = {**gate_info, "atoms": probe.to_dict()}
    return ExperimentResult(Summary("center-atoms", checks, values), {"clusters": clusters})


RUNNERS: dict[str, Callable[[ExperimentContext], ExperimentResult]] = {
    "verify-partition": run_verify_partition,
    "properties": run_properties,
    "estimate-mu": run_estimate_mu,
    "hitting": run_hitting,
    "transverse": run_transverse,
    "coupling": run_coupling_experiment,
    "ldp": run_ldp,
    "correlations": run_correlations,
    "center-atoms": run_center_atoms,
}


def provenance(experiment: str, seed: int) -> Provenance:
    cfg = config.load_validated()
    source = cfg.source if cfg.source.startswith("<") else Path(cfg.source).name
    return Provenance(
        experiment=experiment,
        seed=seed,
        version=package_version(),
        config_source=source,
        config=config.resolved_config(),
    )


def run(experiment: str) -> tuple[Summary, ExperimentArtifacts]:
    """Run one experiment against the active config and write its artifacts."""
    try:
        runner = RUNNERS[experiment]
    except KeyError:
        raise ValueError(f"unknown experiment {experiment!r}; expected one of {list(EXPERIMENTS)}") from None

    config.load_validated()
    ctx = build_context()
    logger.info("%s: seed=%d chunks=%d threads=%d", experiment, ctx.seed, ctx.chunks, ctx.threads)
    result = runner(ctx)
    artifacts = write_experiment(
        root_dir=config.get_output_dir(),
        summary=result.summary,
        provenance=provenance(experiment, ctx.seed),
        tables=result.tables,
    )
    logger.info("%s: passed=%s -> %s", experiment, result.summary.passed, artifacts.directory)
    return result.summary, artifacts
