"""Experiment orchestration: ensemble runs, defect fields, result files.

An experiment samples M replicas from the product measure of a perturbed
profile, runs the event-driven dynamics to the snapshot times, and compares
the rescaled defect field

    (1 / (n^d eps)) sum_x H(x/n) [ (tau_x Psi)(eta(t)) - centering_x ]

against two centerings: the exact expectation under the time-t reference
profile (whose ensemble mean tends to zero), and the constant critical
density (whose ensemble mean tracks gPsi'(alpha0) * int H v(t) with v from
the continuum solver).  Both are reported; the second is what makes the
comparison falsifiable at finite n.

Outputs are plain CSV files plus a manifest carrying the config hash, the
seed and library versions; reruns of the same config are byte-identical.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np
import yaml

from . import __version__
from .lattice import LocalFunction, Torus
from .measures import DensityProfile, bernoulli_kl, expect_local_field, sample_product, tilde_poly
from .pde import Trajectory, burgers_solve, downsample
from .profiles import make_field, sample_field
from .rates import RateSpec, compute_transport, load_spec, preset, validate_rate_spec
from .kmc import simulate_ensemble
from .scaling import ScalingPlan, scaling_check

FLOAT_FMT = "{:.17g}"


def _origin(d: int) -> tuple[int, ...]:
    return tuple(0 for _ in range(d))


def observable(name: str, d: int) -> LocalFunction:
    """Registered cylinder observables for defect fields."""
    if name == "eta0":
        return LocalFunction.occupancy(_origin(d))
    if name == "pair":
        e1 = tuple(1 if k == 0 else 0 for k in range(d))
        return LocalFunction.occupancy(_origin(d)) * LocalFunction.occupancy(e1)
    raise ValueError(f"unknown observable {name!r}")


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    spec: dict
    n: int
    d: int
    epsilon_rule: str
    v0: dict
    snapshot_times: tuple[float, ...]
    replicas: int
    seed: int
    alpha0: float | None = None
    observable: str = "eta0"
    test_functions: tuple[dict, ...] = (
        {"name": "const", "value": 1.0},
        {"name": "cos_k", "k": 1},
        {"name": "cos_k", "k": 2},
    )
    allow_marginal_scaling: bool = False
    burgers_mesh: int | None = None
    store_snapshots: bool = False

    def to_doc(self) -> dict:
        return {
            "spec": dict(self.spec),
            "n": self.n,
            "d": self.d,
            "epsilon_rule": self.epsilon_rule,
            "alpha0": self.alpha0,
            "v0": dict(self.v0),
            "observable": self.observable,
            "test_functions": [dict(h) for h in self.test_functions],
            "snapshot_times": list(self.snapshot_times),
            "replicas": self.replicas,
            "seed": self.seed,
            "allow_marginal_scaling": self.allow_marginal_scaling,
            "burgers_mesh": self.burgers_mesh,
            "store_snapshots": self.store_snapshots,
        }

    @staticmethod
    def from_doc(doc: Mapping) -> "ExperimentConfig":
        return ExperimentConfig(
            spec=dict(doc["spec"]),
            n=int(doc["n"]),
            d=int(doc["d"]),
            epsilon_rule=str(doc["epsilon_rule"]),
            alpha0=None if doc.get("alpha0") is None else float(doc["alpha0"]),
            v0=dict(doc["v0"]),
            observable=str(doc.get("observable", "eta0")),
            test_functions=tuple(dict(h) for h in doc.get("test_functions", [])),
            snapshot_times=tuple(float(t) for t in doc["snapshot_times"]),
            replicas=int(doc["replicas"]),
            seed=int(doc["seed"]),
            allow_marginal_scaling=bool(doc.get("allow_marginal_scaling", False)),
            burgers_mesh=None if doc.get("burgers_mesh") is None else int(doc["burgers_mesh"]),
            store_snapshots=bool(doc.get("store_snapshots", False)),
        )

    def canonical_yaml(self) -> str:
        return yaml.safe_dump(self.to_doc(), sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_yaml().encode()).hexdigest()


def load_experiment_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return ExperimentConfig.from_doc(yaml.safe_load(fh))


def save_experiment_config(config: ExperimentConfig, path) -> None:
    Path(path).write_text(config.canonical_yaml())


def resolve_spec(doc: Mapping) -> RateSpec:
    if "preset" in doc:
        params = {k: v for k, v in doc.items() if k != "preset"}
        return preset(doc["preset"], **params)
    if "file" in doc:
        return load_spec(doc["file"])
    raise ValueError("spec document needs a 'preset' or 'file' key")


def resolve_profile(torus: Torus, doc: Mapping, default_epsilon: float | None = None) -> DensityProfile:
    """Build a density profile from its structured document.

    Perturbation form: ``{alpha: 0.5, epsilon: 0.1, v0: {name: cos_k, k: 1}}``
    (epsilon falls back to the scaling plan's value); alternatively
    ``{file: profile.csv}`` loads per-site densities.
    """
    if "file" in doc:
        from .measures import load_profile_csv

        return load_profile_csv(torus, doc["file"])
    alpha = float(doc.get("alpha", 0.5))
    if "v0" not in doc:
        return DensityProfile.constant(torus, alpha)
    epsilon = doc.get("epsilon", default_epsilon)
    if epsilon is None:
        raise ValueError("perturbation form needs an epsilon (or a scaling plan default)")
    v = sample_field(torus, make_field(**doc["v0"]))
    return DensityProfile.perturbed(torus, alpha, float(epsilon), v)


# ---------------------------------------------------------------------------
# Defect statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DefectStatistic:
    t: float
    test_function: str
    centering: str  # 'profile' or 'alpha0'
    mean: float
    stderr: float
    target: float
    replicas: int

    @property
    def deviation_sigmas(self) -> float:
        if self.stderr == 0.0:
            return 0.0 if self.mean == self.target else math.inf
        return abs(self.mean - self.target) / self.stderr

    def within(self, sigmas: float = 3.0) -> bool:
        return self.deviation_sigmas <= sigmas


def empirical_defect_field(
    snapshots_t: np.ndarray,
    psi: LocalFunction,
    torus: Torus,
    h_values: np.ndarray,
    centering_values: np.ndarray,
    epsilon: float,
) -> tuple[float, float, np.ndarray]:
    """Ensemble mean, standard error and per-replica values of the rescaled
    defect statistic at one time."""
    placed = psi.place(torus)
    m = snapshots_t.shape[0]
    stats = np.empty(m)
    scale = 1.0 / (torus.size * epsilon)
    for r in range(m):
        values = placed.eval_all(snapshots_t[r])
        stats[r] = scale * float(h_values @ (values - centering_values))
    mean = float(stats.mean())
    stderr = float(stats.std(ddof=1) / math.sqrt(m)) if m > 1 else 0.0
    return mean, stderr, stats


# ---------------------------------------------------------------------------
# Experiment driver
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnsembleResult:
    config: ExperimentConfig
    scaling: ScalingPlan
    alpha0: float
    statistics: tuple[DefectStatistic, ...]
    snapshot_times: tuple[float, ...]
    mean_occupancy: np.ndarray  # (n_snaps, size)
    reference: Trajectory  # continuum solution on the lattice mesh
    n_events: int
    # per snapshot time: relative entropy of the ensemble's marginal
    # occupancies against the reference profile (a product-measure proxy;
    # the full entropy is not computable at these sizes)
    entropy_proxies: tuple[float, ...] = ()

    def rows(self):
        for s in self.statistics:
            yield s

    def summary_lines(self) -> list[str]:
        out = [
            f"experiment: n={self.config.n} d={self.config.d} replicas={self.config.replicas} "
            f"alpha0={self.alpha0:.6g} eps={self.scaling.epsilon:.6g}"
        ]
        for s in self.statistics:
            out.append(
                f"  t={s.t:g} H={s.test_function:<8s} centering={s.centering:<7s} "
                f"mean={s.mean:+.5f} stderr={s.stderr:.5f} target={s.target:+.5f} "
                f"({s.deviation_sigmas:.2f} sigma)"
            )
        return out


def run_experiment(config: ExperimentConfig, outdir: str | Path | None = None) -> EnsembleResult:
    spec = resolve_spec(config.spec)
    report = validate_rate_spec(spec)
    if not report.passed:
        raise ValueError("\n".join(report.lines()))
    torus = Torus(config.d, config.n)
    scaling = ScalingPlan.from_epsilon_rule(config.d, config.n, config.epsilon_rule)
    regime = scaling_check(scaling)
    if not regime.passed and not config.allow_marginal_scaling:
        raise ValueError(
            "scaling regime check failed; set allow_marginal_scaling to run anyway:\n"
            + "\n".join(regime.lines())
        )

    transport = compute_transport(spec)
    alpha0 = transport.alpha0 if config.alpha0 is None else config.alpha0

    v0_field = make_field(**config.v0)
    v0_lattice = sample_field(torus, v0_field)
    profile0 = DensityProfile.perturbed(torus, alpha0, scaling.epsilon, v0_lattice)
    profile0.require_interior("experiment initial profile")

    # continuum reference on a mesh refining the lattice
    mesh_n = config.burgers_mesh or config.n * max(1, math.ceil(256 / config.n))
    if mesh_n % config.n != 0:
        raise ValueError("burgers_mesh must be a multiple of n")
    mesh = Torus(config.d, mesh_n)
    reference_fine = burgers_solve(
        sample_field(mesh, v0_field),
        mesh,
        diffusivity=[transport.diffusivity[j][j](alpha0) for j in range(config.d)],
        sigma_dd=list(transport.sigma_dd_alpha0),
        drift=list(spec.drift),
        t_end=max(config.snapshot_times),
        snapshot_times=config.snapshot_times,
    )
    reference = Trajectory(
        torus=torus,
        times=reference_fine.times,
        fields=tuple(downsample(f, mesh, torus) for f in reference_fine.fields),
        dt=reference_fine.dt,
    )

    initial = np.stack(
        [sample_product(profile0, seed=config.seed, stream=r) for r in range(config.replicas)]
    )
    sim = simulate_ensemble(spec, initial, torus, scaling, config.snapshot_times, seed=config.seed)

    psi = observable(config.observable, config.d)
    psi_tilde = tilde_poly(psi)
    psi_slope = psi_tilde.deriv()(alpha0)
    theta = np.stack(np.unravel_index(np.arange(torus.size), torus.shape), axis=-1) / torus.n

    stats: list[DefectStatistic] = []
    proxies: list[float] = []
    mean_occ = sim.mean_occupancy()
    for k, t in enumerate(sim.snapshot_times):
        v_t = reference.at(t)
        w_t = DensityProfile(torus, alpha0 + scaling.epsilon * v_t)
        centering_profile = expect_local_field(psi, w_t)
        centering_alpha0 = np.full(torus.size, psi_tilde(alpha0))
        snaps_t = sim.snapshots[:, k, :]
        proxies.append(
            float(sum(bernoulli_kl(p, q) for p, q in zip(mean_occ[k], w_t.values)))
        )
        for h_doc in config.test_functions:
            h_values = np.asarray(make_field(**h_doc)(theta), dtype=np.float64)
            h_label = _h_label(h_doc)
            mean, err, _ = empirical_defect_field(
                snaps_t, psi, torus, h_values, centering_profile, scaling.epsilon
            )
            stats.append(
                DefectStatistic(t, h_label, "profile", mean, err, 0.0, config.replicas)
            )
            mean2, err2, _ = empirical_defect_field(
                snaps_t, psi, torus, h_values, centering_alpha0, scaling.epsilon
            )
            target = psi_slope * float(h_values @ v_t) / torus.size
            stats.append(
                DefectStatistic(t, h_label, "alpha0", mean2, err2, target, config.replicas)
            )

    result = EnsembleResult(
        config=config,
        scaling=scaling,
        alpha0=alpha0,
        statistics=tuple(stats),
        snapshot_times=sim.snapshot_times,
        mean_occupancy=mean_occ,
        reference=reference,
        n_events=int(sim.n_events.sum()),
        entropy_proxies=tuple(proxies),
    )
    if outdir is not None:
        write_result_files(result, Path(outdir), sim.snapshots if config.store_snapshots else None)
    return result


def _h_label(doc: Mapping) -> str:
    name = doc["name"]
    if name == "cos_k":
        return f"cos_{doc.get('k', 1)}"
    if name == "sin_k":
        return f"sin_{doc.get('k', 1)}"
    return str(name)


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------


def write_result_files(result: EnsembleResult, outdir: Path, snapshots: np.ndarray | None) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    config = result.config

    with open(outdir / "defect_stats.csv", "w", newline="") as fh:
        fh.write("t,test_function,centering,mean,stderr,target,replicas\n")
        for s in result.statistics:
            fh.write(
                f"{FLOAT_FMT.format(s.t)},{s.test_function},{s.centering},"
                f"{FLOAT_FMT.format(s.mean)},{FLOAT_FMT.format(s.stderr)},"
                f"{FLOAT_FMT.format(s.target)},{s.replicas}\n"
            )

    with open(outdir / "mean_occupancy.csv", "w", newline="") as fh:
        fh.write("t,site,mean_occupancy\n")
        for k, t in enumerate(result.snapshot_times):
            for site, value in enumerate(result.mean_occupancy[k]):
                fh.write(f"{FLOAT_FMT.format(t)},{site},{FLOAT_FMT.format(value)}\n")

    with open(outdir / "burgers_reference.csv", "w", newline="") as fh:
        fh.write("t,site,value\n")
        for t, field_t in zip(result.reference.times, result.reference.fields):
            for site, value in enumerate(field_t):
                fh.write(f"{FLOAT_FMT.format(t)},{site},{FLOAT_FMT.format(value)}\n")

    if snapshots is not None:
        with open(outdir / "snapshots.csv", "w", newline="") as fh:
            fh.write("replica,t,site,occupancy\n")
            for r in range(snapshots.shape[0]):
                for k, t in enumerate(result.snapshot_times):
                    for site in range(snapshots.shape[2]):
                        fh.write(f"{r},{FLOAT_FMT.format(t)},{site},{int(snapshots[r, k, site])}\n")

    manifest = {
        "config": config.to_doc(),
        "config_sha256": config.digest(),
        "seed": config.seed,
        "alpha0": float(result.alpha0),
        "epsilon": float(result.scaling.epsilon),
        "n_events": result.n_events,
        "versions": {"wasep": __version__, "numpy": np.__version__},
    }
    (outdir / "manifest.yaml").write_text(yaml.safe_dump(manifest, sort_keys=True))


def read_defect_stats(run_dir: Path) -> list[DefectStatistic]:
    rows = []
    with open(Path(run_dir) / "defect_stats.csv") as fh:
        header = fh.readline().strip().split(",")
        for line in fh:
            parts = dict(zip(header, line.strip().split(",")))
            rows.append(
                DefectStatistic(
                    t=float(parts["t"]),
                    test_function=parts["test_function"],
                    centering=parts["centering"],
                    mean=float(parts["mean"]),
                    stderr=float(parts["stderr"]),
                    target=float(parts["target"]),
                    replicas=int(parts["replicas"]),
                )
            )
    return rows


def report_lines(run_dir: Path, sigmas: float = 3.0) -> list[str]:
    stats = read_defect_stats(run_dir)
    out = [f"run {run_dir}: {len(stats)} defect statistics"]
    ok = True
    for s in stats:
        verdict = "ok" if s.within(sigmas) else "OUT-OF-BAND"
        ok &= s.within(sigmas)
        out.append(
            f"  t={s.t:g} H={s.test_function:<8s} {s.centering:<7s} "
            f"mean={s.mean:+.5f} target={s.target:+.5f} stderr={s.stderr:.5f} [{verdict}]"
        )
    out.append("=> " + ("PASS" if ok else "FAIL") + f" at {sigmas:g} standard errors")
    return out
