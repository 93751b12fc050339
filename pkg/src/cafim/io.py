"""File formats, manifests, configuration, and deterministic seeding.

Trajectories are CSV files with the exact header

    t,px,py,pz,qw,qx,qy,qz,vx,vy,vz,wx,wy,wz

one row per step, SI units, floats emitted with 17 significant digits so a
save/load round trip is bit-exact.  Files with only the pose columns
(t..qz) are accepted: linear velocities are reconstructed by central
differences of positions and angular velocities from quaternion logs, with a
warning and a flag on the loaded trajectory.  External pose streams (e.g.
marker/AprilTag block-toss logs) can be imported by renaming columns to this
header; block geometry and mass properties live in the manifest, not in the
per-toss files.

Parameter vectors are flat JSON arrays in the documented ordering
[v1.x, v1.y, v1.z, ..., v8.z, mu].  Manifests, configs, and reports are
strict-schema JSON: unknown keys are rejected and every file carries a
mandatory integer ``version``.

All randomness descends from the single root seed in the experiment config
through named streams: a consumer with stream id S and index i uses
``numpy.random.SeedSequence([root_seed, S, i])``.  Stream ids are the
STREAM_* constants below.
"""

from __future__ import annotations

import json
import os
import tempfile
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import _quat
from .contact_model import NUM_VERTICES, PARAM_DIM, ContactParams
from .design import DesignSettings, TossDistribution
from .dynamics import BlockState, MassProps, SolverSettings, Trajectory, World
from .errors import ConfigError, ValidationError
from .estimate import OptSettings
from .loss import LossSettings, TermWeights

TRAJECTORY_HEADER = "t,px,py,pz,qw,qx,qy,qz,vx,vy,vz,wx,wy,wz"
POSE_ONLY_HEADER = "t,px,py,pz,qw,qx,qy,qz"
FORMAT_VERSION = 1

STREAM_SIMULATE = 1
STREAM_SELECT = 2
STREAM_DESIGN = 3
STREAM_EXPERIMENT = 4


def child_seed(root_seed: int, stream: int, index: int = 0) -> int:
    """Deterministic child seed for a named consumer of the root seed."""
    return int(np.random.SeedSequence([root_seed, stream, index]).generate_state(1)[0])


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _atomic_write(path: Path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_trajectory(traj: Trajectory, path):
    """Write a trajectory CSV; round-trips to full precision."""
    lines = [TRAJECTORY_HEADER]
    for i, s in enumerate(traj.states):
        row = np.concatenate(
            [[i * traj.dt], s.position, s.orientation, s.linear_velocity, s.angular_velocity]
        )
        lines.append(",".join(_fmt(v) for v in row))
    _atomic_write(Path(path), "\n".join(lines) + "\n")


def _reconstruct_velocities(times, positions, quats):
    """Central-difference linear velocity; angular velocity from quaternion logs."""
    n = len(times)
    lin = np.zeros((n, 3))
    ang = np.zeros((n, 3))
    for i in range(n):
        lo, hi = max(0, i - 1), min(n - 1, i + 1)
        span = times[hi] - times[lo]
        lin[i] = (positions[hi] - positions[lo]) / span
        rel = _quat.mul(_quat.conjugate(quats[lo]), quats[hi])
        ang[i] = _quat.log_map(_quat.normalize(rel)) / span
    return lin, ang


def load_trajectory(path, traj_id: str | None = None, v_max: float = 20.0) -> Trajectory:
    """Load a trajectory CSV, reconstructing velocities if absent."""
    path = Path(path)
    text = path.read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValidationError(f"{path}: empty trajectory file")
    header = lines[0].strip()
    pose_only = False
    if header != TRAJECTORY_HEADER:
        if header == POSE_ONLY_HEADER:
            pose_only = True
        else:
            expected = TRAJECTORY_HEADER.split(",")
            got = header.split(",")
            for col, (e, g) in enumerate(zip(expected, got)):
                if e != g:
                    raise ValidationError(
                        f"{path}: header mismatch at column {col}: expected {e!r}, got {g!r}"
                    )
            raise ValidationError(
                f"{path}: header has {len(got)} columns, expected {len(expected)}"
            )

    width = 8 if pose_only else 14
    data = []
    for ln_no, ln in enumerate(lines[1:], start=2):
        parts = ln.split(",")
        if len(parts) != width:
            raise ValidationError(f"{path}:{ln_no}: expected {width} columns, got {len(parts)}")
        data.append([float(p) for p in parts])
    data = np.array(data)
    if data.shape[0] < 2:
        raise ValidationError(f"{path}: a trajectory needs at least two rows")
    if not np.all(np.isfinite(data)):
        raise ValidationError(f"{path}: non-finite values")

    times = data[:, 0]
    steps = np.diff(times)
    dt = float(steps[0])
    if dt <= 0 or np.any(np.abs(steps - dt) > 1e-9):
        raise ValidationError(f"{path}: timestamps are not uniformly spaced")

    positions = data[:, 1:4]
    quats = data[:, 4:8]
    norms = np.linalg.norm(quats, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-6):
        raise ValidationError(f"{path}: quaternions deviate from unit norm beyond 1e-6")

    reconstructed = False
    if pose_only:
        warnings.warn(f"{path}: no velocity columns; reconstructing by finite differences")
        lin, ang = _reconstruct_velocities(times, positions, quats)
        reconstructed = True
    else:
        lin = data[:, 8:11]
        ang = data[:, 11:14]

    states = [
        BlockState(positions[i].copy(), quats[i].copy(), lin[i].copy(), ang[i].copy())
        for i in range(data.shape[0])
    ]
    traj = Trajectory(
        id=traj_id or path.stem,
        dt=dt,
        states=states,
        source="imported",
        velocities_reconstructed=reconstructed,
    )
    traj.validate(v_max=v_max)
    return traj


def save_params(params: ContactParams, path):
    payload = {"version": FORMAT_VERSION, "params": [float(x) for x in params.flatten()]}
    _atomic_write(Path(path), json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_params(path, vertex_bound: float = 0.5) -> ContactParams:
    payload = _load_json(path)
    _require_keys(payload, {"version", "params"}, str(path))
    _check_version(payload, str(path))
    theta = payload["params"]
    if not isinstance(theta, list) or len(theta) != PARAM_DIM:
        raise ValidationError(f"{path}: 'params' must be a flat list of {PARAM_DIM} numbers")
    try:
        return ContactParams.from_flat(np.array(theta, dtype=float), vertex_bound)
    except ValidationError as err:
        raise ValidationError(f"{path}: {err}") from err


@dataclass
class ManifestEntry:
    id: str
    file: str
    dt: float
    T: int
    source: str


@dataclass
class DatasetManifest:
    version: int
    trajectories: list = field(default_factory=list)
    mass: float = 0.37
    inertia: list = field(default_factory=lambda: [0.00062, 0.00062, 0.00062])
    gravity: list = field(default_factory=lambda: [0.0, 0.0, -9.81])
    notes: str = ""

    def world(self) -> World:
        return World(
            mass_props=MassProps(mass=self.mass, inertia=np.array(self.inertia)),
            gravity=np.array(self.gravity),
        )


def save_manifest(manifest: DatasetManifest, path):
    payload = {
        "version": manifest.version,
        "trajectories": [
            {"id": e.id, "file": e.file, "dt": e.dt, "T": e.T, "source": e.source}
            for e in manifest.trajectories
        ],
        "mass_props": {"mass": manifest.mass, "inertia": list(manifest.inertia)},
        "gravity": list(manifest.gravity),
        "notes": manifest.notes,
    }
    _atomic_write(Path(path), json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    payload = _load_json(path)
    _require_keys(payload, {"version", "trajectories", "mass_props", "gravity", "notes"}, str(path))
    _check_version(payload, str(path))
    mass_props = payload["mass_props"]
    _require_keys(mass_props, {"mass", "inertia"}, f"{path}: mass_props")
    entries = []
    seen = set()
    for i, item in enumerate(payload["trajectories"]):
        _require_keys(item, {"id", "file", "dt", "T", "source"}, f"{path}: trajectories[{i}]")
        if item["id"] in seen:
            raise ValidationError(f"{path}: duplicate trajectory id {item['id']!r}")
        seen.add(item["id"])
        entries.append(
            ManifestEntry(
                id=item["id"],
                file=item["file"],
                dt=float(item["dt"]),
                T=int(item["T"]),
                source=item["source"],
            )
        )
    missing = [e.id for e in entries if not (path.parent / e.file).exists()]
    if missing:
        raise ValidationError(f"{path}: missing trajectory files for ids {missing}")
    return DatasetManifest(
        version=payload["version"],
        trajectories=entries,
        mass=float(mass_props["mass"]),
        inertia=[float(x) for x in mass_props["inertia"]],
        gravity=[float(x) for x in payload["gravity"]],
        notes=payload["notes"],
    )


def load_dataset(manifest_path) -> tuple[list[Trajectory], World, DatasetManifest]:
    """Load every trajectory referenced by a manifest."""
    manifest_path = Path(manifest_path)
    manifest = load_manifest(manifest_path)
    trajectories = []
    for entry in manifest.trajectories:
        traj = load_trajectory(manifest_path.parent / entry.file, traj_id=entry.id)
        if abs(traj.dt - entry.dt) > 1e-9 or len(traj) != entry.T:
            raise ValidationError(
                f"{manifest_path}: entry {entry.id!r} disagrees with file "
                f"(dt {traj.dt} vs {entry.dt}, T {len(traj)} vs {entry.T})"
            )
        traj.source = entry.source
        trajectories.append(traj)
    return trajectories, manifest.world(), manifest


def write_dataset(trajectories, world: World, out_dir, notes: str = "") -> Path:
    """Save trajectories plus a manifest into a directory; returns manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for traj in trajectories:
        fname = f"{traj.id}.csv"
        save_trajectory(traj, out_dir / fname)
        entries.append(
            ManifestEntry(id=traj.id, file=fname, dt=traj.dt, T=len(traj), source=traj.source)
        )
    manifest = DatasetManifest(
        version=FORMAT_VERSION,
        trajectories=entries,
        mass=world.mass_props.mass,
        inertia=[float(x) for x in world.mass_props.inertia],
        gravity=[float(x) for x in world.gravity],
        notes=notes,
    )
    path = out_dir / "manifest.json"
    save_manifest(manifest, path)
    return path


# --------------------------------------------------------------------------
# experiment configuration


@dataclass
class SimSettings:
    dt: float = 0.005
    horizon: int = 150
    toss: TossDistribution = field(
        default_factory=lambda: TossDistribution(
            mean=np.array([0, 0, 0.25, 1, 0, 0, 0, 0, 0, -0.5, 0, 0, 0], dtype=float),
            std=np.array(
                [0.05, 0.05, 0.08, 0.2, 0.2, 0.2, 0.2, 0.4, 0.4, 0.5, 3.0, 3.0, 3.0]
            ),
        )
    )


@dataclass
class ExperimentConfig:
    version: int = FORMAT_VERSION
    seed: int = 0
    world: World = field(
        default_factory=lambda: World(MassProps.cuboid(0.37, (0.05, 0.05, 0.05)))
    )
    params: ContactParams = field(
        default_factory=lambda: ContactParams.cuboid((0.05, 0.05, 0.05), mu=0.3)
    )
    sim: SimSettings = field(default_factory=SimSettings)
    solver: SolverSettings = field(default_factory=SolverSettings)
    loss: LossSettings = field(default_factory=LossSettings)
    fit: OptSettings = field(default_factory=OptSettings)
    design: DesignSettings = field(default_factory=DesignSettings)
    reduction: str = "trace"
    k_thresh: int = 16

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "seed": self.seed,
            "world": {
                "mass": self.world.mass_props.mass,
                "inertia": [float(x) for x in self.world.mass_props.inertia],
                "gravity": [float(x) for x in self.world.gravity],
            },
            "params": {
                "vertices": [[float(v) for v in row] for row in self.params.vertices],
                "mu": self.params.mu,
            },
            "sim": {
                "dt": self.sim.dt,
                "horizon": self.sim.horizon,
                "toss_mean": [float(x) for x in self.sim.toss.mean],
                "toss_std": [float(x) for x in self.sim.toss.std],
            },
            "solver": {
                "max_iterations": self.solver.max_iterations,
                "tolerance": self.solver.tolerance,
                "activation_margin": self.solver.activation_margin,
                "stabilization": self.solver.stabilization,
            },
            "loss": {
                "weights": {
                    "prediction": self.loss.weights.prediction,
                    "complementarity": self.loss.weights.complementarity,
                    "penetration": self.loss.weights.penetration,
                    "dissipation": self.loss.weights.dissipation,
                },
                "inner_iterations": self.loss.inner_iterations,
                "inner_tolerance": self.loss.inner_tolerance,
                "include_mu_grad": self.loss.include_mu_grad,
            },
            "fit": {
                "step_size": self.fit.step_size,
                "momentum": self.fit.momentum,
                "epochs": self.fit.epochs,
                "rank_refresh": self.fit.rank_refresh,
                "learn_mu": self.fit.learn_mu,
                "divergence_limit": self.fit.divergence_limit,
                "vertex_bound": self.fit.vertex_bound,
            },
            "design": {
                "n_candidates": self.design.n_candidates,
                "horizon": self.design.horizon,
                "dt": self.design.dt,
                "phi_kind": self.design.phi_kind,
                "cem_rounds": self.design.cem_rounds,
                "cem_top_frac": self.design.cem_top_frac,
                "refit_between": self.design.refit_between,
            },
            "reduction": self.reduction,
            "k_thresh": self.k_thresh,
        }


def _load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as err:
        raise ValidationError(f"{path}: invalid JSON: {err}") from err


def _require_keys(obj, expected: set, where: str):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = set(obj) - expected
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    missing = expected - set(obj)
    if missing:
        raise ConfigError(f"{where}: missing keys {sorted(missing)}")


def _check_version(payload: dict, where: str):
    if payload.get("version") != FORMAT_VERSION:
        raise ConfigError(f"{where}: unsupported or missing version (expected {FORMAT_VERSION})")


def _number(obj, key, where, low=None, high=None, integral=False):
    if key not in obj:
        raise ConfigError(f"{where}.{key}: missing")
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{where}.{key}: expected a number, got {type(val).__name__}")
    if integral and int(val) != val:
        raise ConfigError(f"{where}.{key}: expected an integer")
    if low is not None and val < low:
        raise ConfigError(f"{where}.{key}: must be >= {low}")
    if high is not None and val > high:
        raise ConfigError(f"{where}.{key}: must be <= {high}")
    return int(val) if integral else float(val)


def load_config(path) -> ExperimentConfig:
    """Parse and strictly validate an experiment config file."""
    where = str(path)
    payload = _load_json(path)
    top = {
        "version",
        "seed",
        "world",
        "params",
        "sim",
        "solver",
        "loss",
        "fit",
        "design",
        "reduction",
        "k_thresh",
    }
    _require_keys(payload, top, where)
    _check_version(payload, where)

    w = payload["world"]
    _require_keys(w, {"mass", "inertia", "gravity"}, f"{where}.world")
    world = World(
        mass_props=MassProps(
            mass=_number(w, "mass", f"{where}.world", low=1e-9),
            inertia=np.array(w["inertia"], dtype=float),
        ),
        gravity=np.array(w["gravity"], dtype=float),
    )

    p = payload["params"]
    _require_keys(p, {"vertices", "mu"}, f"{where}.params")
    fit_section = payload["fit"]
    _require_keys(
        fit_section,
        {
            "step_size",
            "momentum",
            "epochs",
            "rank_refresh",
            "learn_mu",
            "divergence_limit",
            "vertex_bound",
        },
        f"{where}.fit",
    )
    vertex_bound = _number(fit_section, "vertex_bound", f"{where}.fit", low=1e-6)
    try:
        params = ContactParams(
            vertices=np.array(p["vertices"], dtype=float),
            mu=_number(p, "mu", f"{where}.params", low=0.0),
            vertex_bound=vertex_bound,
        )
    except ValidationError as err:
        raise ConfigError(f"{where}.params: {err}") from err

    s = payload["sim"]
    _require_keys(s, {"dt", "horizon", "toss_mean", "toss_std"}, f"{where}.sim")
    sim = SimSettings(
        dt=_number(s, "dt", f"{where}.sim", low=1e-9),
        horizon=_number(s, "horizon", f"{where}.sim", low=2, integral=True),
        toss=TossDistribution(
            mean=np.array(s["toss_mean"], dtype=float), std=np.array(s["toss_std"], dtype=float)
        ),
    )

    sv = payload["solver"]
    _require_keys(
        sv, {"max_iterations", "tolerance", "activation_margin", "stabilization"}, f"{where}.solver"
    )
    solver = SolverSettings(
        max_iterations=_number(sv, "max_iterations", f"{where}.solver", low=1, integral=True),
        tolerance=_number(sv, "tolerance", f"{where}.solver", low=0.0),
        activation_margin=_number(sv, "activation_margin", f"{where}.solver", low=0.0),
        stabilization=_number(sv, "stabilization", f"{where}.solver", low=1e-9, high=1.0),
    )

    lo = payload["loss"]
    _require_keys(
        lo, {"weights", "inner_iterations", "inner_tolerance", "include_mu_grad"}, f"{where}.loss"
    )
    wts = lo["weights"]
    _require_keys(
        wts, {"prediction", "complementarity", "penetration", "dissipation"}, f"{where}.loss.weights"
    )
    loss_settings = LossSettings(
        weights=TermWeights(
            prediction=_number(wts, "prediction", f"{where}.loss.weights", low=0.0),
            complementarity=_number(wts, "complementarity", f"{where}.loss.weights", low=0.0),
            penetration=_number(wts, "penetration", f"{where}.loss.weights", low=0.0),
            dissipation=_number(wts, "dissipation", f"{where}.loss.weights", low=0.0),
        ),
        inner_iterations=_number(lo, "inner_iterations", f"{where}.loss", low=1, integral=True),
        inner_tolerance=_number(lo, "inner_tolerance", f"{where}.loss", low=0.0),
        include_mu_grad=_bool(lo, "include_mu_grad", f"{where}.loss"),
    )

    fit_settings = OptSettings(
        step_size=_number(fit_section, "step_size", f"{where}.fit", low=0.0),
        momentum=_number(fit_section, "momentum", f"{where}.fit", low=0.0, high=0.999),
        epochs=_number(fit_section, "epochs", f"{where}.fit", low=1, integral=True),
        rank_refresh=_number(fit_section, "rank_refresh", f"{where}.fit", low=0, integral=True),
        learn_mu=_bool(fit_section, "learn_mu", f"{where}.fit"),
        divergence_limit=_number(fit_section, "divergence_limit", f"{where}.fit", low=1.0),
        vertex_bound=vertex_bound,
    )

    d = payload["design"]
    _require_keys(
        d,
        {"n_candidates", "horizon", "dt", "phi_kind", "cem_rounds", "cem_top_frac", "refit_between"},
        f"{where}.design",
    )
    if d["phi_kind"] not in ("trace", "logdet", "mineig", "det"):
        raise ConfigError(f"{where}.design.phi_kind: unknown reduction {d['phi_kind']!r}")
    design = DesignSettings(
        n_candidates=_number(d, "n_candidates", f"{where}.design", low=1, integral=True),
        horizon=_number(d, "horizon", f"{where}.design", low=2, integral=True),
        dt=_number(d, "dt", f"{where}.design", low=1e-9),
        phi_kind=d["phi_kind"],
        cem_rounds=_number(d, "cem_rounds", f"{where}.design", low=0, integral=True),
        cem_top_frac=_number(d, "cem_top_frac", f"{where}.design", low=1e-9, high=1.0),
        refit_between=_bool(d, "refit_between", f"{where}.design"),
    )

    if payload["reduction"] not in ("trace", "logdet", "mineig", "det"):
        raise ConfigError(f"{where}.reduction: unknown reduction {payload['reduction']!r}")

    return ExperimentConfig(
        version=payload["version"],
        seed=_number(payload, "seed", where, integral=True),
        world=world,
        params=params,
        sim=sim,
        solver=solver,
        loss=loss_settings,
        fit=fit_settings,
        design=design,
        reduction=payload["reduction"],
        k_thresh=_number(payload, "k_thresh", where, low=1, integral=True),
    )


def _bool(obj, key, where) -> bool:
    if key not in obj:
        raise ConfigError(f"{where}.{key}: missing")
    if not isinstance(obj[key], bool):
        raise ConfigError(f"{where}.{key}: expected a boolean")
    return obj[key]


def save_config(config: ExperimentConfig, path):
    _atomic_write(Path(path), json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")


def write_report(path, command: str, config: ExperimentConfig | dict, results: dict) -> dict:
    """Write a timestamped report JSON embedding the full resolved config."""
    payload = {
        "version": FORMAT_VERSION,
        "command": command,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "config": config.to_dict() if isinstance(config, ExperimentConfig) else config,
        "results": results,
    }
    _atomic_write(Path(path), json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return payload


def load_report(path) -> dict:
    payload = _load_json(path)
    _require_keys(payload, {"version", "command", "timestamp", "config", "results"}, str(path))
    _check_version(payload, str(path))
    return payload


def write_csv(path, header: list[str], rows: list[list]):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) if isinstance(v, float) else str(v) for v in row))
    _atomic_write(Path(path), "\n".join(lines) + "\n")
