"""Run orchestration: declarative configs, trial fan-out, reports, ablations.

A run is ``trials`` registrations of one scene pair (file-sourced or synthetic),
each trial deriving its own seeds from the master seed so results are
reproducible yet independent. Reports serialize to JSON (schema shipped with
the package) or CSV rows shaped like the ablation tables.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .cascade import CascadeMode, SceneSnapshot, make_snapshot
from .errors import InvalidInputError, SplatRegError
from .gaussian_model import RigidTransform, bbox_diagonal, identity_field
from .metrics import PoseError, pose_error
from .ply_io import load_ply_gaussians
from .registration import IcpParams, RansacParams, RegistrationReport, register_scenes
from .swc import SwcParams
from .synth import PairSpec, SceneSpec, generate_cloud, make_pair, random_rigid_transform, random_sinusoidal_field

CLUSTER_SWEEP = (0, 5, 10, 15, 20, 25)
CASCADE_SWEEP = (CascadeMode.STATIC_ONLY, CascadeMode.DEFORMED_ONLY, CascadeMode.BOTH)
CSV_HEADER = ("sweep_value", "dR_deg", "dt", "time_s", "keypoints_a", "keypoints_b")
REPORT_SCHEMA_NAME = "splatreg-report-v1"


def derive_seed(master_seed: int, *key: int) -> int:
    """Stable 64-bit sub-seed from the master seed and an index path."""
    ss = np.random.SeedSequence([int(master_seed), *[int(k) for k in key]])
    return int(ss.generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------------------
# declarative synthetic-pair template
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DeformationTemplate:
    """Per-trial deformation recipe; magnitudes are fractions of the cloud diagonal."""

    kind: str = "identity"
    max_displacement_frac: float = 0.0
    opacity_delta_scale: float = 0.0

    def __post_init__(self):
        if self.kind not in ("identity", "sinusoidal"):
            raise InvalidInputError(f"unsupported deformation template kind {self.kind!r}")

    def realize(self, rng: np.random.Generator, diagonal: float):
        if self.kind == "identity":
            return identity_field()
        return random_sinusoidal_field(rng, self.max_displacement_frac * diagonal,
                                       opacity_delta_scale=self.opacity_delta_scale,
                                       spatial_scale=diagonal)


@dataclass(frozen=True)
class PairTemplate:
    """Declarative generator of per-trial :class:`PairSpec` instances."""

    num_gaussians: int = 5000
    geometry: str = "blob_mixture"
    geometry_params: tuple[float, ...] = ()
    opacity_distribution: str = "beta"
    opacity_params: tuple[float, float] = (5.0, 2.0)
    opacity_saliency_coupling: float = 0.0
    overlap_fraction: float = 1.0
    noise_sigma: float = 0.0
    rotation_max_deg: float = 30.0
    translation_max_frac: float = 0.2
    transform_matrix: tuple[float, ...] | None = None
    deformation_a: DeformationTemplate = field(default_factory=DeformationTemplate)
    deformation_b: DeformationTemplate = field(default_factory=DeformationTemplate)
    t_a: float = 0.5
    t_b: float = 0.5

    def realize(self, seed: int) -> PairSpec:
        rng = np.random.default_rng(int(seed))
        scene_seed, pair_seed = (int(s) for s in rng.integers(0, 2**62, size=2))
        base = SceneSpec(
            num_gaussians=self.num_gaussians,
            geometry=self.geometry,
            geometry_params=self.geometry_params,
            opacity_distribution=self.opacity_distribution,
            opacity_params=self.opacity_params,
            opacity_saliency_coupling=self.opacity_saliency_coupling,
            seed=scene_seed,
        )
        diagonal = bbox_diagonal(generate_cloud(base).positions)
        if self.transform_matrix is not None:
            ground_truth = RigidTransform.from_matrix(
                np.asarray(self.transform_matrix, dtype=np.float64).reshape(4, 4))
        else:
            ground_truth = random_rigid_transform(
                rng, self.rotation_max_deg, self.translation_max_frac * diagonal)
        deformation_a = self.deformation_a.realize(rng, diagonal)
        deformation_b = self.deformation_b.realize(rng, diagonal)
        return PairSpec(base=base, ground_truth=ground_truth,
                        overlap_fraction=self.overlap_fraction,
                        noise_sigma=self.noise_sigma,
                        deformation_a=deformation_a, deformation_b=deformation_b,
                        t_a=self.t_a, t_b=self.t_b, seed=pair_seed)


def pair_template_to_dict(template: PairTemplate) -> dict:
    out = asdict(template)
    out["geometry_params"] = list(template.geometry_params)
    out["opacity_params"] = list(template.opacity_params)
    if template.transform_matrix is not None:
        out["transform_matrix"] = list(template.transform_matrix)
    return out


def pair_template_from_dict(data: dict) -> PairTemplate:
    data = dict(data)
    for key in ("deformation_a", "deformation_b"):
        if key in data and isinstance(data[key], dict):
            data[key] = DeformationTemplate(**data[key])
    for key in ("geometry_params", "opacity_params", "transform_matrix"):
        if data.get(key) is not None:
            data[key] = tuple(data[key])
    return PairTemplate(**data)


def load_pair_template(path) -> PairTemplate:
    with open(path, "r", encoding="utf-8") as fh:
        return pair_template_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    """One registration run: scene sources, stage parameters, trial count."""

    scene_a: Path | None = None
    scene_b: Path | None = None
    pair_template: PairTemplate | None = None
    gt_path: Path | None = None
    swc: SwcParams | None = field(default_factory=SwcParams)   # None = clustering bypass
    ransac: RansacParams = field(default_factory=RansacParams)
    icp: IcpParams = field(default_factory=IcpParams)
    cascade_mode: CascadeMode = CascadeMode.BOTH
    bypass_opacity_threshold: float = 0.8
    trials: int = 1
    master_seed: int = 0
    t_a: float = 0.5
    t_b: float = 0.5
    opacity_raw: bool = False
    units_scale: float = 1.0
    output_path: Path | None = None
    output_format: str = "json"

    def __post_init__(self):
        if self.trials < 1:
            raise InvalidInputError("trials must be >= 1")
        file_mode = self.scene_a is not None or self.scene_b is not None
        if file_mode and (self.scene_a is None or self.scene_b is None):
            raise InvalidInputError("file-sourced runs need both scene_a and scene_b")
        if not file_mode and self.pair_template is None:
            raise InvalidInputError("a run needs either two scene files or a pair template")
        if self.output_format not in ("json", "csv"):
            raise InvalidInputError("output_format must be 'json' or 'csv'")


def load_transform_json(path) -> RigidTransform:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    matrix = np.asarray(data["matrix"], dtype=np.float64).reshape(4, 4)
    return RigidTransform.from_matrix(matrix)


def save_transform_json(path, transform: RigidTransform) -> None:
    payload = {"matrix": [float(v) for v in transform.matrix().reshape(-1)]}
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# trial execution
# ---------------------------------------------------------------------------

def _file_snapshots(config: RunConfig) -> tuple[SceneSnapshot, SceneSnapshot]:
    cloud_a = load_ply_gaussians(config.scene_a, opacity_raw=config.opacity_raw)
    cloud_b = load_ply_gaussians(config.scene_b, opacity_raw=config.opacity_raw)
    snap_a = make_snapshot(cloud_a, identity_field(), config.t_a)
    snap_b = make_snapshot(cloud_b, identity_field(), config.t_b)
    return snap_a, snap_b


def run_trial(config: RunConfig, trial: int,
              snapshots: tuple[SceneSnapshot, SceneSnapshot] | None = None
              ) -> tuple[RegistrationReport, PoseError | None]:
    """Execute one trial with seeds derived from (master_seed, trial)."""
    ground_truth: RigidTransform | None = None
    if snapshots is not None:
        snap_a, snap_b = snapshots
    elif config.pair_template is not None:
        spec = config.pair_template.realize(derive_seed(config.master_seed, trial, 0))
        snap_a, snap_b, ground_truth = make_pair(spec)
    else:
        snap_a, snap_b = _file_snapshots(config)
    if ground_truth is None and config.gt_path is not None:
        ground_truth = load_transform_json(config.gt_path)

    swc_params = config.swc
    if swc_params is not None:
        swc_params = replace(swc_params, seed=derive_seed(config.master_seed, trial, 1))
    ransac_params = replace(config.ransac, seed=derive_seed(config.master_seed, trial, 2))

    report = register_scenes(snap_a, snap_b, swc_params, ransac_params, config.icp,
                             mode=config.cascade_mode,
                             bypass_opacity_threshold=config.bypass_opacity_threshold)
    error = pose_error(report.estimate, ground_truth) if ground_truth is not None else None
    return report, error


def _trial_record(trial: int, report: RegistrationReport, error: PoseError | None,
                  units_scale: float) -> dict:
    record = {
        "trial": trial,
        "transform": [float(v) for v in report.estimate.matrix().reshape(-1)],
        "coarse_transform": [float(v) for v in report.coarse_estimate.matrix().reshape(-1)],
        "inlier_count": report.inlier_count,
        "final_rmse": report.final_rmse,
        "keypoints_a": report.keypoints_a,
        "keypoints_b": report.keypoints_b,
        "ransac_converged": report.ransac_converged,
        "timings": {
            "swc_s": report.swc_time,
            "ransac_s": report.ransac_time,
            "icp_s": report.icp_time,
            "total_s": report.total_time,
        },
        "error": None,
    }
    if error is not None:
        record["error"] = {
            "rotation_deg": error.rotation_error_deg,
            "translation": error.translation_error * units_scale,
        }
    return record


def run_registration(config: RunConfig) -> dict:
    """Run all trials; return (and optionally write) the JSON-shaped report."""
    snapshots = _file_snapshots(config) if config.scene_a is not None else None
    records = []
    for trial in range(config.trials):
        report, error = run_trial(config, trial, snapshots=snapshots)
        records.append(_trial_record(trial, report, error, config.units_scale))

    summary = None
    errors = [r["error"] for r in records if r["error"] is not None]
    if errors:
        summary = {
            "mean_rotation_deg": float(np.mean([e["rotation_deg"] for e in errors])),
            "mean_translation": float(np.mean([e["translation"] for e in errors])),
            "timings": {
                "mean_total_s": float(np.mean([r["timings"]["total_s"] for r in records])),
            },
            "count": len(errors),
        }
    result = {"schema": REPORT_SCHEMA_NAME, "trials": records, "summary": summary}
    if config.output_path is not None:
        if config.output_format == "json":
            Path(config.output_path).write_text(report_json(result), encoding="utf-8")
        else:
            Path(config.output_path).write_text(registration_csv(result), encoding="utf-8")
    return result


def report_json(result: dict) -> str:
    return json.dumps(result, indent=2) + "\n"


def _csv_value(value: float) -> str:
    return repr(float(value))


def registration_csv(result: dict) -> str:
    """Per-trial rows in the common CSV shape (sweep_value = trial index)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for record in result["trials"]:
        error = record["error"] or {"rotation_deg": float("nan"), "translation": float("nan")}
        writer.writerow([
            record["trial"],
            _csv_value(error["rotation_deg"]),
            _csv_value(error["translation"]),
            _csv_value(record["timings"]["total_s"]),
            record["keypoints_a"],
            record["keypoints_b"],
        ])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# ablation + bench harnesses
# ---------------------------------------------------------------------------

def _cell_config(config: RunConfig, sweep: str, value) -> RunConfig:
    if sweep == "clusters":
        if value == 0:
            return replace(config, swc=None)
        base = config.swc if config.swc is not None else SwcParams()
        return replace(config, swc=replace(base, num_clusters=int(value)))
    return replace(config, cascade_mode=CascadeMode(value))


def run_ablation(config: RunConfig, sweep: str) -> list[dict]:
    """Sweep cluster counts or cascade modes; one mean row per cell.

    Cells share per-trial seeds (and therefore synthetic pairs), so sweeps are
    paired across cells. A failing cell yields NaN means and the sweep goes on.
    """
    if sweep not in ("clusters", "cascade"):
        raise InvalidInputError("sweep must be 'clusters' or 'cascade'")
    if config.pair_template is None and config.gt_path is None:
        raise InvalidInputError("ablation needs ground truth: synthetic pairs or gt_path")
    values = CLUSTER_SWEEP if sweep == "clusters" else tuple(m.value for m in CASCADE_SWEEP)
    rows = []
    for value in values:
        cell = _cell_config(config, sweep, value)
        try:
            result = run_registration(replace(cell, output_path=None))
            trials = result["trials"]
            rows.append({
                "sweep_value": value,
                "dR_deg": float(np.mean([t["error"]["rotation_deg"] for t in trials])),
                "dt": float(np.mean([t["error"]["translation"] for t in trials])),
                "time_s": float(np.mean([t["timings"]["total_s"] for t in trials])),
                "keypoints_a": float(np.mean([t["keypoints_a"] for t in trials])),
                "keypoints_b": float(np.mean([t["keypoints_b"] for t in trials])),
            })
        except SplatRegError:
            nan = float("nan")
            rows.append({"sweep_value": value, "dR_deg": nan, "dt": nan, "time_s": nan,
                         "keypoints_a": nan, "keypoints_b": nan})
    if config.output_path is not None:
        Path(config.output_path).write_text(ablation_csv(rows), encoding="utf-8")
    return rows


def ablation_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow([row["sweep_value"]] + [_csv_value(row[k]) for k in CSV_HEADER[1:]])
    return buf.getvalue()


def run_bench(config: RunConfig) -> dict:
    """Timing comparison: clustered pipeline vs the clustering bypass."""
    swc_params = config.swc if config.swc is not None else SwcParams()
    outcomes = {}
    for label, cell_swc in (("swc", swc_params), ("bypass", None)):
        cell = replace(config, swc=cell_swc, output_path=None)
        result = run_registration(cell)
        trials = result["trials"]
        outcomes[label] = {
            "mean_total_s": float(np.mean([t["timings"]["total_s"] for t in trials])),
            "mean_ransac_s": float(np.mean([t["timings"]["ransac_s"] for t in trials])),
            "mean_icp_s": float(np.mean([t["timings"]["icp_s"] for t in trials])),
            "mean_keypoints_a": float(np.mean([t["keypoints_a"] for t in trials])),
            "mean_keypoints_b": float(np.mean([t["keypoints_b"] for t in trials])),
            "mean_rotation_deg": (float(np.mean([t["error"]["rotation_deg"] for t in trials]))
                                  if trials[0]["error"] else None),
        }
    outcomes["time_ratio"] = outcomes["swc"]["mean_total_s"] / outcomes["bypass"]["mean_total_s"]
    if config.output_path is not None:
        Path(config.output_path).write_text(json.dumps(outcomes, indent=2) + "\n",
                                            encoding="utf-8")
    return outcomes
