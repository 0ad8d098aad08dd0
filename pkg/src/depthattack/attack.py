"""Attack orchestration: configuration, target construction, the evaluator
wiring, and the artifacts an attack run leaves behind."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import moead
from .encoding import Bounds, PerturbationEncoder, Solution, Surface, apply_to_image
from .errors import ConfigError, DepthAttackError, EmptyRegionError, EvaluationError
from .imaging import (
    DepthMap,
    Homography,
    Image,
    RegionMask,
    block_grid,
    depth_to_false_color,
    load_depth_map,
    load_image,
    load_mask,
    resize_mask_nearest,
    save_dmap,
    save_image,
)
from .moead import Archive, ArchiveEntry, MoeadConfig, RunResult
from .objectives import (
    MetricRow,
    TargetSpec,
    depth_error,
    perturbation_norm,
    pseudo_volume,
    reduction_rate,
    write_report_csv,
)
from .oracle import BoxSceneOracle, MeanIntensityOracle, Oracle, PlaneOracle, RemoteOracle

# Queries held back from the search so the report can measure the original
# scene and the selected adversarial example.
REPORT_QUERIES = 2


@dataclass(frozen=True)
class AttackConfig:
    """Everything an attack run needs; exactly one oracle spec is allowed.

    ``oracle`` is {"builtin": name, "params": {...}} or {"url": endpoint};
    ``target_path`` points at a DMAP raster, or ``target_rule`` names a
    construction ("background-fill").  ``eval_region`` decides where f1 is
    summed: the whole frame or only the object mask.
    """

    image_path: str
    mask_path: str
    oracle: dict
    scene: str = "scene"
    target_path: str | None = None
    target_rule: str | None = "background-fill"
    bounds: Bounds = field(default_factory=Bounds)
    search: MoeadConfig = field(default_factory=MoeadConfig)
    eval_region: str = "frame"
    surfaces: tuple[dict, ...] | None = None
    out_dir: str = "attack-out"
    batch: bool = False

    @classmethod
    def from_json(cls, obj: dict, base_dir: str | Path = ".") -> "AttackConfig":
        base = Path(base_dir)
        problems: list[str] = []

        def resolve(p: str | None) -> str | None:
            if p is None:
                return None
            q = Path(p)
            return str(q if q.is_absolute() else base / q)

        target = obj.get("target", {"rule": "background-fill"})
        bounds_obj = obj.get("bounds", {})
        search_obj = obj.get("search", {})
        try:
            bounds = Bounds(**bounds_obj)
        except (TypeError, ValueError) as exc:
            problems.append(f"bounds: {exc}")
            bounds = Bounds()
        try:
            search = MoeadConfig(**search_obj)
        except (TypeError, ValueError) as exc:
            problems.append(f"search: {exc}")
            search = MoeadConfig()
        if problems:
            raise ConfigError(problems)
        return cls(
            image_path=resolve(obj.get("image")),
            mask_path=resolve(obj.get("mask")),
            oracle=obj.get("oracle", {}),
            scene=obj.get("scene", "scene"),
            target_path=resolve(target.get("path")),
            target_rule=target.get("rule") if "path" not in target else None,
            bounds=bounds,
            search=search,
            eval_region=obj.get("eval_region", "frame"),
            surfaces=tuple(obj["surfaces"]) if obj.get("surfaces") else None,
            out_dir=resolve(obj.get("out", "attack-out")),
            batch=bool(obj.get("batch", False)),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "AttackConfig":
        path = Path(path)
        try:
            obj = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError([f"config file {path}: {exc}"]) from exc
        return cls.from_json(obj, base_dir=path.parent)


def validate_config(config: AttackConfig) -> list[str]:
    """Collect every configuration problem; empty list means runnable.

    Runs before any oracle query so a broken config never spends budget.
    """
    problems: list[str] = []
    if not config.image_path:
        problems.append("image path is required")
    elif not Path(config.image_path).is_file():
        problems.append(f"image not found: {config.image_path}")
    if not config.mask_path:
        problems.append("mask path is required")
    elif not Path(config.mask_path).is_file():
        problems.append(f"mask not found: {config.mask_path}")

    oracle_keys = [k for k in ("builtin", "url") if k in config.oracle]
    if len(oracle_keys) != 1:
        problems.append("oracle spec must contain exactly one of 'builtin' or 'url'")
    elif "builtin" in config.oracle and config.oracle["builtin"] not in (
        "plane",
        "box-scene",
        "mean-intensity",
    ):
        problems.append(f"unknown builtin oracle {config.oracle['builtin']!r}")

    if (config.target_path is None) == (config.target_rule is None):
        problems.append("exactly one of target path or target rule must be given")
    if config.target_rule is not None and config.target_rule != "background-fill":
        problems.append(f"unknown target rule {config.target_rule!r}")
    if config.target_path is not None and not Path(config.target_path).is_file():
        problems.append(f"target depth map not found: {config.target_path}")

    if config.eval_region not in ("frame", "object"):
        problems.append(f"eval_region must be 'frame' or 'object', not {config.eval_region!r}")

    budget = config.search.query_budget
    if budget is not None and budget < config.search.population_size + REPORT_QUERIES:
        problems.append(
            f"query budget {budget} cannot cover the initial population plus "
            f"{REPORT_QUERIES} report queries"
        )
    if config.surfaces:
        for i, spec in enumerate(config.surfaces):
            if "matrix" not in spec:
                problems.append(f"surface {i}: missing 'matrix'")
                continue
            m = np.asarray(spec["matrix"], dtype=np.float64)
            if m.shape != (3, 3):
                problems.append(f"surface {i}: matrix must be 3x3")
            elif abs(np.linalg.det(m)) <= 1e-9:
                problems.append(f"surface {i}: matrix is not invertible")
    return problems


def build_oracle(config: AttackConfig, mask: RegionMask) -> Oracle:
    """Instantiate the oracle named by the config.

    Builtins that need the object region receive the attack mask (rescaled
    to their raster if necessary).
    """
    spec = config.oracle
    if "url" in spec:
        return RemoteOracle(
            spec["url"],
            retries=int(spec.get("retries", 2)),
            timeout=float(spec.get("timeout", 30.0)),
        )
    params = dict(spec.get("params", {}))
    name = spec["builtin"]
    if name == "plane":
        return PlaneOracle(
            float(params.get("depth", 1.0)), mask.width, mask.height,
            channels=int(params.get("channels", 1)),
        )
    if name == "box-scene":
        if "background_path" in params:
            background = load_depth_map(params["background_path"])
        else:
            background = DepthMap(
                np.full((mask.height, mask.width), float(params.get("background", 5.0)))
            )
        region = resize_mask_nearest(mask, background.width, background.height)
        return BoxSceneOracle(
            background,
            region,
            object_depth=float(params.get("object_depth", 1.0)),
            sensitivity=float(params.get("sensitivity", 2.0)),
            channels=int(params.get("channels", 1)),
        )
    if name == "mean-intensity":
        return MeanIntensityOracle(
            float(params.get("constant", 2.0)), mask, channels=int(params.get("channels", 1))
        )
    raise ConfigError([f"unknown builtin oracle {name!r}"])


def make_target(depth: DepthMap, mask: RegionMask) -> DepthMap:
    """Background-fill: replace masked depths as if the object were absent.

    Each masked pixel takes the linear interpolation of its nearest
    unmasked row neighbors; rows with no unmasked pixel fall back to
    column interpolation, and pixels isolated both ways take the global
    unmasked mean.  A fully masked frame cannot be filled.
    """
    flags = mask.flags
    if flags.all():
        raise EmptyRegionError("every pixel is masked; nothing to fill from")
    values = depth.values.copy()
    h, w = values.shape
    unfilled_rows = []
    for y in range(h):
        known = ~flags[y]
        if not known.any():
            unfilled_rows.append(y)
            continue
        if known.all():
            continue
        xs = np.arange(w)
        values[y, flags[y]] = np.interp(xs[flags[y]], xs[known], depth.values[y, known])
    if unfilled_rows:
        global_mean = float(depth.values[~flags].mean())
        ys = np.arange(h)
        for x in range(w):
            known = ~flags[:, x]
            column = np.interp(
                ys, ys[known], depth.values[known, x]
            ) if known.any() else np.full(h, global_mean)
            for y in unfilled_rows:
                values[y, x] = column[y]
    return DepthMap(values)


@dataclass
class AttackSetup:
    """Loaded inputs plus the evaluator wiring shared by attack and evaluate."""

    config: AttackConfig
    image: Image
    mask: RegionMask
    oracle: Oracle
    encoder: PerturbationEncoder
    spec: TargetSpec
    original_depth: DepthMap

    def render_field(self, sol: Solution | np.ndarray):
        return self.encoder.render(sol)

    def adversarial_image(self, sol: Solution | np.ndarray) -> Image:
        return apply_to_image(self.image, self.render_field(sol))

    def objectives_of(self, sol: Solution | np.ndarray) -> tuple[float, float]:
        field_ = self.render_field(sol)
        est = self.oracle.estimate(apply_to_image(self.image, field_))
        return depth_error(est, self.spec), perturbation_norm(field_)

    def evaluator(self, genes: np.ndarray) -> tuple[np.ndarray, float]:
        f1, f2 = self.objectives_of(genes)
        return np.array([f1, f2]), self.encoder.violation(genes)

    def batch_evaluator(self, batch: list[np.ndarray]):
        fields = [self.render_field(genes) for genes in batch]
        images = [apply_to_image(self.image, field_) for field_ in fields]
        depths = self.oracle.estimate_batch(images)
        return [
            (np.array([depth_error(d, self.spec), perturbation_norm(field_)]),
             self.encoder.violation(genes))
            for genes, field_, d in zip(batch, fields, depths)
        ]


def prepare(config: AttackConfig) -> AttackSetup:
    """Validate, load inputs, connect the oracle and query the original scene."""
    problems = validate_config(config)
    if problems:
        raise ConfigError(problems)
    image = load_image(config.image_path)
    mask = load_mask(config.mask_path)
    if (mask.width, mask.height) != (image.width, image.height):
        raise ConfigError(
            [f"mask {mask.width}x{mask.height} does not match image {image.width}x{image.height}"]
        )
    if mask.count == 0:
        raise ConfigError(["mask has no set pixels"])

    oracle = build_oracle(config, mask)
    in_w, in_h, in_c = oracle.descriptor.input_dims
    if (image.width, image.height, image.channels) != (in_w, in_h, in_c):
        raise ConfigError(
            [
                f"image {image.width}x{image.height}x{image.channels} does not match "
                f"oracle input {in_w}x{in_h}x{in_c}"
            ]
        )

    out_w, out_h = oracle.descriptor.output_dims
    mask_out = resize_mask_nearest(mask, out_w, out_h)
    original_depth = oracle.estimate(image)

    if config.target_path is not None:
        target = load_depth_map(config.target_path)
        if (target.width, target.height) != (out_w, out_h):
            raise ConfigError(
                [f"target {target.width}x{target.height} does not match oracle output {out_w}x{out_h}"]
            )
    else:
        target = make_target(original_depth, mask_out)

    eval_region = (
        RegionMask(np.ones((out_h, out_w), dtype=bool))
        if config.eval_region == "frame"
        else mask_out
    )
    spec = TargetSpec(target, eval_region, mask_out)

    surfaces = None
    if config.surfaces:
        surfaces = []
        for surf in config.surfaces:
            if "texture_mask" in surf:
                tex_mask = load_mask(surf["texture_mask"])
            else:
                tw = int(surf.get("texture_width", image.width))
                th = int(surf.get("texture_height", image.height))
                tex_mask = RegionMask(np.ones((th, tw), dtype=bool))
            surfaces.append(
                Surface(
                    block_grid(tex_mask, config.bounds.pattern_size),
                    Homography(np.asarray(surf["matrix"], dtype=np.float64)),
                )
            )
    encoder = PerturbationEncoder(config.bounds, mask, surfaces)
    return AttackSetup(config, image, mask, oracle, encoder, spec, original_depth)


def select_knee(archive: Archive) -> ArchiveEntry:
    """The showcased point: minimal f1 among points with f2 at or below the
    archive median; f1 ties resolve to the earliest inserted entry."""
    front = archive.objective_matrix()
    if front.shape[0] == 0:
        raise DepthAttackError("archive is empty; nothing to select")
    median_f2 = float(np.median(front[:, 1]))
    candidates = np.where(front[:, 1] <= median_f2)[0]
    best = candidates[np.argmin(front[candidates, 0])]
    return archive.entries[int(best)]


def select_best_attack(archive: Archive) -> ArchiveEntry:
    """The strongest attack found: the archive point with minimal f1."""
    front = archive.objective_matrix()
    if front.shape[0] == 0:
        raise DepthAttackError("archive is empty; nothing to select")
    return archive.entries[int(np.argmin(front[:, 0]))]


@dataclass
class AttackReport:
    scene: str
    rows: list[MetricRow]
    knee: Solution
    knee_objectives: tuple[float, float]
    best: Solution
    best_objectives: tuple[float, float]
    pareto: np.ndarray
    queries: int
    out_dir: str


def run_attack(config: AttackConfig) -> AttackReport:
    """Run the configured attack end to end and write all artifacts.

    Artifacts: adversarial.png, perturbation.dmap, knee_solution.json,
    depth_original/adversarial as DMAP + false-color PNG, pareto.csv,
    trace.jsonl, report.csv.  An oracle abort mid-search still leaves
    checkpoint.json behind.
    """
    setup = prepare(config)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    search = config.search
    if search.query_budget is not None:
        search = dataclasses.replace(search, query_budget=search.query_budget - REPORT_QUERIES)

    try:
        result: RunResult = moead.run(
            search,
            setup.evaluator,
            setup.encoder.lower,
            setup.encoder.upper,
            batch_evaluator=setup.batch_evaluator if config.batch else None,
        )
    except EvaluationError as exc:
        if exc.partial is not None:
            moead.save_checkpoint(exc.partial, out / "checkpoint.json")
        raise

    knee_entry = select_knee(result.archive)
    best_entry = select_best_attack(result.archive)
    knee = setup.encoder.split(knee_entry.genes)
    best = setup.encoder.split(best_entry.genes)
    knee_field = setup.encoder.render(knee)
    adversarial = apply_to_image(setup.image, knee_field)
    adversarial_depth = setup.oracle.estimate(adversarial)

    v_original = pseudo_volume(setup.original_depth, setup.spec)
    v_adv = pseudo_volume(adversarial_depth, setup.spec)
    row = MetricRow(
        scene=config.scene,
        f1=float(knee_entry.objectives[0]),
        f2=float(knee_entry.objectives[1]),
        v_original=v_original,
        v_adv=v_adv,
        queries=setup.oracle.ledger.total_queries,
    )

    save_image(adversarial, out / "adversarial.png")
    save_dmap(knee_field, out / "perturbation.dmap")
    (out / "knee_solution.json").write_text(json.dumps(knee.to_json()))
    (out / "best_solution.json").write_text(json.dumps(best.to_json()))
    save_dmap(setup.original_depth, out / "depth_original.dmap")
    save_image(depth_to_false_color(setup.original_depth), out / "depth_original.png")
    save_dmap(adversarial_depth, out / "depth_adversarial.dmap")
    save_image(depth_to_false_color(adversarial_depth), out / "depth_adversarial.png")

    pareto = result.archive.objective_matrix()
    order = np.lexsort((pareto[:, 1], pareto[:, 0]))
    pareto = pareto[order]
    with open(out / "pareto.csv", "w") as fh:
        fh.write("f1,f2\n")
        for f1, f2 in pareto:
            fh.write(f"{f1!r},{f2!r}\n")
    result.write_trace(out / "trace.jsonl")
    write_report_csv([row], out / "report.csv")

    return AttackReport(
        scene=config.scene,
        rows=[row],
        knee=knee,
        knee_objectives=(row.f1, row.f2),
        best=best,
        best_objectives=(float(best_entry.objectives[0]), float(best_entry.objectives[1])),
        pareto=pareto,
        queries=setup.oracle.ledger.total_queries,
        out_dir=str(out),
    )


def evaluate_solution(config: AttackConfig, solution_path: str | Path) -> MetricRow:
    """Re-render a stored solution, query the oracle twice and report metrics."""
    setup = prepare(config)
    sol = Solution.from_json(json.loads(Path(solution_path).read_text()))
    field_ = setup.encoder.render(sol)
    adversarial = apply_to_image(setup.image, field_)
    adversarial_depth = setup.oracle.estimate(adversarial)
    return MetricRow(
        scene=config.scene,
        f1=depth_error(adversarial_depth, setup.spec),
        f2=perturbation_norm(field_),
        v_original=pseudo_volume(setup.original_depth, setup.spec),
        v_adv=pseudo_volume(adversarial_depth, setup.spec),
        queries=setup.oracle.ledger.total_queries,
    )


__all__ = [
    "AttackConfig",
    "AttackReport",
    "AttackSetup",
    "build_oracle",
    "evaluate_solution",
    "make_target",
    "prepare",
    "reduction_rate",
    "run_attack",
    "select_best_attack",
    "select_knee",
    "validate_config",
]
