"""Monte Carlo BER harness: per-point runs, axis sweeps, CSV output.

Every frame is an independent task keyed by (master seed, frame index):
the channel, payload bits, pilot augmentation, and transfer-training
stream are all derived from that pair, and BLAS is pinned to one thread
inside frame tasks, so error counts are identical whether frames run
serially or across a process pool of any size.

The offline network is trained once per operating point and reused for
every frame at that point; transfer learning is re-run per frame from
the frame's own pilots.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
import multiprocessing as mp

import numpy as np
from threadpoolctl import threadpool_limits

from .sysmodel import SystemParams, ConfigError, sample_channel, generate_frame, _PARAM_KEYS
from .features import build_source_dataset, build_target_dataset
from .classical import lrt_context, lrt_statistic, lrt_decide, ed_context, ed_decide
from .cmnet.train import TrainConfig
from .dtl import DetectorModel, offline_learn, transfer_learn, detect_batch
from .rng import substream, derive_seed

__all__ = [
    "DETECTORS",
    "AXES",
    "TrainBudget",
    "SweepSpec",
    "BerPoint",
    "run_point",
    "run_sweep",
    "emit_csv",
    "parse_sweep",
    "load_sweep",
]

DETECTORS = ("lrt", "ed", "cmnet")
AXES = ("snr_db", "zeta_db", "antennas")


@dataclass(frozen=True)
class TrainBudget:
    """Offline/transfer training scale for the cmnet detector."""

    k_s: int = 20000
    k_t: int = 2000
    i_s: int = 30
    i_t: int = 60
    batch_size: int = 128
    learning_rate: float = 1e-3

    def __post_init__(self):
        if self.k_s < 2 or self.k_t < 1:
            raise ConfigError("dataset sizes must be positive")
        if self.i_s < 1 or self.i_t < 1:
            raise ConfigError("epoch counts must be >= 1")


@dataclass(frozen=True)
class SweepSpec:
    """One experiment: sweep an axis, run selected detectors per value."""

    axis: str
    values: tuple
    fixed: SystemParams
    detectors: tuple = DETECTORS
    trials: int = 10000
    budget: TrainBudget = TrainBudget()
    workers: int = 1
    normalize: bool = True

    def __post_init__(self):
        if self.axis not in AXES:
            raise ConfigError(f"axis must be one of {AXES}, got {self.axis!r}")
        if len(self.values) == 0:
            raise ConfigError("sweep needs at least one axis value")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ConfigError("axis values must be strictly increasing")
        if not self.detectors:
            raise ConfigError("detector set must not be empty")
        unknown = set(self.detectors) - set(DETECTORS)
        if unknown:
            raise ConfigError(f"unknown detectors: {sorted(unknown)}")
        if self.trials < 1000:
            raise ConfigError(f"trials must be >= 1000, got {self.trials}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def params_at(self, value) -> SystemParams:
        if self.axis == "antennas":
            return self.fixed.replace(m=int(value))
        return self.fixed.replace(**{self.axis: float(value)})


@dataclass(frozen=True)
class BerPoint:
    """One detector's Monte Carlo measurement at one operating point."""

    detector: str
    axis: str
    axis_value: float
    ber: float
    errors: int
    trials: int
    seed: int
    wallclock: float

    def __post_init__(self):
        if self.trials < 1 or not 0 <= self.errors <= self.trials:
            raise ValueError("inconsistent error/trial counts")

    @property
    def stderr(self) -> float:
        return math.sqrt(self.ber * (1.0 - self.ber) / self.trials)


# Per-frame work: module-level so process pools can pickle it by name.
_CTX = None


def _set_ctx(ctx) -> None:
    global _CTX
    _CTX = ctx
    try:
        import numba

        numba.set_num_threads(1)
    except ImportError:
        pass


def _run_frame(ctx, frame_idx: int) -> dict[str, int]:
    """Generate frame ``frame_idx``, run all selected detectors on its data."""
    params, detectors, budget, seed, normalize, model = ctx
    with threadpool_limits(limits=1):
        rng = substream(seed, "frame", frame_idx)
        chan = sample_channel(params, rng)
        bits = rng.integers(0, 2, size=params.n_data)
        frame = generate_frame(chan, params, bits, rng)
        pilots = frame[: params.p_pilots]
        data = frame[params.p_pilots :]
        truth = np.array([s.label for s in data])
        errors = {}
        if "lrt" in detectors:
            ctx_lrt = lrt_context(chan)
            dec = np.array(
                [lrt_decide(lrt_statistic(s.x, ctx_lrt)) for s in data]
            )
            errors["lrt"] = int((dec != truth).sum())
        if "ed" in detectors:
            ctx_ed = ed_context(chan, params.n_str)
            dec = np.array([ed_decide(s.x, ctx_ed) for s in data])
            errors["ed"] = int((dec != truth).sum())
        if "cmnet" in detectors:
            d_t = build_target_dataset(
                pilots, budget.k_t, substream(seed, "augment", frame_idx),
                normalize=normalize,
            )
            tcfg = TrainConfig(
                epochs=budget.i_t,
                batch_size=budget.batch_size,
                learning_rate=budget.learning_rate,
                freeze_conv=True,
                seed=derive_seed(seed, "transfer", frame_idx),
            )
            transferred = transfer_learn(model, d_t, tcfg)
            x_batch = np.stack([s.x for s in data])
            dec = detect_batch(transferred, x_batch)
            errors["cmnet"] = int((dec != truth).sum())
    return errors


def _frame_task(frame_idx: int) -> dict[str, int]:
    return _run_frame(_CTX, frame_idx)


def train_offline_model(
    params: SystemParams,
    budget: TrainBudget,
    seed: int,
    normalize: bool = True,
) -> DetectorModel:
    """Source dataset plus offline learning for one operating point."""
    d_s = build_source_dataset(
        params, budget.k_s, substream(seed, "source"), normalize=normalize
    )
    config = TrainConfig(
        epochs=budget.i_s,
        batch_size=budget.batch_size,
        learning_rate=budget.learning_rate,
        freeze_conv=False,
        seed=derive_seed(seed, "offline"),
    )
    return offline_learn(d_s, config)


def run_point(
    params: SystemParams,
    detectors=DETECTORS,
    budget: TrainBudget = TrainBudget(),
    trials: int = 10000,
    seed: int | None = None,
    workers: int = 1,
    normalize: bool = True,
    axis: str = "snr_db",
    model: DetectorModel | None = None,
) -> list[BerPoint]:
    """Accumulate >= ``trials`` decided data symbols at one operating point.

    Pilot symbols are never counted.  A pre-trained ``model`` may be
    passed to skip offline learning (it must match ``params`` and
    ``normalize``); otherwise one is trained here when 'cmnet' is on.
    """
    detectors = tuple(detectors)
    unknown = set(detectors) - set(DETECTORS)
    if not detectors or unknown:
        raise ConfigError(f"bad detector selection {detectors}")
    if seed is None:
        seed = params.seed
    t_start = time.perf_counter()
    if "cmnet" in detectors and model is not None:
        if model.arch.m != params.m:
            raise ConfigError(
                f"pretrained model M={model.arch.m} does not match params M={params.m}"
            )
        if model.normalize != normalize:
            raise ConfigError("pretrained model normalization flag mismatch")
    if "cmnet" in detectors and model is None:
        model = train_offline_model(params, budget, seed, normalize)
    ctx = (params, detectors, budget, seed, normalize, model)

    n_frames = math.ceil(trials / params.n_data)
    totals = {det: 0 for det in detectors}
    if workers > 1:
        mp_ctx = mp.get_context("spawn")
        with ProcessPoolExecutor(
            max_workers=workers,
            mp_context=mp_ctx,
            initializer=_set_ctx,
            initargs=(ctx,),
        ) as pool:
            chunk = max(1, n_frames // (workers * 8))
            for errors in pool.map(_frame_task, range(n_frames), chunksize=chunk):
                for det, err in errors.items():
                    totals[det] += err
    else:
        for frame_idx in range(n_frames):
            for det, err in _run_frame(ctx, frame_idx).items():
                totals[det] += err
    decided = n_frames * params.n_data
    elapsed = time.perf_counter() - t_start

    axis_value = getattr(params, "m" if axis == "antennas" else axis)
    return [
        BerPoint(
            detector=det,
            axis=axis,
            axis_value=float(axis_value),
            ber=totals[det] / decided,
            errors=totals[det],
            trials=decided,
            seed=seed,
            wallclock=elapsed,
        )
        for det in detectors
    ]


def run_sweep(spec: SweepSpec) -> list[BerPoint]:
    """Run every axis value; the offline network is retrained per point."""
    points = []
    for value in spec.values:
        params = spec.params_at(value)
        points.extend(
            run_point(
                params,
                detectors=spec.detectors,
                budget=spec.budget,
                trials=spec.trials,
                seed=spec.fixed.seed,
                workers=spec.workers,
                normalize=spec.normalize,
                axis=spec.axis,
            )
        )
    return points


def emit_csv(points, path) -> None:
    """Write points as CSV, ordered by detector then axis value.

    Runtime fields (wallclock) are excluded so re-runs with the same
    seed are byte-identical.
    """
    rows = sorted(points, key=lambda p: (p.detector, p.axis_value))
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("detector,axis,axis_value,ber,errors,trials,stderr,seed\n")
            for p in rows:
                fh.write(
                    f"{p.detector},{p.axis},{p.axis_value:.10g},{p.ber:.10g},"
                    f"{p.errors},{p.trials},{p.stderr:.10g},{p.seed}\n"
                )
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc}") from exc


# --- sweep spec files --------------------------------------------------------

_SWEEP_SCALARS = {
    "trials": int,
    "k_s": int,
    "k_t": int,
    "i_s": int,
    "i_t": int,
    "batch_size": int,
    "learning_rate": float,
    "workers": int,
}


def parse_sweep(text: str) -> SweepSpec:
    """Parse a sweep spec from ``key = value`` lines (see README schema)."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value

    if "axis" not in raw or "values" not in raw:
        raise ConfigError("sweep spec needs 'axis' and 'values'")
    axis = raw.pop("axis")
    try:
        if axis == "antennas":
            values = tuple(int(v) for v in raw.pop("values").split(","))
        else:
            values = tuple(float(v) for v in raw.pop("values").split(","))
    except ValueError as exc:
        raise ConfigError(f"bad values list: {exc}") from exc
    detectors = tuple(
        d.strip() for d in raw.pop("detectors", ",".join(DETECTORS)).split(",") if d.strip()
    )
    normalize = raw.pop("normalize", "true").lower()
    if normalize not in ("true", "false"):
        raise ConfigError("normalize must be true or false")

    scalars = {}
    for key, caster in _SWEEP_SCALARS.items():
        if key in raw:
            try:
                scalars[key] = caster(raw.pop(key))
            except ValueError as exc:
                raise ConfigError(f"bad value for {key!r}") from exc

    param_fields = {}
    for key in _PARAM_KEYS:
        if key in raw:
            caster = _PARAM_KEYS[key]
            try:
                param_fields[key] = caster(raw.pop(key))
            except ValueError as exc:
                raise ConfigError(f"bad value for {key!r}") from exc
    if raw:
        raise ConfigError(f"unknown sweep keys: {sorted(raw)}")
    if axis == "antennas":
        param_fields.setdefault("m", int(values[0]))
    else:
        param_fields.setdefault(axis, float(values[0]))
    try:
        fixed = SystemParams(**param_fields)
    except TypeError as exc:
        raise ConfigError(f"incomplete scenario parameters: {exc}") from exc

    budget = TrainBudget(
        **{
            k: scalars[k]
            for k in ("k_s", "k_t", "i_s", "i_t", "batch_size", "learning_rate")
            if k in scalars
        }
    )
    return SweepSpec(
        axis=axis,
        values=values,
        fixed=fixed,
        detectors=detectors,
        trials=scalars.get("trials", 10000),
        budget=budget,
        workers=scalars.get("workers", 1),
        normalize=normalize == "true",
    )


def load_sweep(path) -> SweepSpec:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read sweep spec {path}: {exc}") from exc
    return parse_sweep(text)
