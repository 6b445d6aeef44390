"""Paired (signal, field video [, mask]) cases plus container persistence.

Container layout for a prefix `<name>`:
  <name>.manifest.json   structured-text manifest
  <name>.signals.bin     float32 LE, C-order, (N, l)
  <name>.fields.bin      float32 LE, C-order, (N, T, H, W)
  <name>.masks.bin       float32 LE, C-order, (N, H, W), masked benchmarks only
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import containers
from ..errors import ContainerError, InvalidArgumentError, ShapeMismatchError
from .cavity import solve_cavity
from .signals import InputSignal, sample_control_signal
from .solids import dogbone_mask, synth_masked_stress
from .types import DomainMask, FieldVideo

DATASET_FORMAT = "prior-refine-dataset"
TRAIN_FRACTION = 0.8


@dataclass
class CaseRecord:
    case_id: str
    signal: InputSignal
    field: FieldVideo
    mask: DomainMask | None = None


@dataclass
class Dataset:
    cases: list
    manifest: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.cases:
            raise InvalidArgumentError("dataset needs at least one case")
        shapes = {c.field.shape for c in self.cases}
        lengths = {len(c.signal) for c in self.cases}
        if len(shapes) != 1 or len(lengths) != 1:
            raise InvalidArgumentError("all cases must share (T, H, W) and signal length")
        t, h, w = self.cases[0].field.shape
        defaults = {
            "n_cases": len(self.cases),
            "T": t,
            "H": h,
            "W": w,
            "l": lengths.pop(),
            "field_kind": self.cases[0].field.field_kind,
            "units": self.cases[0].field.units,
            "dt": self.cases[0].field.dt,
            "split_seed": 0,
        }
        for key, val in defaults.items():
            self.manifest.setdefault(key, val)

    def __len__(self):
        return len(self.cases)

    def split(self):
        """(train_indices, test_indices): exact 80-20 under split_seed."""
        n = len(self.cases)
        rng = np.random.default_rng(self.manifest["split_seed"])
        perm = rng.permutation(n)
        n_train = int(round(TRAIN_FRACTION * n))
        return np.sort(perm[:n_train]), np.sort(perm[n_train:])

    def subset(self, indices):
        return [self.cases[int(i)] for i in indices]


def persist_dataset(dataset: Dataset, prefix) -> None:
    n = len(dataset)
    man = dict(dataset.manifest)
    l = man["l"]
    t, h, w = man["T"], man["H"], man["W"]

    signals = np.stack([c.signal.values for c in dataset.cases])
    fields = np.stack([c.field.data for c in dataset.cases])
    arrays = {
        "signals": (signals, (n, l)),
        "fields": (fields, (n, t, h, w)),
    }
    has_masks = dataset.cases[0].mask is not None
    if has_masks:
        masks = np.stack([c.mask.data for c in dataset.cases]).astype(np.float32)
        arrays["masks"] = (masks, (n, h, w))

    blobs = {}
    for name, (arr, shape) in arrays.items():
        if arr.shape != shape:
            raise InvalidArgumentError(f"{name} array shape {arr.shape}, expected {shape}")
        checksum = containers.write_blob(containers.blob_path(prefix, name), [arr])
        blobs[name] = {"shape": list(shape), "dtype": "f32le", "sha256": checksum}

    man["case_ids"] = [c.case_id for c in dataset.cases]
    man["blobs"] = blobs
    containers.write_manifest(containers.manifest_path(prefix), DATASET_FORMAT, man)


def load_dataset(prefix) -> Dataset:
    man = containers.read_manifest(containers.manifest_path(prefix), DATASET_FORMAT)
    blobs = man.get("blobs", {})
    for name in ("signals", "fields"):
        if name not in blobs:
            raise ContainerError(f"manifest lists no {name!r} blob")
    n, t, h, w, l = (man[k] for k in ("n_cases", "T", "H", "W", "l"))

    def read(name, shape):
        entry = blobs[name]
        if list(entry["shape"]) != list(shape):
            raise ShapeMismatchError(
                f"{name} blob declares shape {entry['shape']}, manifest header implies {list(shape)}"
            )
        return containers.read_blob(
            containers.blob_path(prefix, name), [shape], checksum=entry.get("sha256")
        )[0]

    signals = read("signals", (n, l))
    fields = read("fields", (n, t, h, w))
    masks = read("masks", (n, h, w)) if "masks" in blobs else None

    times = np.linspace(0.0, 1.0, l)
    cases = []
    for i in range(n):
        mask = DomainMask(masks[i].astype(np.uint8)) if masks is not None else None
        cases.append(
            CaseRecord(
                case_id=man["case_ids"][i],
                signal=InputSignal(values=signals[i].astype(np.float64), times=times),
                field=FieldVideo(
                    data=fields[i].astype(np.float64),
                    field_kind=man["field_kind"],
                    units=man["units"],
                    dt=man["dt"],
                ),
                mask=mask,
            )
        )
    loaded_man = {k: v for k, v in man.items() if k not in ("format", "version", "blobs")}
    return Dataset(cases=cases, manifest=loaded_man)


def _generate_case(args) -> CaseRecord:
    """One case from a fully explicit payload (picklable for worker pools)."""
    benchmark, i, case_seed, mode_seed, n_control, value_bound, l, grid, frames, reynolds = args
    signal = sample_control_signal(case_seed, n_control, value_bound, l)
    if benchmark == "cavity":
        video = solve_cavity(signal, grid, reynolds, frames)
        video.assert_zero_walls()
        mask = None
    else:
        mask = dogbone_mask(grid, grid)
        video = synth_masked_stress(signal, mask, mode_seed, frames)
    return CaseRecord(case_id=f"{benchmark}-{i:04d}", signal=signal, field=video, mask=mask)


def generate_dataset(
    benchmark: str,
    n_cases: int,
    grid: int,
    frames: int,
    l: int = 101,
    seed: int = 0,
    split_seed: int = 0,
    reynolds: float = 100.0,
    value_bound: float | None = None,
    n_control: int = 6,
    jobs: int = 1,
) -> Dataset:
    """Generate a paired dataset for one of the two benchmark families.

    cavity: lid-velocity signal -> streamfunction video.
    dogbone: displacement signal -> masked synthetic stress video; the mode
    draw is seeded once per dataset so fields are functions of the signal.
    Per-case seeds depend only on (seed, case index), so jobs > 1 changes
    nothing but wall time.
    """
    if benchmark not in ("cavity", "dogbone"):
        raise InvalidArgumentError(f"unknown benchmark {benchmark!r}")
    if n_cases < 2:
        raise InvalidArgumentError("need at least 2 cases")
    if value_bound is None:
        value_bound = 1.0 if benchmark == "cavity" else 0.05  # 5% strain proxy

    root = np.random.SeedSequence(seed)
    case_seeds = [int(s.generate_state(1)[0]) for s in root.spawn(n_cases)]
    mode_seed = int(root.spawn(1)[0].generate_state(1)[0])
    payloads = [
        (benchmark, i, case_seeds[i], mode_seed, n_control, value_bound, l, grid, frames, reynolds)
        for i in range(n_cases)
    ]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cases = list(pool.map(_generate_case, payloads, chunksize=8))
    else:
        cases = [_generate_case(p) for p in payloads]

    manifest = {
        "benchmark": benchmark,
        "split_seed": split_seed,
        "seed": seed,
        "reynolds": reynolds if benchmark == "cavity" else None,
        "value_bound": value_bound,
        "n_control": n_control,
    }
    return Dataset(cases=cases, manifest=manifest)
