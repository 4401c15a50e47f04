"""Enrollment and matching on top of a single trained network.

Every gallery identity gets a distinct scalar target; one network is trained
to reproduce all of them.  A probe is accepted as the identity whose target
lies nearest the network output, provided the distance is within ``tau``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .mann import MannNetwork, TrainConfig, TrainingTrace, forward, init_network, train
from .raster import Raster, load_raster, resize_bilinear

GALLERY_VERSION = 1
REPORT_VERSION = 1
TARGET_LIMIT = 0.9


@dataclass
class NetConfig:
    in_h: int = 20
    in_w: int = 20
    n: int = 12


@dataclass
class GalleryEntry:
    id: str
    image: np.ndarray
    target: float
    image_path: Optional[str] = None


@dataclass
class Gallery:
    entries: list[GalleryEntry]

    def __post_init__(self):
        ids = [e.id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("gallery ids must be unique")
        targets = [e.target for e in self.entries]
        if len(set(targets)) != len(targets):
            raise ValueError("gallery targets must be pairwise distinct")
        if any(abs(t) > TARGET_LIMIT for t in targets):
            raise ValueError(f"gallery targets must satisfy |target| <= {TARGET_LIMIT}")

    def __len__(self):
        return len(self.entries)

    @property
    def targets(self) -> np.ndarray:
        return np.array([e.target for e in self.entries])

    def training_set(self) -> list[tuple[np.ndarray, float]]:
        return [(e.image, e.target) for e in self.entries]

    def to_json(self) -> str:
        return json.dumps({
            "version": GALLERY_VERSION,
            "entries": [{"id": e.id, "image_path": e.image_path, "target": e.target}
                        for e in self.entries],
        }, indent=2)


def default_tau(targets: Sequence[float]) -> float:
    """Half the smallest gap between adjacent targets (1.0 for a single target)."""
    t = np.sort(np.asarray(targets, dtype=np.float64))
    if t.size < 2:
        return 1.0
    return float(np.min(np.diff(t)) / 2.0)


def assign_targets(ids: Sequence[str]) -> list[float]:
    if len(ids) == 0:
        raise ValueError("need at least one id")
    if len(set(ids)) != len(ids):
        raise ValueError("ids must be unique")
    if len(ids) == 1:
        return [0.0]
    return [float(v) for v in np.linspace(-TARGET_LIMIT, TARGET_LIMIT, len(ids))]


def prepare(r: Raster, net_config: NetConfig) -> np.ndarray:
    return resize_bilinear(r, net_config.in_w, net_config.in_h).data


def enroll(images: Sequence[tuple[str, Raster]], net_config: NetConfig | None = None,
           train_config: TrainConfig | None = None,
           paths: Sequence[str] | None = None) -> tuple[MannNetwork, Gallery, TrainingTrace]:
    """Train a fresh network on the gallery.  Non-convergence is reported via
    ``trace.converged`` rather than raised."""
    net_config = net_config or NetConfig()
    train_config = train_config or TrainConfig()
    ids = [i for i, _ in images]
    targets = assign_targets(ids)
    entries = [GalleryEntry(i, prepare(r, net_config), t, None if paths is None else paths[k])
               for k, ((i, r), t) in enumerate(zip(images, targets))]
    gallery = Gallery(entries)
    net = init_network(net_config.in_h, net_config.in_w, net_config.n,
                       seed=train_config.seed, init_scale=train_config.init_scale)
    trace = train(net, gallery.training_set(), train_config)
    return net, gallery, trace


@dataclass
class MatchDecision:
    accepted: bool
    id: Optional[str]   # nearest identity when accepted, else None
    nearest_id: str
    output: float
    distance: float
    threshold: float

    def to_dict(self) -> dict:
        return {
            "outcome": "accepted" if self.accepted else "rejected",
            "id": self.id,
            "nearest_id": self.nearest_id,
            "output": self.output,
            "distance": self.distance,
            "threshold": self.threshold,
        }


def decide(output: float, ids: Sequence[str], targets: Sequence[float], tau: float) -> MatchDecision:
    """Nearest-target decision; ties go to the lower gallery index."""
    if len(targets) == 0:
        raise ValueError("gallery is empty")
    if not tau > 0:
        raise ValueError("tau must be positive")
    dist = np.abs(output - np.asarray(targets, dtype=np.float64))
    k = int(np.argmin(dist))  # argmin returns the first minimum
    d = float(dist[k])
    ok = d <= tau
    return MatchDecision(ok, ids[k] if ok else None, ids[k], float(output), d, float(tau))


def match(net: MannNetwork, gallery: Gallery, probe: Raster, tau: float | None = None) -> MatchDecision:
    if len(gallery) == 0:
        raise ValueError("gallery is empty")
    targets = gallery.targets
    tau = default_tau(targets) if tau is None else tau
    I = resize_bilinear(probe, net.in_w, net.in_h).data
    return decide(forward(net, I), [e.id for e in gallery.entries], targets, tau)


@dataclass
class EvaluationReport:
    genuine_accept: int
    genuine_total: int
    impostor_reject: int
    impostor_total: int
    threshold: float
    genuine: list[tuple[str, MatchDecision]] = field(default_factory=list)
    impostor: list[MatchDecision] = field(default_factory=list)

    @property
    def genuine_accept_rate(self) -> Optional[float]:
        return self.genuine_accept / self.genuine_total if self.genuine_total else None

    @property
    def impostor_reject_rate(self) -> Optional[float]:
        return self.impostor_reject / self.impostor_total if self.impostor_total else None

    def to_json(self) -> str:
        return json.dumps({
            "version": REPORT_VERSION,
            "threshold": self.threshold,
            "genuine_accept": self.genuine_accept,
            "genuine_total": self.genuine_total,
            "genuine_accept_rate": self.genuine_accept_rate,
            "impostor_reject": self.impostor_reject,
            "impostor_total": self.impostor_total,
            "impostor_reject_rate": self.impostor_reject_rate,
            "genuine": [dict(expected=i, **d.to_dict()) for i, d in self.genuine],
            "impostor": [d.to_dict() for d in self.impostor],
        }, indent=2)

    def table(self) -> str:
        def rate(v):
            return "n/a" if v is None else f"{v:.3f}"
        rows = [
            f"{'probe set':<10} {'correct':>8} {'total':>6} {'rate':>7}",
            f"{'genuine':<10} {self.genuine_accept:>8} {self.genuine_total:>6} {rate(self.genuine_accept_rate):>7}",
            f"{'impostor':<10} {self.impostor_reject:>8} {self.impostor_total:>6} {rate(self.impostor_reject_rate):>7}",
            f"threshold {self.threshold:.6g}",
        ]
        return "\n".join(rows)


def evaluate(net: MannNetwork, gallery: Gallery, trained_probes: Sequence[tuple[str, Raster]],
             impostor_probes: Sequence[Raster], tau: float | None = None) -> EvaluationReport:
    """Genuine probes count when accepted with their own id; impostors count
    when rejected.  Rates for an empty probe set are ``None``."""
    tau = default_tau(gallery.targets) if tau is None else tau
    genuine = [(pid, match(net, gallery, r, tau)) for pid, r in trained_probes]
    impostor = [match(net, gallery, r, tau) for r in impostor_probes]
    return EvaluationReport(
        genuine_accept=sum(d.accepted and d.id == pid for pid, d in genuine),
        genuine_total=len(genuine),
        impostor_reject=sum(not d.accepted for d in impostor),
        impostor_total=len(impostor),
        threshold=tau,
        genuine=genuine,
        impostor=impostor,
    )


def read_manifest(path) -> list[dict]:
    """Entries of a gallery manifest, with ``image_path`` resolved against the
    manifest's directory."""
    path = Path(path)
    doc = json.loads(path.read_text())
    if doc.get("version") != GALLERY_VERSION:
        raise ValueError(f"unsupported gallery manifest version {doc.get('version')!r}")
    out = []
    for e in doc["entries"]:
        unknown = set(e) - {"id", "image_path", "target"}
        if unknown:
            raise ValueError(f"unknown manifest entry keys: {sorted(unknown)}")
        item = dict(e)
        if item.get("image_path") is not None:
            item["resolved"] = path.parent / item["image_path"]
        out.append(item)
    return out


def load_gallery(path, net_config: NetConfig | None = None) -> Gallery:
    """Rebuild a :class:`Gallery` (images resized) from an enrolled manifest."""
    net_config = net_config or NetConfig()
    entries = []
    for e in read_manifest(path):
        if e.get("target") is None:
            raise ValueError(f"entry {e['id']!r} has no target; enroll it first")
        image = prepare(load_raster(e["resolved"]), net_config) if "resolved" in e \
            else np.zeros((net_config.in_h, net_config.in_w))
        entries.append(GalleryEntry(str(e["id"]), image, float(e["target"]), e.get("image_path")))
    return Gallery(entries)
