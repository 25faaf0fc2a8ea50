"""Feedforward spiking classifier with phase coding and timing plasticity.

Principal cells (MCs) encode conditioned input values as spike phases within
a discretized gamma cycle; inhibitory interneurons (GCs) integrate weighted
MC spikes in phase order and fire once when their threshold is crossed.
Excitatory MC-to-GC weights adapt under an asymmetric timing rule with
heterogeneous per-synapse caps. Classes are learned strictly online, stored
as GC activation ensembles, and recalled by minimum Hamming distance with an
open-set rejection threshold.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ._validation import as_matrix, as_vector, check_interval

__all__ = [
    "NONE_OF_THE_ABOVE",
    "StdpParams",
    "NetworkConfig",
    "GcEnsemble",
    "Classification",
    "EplNetwork",
]

NONE_OF_THE_ABOVE = -1

_SNAPSHOT_SCHEMA = "eplff-network/1"


@dataclass(frozen=True)
class StdpParams:
    """Constants of the asymmetric spike-timing plasticity rule.

    ``wbar`` sets the scale of the synaptic weight caps: caps are drawn
    uniformly from [0.5*wbar, 1.5*wbar] per synapse when heterogeneity is
    enabled, and equal wbar otherwise.
    """

    a_p: float = 1.0
    a_m: float = 0.5
    tau_p: float = 3.0
    tau_m: float = 3.0
    w_scale: float = 0.1
    wbar: float = 0.25

    def __post_init__(self):
        for name in ("a_p", "a_m", "tau_p", "tau_m", "w_scale", "wbar"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")


@dataclass(frozen=True)
class NetworkConfig:
    """Shape and heterogeneity settings of one network instantiation.

    ``n_inputs`` is the number of principal cells (one per conditioned input
    channel); the interneuron pool is sized from the physical sensor count,
    ``n_sensors * gcs_per_sensor``, independent of input duplication. GC
    spiking thresholds scale with each cell's synaptic capacity:
    ``gc_threshold_range`` holds the (lo, hi) of a relative factor, and the
    instantiated threshold is ``u * wbar * indegree``, so one parameter set
    serves networks of any input dimensionality. With ``heterogeneity`` off,
    every per-neuron and per-synapse parameter range collapses to its
    midpoint; connectivity structure stays random.
    """

    n_inputs: int
    n_sensors: int
    gcs_per_sensor: int = 200
    gamma_steps: int = 20
    mc_threshold_range: tuple[float, float] = (0.03, 1.0)
    gc_threshold_range: tuple[float, float] = (0.02, 0.76)
    connection_density_range: tuple[float, float] = (0.05, 0.35)
    heterogeneity: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_inputs < 1 or self.n_sensors < 1 or self.gcs_per_sensor < 1:
            raise ValueError("n_inputs, n_sensors and gcs_per_sensor must be >= 1")
        if self.gamma_steps < 2:
            raise ValueError("gamma_steps must be >= 2")
        check_interval(self.mc_threshold_range, "mc_threshold_range", allow_equal=True)
        check_interval(self.gc_threshold_range, "gc_threshold_range", lo_gt=0.0, allow_equal=True)
        lo, hi = check_interval(self.connection_density_range, "connection_density_range",
                                lo_gt=0.0, allow_equal=True)
        if hi > 1.0:
            raise ValueError("connection densities must lie in (0, 1]")

    @property
    def n_gcs(self) -> int:
        return self.n_sensors * self.gcs_per_sensor


@dataclass(frozen=True)
class GcEnsemble:
    """Interneuron activation pattern from one gamma cycle."""

    active: np.ndarray
    spike_times: np.ndarray = field(repr=False)

    @property
    def spike_count(self) -> int:
        return int(np.count_nonzero(self.active))


@dataclass(frozen=True)
class Classification:
    """Outcome of a nearest-ensemble lookup."""

    label: int
    distance: int
    margin: int


def _uniform_or_mid(rng, lo, hi, size, heterogeneous):
    if heterogeneous:
        return rng.uniform(lo, hi, size=size)
    return np.full(size, (lo + hi) / 2.0)


class EplNetwork(BaseEstimator):
    """The core learning network: online few-shot, open-set classifier.

    Construct with a :class:`NetworkConfig` and :class:`StdpParams`, then
    call :meth:`initialize` to draw the frozen per-neuron parameters and
    connectivity. A freshly initialized network doubles as the probe used to
    measure recruitment statistics: every connected weight starts at
    ``min(wbar, w_max)``, so recruitment reflects input statistics rather
    than learning history. Training (``learn_class`` / ``partial_fit``) is
    strictly sequential; classification is read-only.
    """

    def __init__(self, config: NetworkConfig, stdp: StdpParams = StdpParams()):
        self.config = config
        self.stdp = stdp

    # ------------------------------------------------------------------
    # instantiation

    def initialize(self) -> "EplNetwork":
        cfg, stdp = self.config, self.stdp
        m, g = cfg.n_inputs, cfg.n_gcs
        rng = np.random.default_rng(cfg.seed)
        het = cfg.heterogeneity
        self.mc_thresholds_ = _uniform_or_mid(rng, *cfg.mc_threshold_range, m, het)
        relative = _uniform_or_mid(rng, *cfg.gc_threshold_range, g, het)
        densities = _uniform_or_mid(rng, *cfg.connection_density_range, g, het)
        self.connectivity_ = rng.random((m, g)) < densities[None, :]
        # Threshold in units of each GC's untrained synaptic capacity; a GC
        # with no connections keeps a positive threshold it can never reach.
        indegree = np.maximum(self.connectivity_.sum(axis=0), 1)
        self.gc_thresholds_ = relative * stdp.wbar * indegree
        if het:
            w_max = rng.uniform(0.5 * stdp.wbar, 1.5 * stdp.wbar, size=(m, g))
        else:
            w_max = np.full((m, g), stdp.wbar)
        self.w_max_ = np.where(self.connectivity_, w_max, 0.0)
        self.weights_ = np.minimum(stdp.wbar, self.w_max_)
        self.ensembles_: dict[int, np.ndarray] = {}
        self.trained_order_: list[int] = []
        t = cfg.gamma_steps
        self._pot_table = np.array([math.exp(-d / stdp.tau_p) for d in range(t)])
        self._dep_table = np.array([math.exp(-d / stdp.tau_m) for d in range(t)])
        return self

    def _check_initialized(self):
        if not hasattr(self, "weights_"):
            raise NotFittedError("network is not initialized; call initialize()")

    # ------------------------------------------------------------------
    # dynamics

    def encode_phases(self, x) -> np.ndarray:
        """Map a conditioned input vector to MC spike phase bins.

        MCs whose input exceeds their threshold (strictly) fire once, at bin
        ``rint((T-1) * (1 - clip(x, 0, 1)))``: stronger input means an
        earlier phase. Silent MCs are marked with -1.
        """
        self._check_initialized()
        x = as_vector(x, length=self.config.n_inputs)
        if (x < 0).any():
            raise ValueError("phase encoding expects non-negative inputs")
        t = self.config.gamma_steps
        bins = np.rint((t - 1) * (1.0 - np.clip(x, 0.0, 1.0))).astype(np.int64)
        return np.where(x > self.mc_thresholds_, bins, -1)

    def gc_forward(self, phases) -> GcEnsemble:
        """Run one gamma cycle, integrating MC spikes in phase order.

        Each GC accumulates the weights of arriving MC spikes and fires once
        at the first bin where its running sum reaches its threshold.
        """
        self._check_initialized()
        phases = np.asarray(phases, dtype=np.int64)
        running = np.zeros(self.config.n_gcs)
        spike_times = np.full(self.config.n_gcs, -1, dtype=np.int64)
        for t in range(self.config.gamma_steps):
            rows = np.nonzero(phases == t)[0]
            if rows.size:
                running = running + self.weights_[rows].sum(axis=0)
                newly = (spike_times < 0) & (running >= self.gc_thresholds_)
                spike_times[newly] = t
        return GcEnsemble(active=spike_times >= 0, spike_times=spike_times)

    def _batch_active(self, X: np.ndarray) -> np.ndarray:
        """Active GC sets for a batch of conditioned samples.

        Weights are non-negative, so a GC's running sum is non-decreasing and
        it fires within the cycle iff its total drive reaches threshold; this
        lets whole batches go through one matrix product. Spike times are not
        produced here, only membership in the active ensemble.
        """
        self._check_initialized()
        spiking = X > self.mc_thresholds_[None, :]
        drive = spiking.astype(np.float64) @ self.weights_
        return drive >= self.gc_thresholds_[None, :]

    def train_sample(self, phases) -> GcEnsemble:
        """Apply one gamma cycle of the timing-dependent weight update.

        For connected pairs where both cells fired with lag ``dt = t_gc -
        t_mc``: potentiate by ``w_scale * a_p * exp(-dt / tau_p)`` when
        ``dt >= 0``, otherwise depress by ``w_scale * a_m * exp(dt / tau_m)``.
        Pairs where only the GC fired are depressed by ``w_scale * a_m``.
        Weights are clamped to [0, w_max]. Returns the cycle's ensemble.
        """
        self._check_initialized()
        phases = np.asarray(phases, dtype=np.int64)
        ens = self.gc_forward(phases)
        gc_spiked = ens.active
        if gc_spiked.any():
            stdp = self.stdp
            mc_spiked = phases >= 0
            both = mc_spiked[:, None] & gc_spiked[None, :] & self.connectivity_
            dt = ens.spike_times[None, :] - phases[:, None]
            dt = np.where(both, dt, 0)
            delta = np.zeros_like(self.weights_)
            pot = both & (dt >= 0)
            dep = both & (dt < 0)
            delta[pot] = (stdp.w_scale * stdp.a_p) * self._pot_table[dt[pot]]
            delta[dep] = -(stdp.w_scale * stdp.a_m) * self._dep_table[-dt[dep]]
            only_gc = (~mc_spiked)[:, None] & gc_spiked[None, :] & self.connectivity_
            delta[only_gc] = -(stdp.w_scale * stdp.a_m)
            self.weights_ = np.clip(self.weights_ + delta, 0.0, self.w_max_)
        return ens

    # ------------------------------------------------------------------
    # learning and readout

    def learn_class(self, X, class_id: int, cycles: int = 5) -> "EplNetwork":
        """Train one class from its shots, then store its GC ensemble.

        Each shot is presented for ``cycles`` gamma cycles in order. The
        stored ensemble marks GCs active in at least half of the shots'
        final forward passes; with one shot it is that shot's ensemble
        verbatim. A class can only be trained once (online contract).
        """
        self._check_initialized()
        class_id = int(class_id)
        if class_id in self.ensembles_:
            raise ValueError(f"class {class_id} already trained; online protocol never revisits")
        if cycles < 1:
            raise ValueError("cycles must be >= 1")
        X = as_matrix(X, n_features=self.config.n_inputs, name="shots")
        for row in X:
            phases = self.encode_phases(row)
            for _ in range(cycles):
                self.train_sample(phases)
        votes = np.zeros(self.config.n_gcs, dtype=np.int64)
        for row in X:
            votes += self.gc_forward(self.encode_phases(row)).active
        self.ensembles_[class_id] = (2 * votes) >= X.shape[0]
        self.trained_order_.append(class_id)
        return self

    def partial_fit(self, X, y, cycles: int = 5) -> "EplNetwork":
        """sklearn-style online fit: X must all belong to one new class."""
        labels = np.unique(np.asarray(y))
        if labels.size != 1:
            raise ValueError("partial_fit trains exactly one class at a time")
        return self.learn_class(X, int(labels[0]), cycles=cycles)

    def _distances(self, active: np.ndarray) -> list[tuple[int, int]]:
        return sorted(
            (int(np.count_nonzero(active != self.ensembles_[cid])), cid)
            for cid in self.trained_order_
        )

    def classify(self, x, threshold_fraction: float = 0.05) -> Classification:
        """Label one conditioned sample by nearest stored ensemble.

        Returns NONE_OF_THE_ABOVE when nothing has been trained or the best
        Hamming distance exceeds ``threshold_fraction`` of the GC count.
        Ties go to the lowest class id.
        """
        self._check_initialized()
        if not self.trained_order_:
            return Classification(label=NONE_OF_THE_ABOVE, distance=0, margin=0)
        active = self.gc_forward(self.encode_phases(x)).active
        ranked = self._distances(active)
        best_d, best_c = ranked[0]
        margin = ranked[1][0] - best_d if len(ranked) > 1 else 0
        label = best_c if best_d <= threshold_fraction * self.config.n_gcs else NONE_OF_THE_ABOVE
        return Classification(label=label, distance=best_d, margin=margin)

    def predict(self, X, threshold_fraction: float = 0.05) -> np.ndarray:
        """Labels for a batch of conditioned samples (-1 = rejected)."""
        self._check_initialized()
        X = as_matrix(X, n_features=self.config.n_inputs)
        out = np.full(X.shape[0], NONE_OF_THE_ABOVE, dtype=np.int64)
        if not self.trained_order_:
            return out
        active = self._batch_active(X)
        class_ids = np.array(sorted(self.trained_order_))
        stored = np.stack([self.ensembles_[cid] for cid in class_ids])
        # Hamming distance of every sample to every stored ensemble; argmin
        # over ensembles sorted by class id breaks ties toward the lowest id.
        dists = (active[:, None, :] != stored[None, :, :]).sum(axis=2)
        best = dists.argmin(axis=1)
        best_d = dists[np.arange(X.shape[0]), best]
        accept = best_d <= threshold_fraction * self.config.n_gcs
        out[accept] = class_ids[best[accept]]
        return out

    def recruitment_counts(self, X) -> np.ndarray:
        """GC spike counts per presented sample (input to the g_p metric)."""
        self._check_initialized()
        X = as_matrix(X, n_features=self.config.n_inputs)
        return self._batch_active(X).sum(axis=1).astype(np.int64)

    # ------------------------------------------------------------------
    # persistence

    def state_digest(self) -> str:
        """Hash of all mutable state; stable iff nothing was trained/changed."""
        self._check_initialized()
        h = hashlib.sha256()
        h.update(self.weights_.tobytes())
        for cid in self.trained_order_:
            h.update(str(cid).encode())
            h.update(np.packbits(self.ensembles_[cid]).tobytes())
        return h.hexdigest()

    def save(self, path) -> None:
        """Write a versioned snapshot (arrays + config) to an .npz file."""
        self._check_initialized()
        classes = np.array(self.trained_order_, dtype=np.int64)
        stored = (np.stack([self.ensembles_[c] for c in self.trained_order_])
                  if self.trained_order_ else np.zeros((0, self.config.n_gcs), dtype=bool))
        cfg = asdict(self.config)
        cfg["mc_threshold_range"] = list(cfg["mc_threshold_range"])
        cfg["gc_threshold_range"] = list(cfg["gc_threshold_range"])
        cfg["connection_density_range"] = list(cfg["connection_density_range"])
        np.savez(
            path,
            schema=_SNAPSHOT_SCHEMA,
            config=json.dumps(cfg, sort_keys=True),
            stdp=json.dumps(asdict(self.stdp), sort_keys=True),
            mc_thresholds=self.mc_thresholds_,
            gc_thresholds=self.gc_thresholds_,
            connectivity=self.connectivity_,
            w_max=self.w_max_,
            weights=self.weights_,
            ensemble_classes=classes,
            ensemble_matrix=stored,
        )

    @classmethod
    def load(cls, path) -> "EplNetwork":
        with np.load(Path(path), allow_pickle=False) as data:
            schema = str(data["schema"])
            if schema != _SNAPSHOT_SCHEMA:
                raise ValueError(f"unsupported network snapshot: {schema!r}")
            cfg_raw = json.loads(str(data["config"]))
            for key in ("mc_threshold_range", "gc_threshold_range", "connection_density_range"):
                cfg_raw[key] = tuple(cfg_raw[key])
            net = cls(NetworkConfig(**cfg_raw), StdpParams(**json.loads(str(data["stdp"]))))
            net.mc_thresholds_ = data["mc_thresholds"]
            net.gc_thresholds_ = data["gc_thresholds"]
            net.connectivity_ = data["connectivity"]
            net.w_max_ = data["w_max"]
            net.weights_ = data["weights"]
            classes = [int(c) for c in data["ensemble_classes"]]
            matrix = data["ensemble_matrix"]
            net.ensembles_ = {c: matrix[i] for i, c in enumerate(classes)}
            net.trained_order_ = classes
        t = net.config.gamma_steps
        net._pot_table = np.array([math.exp(-d / net.stdp.tau_p) for d in range(t)])
        net._dep_table = np.array([math.exp(-d / net.stdp.tau_m) for d in range(t)])
        return net
