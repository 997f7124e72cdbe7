"""Domain types shared by every module: cluster, model profile, cost model.

Times are plain numbers (int/float/Fraction).  The canonical cost mode uses
exact rationals with tf = 1 and tb = 2 so that schedule timings and bubble
ratios can be compared exactly; real-valued seconds work the same way for
cost studies.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from fractions import Fraction
from numbers import Rational

from .errors import ConfigError, InvalidTopology, NonPositiveBandwidth


class ApproachId(str, Enum):
    """Closed set of schedules modeled by this package."""

    GPIPE = "gpipe"
    DAPPLE_1F1B = "dapple-1f1b"
    INTERLEAVED_LOOPING = "interleaved-looping"
    V_SHAPED = "v-shaped"
    CHIMERA = "chimera"
    BITPIPE = "bitpipe"
    BITPIPE_EARLY_FORWARD = "bitpipe-early-forward"

    @classmethod
    def parse(cls, name: str) -> "ApproachId":
        key = name.strip().lower().replace("_", "-")
        aliases = {
            "gpipe": cls.GPIPE,
            "dapple": cls.DAPPLE_1F1B,
            "dapple-1f1b": cls.DAPPLE_1F1B,
            "1f1b": cls.DAPPLE_1F1B,
            "1f1b-int": cls.INTERLEAVED_LOOPING,
            "interleaved": cls.INTERLEAVED_LOOPING,
            "interleaved-looping": cls.INTERLEAVED_LOOPING,
            "v-shaped": cls.V_SHAPED,
            "vshaped": cls.V_SHAPED,
            "chimera": cls.CHIMERA,
            "bitpipe": cls.BITPIPE,
            "bitpipe-early-forward": cls.BITPIPE_EARLY_FORWARD,
            "bitpipe-ef": cls.BITPIPE_EARLY_FORWARD,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ConfigError(f"unknown approach {name!r}") from None


BIDIRECTIONAL_APPROACHES = frozenset(
    {ApproachId.CHIMERA, ApproachId.BITPIPE, ApproachId.BITPIPE_EARLY_FORWARD}
)


@dataclass(frozen=True)
class ClusterSpec:
    """Device counts and interconnect bandwidths of the target cluster.

    ``total_devices = replicated_pipelines * devices_per_pipeline`` must hold
    and ``devices_per_node`` must divide the total.  Bandwidths are bytes per
    second; ``p2p_latency`` is the fixed per-message cost in seconds.
    """

    devices_per_pipeline: int
    replicated_pipelines: int = 1
    total_devices: int | None = None
    devices_per_node: int = 8
    intra_node_bandwidth: float = 200e9
    inter_node_bandwidth: float = 25e9
    p2p_latency: float = 0.0

    def __post_init__(self):
        if self.total_devices is None:
            object.__setattr__(
                self,
                "total_devices",
                self.devices_per_pipeline * self.replicated_pipelines,
            )

    @classmethod
    def from_dict(cls, data: dict) -> "ClusterSpec":
        known = {f: data[f] for f in cls.__dataclass_fields__ if f in data}
        unknown = set(data) - set(known)
        if unknown:
            raise ConfigError(f"unknown cluster keys: {sorted(unknown)}")
        return validate_cluster(cls(**known))


def validate_cluster(cluster: ClusterSpec) -> ClusterSpec:
    """Return the spec unchanged if its invariants hold, else raise."""
    d, w, p = (
        cluster.devices_per_pipeline,
        cluster.replicated_pipelines,
        cluster.total_devices,
    )
    if d < 1 or w < 1 or p < 1:
        raise InvalidTopology(f"device counts must be positive, got D={d} W={w} P={p}")
    if p != w * d:
        raise InvalidTopology(f"total devices {p} != replicas {w} x pipeline depth {d}")
    if cluster.devices_per_node < 1 or p % cluster.devices_per_node != 0:
        raise InvalidTopology(
            f"devices_per_node={cluster.devices_per_node} does not divide P={p}"
        )
    if cluster.intra_node_bandwidth <= 0 or cluster.inter_node_bandwidth <= 0:
        raise NonPositiveBandwidth("bandwidths must be strictly positive")
    if cluster.p2p_latency < 0:
        raise ConfigError("p2p_latency must be >= 0")
    return cluster


@dataclass(frozen=True)
class ModelProfile:
    """Batch geometry and tensor dimensions of the trained model."""

    micro_batch_size: int
    micro_batches: int
    sequence_length: int
    hidden_size: int
    mini_batch_size: int | None = None
    bytes_per_element: int = 2

    def __post_init__(self):
        if min(self.micro_batch_size, self.micro_batches, self.sequence_length,
               self.hidden_size, self.bytes_per_element) < 1:
            raise ConfigError("profile dimensions must be >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> "ModelProfile":
        known = {f: data[f] for f in cls.__dataclass_fields__ if f in data}
        unknown = set(data) - set(known)
        if unknown:
            raise ConfigError(f"unknown model keys: {sorted(unknown)}")
        return cls(**known)

    def validate_against(self, cluster: ClusterSpec) -> "ModelProfile":
        """Check (or derive) the mini-batch size for a given replica count."""
        expect = self.micro_batch_size * self.micro_batches * cluster.replicated_pipelines
        if self.mini_batch_size is None:
            return replace(self, mini_batch_size=expect)
        if self.mini_batch_size != expect:
            raise ConfigError(
                f"mini_batch_size={self.mini_batch_size} != B*N*W={expect}"
            )
        return self


def message_size(profile: ModelProfile) -> int:
    """Bytes moved by one stage-boundary activation/gradient message."""
    return (
        profile.bytes_per_element
        * profile.micro_batch_size
        * profile.sequence_length
        * profile.hidden_size
    )


@dataclass(frozen=True)
class CostModel:
    """Per-stage compute times and memory unit constants.

    ``tf``/``tb`` are the forward/backward times of one micro-batch through
    one full device stage (a device's v chunks each take tf/v, tb/v).
    ``gradient_volume`` defaults to the per-stage weight volume.
    ``p2p_message_bytes`` is the payload of one stage-boundary transfer
    (0 keeps communication free, the canonical mode used by exact tests).
    """

    tf: Rational | float = Fraction(1)
    tb: Rational | float = Fraction(2)
    weights_mem_per_stage: Rational | float = Fraction(1)
    activations_mem_per_microbatch: Rational | float = Fraction(1)
    gradient_volume: Rational | float | None = None
    local_copy_cost: Rational | float = 0
    p2p_message_bytes: Rational | float = 0
    comm_contention: float = 1.0

    def __post_init__(self):
        if self.gradient_volume is None:
            object.__setattr__(self, "gradient_volume", self.weights_mem_per_stage)
        for name in ("tf", "tb", "weights_mem_per_stage",
                     "activations_mem_per_microbatch", "gradient_volume",
                     "local_copy_cost", "p2p_message_bytes"):
            if getattr(self, name) < 0:
                raise ConfigError(f"cost field {name} must be >= 0")
        if self.comm_contention < 1.0:
            raise ConfigError("comm_contention must be >= 1.0")

    @property
    def is_canonical(self) -> bool:
        """True when tb = 2*tf exactly, the mode all Table-style identities assume."""
        return self.tb == 2 * self.tf

    @classmethod
    def canonical(cls, **overrides) -> "CostModel":
        """Exact-rational cost model: tf=1, tb=2, unit memory, free comm."""
        base = dict(
            tf=Fraction(1),
            tb=Fraction(2),
            weights_mem_per_stage=Fraction(1),
            activations_mem_per_microbatch=Fraction(1),
            gradient_volume=Fraction(0),
            local_copy_cost=Fraction(0),
            p2p_message_bytes=0,
        )
        base.update(overrides)
        return cls(**base)

    @classmethod
    def from_dict(cls, data: dict) -> "CostModel":
        known = {f: data[f] for f in cls.__dataclass_fields__ if f in data}
        unknown = set(data) - set(known)
        if unknown:
            raise ConfigError(f"unknown cost keys: {sorted(unknown)}")
        return cls(**known)
