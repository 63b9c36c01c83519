"""Training orchestration: interleaved sampler updates of generator and
discriminator chains, burn-in and collection schedules, and checkpointing.

The sample sets hold ``chains_g`` generator and ``chains_d`` discriminator
chains.  Each iteration first advances every generator chain by ``M`` sampler
steps against the current discriminator chains, then every discriminator
chain by ``M`` steps against the updated generator chains, keeping the
after-step snapshots so the live sample set always exposes chains x M
parameter vectors per role.  Real minibatches are drawn without replacement
within an epoch; all labeled rows are used every iteration.

In ``map`` mode (single chain, single noise set, M=1, no injected noise) an
iteration degenerates to one alternating gradient-ascent step of the
classical GAN objective.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, FormatError, NumericError, ShapeError, SpecMismatchError
from .net import HIDDEN_ACTIVATIONS, OUTPUT_HEADS, NetworkSpec, ParamVector, init_params
from .posterior import PosteriorConfig, PriorSpec, marginal_grad_disc, marginal_grad_gen
from .rng import substream
from .sghmc import SGHMCConfig, SGHMCState, adam_step, lr_schedule, sghmc_step

MODELS = ("bayes", "map")


@dataclass(frozen=True)
class TrainConfig:
    """Everything one training run needs besides the data itself."""

    gen_spec: NetworkSpec
    disc_spec: NetworkSpec
    posterior: PosteriorConfig
    prior: PriorSpec
    sghmc: SGHMCConfig
    M: int = 2
    total_iters: int = 9000
    collect_every: int = 1000
    mode: str = "bayes"
    chains_g: int | None = None  # default: posterior.J_g
    chains_d: int | None = None  # default: posterior.J_d

    def __post_init__(self):
        if self.mode not in MODELS:
            raise ConfigurationError(f"mode must be one of {MODELS}, got {self.mode!r}")
        if self.M < 1 or self.collect_every < 1 or self.total_iters < 0:
            raise ConfigurationError("M and collect_every must be >= 1, total_iters >= 0")
        if self.gen_spec.out_dim != self.disc_spec.in_dim:
            raise ConfigurationError(
                f"generator output {self.gen_spec.out_dim} != discriminator input {self.disc_spec.in_dim}"
            )
        if self.mode == "map":
            if self.posterior.J_g != 1 or self.posterior.J_d != 1 or self.M != 1:
                raise ConfigurationError("map mode requires J_g = J_d = M = 1")
            if self.sghmc.noise_enabled:
                raise ConfigurationError("map mode requires noise_enabled = off")
            if (self.chains_g or 1) != 1 or (self.chains_d or 1) != 1:
                raise ConfigurationError("map mode runs a single chain per network")
        if self.posterior.mode == "semi_supervised" and self.disc_spec.out_dim != self.posterior.K + 1:
            raise ConfigurationError(
                f"discriminator head {self.disc_spec.out_dim} != K+1 = {self.posterior.K + 1}"
            )

    @property
    def n_chains_g(self) -> int:
        return self.chains_g if self.chains_g is not None else self.posterior.J_g

    @property
    def n_chains_d(self) -> int:
        return self.chains_d if self.chains_d is not None else self.posterior.J_d

    @property
    def seed(self) -> int:
        return self.sghmc.seed


@dataclass
class TrainData:
    """Feature matrix plus the optional fully-used labeled subset."""

    X: np.ndarray
    labeled: tuple | None = None  # (X_s, y_s), labels in 1..K

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=np.float64)
        if self.X.ndim != 2 or self.X.shape[0] < 1:
            raise ShapeError(f"training features must be a non-empty 2-D array, got {self.X.shape}")


@dataclass
class Chain:
    """One sampler chain: live parameters, sampler state, per-step snapshots."""

    params: ParamVector
    state: SGHMCState
    snapshots: list = field(default_factory=list)  # M most recent after-step copies


@dataclass
class SampleSet:
    """Live chains plus the append-only collected history for both roles."""

    gen_chains: list
    disc_chains: list
    collected_gen: list = field(default_factory=list)   # (iteration, ParamVector)
    collected_disc: list = field(default_factory=list)
    iteration: int = 0
    d_seen: int = 0

    @property
    def gen_samples(self):
        """Current chains x M generator sample matrix (flattened row-major)."""
        return [p for c in self.gen_chains for p in c.snapshots]

    @property
    def disc_samples(self):
        return [p for c in self.disc_chains for p in c.snapshots]

    def live_gen(self):
        return [c.params for c in self.gen_chains]

    def live_disc(self):
        return [c.params for c in self.disc_chains]


@dataclass
class MetricRecord:
    """One collection-point measurement row."""

    iteration: int
    jsd_nats: float | None
    test_error: float | None
    n_gen_samples: int
    wallclock_s: float


class TrainingAborted(NumericError):
    """Numeric failure mid-run; carries the partial results."""

    def __init__(self, message, sample_set=None, records=None, iteration=None):
        super().__init__(message)
        self.sample_set = sample_set
        self.records = records or []
        self.iteration = iteration


def init_sample_set(cfg: TrainConfig) -> SampleSet:
    """Fresh chains: prior draws for sampling runs, He init in map mode."""
    seed = cfg.seed
    gen_chains, disc_chains = [], []
    for j in range(cfg.n_chains_g):
        if cfg.mode == "map":
            p = init_params(cfg.gen_spec, init="he", seed=_tag_seed(seed, "init-gen", j))
        else:
            p = init_params(cfg.gen_spec, init="prior", sigma=cfg.prior.sigma_g,
                            seed=_tag_seed(seed, "init-gen", j))
        gen_chains.append(Chain(p, SGHMCState.fresh(p.values.size), [p.copy() for _ in range(cfg.M)]))
    for j in range(cfg.n_chains_d):
        if cfg.mode == "map":
            p = init_params(cfg.disc_spec, init="he", seed=_tag_seed(seed, "init-disc", j))
        else:
            p = init_params(cfg.disc_spec, init="prior", sigma=cfg.prior.sigma_d,
                            seed=_tag_seed(seed, "init-disc", j))
        disc_chains.append(Chain(p, SGHMCState.fresh(p.values.size), [p.copy() for _ in range(cfg.M)]))
    return SampleSet(gen_chains, disc_chains)


def _tag_seed(seed: int, *tags) -> int:
    # per-chain init streams, folded to one integer for init_params
    return int(substream(seed, *tags).integers(0, 2**63 - 1))


def real_batch_indices(seed: int, iteration: int, chain: int, n_d: int,
                       chains_d: int, N: int) -> np.ndarray:
    """Without-replacement minibatch positions for one (iteration, chain).

    Batches walk epoch permutations of 0..N-1 back to back; a batch crossing
    an epoch boundary finishes the old permutation and continues into the
    next.  Pure function of its arguments, so resuming from a checkpoint
    consumes exactly the rows a continuous run would have.
    """
    start = ((iteration - 1) * chains_d + chain) * n_d
    out = np.empty(n_d, dtype=np.int64)
    filled = 0
    while filled < n_d:
        epoch, pos = divmod(start + filled, N)
        perm = substream(seed, "epoch", epoch).permutation(N)
        take = min(n_d - filled, N - pos)
        out[filled:filled + take] = perm[pos:pos + take]
        filled += take
    return out


def datapoints_seen(iteration: int, chains_d: int, n_d: int, N: int) -> int:
    """Distinct real rows consumed strictly before ``iteration``."""
    return min((iteration - 1) * chains_d * n_d, N)


def run_iteration(sample_set: SampleSet, data: TrainData, cfg: TrainConfig) -> SampleSet:
    """Advance every chain by M steps: generator loop first, then discriminator."""
    post = cfg.posterior
    t = sample_set.iteration + 1
    seed = cfg.seed
    d_before = datapoints_seen(t, cfg.n_chains_d, post.n_d, post.N)
    eta = lr_schedule(cfg.sghmc.gamma, d_before, post.N)
    burn_in = t <= cfg.sghmc.burn_in_iters
    zdim = cfg.gen_spec.in_dim

    for j, chain in enumerate(sample_set.gen_chains):
        noise = substream(seed, "gen-noise", t, j).standard_normal((post.J_g, post.n_g, zdim))
        noise_sets = list(noise)
        snapshots = []
        for m in range(cfg.M):
            try:
                grad = marginal_grad_gen(chain.params, noise_sets, sample_set.live_disc(),
                                         cfg.prior, post)
                chain.params, chain.state = _advance(
                    chain.params, chain.state, grad, cfg, eta, burn_in,
                    substream(seed, "gen-kick", t, j, m))
            except NumericError as exc:
                raise NumericError(f"generator chain {j}, iteration {t}: {exc}") from exc
            snapshots.append(chain.params.copy())
        chain.snapshots = snapshots
        chain.state.d_seen = d_before

    for j, chain in enumerate(sample_set.disc_chains):
        noise = substream(seed, "disc-noise", t, j).standard_normal((post.J_d, post.n_g, zdim))
        noise_sets = list(noise)
        rows = real_batch_indices(seed, t, j, post.n_d, cfg.n_chains_d, post.N)
        X = data.X[rows]
        snapshots = []
        for m in range(cfg.M):
            try:
                grad = marginal_grad_disc(chain.params, noise_sets, X, data.labeled,
                                          sample_set.live_gen(), cfg.prior, post)
                chain.params, chain.state = _advance(
                    chain.params, chain.state, grad, cfg, eta, burn_in,
                    substream(seed, "disc-kick", t, j, m))
            except NumericError as exc:
                raise NumericError(f"discriminator chain {j}, iteration {t}: {exc}") from exc
            snapshots.append(chain.params.copy())
        chain.snapshots = snapshots
        chain.state.d_seen = d_before

    sample_set.iteration = t
    sample_set.d_seen = datapoints_seen(t + 1, cfg.n_chains_d, post.n_d, post.N)
    return sample_set


def _advance(params: ParamVector, state: SGHMCState, grad: ParamVector,
             cfg: TrainConfig, eta: float, burn_in: bool, rng):
    if burn_in:
        values, state = adam_step(params.values, state, grad.values, cfg.sghmc)
    else:
        values, state = sghmc_step(params.values, state, grad.values, cfg.sghmc, eta, rng)
    return ParamVector(values, params.spec), state


def train(cfg: TrainConfig, data: TrainData, callbacks=()) -> tuple:
    """Run the full schedule; returns (sample_set, metric records).

    After burn-in, every ``collect_every`` iterations all chains x M current
    parameter vectors of both roles are deep-copied into the collected
    history and each callback is invoked as ``callback(sample_set, iteration)
    -> dict`` contributing ``jsd_nats`` / ``test_error`` fields to the
    iteration's metric record.
    """
    if cfg.posterior.N != data.X.shape[0]:
        raise ConfigurationError(
            f"posterior N={cfg.posterior.N} != dataset size {data.X.shape[0]}")
    sample_set = init_sample_set(cfg)
    records = []
    started = time.perf_counter()
    burn = cfg.sghmc.burn_in_iters
    for t in range(1, cfg.total_iters + 1):
        try:
            run_iteration(sample_set, data, cfg)
        except NumericError as exc:
            raise TrainingAborted(str(exc), sample_set=sample_set, records=records,
                                  iteration=t) from exc
        if t > burn and (t - burn) % cfg.collect_every == 0:
            for p in sample_set.gen_samples:
                sample_set.collected_gen.append((t, p.copy()))
            for p in sample_set.disc_samples:
                sample_set.collected_disc.append((t, p.copy()))
            fields = {}
            for cb in callbacks:
                fields.update(cb(sample_set, t))
            records.append(MetricRecord(
                iteration=t,
                jsd_nats=fields.get("jsd_nats"),
                test_error=fields.get("test_error"),
                n_gen_samples=len(sample_set.collected_gen),
                wallclock_s=time.perf_counter() - started,
            ))
    return sample_set, records


# ---------------------------------------------------------------------------
# checkpoint format: magic "BGAN", little-endian, version 1
# ---------------------------------------------------------------------------

CHECKPOINT_MAGIC = b"BGAN"
CHECKPOINT_VERSION = 1


def _pack_spec(spec: NetworkSpec) -> bytes:
    sizes = spec.layer_sizes
    return struct.pack(f"<I{len(sizes)}IBB", len(sizes), *sizes,
                       HIDDEN_ACTIVATIONS.index(spec.hidden_activation),
                       OUTPUT_HEADS.index(spec.output_head))


def _pack_chain(chain: Chain) -> bytes:
    parts = [struct.pack("<QQ", chain.state.step, chain.state.d_seen)]
    for arr in (chain.params.values, chain.state.v, chain.state.adam_m, chain.state.adam_v):
        parts.append(arr.astype("<f8").tobytes())
    for snap in chain.snapshots:
        parts.append(snap.values.astype("<f8").tobytes())
    return b"".join(parts)


def save_checkpoint(sample_set: SampleSet, cfg: TrainConfig, path):
    """Serialize the full training state; the round trip is bit-exact."""
    M = cfg.M
    blob = [CHECKPOINT_MAGIC, struct.pack("<I", CHECKPOINT_VERSION)]
    blob.append(struct.pack("<B", 1 if cfg.posterior.mode == "semi_supervised" else 0))
    blob.append(_pack_spec(cfg.gen_spec))
    blob.append(_pack_spec(cfg.disc_spec))
    blob.append(struct.pack("<IIIH", len(sample_set.gen_chains), len(sample_set.disc_chains),
                            M, cfg.posterior.K))
    blob.append(struct.pack("<QQQ", sample_set.iteration, sample_set.d_seen, cfg.seed))
    blob.append(struct.pack("<II", len(sample_set.collected_gen), len(sample_set.collected_disc)))
    for chain in sample_set.gen_chains:
        blob.append(_pack_chain(chain))
    for chain in sample_set.disc_chains:
        blob.append(_pack_chain(chain))
    for it, p in sample_set.collected_gen:
        blob.append(struct.pack("<Q", it))
        blob.append(p.values.astype("<f8").tobytes())
    for it, p in sample_set.collected_disc:
        blob.append(struct.pack("<Q", it))
        blob.append(p.values.astype("<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(blob))


@dataclass(frozen=True)
class CheckpointMeta:
    """Identity of a stored run: architecture, chain counts, counters."""

    mode: str
    gen_spec: NetworkSpec
    disc_spec: NetworkSpec
    chains_g: int
    chains_d: int
    M: int
    K: int
    iteration: int
    d_seen: int
    seed: int


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.data):
            raise FormatError(
                f"truncated checkpoint: needed {n} bytes at offset {self.offset}, "
                f"file has {len(self.data)}")
        out = self.data[self.offset:self.offset + n]
        self.offset += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64)


def _read_spec(r: _Reader) -> NetworkSpec:
    (n_layers,) = r.unpack("<I")
    if n_layers < 2 or n_layers > 64:
        raise FormatError(f"implausible layer count {n_layers} at offset {r.offset - 4}")
    sizes = r.unpack(f"<{n_layers}I")
    act, head = r.unpack("<BB")
    if act >= len(HIDDEN_ACTIVATIONS) or head >= len(OUTPUT_HEADS):
        raise FormatError(f"unknown activation/head codes at offset {r.offset - 2}")
    return NetworkSpec(tuple(sizes), HIDDEN_ACTIVATIONS[act], OUTPUT_HEADS[head])


def _read_chain(r: _Reader, spec: NetworkSpec, M: int) -> Chain:
    step, d_seen = r.unpack("<QQ")
    p = spec.param_count()
    params = ParamVector(r.array(p), spec)
    state = SGHMCState(v=r.array(p), step=step, d_seen=d_seen,
                       adam_m=r.array(p), adam_v=r.array(p))
    snapshots = [ParamVector(r.array(p), spec) for _ in range(M)]
    return Chain(params, state, snapshots)


def load_checkpoint(path, expected_gen_spec: NetworkSpec | None = None,
                    expected_disc_spec: NetworkSpec | None = None):
    """Read a checkpoint back; returns (SampleSet, CheckpointMeta).

    Raises FormatError (naming the byte offset) on corruption and
    SpecMismatchError when the stored architecture differs from an expected
    one.  No partial state escapes a failed load.
    """
    with open(path, "rb") as fh:
        r = _Reader(fh.read())
    if r.take(4) != CHECKPOINT_MAGIC:
        raise FormatError("bad magic at offset 0 (not a checkpoint file)")
    (version,) = r.unpack("<I")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version} at offset 4")
    (mode_code,) = r.unpack("<B")
    mode = "semi_supervised" if mode_code else "unsupervised"
    gen_spec = _read_spec(r)
    disc_spec = _read_spec(r)
    for expected, got, role in ((expected_gen_spec, gen_spec, "generator"),
                                (expected_disc_spec, disc_spec, "discriminator")):
        if expected is not None and expected != got:
            raise SpecMismatchError(
                f"checkpoint {role} architecture {got.layer_sizes} does not match "
                f"expected {expected.layer_sizes}")
    chains_g, chains_d, M, K = r.unpack("<IIIH")
    iteration, d_seen, seed = r.unpack("<QQQ")
    n_cgen, n_cdisc = r.unpack("<II")
    gen_chains = [_read_chain(r, gen_spec, M) for _ in range(chains_g)]
    disc_chains = [_read_chain(r, disc_spec, M) for _ in range(chains_d)]
    collected_gen = []
    for _ in range(n_cgen):
        (it,) = r.unpack("<Q")
        collected_gen.append((it, ParamVector(r.array(gen_spec.param_count()), gen_spec)))
    collected_disc = []
    for _ in range(n_cdisc):
        (it,) = r.unpack("<Q")
        collected_disc.append((it, ParamVector(r.array(disc_spec.param_count()), disc_spec)))
    if r.offset != len(r.data):
        raise FormatError(f"{len(r.data) - r.offset} trailing bytes at offset {r.offset}")
    sample_set = SampleSet(gen_chains, disc_chains, collected_gen, collected_disc,
                           iteration=iteration, d_seen=d_seen)
    meta = CheckpointMeta(mode, gen_spec, disc_spec, chains_g, chains_d, M, K,
                          iteration, d_seen, seed)
    return sample_set, meta
