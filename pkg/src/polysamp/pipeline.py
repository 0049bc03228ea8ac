"""End-to-end sampling runs: normalize, size the walk, convert, translate back.

Determinism contract: every run is a pure function of (seed, run index).
Runs are processed in fixed-size chunks; chunk j draws from the Philox
stream keyed (seed, j), and auxiliary consumers (the step-size tuner, the
exact sampler's pilot) use a reserved stream id far above any chunk index.
Output is therefore byte-identical for any worker count, and a worker pool
only changes wall-clock time.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import converter, dikin
from .density import LogDensity, shifted
from .errors import ConfigError
from .geometry import Polytope, normalize
from .oracle import ExactSampler

__all__ = ["CHUNK", "rng_stream", "SamplingResult", "run_sampling"]

CHUNK = 8192
AUX_STREAM = 1 << 62  # tuner/pilot stream; chunk indices stay far below this
MAX_SEED = 2**63


def rng_stream(seed: int, stream: int) -> np.random.Generator:
    """Counter-based generator for (seed, stream); streams never collide."""
    return np.random.Generator(np.random.Philox(key=[seed, stream]))


@dataclass
class SamplingResult:
    """What a sampling run produced, plus everything needed to audit it.

    points are in the caller's original coordinates; tau, fallback and
    oracle_calls align with them row by row.
    """

    points: np.ndarray
    tau: np.ndarray
    fallback: np.ndarray
    oracle_calls: np.ndarray
    params: converter.ConverterParams
    translation: np.ndarray
    polytope: Polytope  # normalized
    density: LogDensity  # shifted to normalized coordinates
    oracle_kind: str
    seed: int
    c_mix: float
    T: int | None = None
    eta: float | None = None
    tune_acceptance: float | None = None

    def __len__(self) -> int:
        return self.points.shape[0]

    def batch(self) -> converter.SampleBatch:
        """Telemetry view in normalized coordinates (for tau_statistics)."""
        return converter.SampleBatch(
            points=self.points - self.translation,
            tau=self.tau,
            fallback=self.fallback,
            oracle_calls=self.oracle_calls,
        )


def run_sampling(
    P: Polytope,
    f: LogDensity,
    eps: float,
    n: int,
    seed: int,
    c_mix: float = 1e-4,
    eta: float | None = None,
    oracle: str = "dikin",
    workers: int = 1,
    chunk: int = CHUNK,
) -> SamplingResult:
    """Draw n samples with infinity-distance target eps.

    Args:
        oracle: "dikin" for the production walk, "exact" for the rejection
            oracle (desk-scale ground truth; ignores c_mix and eta).
        workers: thread count for chunk execution. Any value yields the
            same output; numpy releases the GIL in the heavy kernels, so
            threads give real speedup.
    """
    if n < 1:
        raise ConfigError("sample count must be at least 1")
    if not (0 <= seed < MAX_SEED):
        raise ConfigError(f"seed must be in [0, {MAX_SEED})")
    if workers < 1 or chunk < 1:
        raise ConfigError("workers and chunk size must be positive")

    Pn, translation = normalize(P)
    fn = shifted(f, translation)
    params = converter.compute_params(eps, fn.L, Pn.r, Pn.R, Pn.d)

    T = eta_used = acc = None
    if oracle == "dikin":
        T = dikin.mixing_steps(Pn, fn, eps, params.delta_log, c_mix)
        if eta is None:
            eta_used, acc = dikin.tune_eta(Pn, fn, rng_stream(seed, AUX_STREAM))
        else:
            eta_used = float(eta)
        cfg = dikin.WalkConfig(eta=eta_used, T=T)

        def oracle_batch(k, rng):
            X0 = dikin.warm_start_many(Pn, rng, k)
            X, _ = dikin.run_chains_batch(Pn, fn, cfg, X0, rng)
            return X

    elif oracle == "exact":
        sampler = ExactSampler(Pn, fn, rng_stream(seed, AUX_STREAM))

        def oracle_batch(k, rng):
            return sampler.draw(rng, k)

    else:
        raise ConfigError(f"unknown oracle kind {oracle!r} (expected dikin or exact)")

    points = np.empty((n, Pn.d))
    tau = np.empty(n, dtype=np.int64)
    fallback = np.empty(n, dtype=bool)
    oracle_calls = np.empty(n, dtype=np.int64)

    def do_chunk(j: int):
        start = j * chunk
        k = min(chunk, n - start)
        batch = converter.convert_batch(Pn, oracle_batch, params, rng_stream(seed, j), k)
        sl = slice(start, start + k)
        points[sl] = batch.points
        tau[sl] = batch.tau
        fallback[sl] = batch.fallback
        oracle_calls[sl] = batch.oracle_calls

    n_chunks = (n + chunk - 1) // chunk
    if workers == 1 or n_chunks == 1:
        for j in range(n_chunks):
            do_chunk(j)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(do_chunk, range(n_chunks)))

    return SamplingResult(
        points=points + translation,
        tau=tau,
        fallback=fallback,
        oracle_calls=oracle_calls,
        params=params,
        translation=translation,
        polytope=Pn,
        density=fn,
        oracle_kind=oracle,
        seed=seed,
        c_mix=c_mix,
        T=T,
        eta=eta_used,
        tune_acceptance=acc,
    )
