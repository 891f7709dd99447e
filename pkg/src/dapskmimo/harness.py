"""Monte-Carlo campaigns: block simulation, BER/SER/SE metrics, CSV and SVG.

A block is one frame of ``n_uses`` channel uses through a fresh fading
realization.  Differential modes spend the first use on an uncounted
reference symbol; the coherent mode spends the pilot fraction on known
symbols.  Per-block random streams are derived from (seed, snr index, block
index), so sweeps are reproducible and blocks are order-independent.
"""

import math
from dataclasses import dataclass

import numpy as np

from .baseline import coherent_constellation, coherent_detect_block, estimate_taps, make_pilot_plan
from .channel import (
    ChannelConfig,
    adjacent_use_ratio,
    apply_channel,
    exponential_pdp,
    gen_channel,
    tap_gains,
    uniform_pdp,
)
from .detect import (
    EnergyDetectorParams,
    energy_statistic_block,
    hypothesis_rho_table,
    lrt_amplitude_block,
    ml_detect_block,
    vql_phase_detect_block,
)
from .modem import ConstellationSpec, dapsk_encode
from .neural import MlpModel, amplitude_features, load_model, predict_amplitude_bit
from .quantize import (
    bussgang_params,
    estimation_params,
    sign_quantize,
    vql_quantize,
    vql_quantizer,
)

__all__ = [
    "MODES",
    "CSV_HEADER",
    "SimConfig",
    "BlockTally",
    "MetricsRecord",
    "block_rng",
    "run_block",
    "spectral_efficiency",
    "sweep",
    "emit_csv",
    "read_csv",
    "emit_svg",
    "load_config",
]

MODES = (
    "differential-onebit",
    "differential-vql-nn",
    "differential-vql-lrt",
    "coherent",
)

CSV_HEADER = "mode,snr_db,U,mod_order,blocks,ber,amp_ber,phase_ber,ser,se"


@dataclass(frozen=True)
class SimConfig:
    """One simulation campaign.

    ``mod_order`` is the total constellation size 2M; the SNR grid is in dB
    and must be strictly increasing; ``group_sizes`` must partition the
    antennas (used by the VQL modes).
    """

    n_uses: int = 256
    n_antennas: int = 96
    group_sizes: tuple[int, int, int] = (32, 32, 32)
    n_taps: int = 31
    mod_order: int = 16
    ring_ratio: float = 2.0
    snr_grid_db: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0)
    blocks_per_point: int = 50
    seed: int = 1
    mode: str = "differential-vql-nn"
    ser_threshold: float = 0.05
    pilot_fraction: float = 0.5
    pdp: str = "uniform"
    coherent_points: str = "psk"
    model_path: str | None = None

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.n_uses < 2:
            raise ValueError("need at least two channel uses per block")
        if not 1 <= self.n_taps <= self.n_uses:
            raise ValueError(f"need 1 <= n_taps <= n_uses, got {self.n_taps}")
        if self.mod_order < 4 or (self.mod_order & (self.mod_order - 1)) != 0:
            raise ValueError(f"mod_order must be a power of two >= 4, got {self.mod_order}")
        if sum(self.group_sizes) != self.n_antennas:
            raise ValueError(
                f"group sizes {self.group_sizes} must sum to {self.n_antennas} antennas"
            )
        grid = tuple(float(s) for s in self.snr_grid_db)
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("snr_grid_db must be strictly increasing")
        object.__setattr__(self, "snr_grid_db", grid)
        if self.blocks_per_point < 0:
            raise ValueError("blocks_per_point must be nonnegative")
        if not 0.0 < self.pilot_fraction < 1.0:
            raise ValueError("pilot_fraction must be in (0, 1)")
        if not 0.0 <= self.ser_threshold <= 1.0:
            raise ValueError("ser_threshold must be in [0, 1]")
        if self.pdp not in ("uniform", "exponential"):
            raise ValueError(f"pdp must be 'uniform' or 'exponential', got {self.pdp!r}")
        if self.coherent_points not in ("psk", "dapsk"):
            raise ValueError("coherent_points must be 'psk' or 'dapsk'")

    @property
    def M(self) -> int:
        return self.mod_order // 2

    @property
    def n_bits(self) -> int:
        return self.mod_order.bit_length() - 1

    def constellation(self) -> ConstellationSpec:
        return ConstellationSpec(M=self.M, ring_ratio=self.ring_ratio)

    def pdp_array(self) -> np.ndarray:
        if self.pdp == "uniform":
            return uniform_pdp(self.n_taps)
        return exponential_pdp(self.n_taps)

    def data_fraction(self) -> float:
        if self.mode == "coherent":
            return (self.n_uses - math.ceil(self.pilot_fraction * self.n_uses)) / self.n_uses
        return 1.0

    def mean_rotation(self) -> complex:
        """Unit phasor of the known mean adjacent-use gain rotation."""
        ratio = adjacent_use_ratio(self.pdp_array(), self.n_uses)
        return ratio / abs(ratio)


@dataclass
class BlockTally:
    """Error counts of one or more simulated blocks."""

    n_symbols: int = 0
    amp_bits: int = 0
    phase_bits: int = 0
    amp_bit_errors: int = 0
    phase_bit_errors: int = 0
    symbol_errors: int = 0

    @property
    def n_bits(self) -> int:
        return self.amp_bits + self.phase_bits

    @property
    def bit_errors(self) -> int:
        return self.amp_bit_errors + self.phase_bit_errors

    def add(self, other: "BlockTally") -> None:
        self.n_symbols += other.n_symbols
        self.amp_bits += other.amp_bits
        self.phase_bits += other.phase_bits
        self.amp_bit_errors += other.amp_bit_errors
        self.phase_bit_errors += other.phase_bit_errors
        self.symbol_errors += other.symbol_errors


@dataclass
class MetricsRecord:
    mode: str
    snr_db: float
    n_antennas: int
    mod_order: int
    blocks: int
    ber: float
    amp_ber: float
    phase_ber: float
    ser: float
    se: float


def block_rng(seed: int, snr_index: int, block_index: int) -> np.random.Generator:
    """Independent per-block stream; results do not depend on run order."""
    return np.random.default_rng(np.random.SeedSequence([seed, snr_index, block_index]))


def _gray_encode_arr(n: np.ndarray) -> np.ndarray:
    return n ^ (n >> 1)


def _gray_decode_arr(g: np.ndarray, n_bits: int) -> np.ndarray:
    m = g.copy()
    shift = 1
    while shift < n_bits:
        m ^= m >> shift
        shift *= 2
    return m


def _popcount(x: np.ndarray, n_bits: int) -> np.ndarray:
    total = np.zeros_like(x)
    for i in range(n_bits):
        total += (x >> i) & 1
    return total


def _run_differential_block(
    cfg: SimConfig,
    snr_index: int,
    rng: np.random.Generator,
    model: MlpModel | None,
    model_snr_index: int | None,
) -> BlockTally:
    spec = cfg.constellation()
    sigma_z2 = 10.0 ** (-cfg.snr_grid_db[snr_index] / 10.0)
    n_data = cfg.n_uses - 1
    k = spec.phase_bits

    bits = rng.integers(0, 2, size=(n_data, spec.n_bits))
    b1 = bits[:, 0]
    g_true = np.zeros(n_data, dtype=np.int64)
    for i in range(k):
        g_true = (g_true << 1) | bits[:, 1 + i]
    m_true = _gray_decode_arr(g_true, k)

    symbols, _ = dapsk_encode(bits.tolist(), spec)
    x = np.concatenate([[complex(spec.psi0)], symbols])

    ch_cfg = ChannelConfig(cfg.n_antennas, cfg.n_taps, cfg.n_uses, cfg.pdp_array(), sigma_z2)
    y = apply_channel(x, gen_channel(ch_cfg, rng), sigma_z2, rng)
    bp = bussgang_params(1.0 + sigma_z2)
    rho_table = hypothesis_rho_table(spec, sigma_z2, bp)

    rotation = cfg.mean_rotation()
    if cfg.mode == "differential-onebit":
        q = sign_quantize(y)
        _, m_hat, b1_hat = ml_detect_block(q, spec, rho_table, rotation)
    else:
        qspec = vql_quantizer(cfg.n_antennas, cfg.group_sizes, spec)
        q = vql_quantize(y, qspec)
        lam = energy_statistic_block(q)
        phase_group = list(qspec.groups[1].antennas)
        m_hat = vql_phase_detect_block(q[phase_group], spec.M, float(rho_table[0]), rotation)
        if cfg.mode == "differential-vql-nn":
            if model is None:
                raise ValueError("differential-vql-nn needs a trained amplitude model")
            idx = snr_index if model_snr_index is None else model_snr_index
            feats = amplitude_features(lam[1:], lam[:-1], idx, model.input_dim - 4)
            b1_hat = predict_amplitude_bit(model, feats)
        else:
            params = EnergyDetectorParams(
                n_antennas=cfg.n_antennas,
                eta=bp.eta,
                sigma_eps2=bp.eta**2 * sigma_z2 + bp.sigma_eps2,
                psi0=spec.psi0,
                psi1=spec.psi1,
            )
            b1_hat = lrt_amplitude_block(lam, params)

    amp_wrong = b1_hat != b1
    phase_errs = _popcount(_gray_encode_arr(m_hat) ^ g_true, k)
    return BlockTally(
        n_symbols=n_data,
        amp_bits=n_data,
        phase_bits=n_data * k,
        amp_bit_errors=int(np.sum(amp_wrong)),
        phase_bit_errors=int(np.sum(phase_errs)),
        symbol_errors=int(np.sum(amp_wrong | (m_hat != m_true))),
    )


def _run_coherent_block(cfg: SimConfig, snr_index: int, rng: np.random.Generator) -> BlockTally:
    spec = cfg.constellation()
    sigma_z2 = 10.0 ** (-cfg.snr_grid_db[snr_index] / 10.0)
    plan = make_pilot_plan(cfg.n_uses, cfg.pilot_fraction)
    points, _ = coherent_constellation(spec, cfg.coherent_points)
    n_data = plan.n_data
    data_pos = plan.data_positions

    tx_idx = rng.integers(0, len(points), size=n_data)
    x = np.empty(cfg.n_uses, dtype=complex)
    x[plan.positions] = plan.symbols
    x[data_pos] = points[tx_idx]

    ch_cfg = ChannelConfig(cfg.n_antennas, cfg.n_taps, cfg.n_uses, cfg.pdp_array(), sigma_z2)
    y = apply_channel(x, gen_channel(ch_cfg, rng), sigma_z2, rng)
    q = sign_quantize(y)

    bp = bussgang_params(1.0 + sigma_z2)
    pdp = cfg.pdp_array()
    est = estimation_params(1.0 + sigma_z2)
    taps_hat = estimate_taps(q[:, plan.positions], plan, pdp, est, sigma_z2)
    h_hat = tap_gains(taps_hat, pdp, cfg.n_uses, data_pos)
    rho = 1.0 / (bp.eta**2 * sigma_z2 + bp.sigma_eps2)
    rx_idx = coherent_detect_block(q[:, data_pos], h_hat, points, rho)

    diff = tx_idx ^ rx_idx
    total_bit_errors = int(np.sum(_popcount(diff, cfg.n_bits)))
    if cfg.coherent_points == "dapsk":
        amp_bits = n_data
        amp_errors = int(np.sum((diff >> (cfg.n_bits - 1)) & 1))
    else:
        amp_bits = 0
        amp_errors = 0
    return BlockTally(
        n_symbols=n_data,
        amp_bits=amp_bits,
        phase_bits=n_data * cfg.n_bits - amp_bits,
        amp_bit_errors=amp_errors,
        phase_bit_errors=total_bit_errors - amp_errors,
        symbol_errors=int(np.sum(diff != 0)),
    )


def run_block(
    cfg: SimConfig,
    snr_index: int,
    rng: np.random.Generator,
    model: MlpModel | None = None,
    model_snr_index: int | None = None,
) -> BlockTally:
    """Simulate one block at grid point ``snr_index`` and tally its errors.

    The first differential use is the uncounted reference symbol; pilot uses
    of the coherent mode are likewise uncounted.  ``model_snr_index`` places
    the operating point in the amplitude model's own SNR grid when the two
    grids differ.
    """
    if not 0 <= snr_index < len(cfg.snr_grid_db):
        raise ValueError(f"snr_index {snr_index} outside the configured grid")
    if cfg.mode == "coherent":
        return _run_coherent_block(cfg, snr_index, rng)
    return _run_differential_block(cfg, snr_index, rng, model, model_snr_index)


def spectral_efficiency(
    ser: float, data_fraction: float, n_bits: int, ser_threshold: float
) -> float:
    """Delivered bits per channel use, gated to zero above the SER threshold."""
    if not 0.0 <= ser <= 1.0:
        raise ValueError(f"ser must be in [0, 1], got {ser!r}")
    if ser > ser_threshold:
        return 0.0
    return data_fraction * n_bits * (1.0 - ser)


def _model_grid_indices(cfg: SimConfig, meta: dict, model: MlpModel) -> list[int]:
    """Position of every configured SNR point inside the model's training grid."""
    grid = meta.get("snr_grid_db")
    if grid is None:
        if model.input_dim - 4 != len(cfg.snr_grid_db):
            raise ValueError(
                "model metadata lacks snr_grid_db and the model one-hot width "
                f"({model.input_dim - 4}) does not match the configured grid"
            )
        return list(range(len(cfg.snr_grid_db)))
    grid = [float(g) for g in grid]
    indices = []
    for snr in cfg.snr_grid_db:
        matches = [j for j, g in enumerate(grid) if abs(g - snr) < 1e-9]
        if not matches:
            raise ValueError(f"model was not trained at {snr} dB (grid {grid})")
        indices.append(matches[0])
    return indices


def sweep(
    cfg: SimConfig,
    model: MlpModel | None = None,
    model_meta: dict | None = None,
) -> list[MetricsRecord]:
    """Run the whole campaign and aggregate one record per SNR point."""
    if cfg.mode == "differential-vql-nn" and model is None:
        if cfg.model_path is None:
            raise ValueError(
                "differential-vql-nn needs a trained model: set model_path or pass one"
            )
        try:
            model, model_meta = load_model(cfg.model_path)
        except FileNotFoundError as exc:
            raise ValueError(f"model file not found: {cfg.model_path}") from exc
    model_indices = None
    if cfg.mode == "differential-vql-nn":
        model_indices = _model_grid_indices(cfg, model_meta or {}, model)

    records = []
    for i, snr_db in enumerate(cfg.snr_grid_db):
        tally = BlockTally()
        for b in range(cfg.blocks_per_point):
            tally.add(
                run_block(
                    cfg,
                    i,
                    block_rng(cfg.seed, i, b),
                    model=model,
                    model_snr_index=None if model_indices is None else model_indices[i],
                )
            )
        ber = tally.bit_errors / tally.n_bits if tally.n_bits else 0.0
        amp_ber = tally.amp_bit_errors / tally.amp_bits if tally.amp_bits else 0.0
        phase_ber = tally.phase_bit_errors / tally.phase_bits if tally.phase_bits else 0.0
        ser = tally.symbol_errors / tally.n_symbols if tally.n_symbols else 0.0
        records.append(
            MetricsRecord(
                mode=cfg.mode,
                snr_db=float(snr_db),
                n_antennas=cfg.n_antennas,
                mod_order=cfg.mod_order,
                blocks=cfg.blocks_per_point,
                ber=ber,
                amp_ber=amp_ber,
                phase_ber=phase_ber,
                ser=ser,
                se=spectral_efficiency(ser, cfg.data_fraction(), cfg.n_bits, cfg.ser_threshold),
            )
        )
    return records


def _fmt(x: float) -> str:
    return repr(float(x))


def emit_csv(records: list[MetricsRecord], path: str) -> None:
    """Write records with the fixed column set; float fields use shortest
    exact decimal form so identical runs produce identical bytes."""
    lines = [CSV_HEADER]
    for r in records:
        lines.append(
            ",".join(
                [
                    r.mode,
                    _fmt(r.snr_db),
                    str(r.n_antennas),
                    str(r.mod_order),
                    str(r.blocks),
                    _fmt(r.ber),
                    _fmt(r.amp_ber),
                    _fmt(r.phase_ber),
                    _fmt(r.ser),
                    _fmt(r.se),
                ]
            )
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path: str) -> list[MetricsRecord]:
    """Parse a file written by :func:`emit_csv` back into records."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln]
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"{path} does not start with the expected header")
    records = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 10:
            raise ValueError(f"malformed CSV row: {ln!r}")
        records.append(
            MetricsRecord(
                mode=parts[0],
                snr_db=float(parts[1]),
                n_antennas=int(parts[2]),
                mod_order=int(parts[3]),
                blocks=int(parts[4]),
                ber=float(parts[5]),
                amp_ber=float(parts[6]),
                phase_ber=float(parts[7]),
                ser=float(parts[8]),
                se=float(parts[9]),
            )
        )
    return records


def emit_svg(records: list[MetricsRecord], path: str) -> None:
    """Render BER (log scale) and spectral efficiency (linear) curves."""
    if not records:
        raise ValueError("no records to plot")
    from matplotlib.figure import Figure

    fig = Figure(figsize=(7.0, 8.0))
    ax_ber, ax_se = fig.subplots(2, 1)
    modes = sorted({(r.mode, r.n_antennas, r.mod_order) for r in records})
    for mode, antennas, order in modes:
        pts = sorted(
            (r for r in records if (r.mode, r.n_antennas, r.mod_order) == (mode, antennas, order)),
            key=lambda r: r.snr_db,
        )
        snr = [r.snr_db for r in pts]
        ber = [r.ber if r.ber > 0 else float("nan") for r in pts]
        se = [r.se for r in pts]
        label = f"{mode} U={antennas} {order}-ary"
        ax_ber.semilogy(snr, ber, marker="o", label=label)
        ax_se.plot(snr, se, marker="s", label=label)
    ax_ber.set_xlabel("SNR (dB)")
    ax_ber.set_ylabel("BER")
    ax_ber.grid(True, which="both", linestyle=":")
    ax_ber.legend(fontsize=8)
    ax_se.set_xlabel("SNR (dB)")
    ax_se.set_ylabel("Spectral efficiency (bits/use)")
    ax_se.grid(True, linestyle=":")
    ax_se.legend(fontsize=8)
    fig.tight_layout()
    try:
        fig.savefig(path, format="svg")
    except OSError as exc:
        raise OSError(f"cannot write SVG to {path}: {exc}") from exc


_CONFIG_PARSERS = {
    "n_uses": int,
    "n_antennas": int,
    "group_sizes": lambda s: tuple(int(v) for v in s.split(",")),
    "n_taps": int,
    "mod_order": int,
    "ring_ratio": float,
    "snr_grid_db": lambda s: tuple(float(v) for v in s.split(",")),
    "blocks_per_point": int,
    "seed": int,
    "mode": str,
    "ser_threshold": float,
    "pilot_fraction": float,
    "pdp": str,
    "coherent_points": str,
    "model_path": str,
}


def load_config(path: str) -> SimConfig:
    """Read a ``key = value`` text file mirroring the SimConfig fields."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in _CONFIG_PARSERS:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            try:
                values[key] = _CONFIG_PARSERS[key](val)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return SimConfig(**values)
