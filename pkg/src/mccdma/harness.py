"""Monte-Carlo evaluation harness for the precoding schemes.

One operating point fixes (K, N, L, modulation, SEP target) and streams
slots through every requested scheme with shared data: the same signature
sets, channel realizations, data symbols, and receiver noise draws, so
scheme comparisons are paired. Slots are grouped into signature
realizations (slot // (slots / realizations) indexes the signature set) and
rank-deficient channel draws are redrawn with a counted attempt index so
the stream stays reproducible.

Reported power is the linear mean of |x|^2 over slots (also in dB); SEP
and BER come from noise_draws_per_slot independent receiver noise draws
per slot, counted across all users. Iteration, message, addition, and
multiplication counts are recorded for the QP-based schemes and zero for
the closed-form baselines.
"""

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .channel import (
    effective_channel,
    generate_channel,
    normalized_uncertainty,
    perturb_channel,
)
from .constellation import (
    ConstellationSpec,
    assemble_qp,
    complex_unstack,
    constraint_region,
    min_scaling_16qam,
    min_scaling_4qam,
    min_scaling_replica,
    solve_delta,
    symbol_vector,
)
from .detection import bit_error_count, detect_qam, detect_replica, symbol_error_count
from .precoders import (
    RankDeficientChannelError,
    rzf_precode,
    select_uniform_beta,
    thp_optimized,
    thp_zf_encode,
    zf_precode,
)
from .rngstreams import (
    CALIBRATION_STREAM,
    CHANNEL_STREAM,
    DATA_STREAM,
    NOISE_STREAM,
    PERTURB_STREAM,
    SIGNATURE_STREAM,
    derived_rng,
)
from .signatures import generate_regular_signatures
from .solver import SolverOptions, solve

KNOWN_SCHEMES = ("proposed", "ZF", "RZF", "ZF-THP", "opt-THP")

REPLICA_SCHEMES = frozenset({"ZF-THP", "opt-THP"})

CSV_COLUMNS = [
    "scheme", "K", "N", "L", "M", "replica", "pe_target", "power_linear",
    "power_db", "sep", "ber", "iters_mean", "messages_mean", "adds_mean",
    "muls_mean", "slots", "stderr_power",
]

UNCERTAINTY_COLUMNS = CSV_COLUMNS + ["sigma_e", "tau_db"]

_MAX_CHANNEL_ATTEMPTS = 50


@dataclass(frozen=True)
class ExperimentConfig:
    """One operating point plus the sweep-independent simulation knobs."""

    n_users: int
    n_subcarriers: int = 32
    nonzeros_per_user: int = 8
    modulation: int = 4
    pe_target: float = 1e-3
    noise_density: float = 1.0
    slots: int = 1000
    signature_realizations: int = 10
    schemes: tuple = ("proposed", "ZF")
    noise_draws_per_slot: int = 100
    sigma_e: float = 0.0
    master_seed: int = 2026
    n_taps: int = 8
    tap_decay: float = 0.25
    solver: SolverOptions = field(default_factory=SolverOptions)
    calibration_slots: int = 200
    beta_grid_points: int = 16
    beta_grid_span: float = 1.6

    def __post_init__(self):
        if self.modulation not in (4, 16):
            raise ValueError(f"unsupported modulation order {self.modulation}")
        unknown = [s for s in self.schemes if s not in KNOWN_SCHEMES]
        if unknown:
            raise ValueError(f"unknown schemes {unknown}; choose from {KNOWN_SCHEMES}")
        if self.slots <= 0 or self.signature_realizations <= 0:
            raise ValueError("slots and signature_realizations must be positive")
        if self.slots % self.signature_realizations != 0:
            raise ValueError("slots must be a multiple of signature_realizations")
        if self.noise_draws_per_slot < 0:
            raise ValueError("noise_draws_per_slot must be nonnegative")
        if self.sigma_e < 0.0:
            raise ValueError("sigma_e must be nonnegative")
        if self.noise_density <= 0.0:
            raise ValueError("noise_density must be positive")

    @property
    def noise_sigma(self):
        """Per-axis receiver noise deviation sqrt(N0 / 2)."""
        return float(np.sqrt(self.noise_density / 2.0))

    @property
    def slots_per_signature(self):
        return self.slots // self.signature_realizations


@dataclass(frozen=True)
class ResultRow:
    """One CSV record: a scheme at an operating point."""

    scheme: str
    K: int
    N: int
    L: int
    M: int
    replica: bool
    pe_target: float
    power_linear: float
    power_db: float
    sep: float
    ber: float
    iters_mean: float
    messages_mean: float
    adds_mean: float
    muls_mean: float
    slots: int
    stderr_power: float
    sigma_e: float = None
    tau_db: float = None


@dataclass
class OperatingPointResult:
    rows: list
    diagnostics: dict
    channel_redraws: int
    slot_log: list = None


class _SchemeStats:
    def __init__(self):
        self.powers = []
        self.symbol_errors = 0
        self.bit_errors = 0
        self.decisions = 0
        self.iters = []
        self.messages = []
        self.adds = []
        self.muls = []
        self.k2_zero = 0
        self.nonconverged = 0
        self.worst_feasibility = 0.0

    def record_solver(self, result):
        self.iters.append(result.iterations)
        self.messages.append(result.message_count)
        self.adds.append(result.addition_count)
        self.muls.append(result.multiplication_count)
        if not result.converged:
            self.nonconverged += 1
        self.worst_feasibility = max(self.worst_feasibility,
                                     result.primal_feasibility)

    def record_detection(self, tx, rx):
        self.symbol_errors += symbol_error_count(
            np.broadcast_to(tx, rx.shape), rx)
        self.bit_errors += bit_error_count(np.broadcast_to(tx, rx.shape), rx)
        self.decisions += rx.size


def proposed_constellation(config):
    """Standard-constellation spec at the minimum feasible scaling."""
    sigma = config.noise_sigma
    if config.modulation == 4:
        beta = min_scaling_4qam(sigma, config.pe_target)
    else:
        beta = min_scaling_16qam(sigma, config.pe_target)
    return ConstellationSpec(config.modulation, beta, config.pe_target, sigma)


def sigma_for_tau(tau_db, nonzeros_per_user):
    """Per-entry estimation noise hitting a target mean uncertainty.

    Each of the K L support entries has mean square 1/L, so the expected
    Frobenius ratio is L sigma_e^2; invert that at the requested dB level.
    """
    return float(np.sqrt(10.0 ** (tau_db / 10.0) / nonzeros_per_user))


def _draw_slot_channel(config, signature, slot):
    """Channel realization for a slot, redrawing on rank deficiency."""
    for attempt in range(_MAX_CHANNEL_ATTEMPTS):
        rng = derived_rng(config.master_seed, CHANNEL_STREAM, slot, attempt)
        chan = generate_channel(config.n_users, config.n_subcarriers,
                                config.n_taps, config.tap_decay, rng)
        eff = effective_channel(signature, chan)
        gram = eff.matrix @ eff.matrix.conj().T
        try:
            np.linalg.cholesky(gram)
        except np.linalg.LinAlgError:
            continue
        return eff, attempt
    raise RankDeficientChannelError(
        f"no full-rank channel in {_MAX_CHANNEL_ATTEMPTS} draws at slot {slot}")


def calibration_slots(config, count=None):
    """Independent (channel, symbols) slots on the calibration stream."""
    count = config.calibration_slots if count is None else count
    k, n, l = config.n_users, config.n_subcarriers, config.nonzeros_per_user
    slots = []
    for i in range(count):
        sig = generate_regular_signatures(
            k, n, l, derived_rng(config.master_seed, CALIBRATION_STREAM, i, 0))
        eff = None
        for attempt in range(_MAX_CHANNEL_ATTEMPTS):
            rng = derived_rng(config.master_seed, CALIBRATION_STREAM, i, 1, attempt)
            chan = generate_channel(k, n, config.n_taps, config.tap_decay, rng)
            cand = effective_channel(sig, chan)
            try:
                np.linalg.cholesky(cand.matrix @ cand.matrix.conj().T)
            except np.linalg.LinAlgError:
                continue
            eff = cand
            break
        if eff is None:
            raise RankDeficientChannelError(
                f"no full-rank calibration channel at slot {i}")
        syms = derived_rng(config.master_seed, CALIBRATION_STREAM, i, 2).integers(
            1, config.modulation + 1, k)
        slots.append((eff, syms))
    return slots


def _thp_setup(config):
    """Per-operating-point THP scalings: the zero-width ZF-THP beta and the
    calibrated common beta for the optimized variant."""
    sigma = config.noise_sigma
    setup = {}
    if "ZF-THP" in config.schemes:
        setup["zf_thp_beta"] = min_scaling_replica(sigma, config.pe_target)
    if "opt-THP" in config.schemes:
        floor = min_scaling_replica(sigma, config.pe_target)
        grid = floor * np.linspace(1.0, config.beta_grid_span,
                                   config.beta_grid_points)
        beta, mean_powers = select_uniform_beta(
            calibration_slots(config), config.modulation, config.pe_target,
            sigma, grid, config.solver)
        setup["opt_thp_beta"] = beta
        setup["opt_thp_delta0"] = solve_delta(
            beta, sigma, np.sqrt(1.0 - config.pe_target))
        setup["opt_thp_grid_powers"] = mean_powers
    return setup


def run_operating_point(config, keep_slots=False):
    """Simulate every scheme in config.schemes over the shared slot stream."""
    sigma = config.noise_sigma
    k, m = config.n_users, config.modulation
    spec = None
    if any(s in ("proposed", "ZF", "RZF") for s in config.schemes):
        spec = proposed_constellation(config)
    setup = _thp_setup(config)

    signatures = [
        generate_regular_signatures(
            k, config.n_subcarriers, config.nonzeros_per_user,
            derived_rng(config.master_seed, SIGNATURE_STREAM, r))
        for r in range(config.signature_realizations)
    ]

    stats = {scheme: _SchemeStats() for scheme in config.schemes}
    tau_ratios = []
    redraws = 0
    slot_log = [] if keep_slots else None

    for slot in range(config.slots):
        sig_index = slot // config.slots_per_signature
        eff, attempt = _draw_slot_channel(config, signatures[sig_index], slot)
        redraws += attempt
        h_true = eff.matrix

        if config.sigma_e > 0.0:
            est = perturb_channel(
                eff, config.sigma_e,
                derived_rng(config.master_seed, PERTURB_STREAM, slot))
            tau_ratios.append(
                float(np.linalg.norm(est.matrix - h_true) ** 2
                      / np.linalg.norm(h_true) ** 2))
        else:
            est = eff
            tau_ratios.append(0.0)

        syms = derived_rng(config.master_seed, DATA_STREAM, slot).integers(
            1, m + 1, k)

        noise = None
        if config.noise_draws_per_slot > 0:
            raw = derived_rng(config.master_seed, NOISE_STREAM, slot).standard_normal(
                (config.noise_draws_per_slot, k, 2))
            noise = sigma * (raw[..., 0] + 1j * raw[..., 1])

        regions = None
        if spec is not None and any(s in ("proposed", "RZF") for s in config.schemes):
            regions = [constraint_region(int(syms[u]), spec, user=u)
                       for u in range(k)]

        log_entry = {"slot": slot, "signature_index": sig_index,
                     "symbols": syms.copy(), "x": {}} if keep_slots else None

        for scheme in config.schemes:
            st = stats[scheme]
            if scheme == "proposed":
                system = assemble_qp(est, regions)
                result = solve(system, config.solver)
                x = complex_unstack(result.x_tilde)
                st.record_solver(result)
                beta_det, replica_det = spec.beta, False
            elif scheme == "ZF":
                x = zf_precode(est.matrix, symbol_vector(syms, m, spec.beta))
                beta_det, replica_det = spec.beta, False
            elif scheme == "RZF":
                rzf = rzf_precode(est.matrix, symbol_vector(syms, m, spec.beta),
                                  regions, sigma)
                x = rzf.x
                if rzf.k2 == 0.0:
                    st.k2_zero += 1
                beta_det, replica_det = spec.beta, False
            elif scheme == "ZF-THP":
                beta = setup["zf_thp_beta"]
                x, _ = thp_zf_encode(est.matrix, syms, m, beta)
                beta_det, replica_det = beta, True
            else:  # opt-THP
                beta = setup["opt_thp_beta"]
                _, encoding = thp_zf_encode(est.matrix, syms, m, beta)
                x, result = thp_optimized(est, encoding,
                                          setup["opt_thp_delta0"], config.solver)
                st.record_solver(result)
                beta_det, replica_det = beta, True

            st.powers.append(float(np.vdot(x, x).real))
            if noise is not None:
                y = h_true @ x + noise
                rx = (detect_replica(y, m, beta_det) if replica_det
                      else detect_qam(y, m, beta_det))
                st.record_detection(syms, rx)
            if keep_slots:
                log_entry["x"][scheme] = x.copy()

        if keep_slots:
            slot_log.append(log_entry)

    rows = [_make_row(scheme, config, stats[scheme], tau_ratios)
            for scheme in config.schemes]
    diagnostics = _diagnostics(config, stats, setup, redraws)
    return OperatingPointResult(rows, diagnostics, redraws, slot_log)


def _make_row(scheme, config, st, tau_ratios):
    power = float(np.mean(st.powers))
    n_slots = len(st.powers)
    stderr = float(np.std(st.powers, ddof=1) / np.sqrt(n_slots)) if n_slots > 1 else 0.0
    sep = st.symbol_errors / st.decisions if st.decisions else float("nan")
    ber = (st.bit_errors / (st.decisions * np.log2(config.modulation))
           if st.decisions else float("nan"))
    sigma_e = tau_db = None
    if config.sigma_e > 0.0:
        sigma_e = config.sigma_e
        mean_ratio = float(np.mean(tau_ratios))
        tau_db = 10.0 * np.log10(mean_ratio) if mean_ratio > 0 else float("-inf")
    return ResultRow(
        scheme=scheme,
        K=config.n_users,
        N=config.n_subcarriers,
        L=config.nonzeros_per_user,
        M=config.modulation,
        replica=scheme in REPLICA_SCHEMES,
        pe_target=config.pe_target,
        power_linear=power,
        power_db=float(10.0 * np.log10(power)),
        sep=float(sep),
        ber=float(ber),
        iters_mean=float(np.mean(st.iters)) if st.iters else 0.0,
        messages_mean=float(np.mean(st.messages)) if st.messages else 0.0,
        adds_mean=float(np.mean(st.adds)) if st.adds else 0.0,
        muls_mean=float(np.mean(st.muls)) if st.muls else 0.0,
        slots=n_slots,
        stderr_power=stderr,
        sigma_e=sigma_e,
        tau_db=tau_db,
    )


def _diagnostics(config, stats, setup, redraws):
    diag = {"channel_redraws": redraws}
    for scheme, st in stats.items():
        entry = {
            "decisions": st.decisions,
            "nonconverged_slots": st.nonconverged,
            "worst_primal_feasibility": st.worst_feasibility,
        }
        if scheme == "RZF":
            entry["k2_zero_fraction"] = st.k2_zero / max(1, len(st.powers))
        if scheme == "ZF-THP":
            entry["beta"] = setup.get("zf_thp_beta")
        if scheme == "opt-THP":
            entry["beta"] = setup.get("opt_thp_beta")
            entry["delta0"] = setup.get("opt_thp_delta0")
        diag[scheme] = entry
    return diag


def run_power_experiment(config, k_values):
    """Sweep the user count at fixed modulation and SEP target."""
    return [run_operating_point(replace(config, n_users=int(kv)))
            for kv in k_values]


def run_ber_experiment(config, pe_values):
    """Sweep the SEP target; power and measured BER trade off along it."""
    return [run_operating_point(replace(config, pe_target=float(pe)))
            for pe in pe_values]


def run_uncertainty_experiment(config, tau_targets_db):
    """Sweep channel-estimate quality: precode on the perturbed estimate,
    receive through the true channel."""
    results = []
    for tau in tau_targets_db:
        se = sigma_for_tau(float(tau), config.nonzeros_per_user)
        results.append(run_operating_point(replace(config, sigma_e=se)))
    return results


def collect_rows(results):
    return [row for res in results for row in res.rows]


def write_rows_csv(path, rows, config=None):
    """Fixed-schema CSV; uncertainty runs append sigma_e and tau_db columns.

    A .meta.json sidecar records the generating configuration and its hash.
    """
    path = str(path)
    uncertainty = any(row.sigma_e is not None for row in rows)
    columns = UNCERTAINTY_COLUMNS if uncertainty else CSV_COLUMNS
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([getattr(row, col) for col in columns])
    if config is not None:
        payload = asdict(config)
        digest = hashlib.sha256(
            json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()
        meta = {"config": payload, "config_sha256": digest,
                "package_version": _package_version(), "columns": columns}
        with open(path + ".meta.json", "w") as fh:
            json.dump(meta, fh, indent=2, default=str)


def load_rows_csv(path):
    """Read rows written by write_rows_csv back into ResultRow records."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for rec in reader:
            kwargs = {
                "scheme": rec["scheme"],
                "K": int(rec["K"]),
                "N": int(rec["N"]),
                "L": int(rec["L"]),
                "M": int(rec["M"]),
                "replica": rec["replica"] == "True",
                "pe_target": float(rec["pe_target"]),
                "power_linear": float(rec["power_linear"]),
                "power_db": float(rec["power_db"]),
                "sep": float(rec["sep"]),
                "ber": float(rec["ber"]),
                "iters_mean": float(rec["iters_mean"]),
                "messages_mean": float(rec["messages_mean"]),
                "adds_mean": float(rec["adds_mean"]),
                "muls_mean": float(rec["muls_mean"]),
                "slots": int(rec["slots"]),
                "stderr_power": float(rec["stderr_power"]),
            }
            if "sigma_e" in rec and rec["sigma_e"] not in (None, ""):
                kwargs["sigma_e"] = float(rec["sigma_e"])
                kwargs["tau_db"] = float(rec["tau_db"])
            rows.append(ResultRow(**kwargs))
    return rows


def _package_version():
    from . import __version__
    return __version__
