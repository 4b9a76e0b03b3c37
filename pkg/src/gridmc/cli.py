"""Command-line front end: seeded, reproducible runs that emit CSV traces.

Commands
--------
capacity     Monte Carlo noiseless capacity of an M x M grid.
info-rate    Mutual information rate over an SNR grid (AWGN channel).
oracle       Exact log2 Z from enumeration and/or the transfer matrix.
chain-check  Self-test of the chain sampler (TV distance + row sums).

Every run writes a manifest echoing the fully resolved configuration
(including the seed), so identical configurations reproduce byte-identical
CSV numerics.  Options may come from a ``key = value`` config file; flags
override the file, and the output directory may also come from the
GRIDMC_OUT environment variable (flag wins over it).
"""

from __future__ import annotations

import argparse
import itertools
import math
import os
import sys
from dataclasses import dataclass, field, fields

from . import seeding
from .capacity import (
    BudgetError,
    ENUMERATION_BUDGET_FAST,
    TRANSFER_BUDGET,
    estimate_capacity,
    exact_log_z_enumeration,
    exact_log_z_transfer_matrix,
)
from .chain import ChainModel, backward_filter, forward_sample, transition_probabilities
from .estimators import LayerSchedule
from .grid import ConstraintKind, GridSpec
from .info_rate import ChannelModel, default_layer_count, estimate_info_rate
from .logspace import LN2

TRACE_SCHEMA = "# gridmc-trace v1: estimator,k,log2_estimate,stderr"
RATE_SCHEMA = "# gridmc-inforate v1: snr_db,info_rate_per_symbol,stderr,l,j,k"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class CliValidationError(ValueError):
    def __init__(self, name: str, message: str):
        super().__init__(f"{name}: {message}")
        self.option = name


@dataclass
class RunConfig:
    """Everything that affects a run's numerics, plus output plumbing."""

    command: str = ""
    m: int = 10
    strip_width: int = 1
    constraint: str = "rll_1inf"
    k: int = 100_000
    l: int = 100
    paths: int = 10
    burn_in: int = -1          # -1: use 10 * m
    thinning: int = 1
    seed: int = 0
    snr_db: list = field(default_factory=lambda: list(range(-10, 9)))
    j: int = 0                 # 0: derive from SNR
    alpha_schedule: str = "geometric"
    out_dir: str = "gridmc-out"

    def validate(self) -> None:
        if self.command not in ("capacity", "info-rate", "oracle", "chain-check"):
            raise CliValidationError("command", f"unknown command {self.command!r}")
        if self.m < 1:
            raise CliValidationError("m", f"must be >= 1, got {self.m}")
        if not 1 <= self.strip_width <= self.m:
            raise CliValidationError(
                "strip-width", f"must be in [1, m={self.m}], got {self.strip_width}"
            )
        if self.constraint != "rll_1inf":
            raise CliValidationError(
                "constraint", f"only 'rll_1inf' ships, got {self.constraint!r}"
            )
        for name, value in (("k", self.k), ("l", self.l), ("paths", self.paths),
                            ("thinning", self.thinning)):
            if value < 1:
                raise CliValidationError(name, f"must be >= 1, got {value}")
        if self.burn_in < -1:
            raise CliValidationError("burn-in", f"must be >= 0, got {self.burn_in}")
        if not 0 <= self.seed < 2**64:
            raise CliValidationError("seed", "must fit in 64 bits")
        if self.j < 0:
            raise CliValidationError("j", f"must be >= 1 (or 0 for auto), got {self.j}")
        if self.alpha_schedule != "geometric":
            raise CliValidationError(
                "alpha-schedule", f"only 'geometric' ships, got {self.alpha_schedule!r}"
            )
        if not self.snr_db:
            raise CliValidationError("snr-db", "need at least one SNR point")

    def resolved_burn_in(self) -> int:
        return 10 * self.m if self.burn_in < 0 else self.burn_in

    def grid(self) -> GridSpec:
        return GridSpec(self.m, self.strip_width, ConstraintKind.rll_1inf())


def _parse_config_file(path: str) -> dict:
    """Simple ``key = value`` lines; '#' starts a comment; keys use dashes."""
    out = {}
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise CliValidationError(
                        "config", f"{path}:{lineno}: expected 'key = value'"
                    )
                key, _, value = line.partition("=")
                out[key.strip().replace("-", "_")] = value.strip()
    except OSError as exc:
        raise CliValidationError("config", f"cannot read {path}: {exc}") from exc
    return out


_INT_FIELDS = {"m", "strip_width", "k", "l", "paths", "burn_in", "thinning",
               "seed", "j"}
_STR_FIELDS = {"constraint", "alpha_schedule", "out_dir"}


def _coerce(name: str, raw: str):
    if name in _INT_FIELDS:
        try:
            return int(raw)
        except ValueError as exc:
            raise CliValidationError(name, f"expected an integer, got {raw!r}") from exc
    if name == "snr_db":
        return _parse_snr_list(raw)
    if name in _STR_FIELDS:
        return raw
    raise CliValidationError(name, "unknown config key")


def _parse_snr_list(raw: str) -> list:
    """Comma list of dB values; 'a:b:step' expands to an inclusive range."""
    out = []
    for piece in str(raw).split(","):
        piece = piece.strip()
        if not piece:
            continue
        if ":" in piece:
            parts = piece.split(":")
            if len(parts) != 3:
                raise CliValidationError("snr-db", f"range needs start:stop:step, got {piece!r}")
            start, stop, step = (float(p) for p in parts)
            if step <= 0:
                raise CliValidationError("snr-db", "range step must be positive")
            v = start
            while v <= stop + 1e-9:
                out.append(round(v, 6))
                v += step
        else:
            try:
                out.append(float(piece))
            except ValueError as exc:
                raise CliValidationError("snr-db", f"bad dB value {piece!r}") from exc
    return out


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridmc",
        description="Monte Carlo partition functions, capacities, and "
                    "information rates of 2-D constrained channels.",
    )
    sub = parser.add_subparsers(dest="command")

    def common(p):
        p.add_argument("--config", help="key = value file with defaults for any flag")
        p.add_argument("--m", type=int, help="grid side length M")
        p.add_argument("--strip-width", type=int, help="columns per Gibbs strip")
        p.add_argument("--seed", type=int, help="master seed (64-bit)")
        p.add_argument("--burn-in", type=int, help="sweeps to discard (default 10*M)")
        p.add_argument("--thinning", type=int, help="keep every n-th sweep")
        p.add_argument("--out", dest="out_dir", help="output directory")

    p_cap = sub.add_parser("capacity", help="noiseless capacity estimate")
    common(p_cap)
    p_cap.add_argument("--k", type=int, help="samples per path")
    p_cap.add_argument("--paths", type=int, help="independent sample paths")

    p_ir = sub.add_parser("info-rate", help="AWGN information rate over an SNR grid")
    common(p_ir)
    p_ir.add_argument("--k", type=int, help="samples per tempering layer")
    p_ir.add_argument("--l", type=int, help="outer channel-output samples")
    p_ir.add_argument("--j", type=int, help="tempering layers (0 = auto per SNR)")
    p_ir.add_argument("--snr-db", help="comma list and/or start:stop:step in dB")

    p_or = sub.add_parser("oracle", help="exact log2 Z at small sizes")
    common(p_or)

    p_ck = sub.add_parser("chain-check", help="chain sampler self-test")
    common(p_ck)
    p_ck.add_argument("--k", type=int, help="number of sampled paths")
    return parser


def parse_and_validate(argv) -> RunConfig:
    """Flags override config-file values override defaults; validate everything."""
    parser = _build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        raise CliValidationError("command", "one of capacity, info-rate, oracle, "
                                 "chain-check is required")
    cfg = RunConfig(command=args.command)
    if getattr(args, "config", None):
        for key, raw in _parse_config_file(args.config).items():
            if key not in {f.name for f in fields(RunConfig)}:
                raise CliValidationError(key, "unknown config key")
            setattr(cfg, key, _coerce(key, raw))
    env_out = os.environ.get("GRIDMC_OUT")
    if env_out:
        cfg.out_dir = env_out
    for key, value in vars(args).items():
        if key in ("command", "config") or value is None:
            continue
        if key == "snr_db":
            value = _parse_snr_list(value)
        setattr(cfg, key, value)
    cfg.validate()
    return cfg


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _write_manifest(cfg: RunConfig, path: str) -> None:
    with open(path, "w") as fh:
        fh.write("# gridmc-manifest v1\n")
        for f in fields(RunConfig):
            value = getattr(cfg, f.name)
            if f.name == "snr_db":
                value = ",".join(_fmt(v) for v in value)
            fh.write(f"{f.name} = {value}\n")
        fh.write(f"resolved_burn_in = {cfg.resolved_burn_in()}\n")


def _write_trace_csv(path: str, traces) -> None:
    with open(path, "w") as fh:
        fh.write(TRACE_SCHEMA + "\n")
        fh.write("estimator,k,log2_estimate,stderr\n")
        for tr in traces:
            for k, v, s in zip(tr.sample_index, tr.log2_estimate, tr.stderr):
                fh.write(f"{tr.estimator_id},{int(k)},{_fmt(v)},{_fmt(s)}\n")


def _run_capacity(cfg: RunConfig, out) -> None:
    grid = cfg.grid()
    est = estimate_capacity(
        grid, cfg.k, cfg.paths, cfg.seed,
        burn_in=cfg.resolved_burn_in(), thinning=cfg.thinning,
    )
    _write_trace_csv(os.path.join(cfg.out_dir, "capacity_trace.csv"), est.traces)
    with open(os.path.join(cfg.out_dir, "capacity_summary.csv"), "w") as fh:
        fh.write("# gridmc-capacity v1: m,strip_width,k,paths,c_bits,stderr\n")
        fh.write("m,strip_width,k,paths,c_bits,stderr\n")
        fh.write(f"{est.m},{est.strip_width},{est.k},{est.paths},"
                 f"{_fmt(est.c_bits)},{_fmt(est.stderr)}\n")
    out(f"capacity M={est.m} w={est.strip_width} K={est.k} paths={est.paths}: "
        f"C = {est.c_bits:.6f} bits/symbol (stderr {est.stderr:.6f})")


def _run_info_rate(cfg: RunConfig, out) -> None:
    grid = cfg.grid()
    log2_z_f = None
    if grid.m > TRANSFER_BUDGET:
        cap = estimate_capacity(
            grid, cfg.k, cfg.paths, cfg.seed,
            burn_in=cfg.resolved_burn_in(), thinning=cfg.thinning,
        )
        log2_z_f = cap.c_bits * grid.n
        out(f"noiseless log2 Z estimated: C_M = {cap.c_bits:.6f} "
            f"(stderr {cap.stderr:.6f})")
    rows = []
    for idx, snr in enumerate(cfg.snr_db):
        channel = ChannelModel.from_snr_db(snr)
        layers = cfg.j if cfg.j > 0 else default_layer_count(snr)
        res = estimate_info_rate(
            grid, channel, cfg.l, cfg.k, cfg.seed,
            schedule=LayerSchedule.geometric(layers),
            log2_z_f=log2_z_f,
            burn_in=cfg.resolved_burn_in(),
            thinning=cfg.thinning,
            collect_layer_traces=True,
        )
        rows.append(res)
        trace_path = os.path.join(cfg.out_dir, f"info_rate_trace_snr{idx:02d}.csv")
        with open(trace_path, "w") as fh:
            fh.write(TRACE_SCHEMA + "\n")
            fh.write("estimator,k,log2_estimate,stderr\n")
            for e, r in enumerate(res.running_rate, start=1):
                fh.write(f"rate@{_fmt(snr)}dB,{e},{_fmt(r)},\n")
            # inner-loop convergence of the first outer sample: one row
            # stream per tempering ratio plus the anchor estimate
            stride = max(1, cfg.k // 256)
            for name, values in (res.layer_traces or {}).items():
                for e in range(stride - 1, len(values), stride):
                    fh.write(f"{name}@{_fmt(snr)}dB,{e + 1},{_fmt(values[e])},\n")
        out(f"info-rate SNR {snr:+.1f} dB (J={res.j}): I/N = "
            f"{res.info_rate_per_symbol:.6f} bits/symbol "
            f"(stderr {res.stderr:.6f})")
    with open(os.path.join(cfg.out_dir, "info_rate.csv"), "w") as fh:
        fh.write(RATE_SCHEMA + "\n")
        fh.write("snr_db,info_rate_per_symbol,stderr,l,j,k\n")
        for res in rows:
            fh.write(f"{_fmt(res.snr_db)},{_fmt(res.info_rate_per_symbol)},"
                     f"{_fmt(res.stderr)},{res.l},{res.j},{res.k_per_layer}\n")


def _run_oracle(cfg: RunConfig, out) -> None:
    grid = cfg.grid()
    results = {}
    if grid.n <= ENUMERATION_BUDGET_FAST:
        results["enumeration"] = exact_log_z_enumeration(grid) / LN2
    if grid.m <= TRANSFER_BUDGET:
        results["transfer_matrix"] = exact_log_z_transfer_matrix(grid) / LN2
    if not results:
        raise BudgetError(
            f"M={grid.m} exceeds both oracle budgets "
            f"(N <= {ENUMERATION_BUDGET_FAST} cells or M <= {TRANSFER_BUDGET} rows)"
        )
    with open(os.path.join(cfg.out_dir, "oracle.csv"), "w") as fh:
        fh.write("# gridmc-oracle v1: method,m,log2_z,c_bits\n")
        fh.write("method,m,log2_z,c_bits\n")
        for method, log2_z in results.items():
            fh.write(f"{method},{grid.m},{_fmt(log2_z)},{_fmt(log2_z / grid.n)}\n")
    for method, log2_z in results.items():
        out(f"oracle {method}: log2 Z = {log2_z:.10f}, "
            f"C_{grid.m} = {log2_z / grid.n:.10f} bits/symbol")
    if len(results) == 2:
        gap = abs(results["enumeration"] - results["transfer_matrix"])
        agree = gap <= 1e-10 * max(1.0, abs(results["transfer_matrix"]))
        out(f"oracle agreement: |gap| = {gap:.3e} -> {'OK' if agree else 'MISMATCH'}")
        if not agree:
            raise BudgetError("oracle disagreement")


def _run_chain_check(cfg: RunConfig, out) -> None:
    """TV distance of sampled paths against enumeration on a small hard chain."""
    n, draws = 5, cfg.k
    kernel = ConstraintKind.rll_1inf().log_table()
    chain = ChainModel(tuple(kernel for _ in range(n - 1)))
    msgs = backward_filter(chain)
    worst = 0.0
    for rows in transition_probabilities(chain, msgs):
        sums = rows.sum(axis=1)
        live = rows.any(axis=1)
        worst = max(worst, float(abs(sums[live] - 1.0).max()))
    exact = {}
    for path in itertools.product((0, 1), repeat=n):
        mass = sum(float(kernel[path[i], path[i + 1]]) for i in range(n - 1))
        if mass > float("-inf"):
            exact[path] = math.exp(mass)
    total = sum(exact.values())
    exact = {p: v / total for p, v in exact.items()}
    rng = seeding.rng_for(cfg.seed, seeding.SELF_TEST)
    counts = dict.fromkeys(exact, 0)
    for _ in range(draws):
        path, _ = forward_sample(chain, msgs, rng)
        counts[tuple(int(b) for b in path)] += 1
    tv = 0.5 * sum(abs(counts[p] / draws - exact[p]) for p in exact)
    ok = tv < 0.01 and worst <= 1e-12
    out(f"chain-check: n={n} draws={draws} TV={tv:.5f} (< 0.01) "
        f"max row-sum deviation={worst:.2e} (<= 1e-12) -> "
        f"{'PASS' if ok else 'FAIL'}")
    if not ok:
        raise BudgetError("chain self-test failed")


def execute(cfg: RunConfig, out=print) -> int:
    """Run a validated configuration; artifacts land in cfg.out_dir."""
    try:
        os.makedirs(cfg.out_dir, exist_ok=True)
        _write_manifest(cfg, os.path.join(cfg.out_dir, "manifest.txt"))
        if cfg.command == "capacity":
            _run_capacity(cfg, out)
        elif cfg.command == "info-rate":
            _run_info_rate(cfg, out)
        elif cfg.command == "oracle":
            _run_oracle(cfg, out)
        else:
            _run_chain_check(cfg, out)
    except (BudgetError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main(argv=None) -> int:
    try:
        cfg = parse_and_validate(sys.argv[1:] if argv is None else argv)
    except CliValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # argparse's own exit (--help, unknown flags)
        return int(exc.code or 0) and EXIT_USAGE
    return execute(cfg)


if __name__ == "__main__":
    sys.exit(main())
