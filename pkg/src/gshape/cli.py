"""Command-line orchestration: training runs, baselines, sweeps, reports, exports.

Subcommands write deterministic artifacts under --out: constellation files,
decoder sidecars, loss histories and CSV tables ('.' decimal separator, ','
delimiter, header row). Per-row estimator seeds derive from the global seed by
stable hashing of (format, spans, power index), so reruns are bit-identical
and rows are independent streams.

Exit codes: 0 success, 1 config error, 2 runtime/numerical error.
"""

from __future__ import annotations

import argparse
import hashlib
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .autoenc import TrainConfig, train, write_decoder
from .config import ExperimentConfig, dbm_to_mw, parse_config
from .constellation import (
    Constellation,
    gray_penalty,
    maxwell_boltzmann,
    moments,
    normalize_power,
    optimize_mb,
    read_constellation,
    square_qam,
    validate_geometry,
    write_constellation,
)
from .errors import ConfigError, GshapeError, ParseError
from .infometrics import AuxChannel, evaluate, mi_mc
from .channel import noise_variance

SWEEP_CSV_HEADER = "spans,power_dbm,format,mi_bits,gmi_bits,stderr_bits,kappa,kappa3,optimal"

REPORT_CSV_HEADER = "spans,mi_gain_geo_bits,mi_gain_ps_bits,gain_ratio,gmi_gain_geo_bits"

MB_NU_CSV_HEADER = "spans,power_dbm,nu"

LOSS_CSV_HEADER = "step,loss_nats_per_bit,rate_bits"


def derive_seed(global_seed: int, *parts) -> int:
    """Stable 63-bit stream seed from the global seed and a tag tuple."""
    text = "|".join([str(global_seed), *[str(p) for p in parts]])
    digest = hashlib.blake2b(text.encode("ascii"), digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1


def _fmt(value: float | None) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return f"{value:.12g}"


@dataclass
class SweepRow:
    spans: int
    power_dbm: float
    format_id: str
    mi_bits: float | None
    gmi_bits: float | None
    stderr_bits: float | None
    kappa: float | None
    kappa3: float | None
    optimal: bool = False
    valid: bool = True

    def csv_row(self) -> str:
        return ",".join(
            [
                str(self.spans),
                _fmt(self.power_dbm),
                self.format_id,
                _fmt(self.mi_bits),
                _fmt(self.gmi_bits),
                _fmt(self.stderr_bits),
                _fmt(self.kappa),
                _fmt(self.kappa3),
                "1" if self.optimal else "0",
            ]
        )


def _mark_optimal(rows: list[SweepRow]) -> None:
    """Set exactly one optimal flag per (format, spans) group at max MI.

    Rows arrive in ascending power order, so keeping strict improvements only
    breaks ties toward the lower power.
    """
    groups: dict[tuple[str, int], SweepRow] = {}
    for row in rows:
        if not row.valid or row.mi_bits is None:
            continue
        key = (row.format_id, row.spans)
        cur = groups.get(key)
        if cur is None or row.mi_bits > cur.mi_bits:
            groups[key] = row
    for row in groups.values():
        row.optimal = True


def _write_rows(path: Path, header: str, rows) -> None:
    lines = [header]
    lines.extend(r if isinstance(r, str) else r.csv_row() for r in rows)
    path.write_text("\n".join(lines) + "\n", encoding="ascii")


def run_train(cfg: ExperimentConfig, out_dir: Path) -> list[Path]:
    """Train one shape per configured spans value; write shape, decoder, history."""
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    ts = cfg.train
    for spans in ts.spans_list:
        channel = cfg.channel.params(spans=spans)
        tc = TrainConfig(
            order=ts.order,
            channel=channel,
            batch_size=ts.batch_size,
            steps=ts.steps,
            learning_rate=ts.learning_rate,
            seed=derive_seed(cfg.seed, "train", ts.order, spans),
            hidden_width=ts.hidden_width,
            restarts=ts.restarts,
        )
        result = train(tc)
        stem = f"geo_m{ts.order}_s{spans}"
        shape_path = out_dir / f"{stem}.txt"
        write_constellation(result.constellation, shape_path)
        write_decoder(result.params, out_dir / f"{stem}_decoder.txt")
        _write_rows(
            out_dir / f"{stem}_loss.csv",
            LOSS_CSV_HEADER,
            (
                f"{rec.step},{rec.bce_nats_per_bit:.12g},{rec.rate_bits:.12g}"
                for rec in result.history
            ),
        )
        written.append(shape_path)
        print(f"trained {stem}: best restart {result.best_restart}, "
              f"validation rate {max(r for r in result.restart_rates if not math.isnan(r)):.4f} bits")
    return written


def _sweep_formats(
    cfg: ExperimentConfig,
    formats: list[tuple[str, Constellation]],
    samples: int,
) -> tuple[list[SweepRow], bool]:
    rows: list[SweepRow] = []
    had_errors = False
    grid = cfg.sweep.power_dbm_grid
    for format_id, c in formats:
        for spans in cfg.sweep.spans_list:
            for p_idx, power_dbm in enumerate(grid):
                params = cfg.channel.params(spans=spans, power_dbm=power_dbm)
                seed = derive_seed(cfg.seed, format_id, spans, p_idx)
                try:
                    report = evaluate(c, params, samples, seed)
                    mom = moments(c)
                    rows.append(
                        SweepRow(
                            spans=spans,
                            power_dbm=power_dbm,
                            format_id=format_id,
                            mi_bits=report.mi_bits,
                            gmi_bits=report.gmi_bits,
                            stderr_bits=report.mc_std_error_bits,
                            kappa=mom.kappa,
                            kappa3=mom.kappa3,
                        )
                    )
                except GshapeError as exc:
                    had_errors = True
                    print(f"row failed ({format_id}, spans={spans}, "
                          f"{power_dbm} dBm): {exc}", file=sys.stderr)
                    rows.append(
                        SweepRow(spans, power_dbm, format_id, None, None, None,
                                 None, None, valid=False)
                    )
    return rows, had_errors


def run_sweep(
    cfg: ExperimentConfig,
    shape_paths: list[Path],
    out_dir: Path,
    samples: int,
) -> tuple[list[SweepRow], bool]:
    """Evaluate each constellation file over the (spans, power) grid."""
    out_dir.mkdir(parents=True, exist_ok=True)
    formats: list[tuple[str, Constellation]] = []
    for path in shape_paths:
        c = read_constellation(path)
        validate_geometry(c)
        formats.append((Path(path).stem, normalize_power(c)))
    rows, had_errors = _sweep_formats(cfg, formats, samples)
    _mark_optimal(rows)
    _write_rows(out_dir / "sweep.csv", SWEEP_CSV_HEADER, rows)
    return rows, had_errors


def run_baseline(
    cfg: ExperimentConfig, out_dir: Path, samples: int
) -> tuple[list[SweepRow], bool]:
    """Emit the square-QAM file and rows, plus MB-shaped MI rows when requested.

    The shaped baseline optimizes nu per (spans, power) by exhaustive grid
    search with golden-section refinement, then reports MI at the full sample
    budget; its GMI column stays empty (uniform-prior metric only).
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    order = cfg.baselines.order
    qam = square_qam(order)
    rows: list[SweepRow] = []
    nu_rows: list[str] = []
    had_errors = False

    if "square_qam" in cfg.baselines.formats:
        qam_path = out_dir / f"qam{order}.txt"
        write_constellation(qam, qam_path)
        qam_rows, errs = _sweep_formats(cfg, [(f"qam{order}", qam)], samples)
        rows.extend(qam_rows)
        had_errors |= errs

    if "mb_ps" in cfg.baselines.formats:
        format_id = f"mb_ps_{order}"
        for spans in cfg.sweep.spans_list:
            for p_idx, power_dbm in enumerate(cfg.sweep.power_dbm_grid):
                params = cfg.channel.params(spans=spans, power_dbm=power_dbm)
                seed = derive_seed(cfg.seed, format_id, spans, p_idx)
                try:
                    nu, pmf = optimize_mb(
                        qam, params, cfg.baselines.nu_grid,
                        n_samples=cfg.baselines.mb_samples,
                        seed=derive_seed(cfg.seed, format_id, spans, p_idx, "opt"),
                    )
                    shaped = normalize_power(qam, pmf)
                    mom = moments(shaped, pmf)
                    aux = AuxChannel(noise_variance(params, mom), params.launch_power_mw)
                    mi, stderr = mi_mc(shaped, pmf, aux, samples, np.random.default_rng(seed))
                    rows.append(
                        SweepRow(spans, power_dbm, format_id, mi, None, stderr,
                                 mom.kappa, mom.kappa3)
                    )
                    nu_rows.append(f"{spans},{_fmt(power_dbm)},{_fmt(nu)}")
                except GshapeError as exc:
                    had_errors = True
                    print(f"row failed ({format_id}, spans={spans}, "
                          f"{power_dbm} dBm): {exc}", file=sys.stderr)
                    rows.append(
                        SweepRow(spans, power_dbm, format_id, None, None, None,
                                 None, None, valid=False)
                    )
        _write_rows(out_dir / "mb_nu.csv", MB_NU_CSV_HEADER, nu_rows)

    _mark_optimal(rows)
    _write_rows(out_dir / "baseline_sweep.csv", SWEEP_CSV_HEADER, rows)
    return rows, had_errors


def _read_sweep_rows(paths: list[Path]) -> list[SweepRow]:
    rows: list[SweepRow] = []
    for path in paths:
        try:
            lines = Path(path).read_text(encoding="ascii").splitlines()
        except OSError as exc:
            raise ConfigError(f"cannot read sweep CSV {path}: {exc}") from exc
        if not lines or lines[0] != SWEEP_CSV_HEADER:
            raise ConfigError(f"{path}: missing or wrong sweep CSV header")
        for lineno, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            parts = line.split(",")
            if len(parts) != 9:
                raise ConfigError(f"{path}:{lineno}: expected 9 columns")
            def opt_float(s: str) -> float | None:
                return float(s) if s else None
            rows.append(
                SweepRow(
                    spans=int(parts[0]),
                    power_dbm=float(parts[1]),
                    format_id=parts[2],
                    mi_bits=opt_float(parts[3]),
                    gmi_bits=opt_float(parts[4]),
                    stderr_bits=opt_float(parts[5]),
                    kappa=opt_float(parts[6]),
                    kappa3=opt_float(parts[7]),
                    optimal=parts[8] == "1",
                    valid=bool(parts[3]),
                )
            )
    return rows


def _classify(format_id: str) -> str:
    if format_id.startswith("qam"):
        return "qam"
    if format_id.startswith("mb_ps"):
        return "ps"
    return "geo"


def run_report(csv_paths: list[Path], out_dir: Path) -> list[str]:
    """Per spans value: MI/GMI gains of the geometric shapes and the PS baseline over QAM.

    Uses each format's optimal-power row; the geometric value at a distance is
    the best across the supplied trained shapes. Gains are plain differences,
    so comparing a format against itself yields exactly zero and swapping two
    formats flips the sign.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [r for r in _read_sweep_rows(csv_paths) if r.optimal and r.valid]
    by_spans: dict[int, dict[str, list[SweepRow]]] = {}
    for row in rows:
        by_spans.setdefault(row.spans, {}).setdefault(_classify(row.format_id), []).append(row)

    missing: list[str] = []
    report_rows: list[str] = []
    for spans in sorted(by_spans):
        classes = by_spans[spans]
        absent = [name for name in ("geo", "qam", "ps") if name not in classes]
        if absent:
            missing.append(f"spans={spans}: missing {', '.join(absent)}")
            continue
        qam_row = max(classes["qam"], key=lambda r: r.mi_bits)
        geo_row = max(classes["geo"], key=lambda r: r.mi_bits)
        ps_row = max(classes["ps"], key=lambda r: r.mi_bits)
        mi_gain_geo = geo_row.mi_bits - qam_row.mi_bits
        mi_gain_ps = ps_row.mi_bits - qam_row.mi_bits
        ratio = mi_gain_geo / mi_gain_ps if mi_gain_ps != 0.0 else float("nan")
        if geo_row.gmi_bits is None or qam_row.gmi_bits is None:
            gmi_gain = None
        else:
            gmi_gain = geo_row.gmi_bits - qam_row.gmi_bits
        report_rows.append(
            f"{spans},{_fmt(mi_gain_geo)},{_fmt(mi_gain_ps)},"
            f"{'nan' if math.isnan(ratio) else _fmt(ratio)},{_fmt(gmi_gain)}"
        )
    if missing:
        raise ConfigError("report needs geometric, QAM and PS rows; " + "; ".join(missing))
    _write_rows(out_dir / "report.csv", REPORT_CSV_HEADER, report_rows)
    for line in report_rows:
        print(line)
    return report_rows


def run_export(shape_paths: list[Path], out_dir: Path) -> list[Path]:
    """Dump point tables as plot-ready CSVs and print per-shape summaries."""
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for path in shape_paths:
        c = read_constellation(path)
        validate_geometry(c)
        stem = Path(path).stem
        lines = ["index,bits,re,im"]
        labels = c.labels()
        for i, point in enumerate(c.points):
            bits = "".join(str(b) for b in labels[i])
            lines.append(f"{i},{bits},{point.real:.17g},{point.imag:.17g}")
        out_path = out_dir / f"{stem}_points.csv"
        out_path.write_text("\n".join(lines) + "\n", encoding="ascii")
        mom = moments(c)
        print(f"{stem}: M={c.order} kappa={mom.kappa:.6g} kappa3={mom.kappa3:.6g} "
              f"gray_penalty={gray_penalty(c):.6g}")
        written.append(out_path)
    return written


def _load_config(args) -> ExperimentConfig:
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg = ExperimentConfig(
            seed=args.seed,
            channel=cfg.channel,
            train=cfg.train,
            sweep=cfg.sweep,
            baselines=cfg.baselines,
        )
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gshape",
        description="Learn and evaluate geometric constellation shapes with bit labelings.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="experiment config file")
            p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default="out", help="output directory (default: ./out)")

    p_train = sub.add_parser("train", help="train shapes for the configured spans values")
    add_common(p_train)

    p_sweep = sub.add_parser("sweep", help="evaluate constellation files over the power/spans grid")
    add_common(p_sweep)
    p_sweep.add_argument("shapes", nargs="+", help="constellation files")
    p_sweep.add_argument("--samples", type=int, default=None, help="MC samples per row")

    p_base = sub.add_parser("baseline", help="emit square-QAM and MB-shaped baseline rows")
    add_common(p_base)
    p_base.add_argument("--samples", type=int, default=None, help="MC samples per row")

    p_report = sub.add_parser("report", help="summarize shaping gains from sweep CSVs")
    p_report.add_argument("csvs", nargs="+", help="sweep CSV files")
    p_report.add_argument("--out", default="out")

    p_export = sub.add_parser("export", help="dump constellation files as point CSVs")
    p_export.add_argument("shapes", nargs="+", help="constellation files")
    p_export.add_argument("--out", default="out")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out_dir = Path(args.out)
    try:
        if args.command == "train":
            run_train(_load_config(args), out_dir)
            return 0
        if args.command == "sweep":
            cfg = _load_config(args)
            samples = args.samples if args.samples is not None else cfg.sweep.samples
            _, had_errors = run_sweep(cfg, [Path(p) for p in args.shapes], out_dir, samples)
            return 2 if had_errors else 0
        if args.command == "baseline":
            cfg = _load_config(args)
            samples = args.samples if args.samples is not None else cfg.sweep.samples
            _, had_errors = run_baseline(cfg, out_dir, samples)
            return 2 if had_errors else 0
        if args.command == "report":
            run_report([Path(p) for p in args.csvs], out_dir)
            return 0
        if args.command == "export":
            run_export([Path(p) for p in args.shapes], out_dir)
            return 0
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except GshapeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
