"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 quantization collision.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

from . import __version__
from .airate import (
    QuadratureConfig,
    air_exponential,
    capacity_upper,
    high_snr_asymptote,
    mi_discrete,
    mi_discrete_mc,
    sweep_csv,
)
from .constellation import DEFAULT_EXTRA_BITS, approx_gain_db, build_shaped, db_to_linear, pam, scaling_gain_db
from .errors import CollisionError, ConfigError, DomainError, NumericalError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_COLLISION = 4


def parse_grid(text: str) -> list[float]:
    """Inclusive ``a:step:b`` grid, or a single number."""
    parts = text.split(":")
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise ConfigError(f"--snr-db: cannot parse {text!r}") from None
    if len(vals) == 1:
        return vals
    if len(vals) != 3:
        raise ConfigError(f"--snr-db: expected a:step:b, got {text!r}")
    a, step, b = vals
    if step <= 0 or b < a:
        raise ConfigError("--snr-db: need step > 0 and b >= a")
    count = math.floor((b - a) / step + 1e-9)
    return [round(a + i * step, 10) for i in range(count + 1)]


def _sibling(path: Path, suffix: str) -> Path:
    return path.with_name(path.stem + suffix)


def _write_manifest(out: Path, subcommand: str, params: dict, outputs: list[Path], extra=None):
    man = {
        "tool": "ois-shape",
        "version": __version__,
        "subcommand": subcommand,
        "parameters": params,
        "outputs": [str(p) for p in outputs],
    }
    if extra:
        man.update(extra)
    target = _sibling(out, ".manifest.json")
    target.write_text(json.dumps(man, indent=2) + "\n")
    return target


def cmd_gen(args) -> int:
    try:
        design = build_shaped(args.m_bits, args.extra_bits, args.energy)
    except CollisionError as exc:
        print(f"collision: {exc}", file=sys.stderr)
        return EXIT_COLLISION
    print("ell_m: " + " ".join(str(v) for v in design.integer_levels))
    print(f"Delta: {design.basic_level!r}")
    if args.out:
        out = Path(args.out)
        out.write_text(design.to_csv())
        js = _sibling(out, ".json")
        js.write_text(design.to_json() + "\n")
        params = {"m_bits": args.m_bits, "extra_bits": args.extra_bits, "energy": args.energy}
        _write_manifest(out, "gen", params, [out, js])
    return EXIT_OK


def cmd_gain(args) -> int:
    if args.m_min < 2 or args.m_max < args.m_min or args.step < 1:
        raise ConfigError("gain: need 2 <= m-min <= m-max and step >= 1")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["M", "g_db", "approx_g_db"])
    for m in range(args.m_min, args.m_max + 1, args.step):
        w.writerow([m, repr(scaling_gain_db(m)), repr(approx_gain_db(m))])
    _emit(args, buf.getvalue(), "gain", {"m_min": args.m_min, "m_max": args.m_max, "step": args.step})
    return EXIT_OK


def _emit(args, text, subcommand, params, extra=None):
    if args.out:
        out = Path(args.out)
        out.write_text(text)
        _write_manifest(out, subcommand, params, [out], extra)
    else:
        sys.stdout.write(text)


def cmd_air(args) -> int:
    grid = parse_grid(args.snr_db)
    which = {"pam", "shaped", "exp", "bounds"} if args.which == "all" else {args.which}
    m_size = 2**args.m_bits
    cfg = QuadratureConfig()
    const = {}
    if "pam" in which:
        const["r_pam"] = pam(m_size, 1.0)
    if "shaped" in which:
        try:
            const["r_shaped"] = build_shaped(args.m_bits, args.extra_bits, 1.0).constellation
        except CollisionError as exc:
            print(f"collision: {exc}", file=sys.stderr)
            return EXIT_COLLISION
    cols: dict[str, list] = {name: [] for name in const}
    if "exp" in which:
        cols["i_exp"] = []
    if "bounds" in which:
        cols["c_upper"] = []
        cols["c_asymptote"] = []
    failed = False
    for k, s in enumerate(grid):
        snr = db_to_linear(s)
        sigma = 1.0 / snr
        for name, c in const.items():
            try:
                if args.mc:
                    val = mi_discrete_mc(c, sigma, args.mc, seed=args.seed + k)[0]
                else:
                    val = mi_discrete(c, sigma, cfg)
            except NumericalError as exc:
                print(f"{name} at {s} dB: {exc}", file=sys.stderr)
                val, failed = None, True
            cols[name].append(val)
        if "exp" in which:
            try:
                cols["i_exp"].append(air_exponential(1.0, sigma, cfg))
            except NumericalError as exc:
                print(f"i_exp at {s} dB: {exc}", file=sys.stderr)
                cols["i_exp"].append(None)
                failed = True
        if "bounds" in which:
            cols["c_upper"].append(capacity_upper(snr))
            cols["c_asymptote"].append(high_snr_asymptote(snr))
    params = {"m_bits": args.m_bits, "extra_bits": args.extra_bits, "snr_db": grid,
              "which": args.which, "mc": args.mc, "seed": args.seed}
    _emit(args, sweep_csv(grid, cols), "air", params)
    return EXIT_NUMERICAL if failed else EXIT_OK


def cmd_simulate(args) -> int:
    from .sim import Link, SimConfig, default_threads, manifest, stats_to_csv, sweep

    path = Path(args.config)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if isinstance(data, dict) and data.get("tool") == "ois-shape" and "config" in data:
        data = data["config"]  # re-run from a manifest
    cfg = SimConfig.from_dict(data, base_dir=path.parent)
    link = Link(cfg)
    threads = args.threads or default_threads()
    if args.dry_run:
        print(f"config ok: n={link.h.n} k={link.k} M={link.constellation.m_size} "
              f"points={len(cfg.snr_grid_db)}")
        return EXIT_OK

    def progress(st):
        print(f"{st.snr_db:8.3f} dB  blocks={st.blocks_run:6d}  errors={st.block_errors:4d}  "
              f"bler={st.bler:.3e}  ber={st.ber:.3e}", file=sys.stderr)

    stats = sweep(cfg, threads=threads, link=link, progress=progress)
    text = stats_to_csv(stats)
    if args.out:
        out = Path(args.out)
        out.write_text(text)
        man = manifest(cfg, link, {"subcommand": "simulate", "outputs": [str(out)]})
        _sibling(out, ".manifest.json").write_text(json.dumps(man, indent=2) + "\n")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ois-shape", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="build a shaped constellation (levels, Delta, CSV/JSON)")
    g.add_argument("--m-bits", type=int, required=True)
    g.add_argument("--extra-bits", type=int, default=DEFAULT_EXTRA_BITS)
    g.add_argument("--energy", type=float, default=1.0)
    g.add_argument("--out", help="CSV path; JSON and manifest are written alongside")
    g.set_defaults(func=cmd_gen)

    g = sub.add_parser("gain", help="shift-and-scale SNR gain and its approximation")
    g.add_argument("--m-min", type=int, default=4)
    g.add_argument("--m-max", type=int, default=128)
    g.add_argument("--step", type=int, default=2)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gain)

    g = sub.add_parser("air", help="achievable-rate curves over an SNR grid")
    g.add_argument("--m-bits", type=int, default=4)
    g.add_argument("--extra-bits", type=int, default=DEFAULT_EXTRA_BITS)
    g.add_argument("--snr-db", default="0:1:30", help="inclusive grid a:step:b (optical SNR, dB)")
    g.add_argument("--which", choices=["pam", "shaped", "exp", "bounds", "all"], default="all")
    g.add_argument("--mc", type=int, default=0, help="use Monte-Carlo with this many samples")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out")
    g.set_defaults(func=cmd_air)

    g = sub.add_parser("simulate", help="coded BER/BLER sweep from a JSON config or manifest")
    g.add_argument("--config", required=True)
    g.add_argument("--out")
    g.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: $OIS_SHAPE_THREADS or CPU count)")
    g.add_argument("--dry-run", action="store_true")
    g.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CollisionError as exc:
        print(f"collision: {exc}", file=sys.stderr)
        return EXIT_COLLISION
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except DomainError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
