"""Command-line front end.

Subcommands: ``oracle-bench``, ``analyze-masks``, ``train-toy``,
``separate``, ``eval``.  Options resolve as flags > config file >
``MASKBENCH_SEED`` (seed only) > defaults, the fully resolved
configuration is echoed, and every text artifact starts with a
provenance header carrying the tool version, a hash of that resolved
configuration, and the seed.

On failure every command prints a single line ``error: <category>:
<message>`` to stderr and exits nonzero.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from maskbench import __version__, masks
from maskbench.audio_io import WavFormatError, load_stem_set, read_wav, write_wav
from maskbench.dsp import StftConfig, Waveform, stft
from maskbench.evaluate import oracle_benchmark, parse_variants, sdr, windowed_median_sdr
from maskbench.net.models import NetConfig, build_resunet143, build_unet33
from maskbench.net.pipeline import separate as run_separation
from maskbench.net.training import TOY_STFT, TOY_WIDTHS, toy_net_config, train_toy
from maskbench.net.weights_io import WeightsFormatError, load_weights, save_weights

DEFAULT_VARIANTS_TEXT = "mixture,ibm,irm:1,irm:inf,cirm:1,cirm:2,cirm:5,cirm:10,cirm:inf"


class CliError(Exception):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(f"error: usage: {message}", file=sys.stderr)
        raise SystemExit(2)


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _read_config_file(path: str) -> dict[str, str]:
    entries: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise CliError("config", f"{path}:{lineno}: expected key=value, got {stripped!r}")
        key, _, value = stripped.partition("=")
        entries[key.strip().replace("-", "_")] = value.strip()
    return entries


def _resolve_options(args: argparse.Namespace, option_types: dict[str, type]) -> dict:
    """flags > config file > environment (seed) > built-in defaults."""
    resolved = dict(_DEFAULTS[args.command])
    if "seed" in resolved and os.environ.get("MASKBENCH_SEED"):
        resolved["seed"] = int(os.environ["MASKBENCH_SEED"])
    if args.config:
        for key, text in _read_config_file(args.config).items():
            if key not in resolved:
                raise CliError("config", f"unknown config key {key!r} for {args.command}")
            caster = option_types[key]
            try:
                resolved[key] = caster(text) if caster is not bool else _parse_bool(text)
            except ValueError as exc:
                raise CliError("config", f"bad value for {key!r}: {exc}") from exc
    for key in resolved:
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
    return resolved


def _config_hash(resolved: dict) -> str:
    text = "\n".join(f"{k}={resolved[k]}" for k in sorted(resolved))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


def _echo_config(resolved: dict) -> str:
    digest = _config_hash(resolved)
    print(f"maskbench {__version__} (config {digest})")
    for key in sorted(resolved):
        print(f"  {key} = {resolved[key]}")
    return digest


def _provenance(digest: str, seed) -> str:
    return f"maskbench {__version__} config={digest} seed={seed}"


def _stft_config(resolved: dict) -> StftConfig:
    return StftConfig(
        window_size=resolved["window"],
        hop_size=resolved["hop"],
        center_pad=resolved["center_pad"],
    )


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_oracle_bench(args) -> int:
    resolved = _resolve_options(args, _TYPES["oracle-bench"])
    digest = _echo_config(resolved)
    stems = load_stem_set(args.stem_dir)
    if len(stems) < 2:
        raise CliError(
            "missing-stems",
            f"{args.stem_dir}: oracle benchmark needs at least 2 stems, found {sorted(stems)}",
        )
    variants = parse_variants(resolved["variants"])
    report = oracle_benchmark(
        stems,
        variants,
        _stft_config(resolved),
        eps=resolved["eps"],
        aggregation=resolved["aggregation"],
        window_s=resolved["window_s"],
    )
    out_dir = Path(resolved["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    header = _provenance(digest, resolved["seed"])
    with open(out_dir / "oracle_bench.csv", "w") as f:
        f.write(f"# {header}\n")
        report.to_csv(f)
    table = report.to_table()
    (out_dir / "oracle_bench.txt").write_text(f"# {header}\n{table}\n")
    print(table)
    return 0


def cmd_analyze_masks(args) -> int:
    resolved = _resolve_options(args, _TYPES["analyze-masks"])
    digest = _echo_config(resolved)
    stems = load_stem_set(args.stem_dir)
    cfg = _stft_config(resolved)
    names = list(stems)
    mixture = Waveform(sum(stems[n].data for n in names), stems[names[0]].sample_rate)
    X = stft(mixture, cfg)

    header = _provenance(digest, resolved["seed"])
    out_dir = Path(resolved["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    samples: dict[str, np.ndarray] = {}
    with open(out_dir / "mask_stats.jsonl", "w") as f:
        f.write(json.dumps({"provenance": header, "floor_db": resolved["floor_db"]}) + "\n")
        for name in names:
            S = stft(stems[name], cfg)
            M = masks.compute_cirm(S, X, eps=resolved["eps"])
            stats = masks.mask_stats(M, X, energy_floor_db=resolved["floor_db"], seed=resolved["seed"])
            samples[name] = stats.scatter_sample
            f.write(json.dumps({
                "source": name,
                "total_bins": stats.total_bins,
                "bins_over_unit": stats.bins_over_unit,
                "fraction_over_unit": stats.fraction_over_unit,
                "magnitude_percentiles": {str(k): v for k, v in stats.magnitude_percentiles.items()},
                "angle_histogram": stats.angle_histogram.tolist(),
            }) + "\n")
            print(f"{name}: fraction_over_unit={stats.fraction_over_unit:.4f} "
                  f"({stats.bins_over_unit}/{stats.total_bins} bins)")
    with open(out_dir / "mask_scatter.csv", "w") as f:
        f.write(f"# {header}\n")
        masks.write_scatter_csv(f, samples)
    if resolved["svg"]:
        svg = masks.render_scatter_svg(samples, comment=header)
        (out_dir / "mask_scatter.svg").write_text(svg)
    return 0


def cmd_train_toy(args) -> int:
    resolved = _resolve_options(args, _TYPES["train-toy"])
    digest = _echo_config(resolved)
    header = _provenance(digest, resolved["seed"])
    model = build_unet33(toy_net_config(seed=resolved["seed"]))
    log_rows: list[tuple[int, float]] = []
    result = train_toy(
        model,
        steps=resolved["steps"],
        seed=resolved["seed"],
        base_lr=resolved["lr"],
        batch_size=resolved["batch_size"],
        log=lambda step, loss: log_rows.append((step, loss)),
    )
    weights_path = Path(resolved["out"])
    weights_path.parent.mkdir(parents=True, exist_ok=True)
    save_weights(weights_path, model.state_tensors())
    with open(resolved["loss_log"], "w") as f:
        f.write(f"# {header}\n")
        f.write("step,loss\n")
        for step, loss in log_rows:
            f.write(f"{step},{loss!r}\n")
    print(f"initial_loss={result.initial_loss:.6f} final_loss={result.final_loss:.6f}")
    print(f"weights written to {weights_path}")
    return 0


def _build_model(resolved: dict, in_channels: int):
    widths = tuple(int(w) for w in str(resolved["widths"]).split(",") if w.strip())
    window = resolved["window"]
    bins = window // 2 + 1
    freq_bins = bins + (-bins) % 2 ** len(widths)
    cfg = NetConfig(
        variant=resolved["variant"],
        in_channels=in_channels,
        widths=widths,
        freq_bins=freq_bins,
        seed=resolved["seed"],
    )
    if resolved["arch"] == "unet33":
        return build_unet33(cfg)
    if resolved["arch"] == "resunet143":
        return build_resunet143(cfg)
    raise CliError("invalid-input", f"unknown arch {resolved['arch']!r}")


def cmd_separate(args) -> int:
    resolved = _resolve_options(args, _TYPES["separate"])
    _echo_config(resolved)
    mixture = read_wav(args.mixture_wav)
    model = _build_model(resolved, mixture.channels)
    model.load_state_tensors(load_weights(args.weights))
    estimate = run_separation(model, mixture, _stft_config(resolved))
    write_wav(args.out_wav, estimate, bit_depth=32)
    print(f"separated waveform written to {args.out_wav}")
    return 0


def cmd_eval(args) -> int:
    resolved = _resolve_options(args, _TYPES["eval"])
    _echo_config(resolved)
    reference = read_wav(args.ref_wav)
    estimate = read_wav(args.est_wav)
    global_sdr = sdr(reference, estimate, eps=resolved["eps"])
    print(f"global_sdr_db={global_sdr:.4f}")
    try:
        median_sdr = windowed_median_sdr(reference, estimate, resolved["window_s"], eps=resolved["eps"])
        print(f"windowed_median_sdr_db={median_sdr:.4f}")
    except ValueError as exc:  # signal shorter than one window
        print(f"windowed_median_sdr_db=nan  # {exc}")
    return 0


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

_DEFAULTS: dict[str, dict] = {
    "oracle-bench": dict(variants=DEFAULT_VARIANTS_TEXT, out=".", window=2048, hop=441,
                         center_pad=True, eps=1e-10, aggregation="global", window_s=1.0, seed=0),
    "analyze-masks": dict(out=".", floor_db=-60.0, svg=True, window=2048, hop=441,
                          center_pad=True, eps=1e-10, seed=0),
    "train-toy": dict(steps=200, lr=3e-3, batch_size=2, out="toy_model.mbwt",
                      loss_log="toy_loss.csv", seed=0),
    "separate": dict(arch="unet33", variant="decouple_plus",
                     widths=",".join(str(w) for w in TOY_WIDTHS),
                     window=TOY_STFT.window_size, hop=TOY_STFT.hop_size, center_pad=True, seed=0),
    "eval": dict(eps=1e-10, window_s=1.0, seed=0),
}

_TYPES: dict[str, dict[str, type]] = {
    cmd: {key: type(value) for key, value in defaults.items()} for cmd, defaults in _DEFAULTS.items()
}


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="key=value config file; flags override it")
    sub.add_argument("--seed", type=int, help="RNG seed (fallback: MASKBENCH_SEED env var)")


def _add_stft_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--window", type=int, help="STFT window size in samples")
    sub.add_argument("--hop", type=int, help="STFT hop size in samples")
    sub.add_argument("--center-pad", dest="center_pad", action="store_const", const=True,
                     help="center frames on the hop grid (default)")
    sub.add_argument("--no-center-pad", dest="center_pad", action="store_const", const=False)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="maskbench", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"maskbench {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("oracle-bench", parents=[], help="oracle mask upper-bound SDR table")
    p.add_argument("stem_dir")
    p.add_argument("--variants", help=f"comma list, default {DEFAULT_VARIANTS_TEXT}")
    p.add_argument("--out", help="output directory")
    p.add_argument("--eps", type=float)
    p.add_argument("--aggregation", choices=["global", "windowed_median"])
    p.add_argument("--window-s", dest="window_s", type=float, help="windowed-median window (s)")
    _add_stft_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_oracle_bench)

    p = subs.add_parser("analyze-masks", help="complex-mask distribution stats and scatter")
    p.add_argument("stem_dir")
    p.add_argument("--out", help="output directory")
    p.add_argument("--floor-db", dest="floor_db", type=float,
                   help="energy floor below peak |X| for counted bins")
    p.add_argument("--svg", dest="svg", action="store_const", const=True, help="write scatter SVG (default)")
    p.add_argument("--no-svg", dest="svg", action="store_const", const=False)
    p.add_argument("--eps", type=float)
    _add_stft_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_analyze_masks)

    p = subs.add_parser("train-toy", help="seeded toy training run; writes weights + loss log")
    p.add_argument("--steps", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--out", help="weights file path")
    p.add_argument("--loss-log", dest="loss_log", help="loss CSV path")
    _add_common(p)
    p.set_defaults(func=cmd_train_toy)

    p = subs.add_parser("separate", help="run the separation pipeline with trained weights")
    p.add_argument("weights")
    p.add_argument("mixture_wav")
    p.add_argument("out_wav")
    p.add_argument("--arch", choices=["unet33", "resunet143"])
    p.add_argument("--variant", choices=["mask", "decouple", "decouple_plus"])
    p.add_argument("--widths", help="comma list of encoder widths (must match the weights)")
    _add_stft_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_separate)

    p = subs.add_parser("eval", help="SDR of an estimate against a reference")
    p.add_argument("ref_wav")
    p.add_argument("est_wav")
    p.add_argument("--eps", type=float)
    p.add_argument("--window-s", dest="window_s", type=float)
    _add_common(p)
    p.set_defaults(func=cmd_eval)
    return parser


_ERROR_CATEGORIES = [
    (CliError, None),
    (WavFormatError, "wav-format"),
    (WeightsFormatError, "weights-format"),
    (FileNotFoundError, "missing-input"),
    (ValueError, "invalid-input"),
    (RuntimeError, "runtime"),
    (OSError, "io"),
]


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - single reporting point
        for kind, category in _ERROR_CATEGORIES:
            if isinstance(exc, kind):
                label = category or getattr(exc, "category", "error")
                print(f"error: {label}: {exc}", file=sys.stderr)
                return 1
        print(f"error: internal: {exc!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
