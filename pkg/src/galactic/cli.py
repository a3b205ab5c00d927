"""Command-line entry point.

Failures print one line ``error[CODE]: message`` to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

from . import pipeline
from .config import RunConfig
from .errors import GalacticError

EXIT_ERROR = 1
EXIT_USAGE = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _fail("E_USAGE", message, EXIT_USAGE)


def _fail(code: str, message: str, status: int = EXIT_ERROR):
    line = " ".join(str(message).split())
    print(f"error[{code}]: {line}", file=sys.stderr)
    raise SystemExit(status)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="run configuration (JSON)")
    common.add_argument("--seed", type=int, metavar="N", help="override the configured seed")
    common.add_argument("--out", metavar="DIR", help="override the configured output directory")
    common.add_argument("--strip-timing", action="store_true",
                        help="omit runtime fields so outputs are byte-comparable")

    p = _Parser(prog="galactic", description="Counterfactual explanations for time-series clusters.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("train", parents=[common], help="train the surrogate classifier")
    sub.add_parser("segment", parents=[common], help="segment clusters into subgroups")
    sub.add_parser("explain-local", parents=[common], help="per-instance counterfactuals")
    sub.add_parser("explain-global", parents=[common], help="per-cluster MDL summaries")
    ev = sub.add_parser("evaluate", parents=[common], help="join reports into a comparison CSV")
    ev.add_argument("reports", nargs="*", metavar="REPORT",
                    help="report files (default: local and global reports in the output dir)")
    sub.add_parser("selftest", parents=[common], help="end-to-end run on a synthetic corpus")
    return p


def load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.surrogate.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    return cfg


def selftest(cfg: RunConfig, strip: bool) -> int:
    """Train and explain on the synthetic bump corpus; nonzero if a target is missed."""
    from .dataset import save_ucr
    from .synthetic import bump_corpus

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = out / "bump.tsv"
    save_ucr(bump_corpus(seed=cfg.seed), data)
    cfg.dataset.path = str(data)
    cfg.dataset.normalize = False
    tr = pipeline.cmd_train(cfg, strip)
    loc = pipeline.cmd_explain_local(cfg, strip)
    glob = pipeline.cmd_explain_global(cfg, strip)
    checks = [
        ("surrogate accuracy >= 0.95", tr["full_accuracy"] >= 0.95),
        ("local eff >= 90", loc["report"]["eff"] >= 90.0),
        ("global eff > 0", glob["report"]["eff"] > 0.0),
    ]
    for name, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return 0 if all(ok for _, ok in checks) else EXIT_ERROR


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = load_config(args)
    strip = args.strip_timing
    cmd = args.command
    if cmd == "train":
        rep = pipeline.cmd_train(cfg, strip)
        print(f"trained surrogate: train accuracy {rep['train_accuracy']:.4f} -> "
              f"{pipeline.out_path(cfg, pipeline.MODEL_FILE)}")
    elif cmd == "segment":
        out = pipeline.cmd_segment(cfg, strip)
        print("subgroups per cluster: " + ", ".join(f"{c['cluster_id']}:{c['R']}" for c in out["clusters"]))
    elif cmd == "explain-local":
        out = pipeline.cmd_explain_local(cfg, strip)
        r = out["report"]
        print(f"local eff {r['eff']:.2f}% over {r['n_attempts']} instances")
    elif cmd == "explain-global":
        out = pipeline.cmd_explain_global(cfg, strip)
        for w in out["warnings"]:
            print(f"warning: {w}", file=sys.stderr)
        print(f"global eff {out['report']['eff']:.2f}% ({cfg.global_.algorithm})")
    elif cmd == "evaluate":
        paths = args.reports or [pipeline.out_path(cfg, pipeline.LOCAL_REPORT),
                                 pipeline.out_path(cfg, pipeline.GLOBAL_REPORT)]
        sys.stdout.write(pipeline.cmd_evaluate(cfg, paths, strip))
    elif cmd == "selftest":
        return selftest(cfg, strip)
    return 0


def main(argv=None) -> int:
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return run(argv)
    except GalacticError as exc:
        _fail(exc.code, str(exc))
    except FileNotFoundError as exc:
        _fail("E_IO", f"file not found: {exc.filename or exc}")
    except OSError as exc:
        _fail("E_IO", str(exc))
    except Exception as exc:  # last resort: keep the one-line contract
        _fail("E_INTERNAL", f"{type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
