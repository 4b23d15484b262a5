"""Command line entry point: ``trapping <verb> --config FILE --seed INT --out DIR``.

Verbs match experiment kinds.  ``--preset NAME`` replaces ``--config`` with a
canned scenario, ``--dry-run`` prints the resolved config and exits.  Invalid
configs exit with status 2 and a ``file:line:`` message.
"""
from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .errors import ConfigurationError
from .harness import KINDS, OUT_DIR_ENV, PRESETS, ConfigError, load_config, output_dir, preset, render_config, resolve, run_experiment


def _parser():
    ap = argparse.ArgumentParser(prog="trapping", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("verb", choices=KINDS, help="experiment kind to run")
    src = ap.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", metavar="FILE", help="INI experiment config")
    src.add_argument("--preset", choices=PRESETS, help="canned experiment config")
    ap.add_argument("--seed", type=int, metavar="INT", help="master seed (overrides the config)")
    ap.add_argument("--out", metavar="DIR", help=f"output directory (overrides ${OUT_DIR_ENV} and the config)")
    ap.add_argument("--dry-run", action="store_true", help="print the resolved config and exit")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = preset(args.preset) if args.preset else load_config(args.config)
        if cfg.kind != args.verb:
            raise ConfigError(
                f"config describes a {cfg.kind!r} experiment but the verb is {args.verb!r}",
                source=cfg.source,
                line=cfg.line_of("experiment", "kind"),
            )
        if args.seed is not None:
            cfg.master_seed = args.seed
        params = resolve(cfg)
        if args.dry_run:
            out, env = output_dir(cfg, args.out) if (args.out or cfg.out_dir) else (None, None)
            sys.stdout.write(render_config(cfg))
            shown = {k: (v if isinstance(v, (int, float, str, bool, list, type(None))) else repr(v)) for k, v in params.items()}
            sys.stdout.write("\n# resolved\n" + json.dumps(shown, indent=2, sort_keys=True) + "\n")
            if out is not None:
                sys.stdout.write(f"# output directory: {out}\n")
            return 0
        result = run_experiment(cfg, args.out)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # the FAILED marker records the traceback
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {len(result.files)} files to {result.out_dir}")
    print(json.dumps(result.summary, indent=2, sort_keys=True, default=str))
    return result.status


if __name__ == "__main__":
    sys.exit(main())
