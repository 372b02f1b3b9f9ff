"""Command-line entry point.

Exit status 0 on success, 1 when a numerical or geometric assumption fails,
2 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import harness
from .classical import classical_table, default_a_grid
from .config import dump_config, load_config
from .errors import ConfigError, DomainError, LevelHitsSingularLeaf, TangentCrossing
from .harness import ScenarioConfig
from .quantum import assemble_spectrum
from .weylvol import admissible_set, band_volume, weyl_prediction

log = logging.getLogger("weylband")

SUBCOMMANDS = {
    "classical": "tabulate torus invariants (rotation number, action, averages, limit sets)",
    "volume": "admissible torus set, band volume and count predictions",
    "spectrum": "quantum spectrum in the energy window at the finest h",
    "count": "quantum, lattice and volume counts for each h",
    "verify": "counts plus sweep trends and the Monte-Carlo volume check",
    "dampedwave": "damped-wave eigenfrequency count against its prediction",
    "sweep": "counts over an h-sweep with log-log error slopes",
}

ASSUMPTION = {
    TangentCrossing: "transversality assumption failed",
    LevelHitsSingularLeaf: "singular-leaf assumption failed",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _h_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML scenario file (defaults: sphere benchmark)")
    common.add_argument("--h", type=float, help="single semiclassical parameter (overrides h_list)")
    common.add_argument("--h-list", type=_h_list, help="comma-separated, strictly decreasing h values")
    common.add_argument("--eps-exponent", type=float, help="use eps = h^EXPONENT")
    common.add_argument("--grid-n", type=int, help="grid size per angular mode")
    common.add_argument("--output-dir", help="directory for CSV/JSON/SVG outputs")
    common.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")

    parser = _Parser(prog="weylband", description="Weyl laws for damped and non-selfadjoint operators on surfaces of revolution")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, text in SUBCOMMANDS.items():
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


def effective_config(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    changes = {}
    if args.h_list is not None:
        changes["h_list"] = tuple(args.h_list)
    if args.h is not None:
        changes["h_list"] = (args.h,)
    if args.eps_exponent is not None:
        changes["eps_exponent"] = args.eps_exponent
    if args.grid_n is not None:
        changes["grid_n"] = args.grid_n
    if args.output_dir is not None:
        changes["output_dir"] = args.output_dir
    cfg = dataclasses.replace(cfg, **changes)
    cfg.validate()
    return cfg


def _print_rows(report) -> None:
    print(f"{'h':>8} {'eps':>8} {'n_quant':>8} {'n_latt':>8} {'n_pred':>9} {'rel_q':>8} {'strip_q':>8} {'strip_p':>9}")
    for r in report.rows:
        def f(x, spec):
            return format(x, spec) if x is not None else "-"
        print(
            f"{r.h:8.4g} {r.eps:8.4g} {f(r.n_quantum, '8d')} {f(r.n_lattice, '8d')} {r.n_pred:9.3f} "
            f"{f(r.rel_err_quantum_vs_pred, '8.4f')} {f(r.n_strip_quantum, '8d')} {r.n_strip_pred:9.3f}"
        )


def _run(cmd: str, cfg: ScenarioConfig) -> None:
    echo = dump_config(cfg)
    out = cfg.output_dir
    profile = cfg.profile()
    obs = cfg.observable_spec()

    if cmd == "classical":
        table = classical_table(profile, obs, default_a_grid(profile), cfg.classical_config())
        harness.emit_outputs(None, out, classical=table, config_echo=echo)
        for c in table[:: max(1, len(table) // 8)]:
            print(f"a={c.a:+.4f} omega={c.omega:.6f} iota={c.iota:.6f} <q>={c.q_avg:.6f} Qinf=[{c.q_inf.lo:.6f}, {c.q_inf.hi:.6f}]")
        return

    if cmd == "volume":
        A = admissible_set(profile, obs, cfg.F3, cfg.F1, cfg=cfg.classical_config())
        vol = band_volume(profile, A, cfg.E2, cfg.E4)
        body = {"config": cfg.to_dict(), "volume": vol, "admissible_set": harness.admissible_json(A), "per_h": []}
        for h in cfg.h_list:
            p = weyl_prediction(profile, A, cfg.E2, cfg.E4, h)
            body["per_h"].append({"h": h, **dataclasses.asdict(p)})
        if cfg.mc_samples:
            est, err = harness.montecarlo_volume_check(profile, A, cfg.E2, cfg.E4, cfg.mc_samples, cfg.seed)
            body["montecarlo"] = {"estimate": est, "stderr": err, "samples": cfg.mc_samples, "seed": cfg.seed}
        harness.emit_outputs(None, out, config_echo=echo)
        harness._write_json(Path(out) / "prediction.json", body)
        print(f"admissible a-intervals: {A.intervals}")
        print(f"band volume: {vol:.10g}")
        for row in body["per_h"]:
            print(f"h={row['h']:g}: n_pred={row['n_pred']:.4f} n_strip_pred={row['n_strip_pred']:.4f}")
        return

    if cmd == "spectrum":
        h = cfg.h_list[-1]
        spec = assemble_spectrum(profile, obs, h, cfg.eps_for(h), (cfg.E2, cfg.E4), cfg.grid_n, cfg.eig_config())
        report = harness.WeylReport(cfg, spectrum=spec)
        harness.emit_outputs(report, out, config_echo=echo)
        print(f"{len(spec)} eigenvalues with Re z in [{cfg.E2 - 4 * h:g}, {cfg.E4 + 4 * h:g}] at h={h:g}")
        return

    if cmd == "dampedwave":
        res = harness.run_dampedwave(cfg)
        harness.emit_outputs(None, out, dampedwave=res, config_echo=echo)
        print(json.dumps(res.as_json(), indent=2))
        return

    if cmd in ("count", "verify", "sweep"):
        if cmd == "sweep":
            report, summary = harness.sweep_h(cfg)
        else:
            report = harness.run_scenario(cfg)
            summary = harness.summarize_sweep(report) if len(cfg.h_list) >= 3 else None
        if cmd == "verify" and cfg.mc_samples and report.admissible is not None:
            est, err = harness.montecarlo_volume_check(profile, report.admissible, cfg.E2, cfg.E4, cfg.mc_samples, cfg.seed)
            report.montecarlo = {"estimate": est, "stderr": err, "samples": cfg.mc_samples, "seed": cfg.seed}
            print(f"Monte-Carlo volume {est:.6f} +- {err:.6f} vs band volume {report.volume:.6f}")
        harness.emit_outputs(report, out, summary=summary, config_echo=echo)
        _print_rows(report)
        if summary is not None:
            print(
                f"log-log slopes: quantum {summary.slope_quantum:.3f}, strip {summary.slope_strip:.3f}; "
                f"quantum rel_err non-increasing: {summary.monotone_quantum}"
            )
        return

    raise AssertionError(cmd)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = effective_config(args)
        _run(args.command, cfg)
    except ConfigError as exc:
        print(f"weylband: configuration error: {exc}", file=sys.stderr)
        return 2
    except DomainError as exc:
        label = next((v for k, v in ASSUMPTION.items() if isinstance(exc, k)), type(exc).__name__)
        print(f"weylband: {label}: {exc}", file=sys.stderr)
        partial = getattr(exc, "partial_report", None)
        if partial is not None:
            try:
                harness.emit_outputs(partial, partial.config.output_dir, config_echo=dump_config(partial.config))
            except DomainError:
                pass
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
