# main.py
import argparse
import logging
import sys
from datetime import datetime
from pathlib import Path

import src.config as config
from src import sweep
from src.entangle import GridTooLargeError
from src.qmc import QmcConfig
from src.spectra import CatalogParseError, UnknownLineError, find_line, read_catalog

logging.basicConfig(
    level=config.LOG_LEVEL,
    format="[%(asctime)s] %(levelname)s %(message)s",
)
LOGGER = logging.getLogger("main")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3


class UsageError(ValueError):
    pass


def _load_catalog(path: str | None):
    try:
        return read_catalog(path)
    except OSError as exc:
        raise CatalogParseError(f"Katalog nicht lesbar: {exc}") from exc


def _qmc_from_args(args) -> QmcConfig:
    return QmcConfig.from_settings(
        samples_per_replicate=args.samples,
        replicates=args.replicates,
        seed=args.seed,
        detuning_proposal=args.detuning_proposal,
    )


def _jobs(args) -> int:
    return config.JOBS if args.jobs is None else args.jobs


def _default_out(prefix: str) -> Path:
    return Path(config.EXPORT_DIR) / f"{prefix}_{datetime.now().strftime('%Y-%m-%d_%H-%M-%S')}.csv"


def _emit(frame, out: str | None):
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(out, index=False)
        LOGGER.info("Gespeichert unter: %s", out)
    else:
        frame.to_csv(sys.stdout, index=False)


def cmd_purity(args) -> int:
    catalog = _load_catalog(args.catalog)
    line = find_line(catalog, args.line)
    row = sweep.compute_row(
        line,
        args.tu_uK,
        _qmc_from_args(args),
        axis=args.axis,
        with_epsilon=args.epsilon,
        n_jobs=_jobs(args),
    )
    _emit(sweep.rows_to_frame([row]), args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    catalog = _load_catalog(args.catalog)
    line = find_line(catalog, args.line)
    default_min, default_max = sweep.default_range_uK(line)
    spec = sweep.SweepSpec(
        line=line.name,
        t_u_min=args.tu_min_uK if args.tu_min_uK is not None else default_min,
        t_u_max=args.tu_max_uK if args.tu_max_uK is not None else default_max,
        points=args.points if args.points is not None else config.SWEEP_POINTS,
        qmc=_qmc_from_args(args),
        axis=args.axis,
        with_epsilon=args.epsilon,
    )
    out_path = Path(args.out) if args.out else _default_out(f"sweep_{line.name}")
    sweep.run_sweep(spec, line, out_path, jobs=_jobs(args), resume=args.resume)
    print(f"[OK] Sweep gespeichert unter: {out_path}", file=sys.stderr)
    return EXIT_OK


def cmd_phase_diagram(args) -> int:
    numeric = args.mode == "numeric"
    if numeric and not args.allow_numeric:
        raise UsageError("--mode numeric rechnet die Purity pro Zelle; bitte mit --allow-numeric bestätigen")
    out_path = Path(args.out) if args.out else _default_out("phase_diagram")
    sweep.run_phase_diagram(
        (args.u_min, args.u_max),
        (args.d_min, args.d_max),
        args.u_points,
        args.d_points,
        out_path,
        numeric=numeric,
        qmc_config=_qmc_from_args(args) if numeric else None,
        jobs=_jobs(args),
        resume=args.resume,
    )
    print(f"[OK] Phasendiagramm gespeichert unter: {out_path}", file=sys.stderr)
    return EXIT_OK


def cmd_estimate(args) -> int:
    catalog = _load_catalog(args.catalog)
    line = find_line(catalog, args.line)
    _emit(sweep.estimate_table(line, args.tu_uK), args.out)
    return EXIT_OK


def cmd_lines(args) -> int:
    _emit(sweep.lines_table(_load_catalog(args.catalog)), args.out)
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser, *, qmc: bool = False):
    parser.add_argument("--catalog", default=None, help="Linienkatalog (JSON), sonst EMISSION_CATALOG_PATH bzw. eingebaut")
    parser.add_argument("--out", default=None, help="Ziel-CSV")
    if not qmc:
        return
    parser.add_argument("--samples", type=int, default=None, help="Punkte pro Replikat")
    parser.add_argument("--replicates", type=int, default=None)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--jobs", type=int, default=None, help="Parallele Worker (Default: EMISSION_JOBS)")
    parser.add_argument(
        "--detuning-proposal",
        choices=["balanced", "resonance"],
        default=None,
        help="Stichprobenverteilung der Verstimmung",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Atom-Photon-Verschränkung bei spontaner Emission")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p_purity = sub.add_parser("purity", help="Purity für eine Linie und ein T_u (eine CSV-Zeile)")
    p_purity.add_argument("--line", required=True)
    p_purity.add_argument("--tu-uK", dest="tu_uK", type=float, required=True)
    p_purity.add_argument("--epsilon", action="store_true", help="Korrekturen erster Ordnung in Γ/ω₀")
    p_purity.add_argument("--axis", choices=sweep.AXES, default="tu_over_td")
    _add_common(p_purity, qmc=True)

    p_sweep = sub.add_parser("sweep", help="Log-Sweep über T_u für eine Linie")
    p_sweep.add_argument("--line", required=True)
    p_sweep.add_argument("--tu-min-uK", dest="tu_min_uK", type=float, default=None)
    p_sweep.add_argument("--tu-max-uK", dest="tu_max_uK", type=float, default=None)
    p_sweep.add_argument("--points", type=int, default=None)
    p_sweep.add_argument("--axis", choices=sweep.AXES, default="tu_over_td")
    p_sweep.add_argument("--epsilon", action="store_true")
    p_sweep.add_argument("--resume", action="store_true", help="Fertige Punkte aus <out>.cache/ übernehmen")
    _add_common(p_sweep, qmc=True)

    p_phase = sub.add_parser("phase-diagram", help="Regime-Einteilung über ein (u, d)-Gitter")
    p_phase.add_argument("--u-min", type=float, default=1e-2)
    p_phase.add_argument("--u-max", type=float, default=1e7)
    p_phase.add_argument("--u-points", type=int, default=40)
    p_phase.add_argument("--d-min", type=float, default=0.1)
    p_phase.add_argument("--d-max", type=float, default=1e3)
    p_phase.add_argument("--d-points", type=int, default=20)
    p_phase.add_argument("--mode", choices=["analytic", "numeric"], default="analytic")
    p_phase.add_argument("--allow-numeric", action="store_true", help="Numerischen Modus freigeben (teuer)")
    p_phase.add_argument("--resume", action="store_true")
    _add_common(p_phase, qmc=True)

    p_estimate = sub.add_parser("estimate", help="Schwellen und Schätzer für Linie + T_u")
    p_estimate.add_argument("--line", required=True)
    p_estimate.add_argument("--tu-uK", dest="tu_uK", type=float, required=True)
    _add_common(p_estimate)

    p_lines = sub.add_parser("lines", help="Linienkatalog anzeigen")
    _add_common(p_lines)

    return parser


COMMANDS = {
    "purity": cmd_purity,
    "sweep": cmd_sweep,
    "phase-diagram": cmd_phase_diagram,
    "estimate": cmd_estimate,
    "lines": cmd_lines,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    LOGGER.info(config.describe())

    try:
        return COMMANDS[args.cmd](args)
    except UnknownLineError as e:
        print(f"[FEHLER] {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, GridTooLargeError) as e:
        # Katalog-, Parameter- und Konfigurationsfehler
        print(f"[FEHLER] {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"[FEHLER] Ein-/Ausgabe fehlgeschlagen: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
