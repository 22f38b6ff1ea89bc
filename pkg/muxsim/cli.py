"""
Command-line interface for the muxsim library.
"""

import argparse
import logging
import sys

from .config import load_experiment_config, validate_experiment
from .core import calibrate_efficiency, get_library_info, run_experiment
from .utils import ConfigError, FitFailureError, MuxSimError

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_FIT = 3


def _add_config_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('-c', '--config', help='Experiment config JSON (bundled defaults when omitted)')
    parser.add_argument('--shots', type=int, help='Shots per prepared state')
    parser.add_argument('--seed', type=int, help='64-bit master seed')
    parser.add_argument('--out', help='Output directory')
    parser.add_argument('--threads', type=int, help='Worker processes (overrides MUXSIM_THREADS)')
    parser.add_argument('-v', '--verbose', action='store_true',
                        help='Enable verbose output')


def _configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def _print_run(result: dict) -> None:
    if "fidelities" in result:
        print(f"Integration length: {result['integration_length']:.4f} us")
        for channel, summary in result["fidelities"].items():
            print(f"  {channel}: F = {summary.fidelity:.4f} (F' = {summary.fidelity_alt:.4f}, "
                  f"threshold {summary.threshold:.4g}, discarded {summary.discard_fraction:.2%}, {summary.method})")
            alone = result.get("individual_fidelities", {}).get(channel)
            if alone is not None:
                print(f"      read alone: F = {alone.fidelity:.4f}")
    if "reports" in result:
        for channel, report in result["reports"].items():
            print(f"  {channel}: mean dwell {report.mean_dwell_time:.3f} us, KS p = {report.ks_pvalue:.3f}")
    if "delta_freq" in result:
        print(f"  leakage = {result['leakage']:.4f}, spurious photons = {result['spurious_photons']:.4f}")
        print(f"  |delta f| = {result['delta_freq']:.4f} MHz ({result['delta_freq_signed']:+.4f} on - off), "
              f"|delta tau| = {result['delta_decay_time']:.3f} us ({result['delta_decay_time_signed']:+.3f})")
    if "chi" in result:
        for channel, (configured, extracted) in result["chi"].items():
            print(f"  {channel}: chi = {extracted:.4f} MHz (configured {configured:.4f})")
    if "fits" in result and isinstance(result["fits"], dict):
        for channel, fit in result["fits"].items():
            if hasattr(fit, "freq"):
                print(f"  {channel}: f = {fit.freq:.4f} MHz, tau = {fit.decay_time:.3f} us, "
                      f"amplitude {abs(fit.amplitude):.4g}")
    if "channels" in result:
        for channel, data in result["channels"].items():
            fit = data["fits"].get("g")
            if fit is not None:
                print(f"  {channel}: kappa = {fit.kappa:.4f} MHz")
    print(f"Manifest: {result['manifest']}")


def main(argv=None):
    """Main CLI entry point."""
    parser = argparse.ArgumentParser(
        description="Simulate multiplexed dispersive readout of superconducting qubits",
        prog="muxsim"
    )

    subparsers = parser.add_subparsers(dest='command', help='Available commands')

    # Run command
    run_parser = subparsers.add_parser('run', help='Run an experiment')
    _add_config_arguments(run_parser)
    run_parser.add_argument('-e', '--experiment', help='Experiment name (overrides the config)')
    run_parser.add_argument('--fast-path', action='store_true', default=None,
                            help='Use the closed-form integrated-point generator')

    # Validate command
    validate_parser = subparsers.add_parser('validate', help='Check a config and its device')
    validate_parser.add_argument('-c', '--config', help='Experiment config JSON')

    # Calibrate command
    calibrate_parser = subparsers.add_parser('calibrate',
                                             help='Bisect the amplifier efficiency to a target fidelity')
    _add_config_arguments(calibrate_parser)

    # Info command
    subparsers.add_parser('info', help='Show library information')

    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return EXIT_ERROR

    try:
        if args.command == 'run':
            _configure_logging(args.verbose)
            cfg = load_experiment_config(args.config, overrides={
                "experiment": args.experiment,
                "shots": args.shots,
                "seed": args.seed,
                "output_dir": args.out,
                "fast_path": args.fast_path,
            })
            print(f"Running {cfg.experiment} into {cfg.output_dir}...")
            result = run_experiment(cfg, verbose=args.verbose, workers=args.threads)

            print(f"\n✓ Success!")
            _print_run(result)

        elif args.command == 'validate':
            cfg = load_experiment_config(args.config)
            problems = validate_experiment(cfg)
            if problems:
                for problem in problems:
                    print(f"  - {problem}", file=sys.stderr)
                raise ConfigError(f"{len(problems)} problem(s) found")
            print(f"\n✓ Config is valid ({cfg.experiment})")

        elif args.command == 'calibrate':
            _configure_logging(args.verbose)
            cfg = load_experiment_config(args.config, overrides={
                "seed": args.seed,
                "output_dir": args.out,
            })
            if args.shots is not None:
                cfg = cfg.updated(**{"calibration.shots": args.shots})
            print(f"Calibrating efficiency on {cfg.calibration.channel} "
                  f"for F = {cfg.calibration.target_fidelity}...")
            result = calibrate_efficiency(cfg, verbose=args.verbose, workers=args.threads)

            print(f"\n✓ Success!")
            print(f"Efficiency: {result['efficiency']:.4f}")
            print(f"Fidelity: {result['fidelity']:.5f} after {result['evaluations']} evaluations")

        elif args.command == 'info':
            info = get_library_info()
            print("muxsim Library Information:")
            print(f"Version: {info['version']}")
            print(f"Experiments: {', '.join(info['experiments'])}")
            print(f"Carrier: {info['carrier_freq_ghz']} GHz")
            for label in info['bundled_channels']:
                g, e = info['pulled_resonances_ghz'][label]
                print(f"  {label}: chi = {info['dispersive_shifts_mhz'][label]:.3f} MHz, "
                      f"resonances {g:.5f} / {e:.5f} GHz")
            print(f"Worker cap: {info['worker_env_var']}")
        return EXIT_OK

    except ConfigError as e:
        print(f"Config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FitFailureError as e:
        print(f"Fit failed: {e}", file=sys.stderr)
        return EXIT_FIT
    except MuxSimError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except KeyboardInterrupt:
        print("\nOperation cancelled by user.", file=sys.stderr)
        return EXIT_ERROR
    except Exception as e:
        print(f"Unexpected error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == '__main__':
    sys.exit(main())
