"""
Result serialization: CSV tables, flat key=value summaries and the run manifest.

Data files are written with fixed number formatting so identical runs give
byte-identical files.
"""

import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Union

import numpy as np

from .analysis import FidelitySummary
from .demodulator import DemodResult
from .feedline import ComplexWaveform
from .utils import ensure_output_dir, format_number

logger = logging.getLogger(__name__)


def _cell(value: Any) -> str:
    if isinstance(value, str):
        return value
    if value is None:
        return ""
    return format_number(value)


def write_csv(path: Union[str, Path], header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """
    Write a CSV table with formatted numbers.

    Args:
        path (str): Output file.
        header (list): Column names.
        rows (iterable): Row values; strings pass through, numbers use format_number.

    Returns:
        Path: The written file.
    """
    path = Path(path)
    ensure_output_dir(path.parent)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(value) for value in row])
    logger.debug("Wrote %s", path)
    return path


def write_summary(path: Union[str, Path], values: Mapping[str, Any]) -> Path:
    """Write a flat key=value text report, one entry per line, in insertion order."""
    path = Path(path)
    ensure_output_dir(path.parent)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for key, value in values.items():
            f.write(f"{key}={_cell(value)}\n")
    logger.debug("Wrote %s", path)
    return path


def write_waveform_csv(path: Union[str, Path], wf: ComplexWaveform) -> Path:
    """Waveform as (t, Re, Im) rows."""
    return write_csv(path, ["t_us", "re", "im"],
                     zip(wf.times, wf.samples.real, wf.samples.imag))


def write_trace_csv(path: Union[str, Path], result: DemodResult) -> Path:
    """Demodulated trace as (t, Re, Im, |.|, arg) rows."""
    trace = result.trace
    return write_csv(path, ["t_us", "re", "im", "abs", "arg"],
                     zip(result.trace_times, trace.real, trace.imag, np.abs(trace), np.angle(trace)))


def write_histogram_csv(path: Union[str, Path], centers, counts_g, counts_e) -> Path:
    return write_csv(path, ["bin_center", "count_g", "count_e"],
                     zip(centers, np.asarray(counts_g, dtype=int), np.asarray(counts_e, dtype=int)))


def fidelity_summary_values(report: Mapping[str, FidelitySummary]) -> Dict[str, Any]:
    """Flatten per-channel fidelity summaries into summary keys."""
    values: Dict[str, Any] = {}
    for channel, summary in report.items():
        prefix = f"{channel}."
        values[prefix + "fidelity"] = summary.fidelity
        values[prefix + "fidelity_alt"] = summary.fidelity_alt
        values[prefix + "empirical_fidelity"] = summary.empirical_fidelity
        values[prefix + "threshold"] = summary.threshold
        values[prefix + "err_g_as_e"] = summary.err_g_as_e
        values[prefix + "err_e_as_g"] = summary.err_e_as_g
        values[prefix + "empirical_err_g_as_e"] = summary.empirical_err_g_as_e
        values[prefix + "empirical_err_e_as_g"] = summary.empirical_err_e_as_g
        values[prefix + "method"] = summary.method
        values[prefix + "n_g"] = summary.n_g
        values[prefix + "n_e"] = summary.n_e
        values[prefix + "discarded"] = summary.discarded
        values[prefix + "discard_fraction"] = summary.discard_fraction
        values[prefix + "decay_fraction"] = summary.decay_fraction
        values[prefix + "pulse_error_fraction"] = summary.pulse_error_fraction
        values[prefix + "excitation_fraction"] = summary.excitation_fraction
        for state, fit in (("g", summary.fit_g), ("e", summary.fit_e)):
            if fit is None:
                continue
            for name in ("w0", "w1", "mu0", "mu1", "sigma0", "sigma1"):
                values[f"{prefix}fit_{state}.{name}"] = getattr(fit, name)
    return values


def write_manifest(path: Union[str, Path], config: Mapping[str, Any], version: str,
                   outputs: List[Path], started: str, finished: str, wall_seconds: float,
                   results: Optional[Mapping[str, Any]] = None) -> Path:
    """
    Write manifest.json: resolved config, code version, outputs index and timing.

    The config snapshot alone re-creates the data files. Headline figures
    such as per-channel fidelities go under "results" when given.
    """
    path = Path(path)
    ensure_output_dir(path.parent)
    manifest = {
        "version": version,
        "config": config,
        "outputs": sorted(Path(p).name for p in outputs),
        "started": started,
        "finished": finished,
        "wall_seconds": wall_seconds,
    }
    if results:
        manifest["results"] = dict(results)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return path
