"""
Writes a run report to disk.

Layout of an output directory:

- `results.json`: config echo, content hash, check verdicts and result summary,
  keys sorted and no timestamps, so reruns with the same seed are byte-identical.
- `tables/<name>.csv`: tabular artifacts.
- `plotdata/<name>.csv`: x-y series for external plotting.

Column layouts are documented in `docs/csv_schema.md`.
"""

import json
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np

if TYPE_CHECKING:
    from app.engine.experiments import RunReport
    from app.settings.run_config import RunConfig


def _to_builtin(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, complex):
        return {"re": value.real, "im": value.imag}
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"{type(value).__name__} is not serializable")


def _finite(value: Any) -> Any:
    """Replaces non-finite floats by `None`, which strict JSON readers accept."""
    if isinstance(value, dict):
        return {key: _finite(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite(item) for item in value]
    if isinstance(value, (float, np.floating)) and not np.isfinite(value):
        return None
    return value


def results_document(report: "RunReport", config: "RunConfig") -> dict[str, Any]:
    return {
        "command": report.command.value,
        "config": config.canonical(),
        "config_hash": config.content_hash(),
        "passed": report.passed,
        "exit_code": int(report.exit_code),
        "checks": _finite([check.model_dump() for check in report.checks]),
        "results": _finite(report.results),
    }


def write_report(report: "RunReport", config: "RunConfig", out_dir: Path) -> Path:
    """
    Writes `results.json`, the tables and the plot data of a run.

    :param report: Finished run.
    :type report: RunReport
    :param config: Configuration the run used.
    :type config: RunConfig
    :param out_dir: Target directory, created when missing.
    :type out_dir: Path
    :return: Path of `results.json`.
    :rtype: Path
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    for folder, frames in (("tables", report.tables), ("plotdata", report.plotdata)):
        if not frames:
            continue
        (out_dir / folder).mkdir(exist_ok=True)
        for name, frame in sorted(frames.items()):
            frame.to_csv(out_dir / folder / f"{name}.csv", index=False)

    results_path = out_dir / "results.json"
    document = json.dumps(results_document(report, config), sort_keys=True, indent=2, default=_to_builtin)
    results_path.write_text(document + "\n", encoding="utf-8")
    return results_path
