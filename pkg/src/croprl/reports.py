"""Report files: CSV tables, the JSON run manifest, and the SVG learning curve.

Every byte written here is a pure function of the inputs. No timestamps, no
hostnames, no float formatting that depends on locale, so re-running a job
with a different worker count or on a different day produces identical files.
"""

import hashlib
import json
from xml.sax.saxutils import escape

from .errors import InputError
from .evaluation import RF_LABELS, ArchitectureRow, EvalReport, NoiseReport

# Stated in every table footer: comparisons against published management
# tables are orderings and relative improvements, not absolute matches,
# because yields are specific to the simulator behind them.
QUALITATIVE_NOTE = (
    "published reference values are qualitative targets (orderings, "
    "improvement over baseline); absolute numbers are simulator-specific"
)


def _fmt(value: float, decimals: int) -> str:
    return f"{float(value):.{decimals}f}"


def _write_lines(path, lines) -> str:
    text = "\n".join(lines) + "\n"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return text


def write_eval_report(report: EvalReport, path) -> str:
    """Policy comparison table: one row per policy, five reward columns."""
    header = "label,n_total_kg_ha,irrigation_total_l_m2,yield_kg_ha," + ",".join(RF_LABELS)
    lines = [header]
    for row in report.rows:
        cells = [
            row.label,
            _fmt(row.n_total, 1),
            _fmt(row.irrigation_total, 1),
            _fmt(row.yield_mean, 1),
        ]
        cells += [_fmt(row.rf[label], 2) for label in RF_LABELS]
        lines.append(",".join(cells))
    lines.append(f"# profile: {report.profile_name}")
    lines.append(f"# seeds: {' '.join(str(s) for s in report.seeds)}")
    lines.append(f"# noise: {report.noise_label}")
    lines.append(f"# note: {QUALITATIVE_NOTE}")
    return _write_lines(path, lines)


def write_noise_report(report: NoiseReport, path) -> str:
    """Robustness table: mean/std of RF1 and percent decrease per noise row."""
    lines = ["variable,level,rf1_mean,rf1_std,decrease_pct"]
    for row in report.rows:
        lines.append(",".join([
            row.label,
            row.level,
            _fmt(row.rf1_mean, 1),
            _fmt(row.rf1_std, 1),
            _fmt(row.decrease_pct, 1),
        ]))
    if report.baseline_rf1 is not None:
        lines.append(f"empirical baseline,,{_fmt(report.baseline_rf1, 1)},0.0,")
    lines.append(f"# policy: {report.policy_label}")
    lines.append(f"# profile: {report.profile_name}")
    lines.append(f"# runs per row: {report.runs}")
    lines.append(f"# weather seed: {report.weather_seed}")
    flag = combined_consistency(report)
    if flag is not None:
        status = "holds" if flag else "VIOLATED"
        lines.append(
            "# combined-row check (decrease >= max single-variable decrease): "
            + status
        )
    lines.append(f"# note: {QUALITATIVE_NOTE}")
    return _write_lines(path, lines)


def combined_consistency(report: NoiseReport) -> bool | None:
    """Whether the combined row degrades at least as much as any single row.

    Returns None when the table has no combined row to check.
    """
    combined = [r for r in report.rows if r.label == "combined"]
    singles = [r for r in report.rows
               if r.label not in ("combined", "no noise")]
    if not combined or not singles:
        return None
    return combined[0].decrease_pct >= max(r.decrease_pct for r in singles) - 1e-9


def write_architecture_report(rows: tuple[ArchitectureRow, ...], path) -> str:
    """Backend comparison: parameter counts and final RF1 per architecture."""
    lines = ["kind,param_count,analytic_count,rf1_mean,per_seed"]
    for row in rows:
        per_seed = " ".join(_fmt(v, 2) for v in row.per_seed)
        lines.append(",".join([
            row.kind,
            str(row.param_count),
            str(row.analytic_count),
            _fmt(row.rf1_mean, 2),
            per_seed,
        ]))
    lines.append(f"# note: {QUALITATIVE_NOTE}")
    return _write_lines(path, lines)


# --------------------------------------------------------------- manifest


def config_hash(config) -> str:
    """Short content hash of a JSON-serializable configuration mapping."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def checkpoint_id(path) -> str:
    """Content hash of a checkpoint file, usable as a stable identity."""
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()[:12]


def write_manifest(path, config, seeds, checkpoints=None, outputs=None,
                   version="") -> str:
    """JSON record tying a run's outputs to its exact configuration.

    Deliberately carries no timestamps or host details: two runs of the
    same configuration must produce byte-identical manifests.
    """
    manifest = {
        "config": config,
        "config_hash": config_hash(config),
        "seeds": [int(s) for s in seeds],
        "checkpoints": dict(checkpoints or {}),
        "outputs": sorted(outputs or []),
        "version": version,
    }
    text = json.dumps(manifest, sort_keys=True, indent=2) + "\n"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return text


# --------------------------------------------------------------- svg curve


def write_learning_curve(rewards, path, title="episode return") -> str:
    """Line chart of per-episode return, drawn directly as SVG.

    A window-average overlay is added once there are enough episodes for
    one. Coordinates are rounded to fixed precision so the file is stable.
    """
    rewards = [float(r) for r in rewards]
    if not rewards:
        raise InputError("learning curve needs at least one episode")
    width, height = 640, 400
    left, right, top, bottom = 64, 16, 34, 44
    plot_w = width - left - right
    plot_h = height - top - bottom

    lo, hi = min(rewards), max(rewards)
    if hi == lo:
        hi, lo = hi + 1.0, lo - 1.0
    pad = 0.04 * (hi - lo)
    lo, hi = lo - pad, hi + pad
    n = len(rewards)

    def x_at(i: int) -> float:
        return left + (plot_w * i / max(1, n - 1))

    def y_at(v: float) -> float:
        return top + plot_h * (1.0 - (v - lo) / (hi - lo))

    def polyline(values, stroke, width_px, start=0):
        pts = " ".join(
            f"{x_at(start + i):.2f},{y_at(v):.2f}" for i, v in enumerate(values)
        )
        return (f'<polyline fill="none" stroke="{stroke}" '
                f'stroke-width="{width_px}" points="{pts}"/>')

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{left}" y="20" font-family="sans-serif" font-size="14">'
        f"{escape(title)}</text>",
        f'<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" '
        'fill="none" stroke="#999"/>',
    ]
    for k in range(5):
        value = lo + (hi - lo) * k / 4
        y = y_at(value)
        parts.append(
            f'<line x1="{left - 4}" y1="{y:.2f}" x2="{left}" y2="{y:.2f}" stroke="#999"/>'
        )
        parts.append(
            f'<text x="{left - 8}" y="{y + 4:.2f}" font-family="sans-serif" '
            f'font-size="11" text-anchor="end">{value:.0f}</text>'
        )
    for k in range(5):
        episode = round((n - 1) * k / 4)
        x = x_at(episode)
        parts.append(
            f'<line x1="{x:.2f}" y1="{top + plot_h}" x2="{x:.2f}" '
            f'y2="{top + plot_h + 4}" stroke="#999"/>'
        )
        parts.append(
            f'<text x="{x:.2f}" y="{top + plot_h + 18}" font-family="sans-serif" '
            f'font-size="11" text-anchor="middle">{episode}</text>'
        )
    parts.append(
        f'<text x="{left + plot_w / 2:.0f}" y="{height - 8}" '
        'font-family="sans-serif" font-size="12" text-anchor="middle">episode</text>'
    )
    parts.append(polyline(rewards, "#7aa6d8", 1))
    window = 25
    if n >= 2 * window:
        smoothed = [
            sum(rewards[i - window + 1: i + 1]) / window
            for i in range(window - 1, n)
        ]
        parts.append(polyline(smoothed, "#1f4e79", 2, start=window - 1))
    parts.append("</svg>")
    text = "\n".join(parts) + "\n"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return text


__all__ = [
    "QUALITATIVE_NOTE",
    "write_eval_report",
    "write_noise_report",
    "combined_consistency",
    "write_architecture_report",
    "config_hash",
    "checkpoint_id",
    "write_manifest",
    "write_learning_curve",
]
