"""Run-directory writer: report JSON, CSV tables, SVG plot data and an HTML summary."""

import json
import math
import re
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List

import numpy as np
import pandas as pd
from jinja2 import Environment, FileSystemLoader

from .experiments import ExperimentReport, RunConfig
from .logger import get_logger

FLOAT_FORMAT = "%.12g"


class ReportGenerator:
    """Writes one experiment report into its run directory."""

    def __init__(self, output_dir: Path):
        self.output_dir = Path(output_dir)
        self.template_dir = Path(__file__).parent / "templates"
        self.jinja_env = Environment(
            loader=FileSystemLoader(str(self.template_dir)),
            autoescape=True,
            trim_blocks=True,
            lstrip_blocks=True,
        )

        def number_filter(value):
            """Compact float formatting for the summary page."""
            if isinstance(value, bool) or value is None:
                return str(value)
            if isinstance(value, (int, np.integer)):
                return str(int(value))
            try:
                return f"{float(value):.8g}"
            except (TypeError, ValueError):
                return str(value)

        self.jinja_env.filters["number"] = number_filter

    def run_dir(self, cfg: RunConfig) -> Path:
        return self.output_dir / self._sanitize_filename(cfg.run_name)

    def write(self, cfg: RunConfig, report: ExperimentReport) -> Dict[str, str]:
        """Write every artifact and return their paths keyed by role."""
        logger = get_logger()
        run_dir = self.run_dir(cfg)
        run_dir.mkdir(parents=True, exist_ok=True)
        artifacts: Dict[str, str] = {}

        metrics_path = run_dir / "metrics.csv"
        self.write_csv(report.metrics_frame(), metrics_path)
        artifacts["metrics"] = str(metrics_path)
        for name, frame in report.tables.items():
            path = run_dir / self._sanitize_filename(f"{name}.csv")
            self.write_csv(frame, path)
            artifacts[name] = str(path)

        if report.plot:
            plot_path = run_dir / "plot.svg"
            plot_path.write_text(self.render_svg(report.plot), encoding="utf-8")
            artifacts["plot"] = str(plot_path)

        summary_path = run_dir / "summary.html"
        artifacts["summary"] = str(summary_path)
        report_path = run_dir / "report.json"
        artifacts["report"] = str(report_path)
        report.artifacts = artifacts

        summary_path.write_text(self.render_summary(cfg, report), encoding="utf-8")
        payload = self._json_safe(dict(report.to_dict(), config_hash=cfg.config_hash, run=cfg.run_name))
        with open(report_path, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, sort_keys=True, ensure_ascii=False)
        logger.debug(f"Wrote {len(artifacts)} artifacts to {run_dir}")
        return artifacts

    @staticmethod
    def write_csv(frame: pd.DataFrame, path: Path) -> Path:
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
        return path

    def render_summary(self, cfg: RunConfig, report: ExperimentReport) -> str:
        template = self.jinja_env.get_template("summary.html.j2")
        scalars = {k: v for k, v in report.metrics.items() if not isinstance(v, (dict, list))}
        nested = {k: json.dumps(self._json_safe(v), indent=2, sort_keys=True)
                  for k, v in report.metrics.items() if isinstance(v, (dict, list))}
        return template.render(
            run=cfg.run_name,
            report=report,
            params=self._json_safe(cfg.params),
            scalars=scalars,
            nested=nested,
            artifacts={k: Path(v).name for k, v in report.artifacts.items()},
        )

    def render_svg(self, plot: Dict[str, Any], width: int = 640, height: int = 400, margin: int = 56) -> str:
        """Scale plot series into SVG coordinates and render the template."""
        series = [s for s in plot.get("series", []) if len(s.get("x", []))]
        xs = [float(v) for s in series for v in s["x"] if _finite(v)]
        ys = [float(v) for s in series for v in s["y"] if _finite(v)]
        x0, x1 = _span(xs)
        y0, y1 = _span(ys)
        inner_w, inner_h = width - 2 * margin, height - 2 * margin

        def sx(v: float) -> float:
            return margin + (v - x0) / (x1 - x0) * inner_w

        def sy(v: float) -> float:
            return height - margin - (v - y0) / (y1 - y0) * inner_h

        palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
        drawn: List[Dict[str, Any]] = []
        for i, s in enumerate(series):
            pts = [(round(sx(float(a)), 2), round(sy(float(b)), 2))
                   for a, b in zip(s["x"], s["y"]) if _finite(a) and _finite(b)]
            drawn.append({
                "name": s.get("name", f"series {i}"),
                "style": s.get("style", "line"),
                "color": palette[i % len(palette)],
                "points": pts,
                "path": " ".join(f"{a},{b}" for a, b in pts),
            })
        template = self.jinja_env.get_template("plot.svg.j2")
        return template.render(
            title=plot.get("title", ""),
            xlabel=plot.get("xlabel", ""),
            ylabel=plot.get("ylabel", ""),
            width=width,
            height=height,
            margin=margin,
            series=drawn,
            xticks=[(round(sx(v), 2), f"{v:.4g}") for v in np.linspace(x0, x1, 5)],
            yticks=[(round(sy(v), 2), f"{v:.4g}") for v in np.linspace(y0, y1, 5)],
        )

    def _json_safe(self, obj: Any) -> Any:
        """Recursively convert objects to JSON-serializable structures.

        - numpy arrays and scalars -> lists and Python scalars
        - non-finite floats -> strings ("inf", "-inf", "nan")
        - Paths -> strings, datetimes -> ISO strings
        """
        if obj is None or isinstance(obj, (str, bool)):
            return obj
        if isinstance(obj, np.generic):
            obj = obj.item()
        if isinstance(obj, int):
            return obj
        if isinstance(obj, float):
            return obj if math.isfinite(obj) else str(obj)
        if isinstance(obj, np.ndarray):
            return self._json_safe(obj.tolist())
        if isinstance(obj, Path):
            return str(obj)
        if isinstance(obj, datetime):
            return obj.isoformat()
        if isinstance(obj, dict):
            return {str(k): self._json_safe(v) for k, v in obj.items()}
        if isinstance(obj, (list, tuple)):
            return [self._json_safe(x) for x in obj]
        if isinstance(obj, set):
            return sorted(self._json_safe(x) for x in obj)
        return str(obj)

    def _sanitize_filename(self, filename: str) -> str:
        """Sanitize filename for filesystem compatibility."""
        sanitized = re.sub(r'[<>:"/\\|?*]', "_", filename)
        return sanitized.replace(" ", "_")


def _finite(v: Any) -> bool:
    try:
        return math.isfinite(float(v))
    except (TypeError, ValueError):
        return False


def _span(values: List[float]) -> tuple:
    if not values:
        return 0.0, 1.0
    lo, hi = min(values), max(values)
    if hi - lo <= 1e-12 * max(1.0, abs(lo)):
        pad = 0.5 * max(1.0, abs(lo))
        return lo - pad, hi + pad
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad
