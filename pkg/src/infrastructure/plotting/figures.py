"""Static analysis figures, each written next to a companion CSV.

The CSV is the stable artifact; PNG/SVG rendering may vary with the
matplotlib version.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ...domain.analysis_types import ChannelCorrelationReport, WindowCorrelationTrace  # noqa: E402
from ...domain.evaluation_types import NoiseCeiling  # noqa: E402
from ..logger import get_logger  # noqa: E402
from ..storage.result_store import write_csv  # noqa: E402
from .montage import electrode_positions  # noqa: E402


DEFAULT_FORMATS = ("png", "svg")
MIN_REGRESSION_POINTS = 3

CLUSTER_MARKERS: Dict[str, str] = {"CNN": "o", "RNN": "s", "Transformer": "^", "Attention layer": "D"}

plt.rcParams.update({
    "figure.figsize": (8, 5),
    "font.size": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "grid.alpha": 0.3,
    "svg.hashsalt": "eeg-robustness",
})


@dataclass
class FigureArtifact:
    """One figure and its companion table."""
    name: str
    csv_path: Path
    image_paths: List[Path] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)


class FigureWriter:
    """Renders the analysis figures into one directory."""

    def __init__(self, output_dir: Path, formats: Sequence[str] = DEFAULT_FORMATS):
        self.output_dir = Path(output_dir)
        self.formats = tuple(formats)
        self._logger = get_logger(self.__class__.__name__)

    def _save(self, fig: Any, name: str, artifact: FigureArtifact) -> FigureArtifact:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        fig.tight_layout()
        for fmt in self.formats:
            path = self.output_dir / f"{name}.{fmt}"
            fig.savefig(path, format=fmt, dpi=120, metadata={"Date": None} if fmt == "svg" else None)
            artifact.image_paths.append(path)
        plt.close(fig)
        return artifact

    def table(self, name: str, rows: List[Dict[str, Any]], columns: List[str]) -> FigureArtifact:
        path = self.output_dir / f"{name}.csv"
        write_csv(path, rows, columns=columns)
        return FigureArtifact(name=name, csv_path=path)

    def window_trace(self, traces: Sequence[WindowCorrelationTrace], name: str = "window_correlation") -> FigureArtifact:
        """r over window centre per attack, with a marker at each maximum."""
        rows = [row for trace in traces for row in trace.to_rows()]
        artifact = self.table(name, rows, ["attack", "t_center", "t_lo", "t_hi", "r", "r_squared", "p_value", "n"])
        fig, ax = plt.subplots()
        for trace in traces:
            centres = [p.t_center for p in trace.points]
            line, = ax.plot(centres, [p.r for p in trace.points], linewidth=2, label=trace.attack_tag)
            peak = trace.peak()
            if peak is not None:
                ax.plot([peak.t_center], [peak.r], marker="*", markersize=14, color=line.get_color())
                ax.axvline(peak.t_center, color=line.get_color(), linestyle=":", linewidth=1)
        ax.axhline(0.0, color="gray", linewidth=0.8)
        ax.set_xlabel("Window centre (s)")
        ax.set_ylabel("r (Avg_Gain vs Avg_PCC)")
        ax.set_title("Sliding-window correlation")
        ax.grid(True)
        if traces:
            ax.legend(loc="best")
        return self._save(fig, name, artifact)

    def gain_pcc_scatter(
        self, rows: List[Dict[str, Any]], attack_tag: str, name: Optional[str] = None
    ) -> FigureArtifact:
        """Avg_Gain against Avg_PCC with one marker per cluster.

        rows: dicts with arch, cluster, avg_pcc and avg_gain.
        """
        name = name or f"gain_vs_pcc_{attack_tag}"
        artifact = self.table(name, rows, ["arch", "cluster", "avg_pcc", "avg_gain"])
        fig, ax = plt.subplots()
        for cluster in sorted({str(r["cluster"]) for r in rows}):
            members = [r for r in rows if r["cluster"] == cluster]
            ax.scatter(
                [r["avg_pcc"] for r in members],
                [r["avg_gain"] for r in members],
                marker=CLUSTER_MARKERS.get(cluster, "o"),
                label=cluster,
            )
        x = np.asarray([r["avg_pcc"] for r in rows], dtype=np.float64)
        y = np.asarray([r["avg_gain"] for r in rows], dtype=np.float64)
        keep = np.isfinite(x) & np.isfinite(y)
        if keep.sum() >= MIN_REGRESSION_POINTS and np.ptp(x[keep]) > 0:
            slope, intercept = np.polyfit(x[keep], y[keep], 1)
            grid = np.linspace(x[keep].min(), x[keep].max(), 50)
            ax.plot(grid, slope * grid + intercept, color="black", linewidth=1)
        else:
            message = f"{attack_tag}: {int(keep.sum())} point(s), regression line omitted"
            artifact.warnings.append(message)
            self._logger.warn(message)
        ax.set_xlabel("Avg_PCC in window")
        ax.set_ylabel(f"Avg_Gain ({attack_tag})")
        ax.grid(True)
        if rows:
            ax.legend(loc="best")
        return self._save(fig, name, artifact)

    def channel_pcc_bars(
        self,
        channel_names: Sequence[str],
        mean_pcc: np.ndarray,
        ceiling: Optional[NoiseCeiling] = None,
        name: str = "channel_pcc",
    ) -> FigureArtifact:
        """Per-channel mean PCC with lower/upper noise ceilings."""
        lower = ceiling.lower if ceiling is not None else np.full(len(channel_names), np.nan)
        upper = ceiling.upper if ceiling is not None else np.full(len(channel_names), np.nan)
        rows = [
            {"channel": c, "pcc": float(mean_pcc[i]), "ceiling_lower": float(lower[i]), "ceiling_upper": float(upper[i])}
            for i, c in enumerate(channel_names)
        ]
        artifact = self.table(name, rows, ["channel", "pcc", "ceiling_lower", "ceiling_upper"])
        fig, ax = plt.subplots(figsize=(10, 5))
        positions = np.arange(len(channel_names))
        ax.bar(positions, np.nan_to_num(mean_pcc), color="#2E86AB", label="PCC")
        if ceiling is not None:
            ax.hlines(lower, positions - 0.4, positions + 0.4, colors="gray", linestyles="--", label="lower ceiling")
            ax.hlines(upper, positions - 0.4, positions + 0.4, colors="black", label="upper ceiling")
        ax.set_xticks(positions)
        ax.set_xticklabels(channel_names, rotation=60)
        ax.set_ylabel("PCC")
        ax.legend(loc="best")
        return self._save(fig, name, artifact)

    def electrode_scatter(
        self, channel_names: Sequence[str], values: np.ndarray, name: str = "electrode_pcc"
    ) -> FigureArtifact:
        """Electrodes at their montage positions, coloured by value."""
        xy = electrode_positions(channel_names)
        rows = [
            {"channel": c, "x": float(xy[i, 0]), "y": float(xy[i, 1]), "value": float(values[i])}
            for i, c in enumerate(channel_names)
        ]
        artifact = self.table(name, rows, ["channel", "x", "y", "value"])
        fig, ax = plt.subplots(figsize=(6, 6))
        ax.add_patch(plt.Circle((0.0, 0.0), 1.0, fill=False, color="gray"))
        points = ax.scatter(xy[:, 0], xy[:, 1], c=np.nan_to_num(values), cmap="viridis", s=300, edgecolors="black")
        for i, c in enumerate(channel_names):
            ax.annotate(c, (xy[i, 0], xy[i, 1]), ha="center", va="center", fontsize=7, color="white")
        fig.colorbar(points, ax=ax, shrink=0.8)
        ax.set_xlim(-1.2, 1.2)
        ax.set_ylim(-1.3, 1.2)
        ax.set_aspect("equal")
        ax.axis("off")
        return self._save(fig, name, artifact)

    def channel_correlation_bars(self, report: ChannelCorrelationReport, name: str = "channel_correlation") -> FigureArtifact:
        """Per-channel r for each attack, grouped bars."""
        artifact = self.table(name, report.to_rows(), ["attack", "channel", "r", "p_value"])
        fig, ax = plt.subplots(figsize=(10, 5))
        positions = np.arange(len(report.channel_names))
        tags = list(report.r)
        width = 0.8 / max(1, len(tags))
        for k, tag in enumerate(tags):
            ax.bar(positions + (k - (len(tags) - 1) / 2) * width, np.nan_to_num(report.r[tag]), width, label=tag)
        ax.axhline(0.0, color="gray", linewidth=0.8)
        ax.set_xticks(positions)
        ax.set_xticklabels(report.channel_names, rotation=60)
        ax.set_ylabel("r (Avg_Gain vs channel PCC)")
        lo, hi = report.critical_window
        ax.set_title(f"Channel correlation, {lo:g}-{hi:g} s")
        if tags:
            ax.legend(loc="best")
        return self._save(fig, name, artifact)

    def gain_bands(self, band_rows: List[Dict[str, Any]], name: str = "gain_vs_epsilon") -> FigureArtifact:
        """Mean gain per epsilon with a +-SE band, one panel per attack and one line per (arch, control)."""
        artifact = self.table(name, band_rows, ["arch", "control", "attack", "epsilon", "mean", "se", "n"])
        tags = sorted({str(r["attack"]) for r in band_rows})
        fig, axes = plt.subplots(1, max(1, len(tags)), figsize=(5 * max(1, len(tags)), 4), squeeze=False)
        for ax, tag in zip(axes[0], tags):
            panel = [r for r in band_rows if r["attack"] == tag]
            for arch, control in sorted({(str(r["arch"]), str(r["control"])) for r in panel}):
                rows = sorted((r for r in panel if r["arch"] == arch and r["control"] == control),
                              key=lambda r: r["epsilon"])
                eps = np.asarray([r["epsilon"] for r in rows], dtype=np.float64)
                mean = np.asarray([r["mean"] for r in rows], dtype=np.float64)
                se = np.nan_to_num(np.asarray([r["se"] for r in rows], dtype=np.float64))
                label = arch if control == "real" else f"{arch} ({control})"
                ax.plot(eps, mean, marker="o", linewidth=2, label=label)
                ax.fill_between(eps, mean - se, mean + se, alpha=0.25)
            ax.axhline(0.0, color="gray", linewidth=0.8)
            positive = [float(r["epsilon"]) for r in panel if float(r["epsilon"]) > 0]
            # symlog keeps an epsilon = 0 point on the axis
            ax.set_xscale("symlog", linthresh=min(positive) if positive else 1.0)
            ax.set_xlabel("epsilon")
            ax.set_ylabel("gain")
            ax.set_title(tag)
            ax.grid(True)
            ax.legend(loc="best", fontsize="small")
        return self._save(fig, name, artifact)

    def control_comparison(self, rows: List[Dict[str, Any]], name: str = "control_comparison") -> FigureArtifact:
        """Avg_Gain and critical-window PCC of real versus control targets, one column of panels per attack."""
        columns = ["arch", "control", "attack", "avg_gain", "avg_pcc", "n", "gain_vs_real", "pcc_vs_real"]
        artifact = self.table(name, rows, columns)
        if not rows:
            return artifact
        tags = sorted({str(r["attack"]) for r in rows})
        archs = sorted({str(r["arch"]) for r in rows})
        controls = sorted({str(r["control"]) for r in rows}, key=lambda c: (c != "real", c))
        positions = np.arange(len(archs))
        width = 0.8 / len(controls)
        fig, axes = plt.subplots(2, len(tags), figsize=(max(5, 0.8 * len(archs)) * len(tags), 7), squeeze=False)
        for col, tag in enumerate(tags):
            lookup = {(str(r["arch"]), str(r["control"])): r for r in rows if r["attack"] == tag}
            for k, control in enumerate(controls):
                offset = (k - (len(controls) - 1) / 2) * width
                for ax, metric in zip(axes[:, col], ("avg_gain", "avg_pcc")):
                    values = [float(lookup[(a, control)][metric]) if (a, control) in lookup else np.nan for a in archs]
                    ax.bar(positions + offset, np.nan_to_num(values), width, label=control)
            for ax, metric in zip(axes[:, col], ("Avg_Gain", "PCC (critical window)")):
                ax.axhline(0.0, color="gray", linewidth=0.8)
                ax.set_xticks(positions)
                ax.set_xticklabels(archs, rotation=60, fontsize="small")
                ax.set_ylabel(metric)
                ax.set_title(tag)
                ax.legend(loc="best", fontsize="small")
        return self._save(fig, name, artifact)
