"""THD and tracking-error metrics, learning-curve statistics, static SVG plot emission.

THD uses a rectangular window over an integer number of fundamental periods,
so harmonic bins are leakage-free by construction. Plots are written as
self-contained SVG markup with embedded data; no plotting library is used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np


class Waveform(NamedTuple):
    """Uniformly sampled scalar signal."""

    samples: np.ndarray
    sample_rate: float
    label: str = ""


@dataclass
class ThdResult:
    """Fundamental magnitude, harmonic magnitudes for orders 2..H, and their ratio."""

    fundamental: float
    harmonics: np.ndarray
    thd: float

    @property
    def thd_percent(self) -> float:
        return 100.0 * self.thd

    @property
    def orders(self) -> np.ndarray:
        return np.arange(2, 2 + len(self.harmonics))


def thd(w: Waveform, f1: float, max_harmonic: int = 500) -> ThdResult:
    """Total harmonic distortion from DFT bins at integer multiples of f1.

    The window must span an integer number (>= 2) of fundamental periods.
    Harmonic orders above Nyquist are dropped.
    """
    x = np.asarray(w.samples, dtype=np.float64)
    n = x.size
    periods = n * f1 / w.sample_rate
    m = round(periods)
    if n < 2 or m < 2 or abs(periods - m) > 1e-6 * max(1.0, periods):
        raise ValueError(
            f"window must span an integer number (>=2) of periods of {f1} Hz, got {periods}"
        )
    spectrum = np.fft.rfft(x)
    # Single-sided amplitudes; DC and Nyquist bins are not doubled.
    mags = np.abs(spectrum) / n
    mags[1:] *= 2.0
    if n % 2 == 0:
        mags[-1] /= 2.0
    fundamental = float(mags[m])
    scale = float(np.max(np.abs(x))) if n else 0.0
    if scale == 0.0 or fundamental < 1e-9 * scale:
        raise ValueError(f"no fundamental component at {f1} Hz")
    top = min(max_harmonic, (len(mags) - 1) // m)
    harmonic_mags = np.array([mags[h * m] for h in range(2, top + 1)])
    ratio = float(np.sqrt(np.sum(harmonic_mags**2)) / fundamental)
    return ThdResult(fundamental=fundamental, harmonics=harmonic_mags, thd=ratio)


def rms_tracking_error(v_f_trace: Sequence, ref_trace: Sequence) -> float:
    """Root-mean-square norm of the alpha-beta tracking error."""
    v = np.asarray(v_f_trace, dtype=np.float64)
    r = np.asarray(ref_trace, dtype=np.float64)
    if v.shape != r.shape:
        raise ValueError(f"trace shapes differ: {v.shape} vs {r.shape}")
    err = r - v
    return float(np.sqrt(np.mean(np.sum(err * err, axis=-1))))


def moving_average(values: np.ndarray, window: int) -> np.ndarray:
    """Trailing mean over up to `window` previous entries."""
    values = np.asarray(values, dtype=np.float64)
    out = np.empty_like(values)
    csum = np.cumsum(values)
    for i in range(len(values)):
        lo = max(0, i - window + 1)
        out[i] = (csum[i] - (csum[lo - 1] if lo > 0 else 0.0)) / (i - lo + 1)
    return out


def learning_curve_stats(
    rewards: Sequence[float],
    max_currents: Sequence[float] | None = None,
    window: int = 10,
) -> dict:
    """Per-episode reward series with its trailing moving average."""
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.size < 1:
        raise ValueError("need at least one episode")
    stats = {
        "episode": np.arange(1, rewards.size + 1),
        "reward": rewards,
        "reward_moving_avg": moving_average(rewards, window),
    }
    if max_currents is not None:
        stats["max_current"] = np.asarray(max_currents, dtype=np.float64)
    return stats


# ---------------------------------------------------------------------------
# SVG emission


def _fmt(x: float) -> str:
    return format(float(x), ".6g")


def _ticks(lo: float, hi: float, count: int = 5) -> np.ndarray:
    if hi <= lo:
        hi = lo + 1.0
    return np.linspace(lo, hi, count)


class _Chart:
    """Minimal deterministic line/bar chart writer."""

    W, H = 860, 480
    ML, MR, MT, MB = 80, 24, 46, 56

    def __init__(self, title: str, xlabel: str, ylabel: str, desc: str = ""):
        self.title = title
        self.xlabel = xlabel
        self.ylabel = ylabel
        self.desc = desc
        self.series: list[tuple[np.ndarray, np.ndarray, str, str]] = []
        self.hlines: list[tuple[float, str, str]] = []
        self.bars: list[tuple[np.ndarray, np.ndarray, str]] = []

    def add_line(self, xs, ys, color: str, label: str = "") -> None:
        self.series.append((np.asarray(xs, float), np.asarray(ys, float), color, label))

    def add_hline(self, y: float, color: str, label: str = "") -> None:
        self.hlines.append((float(y), color, label))

    def add_bars(self, xs, ys, color: str) -> None:
        self.bars.append((np.asarray(xs, float), np.asarray(ys, float), color))

    def _bounds(self) -> tuple[float, float, float, float]:
        xs = np.concatenate([s[0] for s in self.series] + [b[0] for b in self.bars])
        ys = np.concatenate(
            [s[1] for s in self.series]
            + [b[1] for b in self.bars]
            + ([np.array([y for y, _, _ in self.hlines])] if self.hlines else [])
        )
        if self.bars:
            ys = np.append(ys, 0.0)
        x0, x1 = float(xs.min()), float(xs.max())
        y0, y1 = float(ys.min()), float(ys.max())
        if x1 == x0:
            x0, x1 = x0 - 0.5, x1 + 0.5
        if y1 == y0:
            y0, y1 = y0 - 0.5, y1 + 0.5
        pad = 0.04 * (y1 - y0)
        return x0, x1, y0 - pad, y1 + pad

    def render(self) -> str:
        x0, x1, y0, y1 = self._bounds()
        iw = self.W - self.ML - self.MR
        ih = self.H - self.MT - self.MB

        def px(x: float) -> float:
            return self.ML + (x - x0) / (x1 - x0) * iw

        def py(y: float) -> float:
            return self.MT + (y1 - y) / (y1 - y0) * ih

        e: list[str] = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.W}" height="{self.H}" '
            f'viewBox="0 0 {self.W} {self.H}">',
            f"<desc>{self.desc}</desc>" if self.desc else "<desc></desc>",
            f'<rect width="{self.W}" height="{self.H}" fill="white"/>',
            f'<text x="{self.W // 2}" y="24" text-anchor="middle" font-family="sans-serif" '
            f'font-size="15" font-weight="bold">{self.title}</text>',
        ]
        # Axes frame and ticks.
        e.append(
            f'<rect x="{self.ML}" y="{self.MT}" width="{iw}" height="{ih}" '
            'fill="none" stroke="#444" stroke-width="1"/>'
        )
        for tx in _ticks(x0, x1):
            X = _fmt(px(tx))
            e.append(
                f'<line x1="{X}" y1="{self.MT + ih}" x2="{X}" y2="{self.MT + ih + 5}" stroke="#444"/>'
            )
            e.append(
                f'<text x="{X}" y="{self.MT + ih + 20}" text-anchor="middle" '
                f'font-family="sans-serif" font-size="11">{_fmt(tx)}</text>'
            )
        for ty in _ticks(y0, y1):
            Y = _fmt(py(ty))
            e.append(f'<line x1="{self.ML - 5}" y1="{Y}" x2="{self.ML}" y2="{Y}" stroke="#444"/>')
            e.append(
                f'<text x="{self.ML - 8}" y="{Y}" text-anchor="end" dominant-baseline="middle" '
                f'font-family="sans-serif" font-size="11">{_fmt(ty)}</text>'
            )
        e.append(
            f'<text x="{self.ML + iw // 2}" y="{self.H - 14}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="13">{self.xlabel}</text>'
        )
        e.append(
            f'<text x="20" y="{self.MT + ih // 2}" text-anchor="middle" font-family="sans-serif" '
            f'font-size="13" transform="rotate(-90 20 {self.MT + ih // 2})">{self.ylabel}</text>'
        )
        for xs, ys, color in self.bars:
            width = max(1.0, 0.7 * iw / max(1, len(xs)))
            for xv, yv in zip(xs, ys):
                top = py(max(yv, 0.0))
                bot = py(min(yv, 0.0))
                e.append(
                    f'<rect x="{_fmt(px(xv) - width / 2)}" y="{_fmt(top)}" '
                    f'width="{_fmt(width)}" height="{_fmt(max(bot - top, 0.0))}" fill="{color}"/>'
                )
        for y, color, label in self.hlines:
            Y = _fmt(py(y))
            e.append(
                f'<line x1="{self.ML}" y1="{Y}" x2="{self.ML + iw}" y2="{Y}" '
                f'stroke="{color}" stroke-width="1" stroke-dasharray="6 4"/>'
            )
            if label:
                e.append(
                    f'<text x="{self.ML + iw - 6}" y="{_fmt(py(y) - 5)}" text-anchor="end" '
                    f'font-family="sans-serif" font-size="11" fill="{color}">{label}</text>'
                )
        legend_y = self.MT + 16
        for xs, ys, color, label in self.series:
            pts = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y in zip(xs, ys))
            e.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.4"/>')
            if label:
                e.append(
                    f'<line x1="{self.ML + iw - 150}" y1="{legend_y - 4}" x2="{self.ML + iw - 126}" '
                    f'y2="{legend_y - 4}" stroke="{color}" stroke-width="2"/>'
                )
                e.append(
                    f'<text x="{self.ML + iw - 120}" y="{legend_y}" font-family="sans-serif" '
                    f'font-size="11">{label}</text>'
                )
                legend_y += 16
        e.append("</svg>")
        return "\n".join(e) + "\n"


PLOT_FILENAMES = (
    "learning_curve.svg",
    "current_trajectory.svg",
    "voltage_waveforms.svg",
    "harmonic_spectrum.svg",
)


def emit_plots(report, out_dir: str | Path) -> list[Path]:
    """Render the four standard charts from a RunReport into out_dir.

    Validates the report up front and writes nothing on failure.
    """
    rewards = np.asarray(getattr(report, "episode_rewards", ()), dtype=np.float64)
    if rewards.size == 0:
        raise ValueError("report has no episodes to plot")
    ev = getattr(report, "evaluation", None)
    if not ev:
        raise ValueError("report has no evaluation section to plot")
    desc = f"seed={report.seed} controller={report.controller} config_sha256={report.config_digest()}"
    episodes = np.arange(1, rewards.size + 1)

    c1 = _Chart("Per-episode accumulated reward", "episode", "accumulated reward", desc)
    c1.add_line(episodes, rewards, "#1f77b4", "reward")
    c1.add_line(episodes, moving_average(rewards, 10), "#d62728", "moving avg (10)")

    c2 = _Chart("Per-episode peak filter current", "episode", "max ||i_f|| (A)", desc)
    c2.add_line(episodes, np.asarray(report.episode_max_currents, float), "#1f77b4", "max current")
    i_max = report.config.get("shield", {}).get("i_max", 20.0)
    i_hw = report.config.get("shield", {}).get("i_hw_limit", 24.0)
    c2.add_hline(i_max, "#d62728", "i_max")
    c2.add_hline(i_hw, "#7f7f7f", "hw limit")

    n = len(ev["waveform_phase_a"])
    t_ms = np.arange(n) / ev["sample_rate"] * 1e3
    c3 = _Chart("Steady-state phase-a capacitor voltage", "time (ms)", "voltage (V)", desc)
    c3.add_line(t_ms, np.asarray(ev["waveform_phase_a"], float), "#1f77b4", "v_f phase a")
    c3.add_line(t_ms, np.asarray(ev["ref_phase_a"], float), "#2ca02c", "reference")

    orders = np.asarray(ev["harmonic_orders"], float)
    mags = np.asarray(ev["harmonic_magnitudes"], float)
    show = min(len(orders), 49)
    c4 = _Chart(
        f"Harmonic magnitudes (THD = {ev['thd_percent']:.2f}%)",
        "harmonic order",
        "magnitude (V)",
        desc,
    )
    c4.add_bars(orders[:show], mags[:show], "#1f77b4")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, chart in zip(PLOT_FILENAMES, (c1, c2, c3, c4)):
        path = out / name
        path.write_text(chart.render())
        paths.append(path)
    return paths


def write_spectrum_csv(result: ThdResult, f1: float, path: str | Path) -> None:
    """Harmonic spectrum as (frequency_hz, magnitude) rows, fundamental included."""
    lines = ["frequency_hz,magnitude"]
    lines.append(f"{_fmt(f1)},{result.fundamental!r}")
    for h, mag in zip(result.orders, result.harmonics):
        lines.append(f"{_fmt(h * f1)},{mag!r}")
    Path(path).write_text("\n".join(lines) + "\n")
