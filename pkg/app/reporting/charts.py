"""Gráficos SVG (curva de VR, histórico de treino, barras do benchmark, matriz em blocos)."""

import numpy as np
import pandas as pd
import scipy.sparse as sp
from jinja2 import Environment, PackageLoader, select_autoescape

from app.clustering.base import CoClustering
from app.clustering.quality import VarianceRatioCurve

WIDTH, HEIGHT = 640, 400
MARGIN = {"left": 70, "right": 20, "top": 40, "bottom": 50}
MODE_COLORS = {"base-only": "#7f7f7f", "equal-weight": "#ff7f0e", "with-lic": "#1f77b4"}

_environment = Environment(
    loader=PackageLoader("app", "templates"),
    autoescape=select_autoescape(["j2"]),
    trim_blocks=True,
    lstrip_blocks=True,
)


def _frame(width: int = WIDTH, height: int = HEIGHT) -> dict:
    return {
        "width": width,
        "height": height,
        "left": MARGIN["left"],
        "right": width - MARGIN["right"],
        "top": MARGIN["top"],
        "bottom": height - MARGIN["bottom"],
    }


def _scale(values: np.ndarray, lo: float, hi: float, out_lo: float, out_hi: float) -> np.ndarray:
    span = hi - lo if hi > lo else 1.0
    return out_lo + (np.asarray(values, dtype=np.float64) - lo) / span * (out_hi - out_lo)


def _y_ticks(lo: float, hi: float, frame: dict, count: int = 5) -> list[dict]:
    values = np.linspace(lo, hi, count)
    positions = _scale(values, lo, hi, frame["bottom"], frame["top"])
    return [{"pos": round(float(p), 2), "label": f"{v:.3g}"} for v, p in zip(values, positions)]


def line_chart(
    x: np.ndarray,
    y: np.ndarray,
    title: str,
    x_label: str,
    y_label: str,
    spread: np.ndarray | None = None,
    highlight_x: float | None = None,
) -> str:
    """Linha com marcadores, faixa ±spread opcional e marcação vertical opcional."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    finite = np.isfinite(y)
    x, y = x[finite], y[finite]
    spread = None if spread is None else np.asarray(spread, dtype=np.float64)[finite]
    if x.size == 0:
        raise ValueError("Série sem valores finitos")

    frame = _frame()
    lows = y - spread if spread is not None else y
    highs = y + spread if spread is not None else y
    y_lo, y_hi = float(min(lows.min(), 0.0)), float(highs.max())
    x_lo, x_hi = float(x.min()), float(x.max())

    px = _scale(x, x_lo, x_hi, frame["left"], frame["right"])
    py = _scale(y, y_lo, y_hi, frame["bottom"], frame["top"])

    bands = []
    if spread is not None:
        upper = _scale(highs, y_lo, y_hi, frame["bottom"], frame["top"])
        lower = _scale(lows, y_lo, y_hi, frame["bottom"], frame["top"])
        outline = list(zip(px, upper)) + list(zip(px[::-1], lower[::-1]))
        bands.append(" ".join(f"{a:.2f},{b:.2f}" for a, b in outline))

    tick_x = x if x.size <= 12 else np.linspace(x_lo, x_hi, 6)
    highlight = None
    if highlight_x is not None:
        pos = float(_scale([highlight_x], x_lo, x_hi, frame["left"], frame["right"])[0])
        highlight = {"pos": round(pos, 2), "label": f"{x_label}={highlight_x:g}"}

    return _environment.get_template("line_chart.svg.j2").render(
        **frame,
        title=title,
        x_label=x_label,
        y_label=y_label,
        points=[f"{a:.2f},{b:.2f}" for a, b in zip(px, py)],
        markers=[{"x": round(float(a), 2), "y": round(float(b), 2)} for a, b in zip(px, py)] if x.size <= 50 else [],
        bands=bands,
        x_ticks=[
            {"pos": round(float(p), 2), "label": f"{v:g}"}
            for v, p in zip(tick_x, _scale(tick_x, x_lo, x_hi, frame["left"], frame["right"]))
        ],
        y_ticks=_y_ticks(y_lo, y_hi, frame),
        highlight=highlight,
    )


def render_vr_curve(curve: VarianceRatioCurve, chosen_k: int | None = None) -> str:
    return line_chart(
        np.asarray(curve.k_values),
        np.asarray(curve.mean),
        title=f"Variance ratio ({curve.side}s) por k",
        x_label="k",
        y_label="VR médio",
        spread=np.asarray(curve.std),
        highlight_x=chosen_k,
    )


def render_training_curve(history: pd.DataFrame) -> str:
    return line_chart(
        history["epoch"].to_numpy(),
        history["loss"].to_numpy(),
        title="Perda BPR por época",
        x_label="época",
        y_label="perda",
    )


def render_benchmark_bars(bars: pd.DataFrame, metric: str) -> str:
    """Um grupo por variante base e uma barra por modo (média sobre seeds)."""
    data = bars[bars["metric"] == metric]
    if data.empty:
        raise ValueError(f"Sem dados para a métrica '{metric}'")

    frame = _frame()
    variants = list(dict.fromkeys(data["base_variant"]))
    modes = list(dict.fromkeys(data["mode"]))
    y_hi = float(data["value"].max()) * 1.15 or 1.0

    group_width = (frame["right"] - frame["left"]) / len(variants)
    bar_width = group_width * 0.8 / len(modes)
    groups = []
    for g, variant in enumerate(variants):
        start = frame["left"] + g * group_width + group_width * 0.1
        group_bars = []
        for m, mode in enumerate(modes):
            match = data[(data["base_variant"] == variant) & (data["mode"] == mode)]
            if match.empty:
                continue
            value = float(match["value"].iloc[0])
            top = float(_scale([value], 0.0, y_hi, frame["bottom"], frame["top"])[0])
            group_bars.append({
                "x": round(start + m * bar_width, 2),
                "y": round(top, 2),
                "width": round(bar_width * 0.9, 2),
                "height": round(frame["bottom"] - top, 2),
                "color": MODE_COLORS.get(mode, "#2ca02c"),
                "label": f"{value:.4f}",
            })
        groups.append({"label": variant, "center": round(start + group_width * 0.4, 2), "bars": group_bars})

    return _environment.get_template("bar_chart.svg.j2").render(
        **frame,
        title=metric,
        groups=groups,
        legend=[{"label": mode, "color": MODE_COLORS.get(mode, "#2ca02c")} for mode in modes],
        y_ticks=_y_ticks(0.0, y_hi, frame),
    )


def block_density_grid(
    matrix: sp.spmatrix, clustering: CoClustering, resolution: int = 64
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Densidade da matriz com linhas e colunas reordenadas por cluster.

    Retorna a grade (resolução x resolução) e as fronteiras dos clusters em
    posições da grade para linhas e colunas.
    """
    coo = sp.coo_matrix(matrix)
    rows, cols = coo.shape
    row_order = np.argsort(clustering.user_assignment, kind="stable")
    col_order = np.argsort(clustering.item_assignment, kind="stable")
    row_rank = np.empty(rows, dtype=np.int64)
    col_rank = np.empty(cols, dtype=np.int64)
    row_rank[row_order] = np.arange(rows)
    col_rank[col_order] = np.arange(cols)

    grid_rows, grid_cols = min(resolution, rows), min(resolution, cols)
    r = row_rank[coo.row] * grid_rows // rows
    c = col_rank[coo.col] * grid_cols // cols
    counts = np.zeros((grid_rows, grid_cols))
    np.add.at(counts, (r, c), 1.0)

    row_cells = np.bincount(np.arange(rows) * grid_rows // rows, minlength=grid_rows)
    col_cells = np.bincount(np.arange(cols) * grid_cols // cols, minlength=grid_cols)
    grid = counts / np.outer(row_cells, col_cells)

    row_bounds = np.cumsum(np.bincount(clustering.user_assignment, minlength=clustering.k))[:-1] / rows
    col_bounds = np.cumsum(np.bincount(clustering.item_assignment, minlength=clustering.k))[:-1] / cols
    return grid, row_bounds, col_bounds


def render_block_matrix(matrix: sp.spmatrix, clustering: CoClustering, resolution: int = 64) -> str:
    grid, row_bounds, col_bounds = block_density_grid(matrix, clustering, resolution)
    frame = _frame(WIDTH, WIDTH)
    plot_width = frame["right"] - frame["left"]
    plot_height = frame["bottom"] - frame["top"]
    cell_width = plot_width / grid.shape[1]
    cell_height = plot_height / grid.shape[0]

    peak = grid.max() or 1.0
    shades = np.round(255 * (1.0 - grid / peak)).astype(int)
    cells = [
        {"x": round(frame["left"] + j * cell_width, 2), "y": round(frame["top"] + i * cell_height, 2), "shade": int(shades[i, j])}
        for i, j in zip(*np.nonzero(grid))
    ]
    boundaries = [
        {"x1": frame["left"], "x2": frame["right"], "y1": round(frame["top"] + b * plot_height, 2), "y2": round(frame["top"] + b * plot_height, 2)}
        for b in row_bounds
    ] + [
        {"x1": round(frame["left"] + b * plot_width, 2), "x2": round(frame["left"] + b * plot_width, 2), "y1": frame["top"], "y2": frame["bottom"]}
        for b in col_bounds
    ]
    return _environment.get_template("block_matrix.svg.j2").render(
        **frame,
        title=f"Matriz de interações em {clustering.k} blocos",
        cells=cells,
        boundaries=boundaries,
        cell_width=round(cell_width + 0.05, 2),
        cell_height=round(cell_height + 0.05, 2),
        plot_width=plot_width,
        plot_height=plot_height,
    )
