"""Plotly figures for the dashboard pages."""

from typing import List, Optional

import numpy as np
import pandas as pd
import plotly.express as px
import plotly.graph_objects as go

METHOD_COLORS = {"baseline": "#9CA3AF", "forward": "#818CF8", "reweight": "#34D399",
                 "revision": "#F472B6"}


def _layout(fig: go.Figure, height: int = 380, **kwargs) -> go.Figure:
    fig.update_layout(height=height, paper_bgcolor="rgba(0,0,0,0)",
                      plot_bgcolor="rgba(0,0,0,0)", **kwargs)
    return fig


def accuracy_by_trial(trials: pd.DataFrame) -> go.Figure:
    """One line per method: test accuracy against trial index."""
    fig = go.Figure()
    for method, group in trials.sort_values("trial").groupby("method", sort=False):
        fig.add_trace(go.Scatter(
            x=group["trial"], y=group["accuracy"], mode="lines+markers", name=method,
            line=dict(color=METHOD_COLORS.get(method, "#4F46E5"), width=2),
            marker=dict(size=7),
        ))
    return _layout(fig, xaxis_title="Trial", yaxis_title="Top-1 accuracy",
                   yaxis=dict(range=[0, 1]))


def method_summary_bars(summary: List[dict]) -> go.Figure:
    """Mean accuracy per method with population-std error bars."""
    df = pd.DataFrame(summary)
    df = df[df["mean_accuracy"].notna()]
    fig = px.bar(df, x="method", y="mean_accuracy", error_y="std_accuracy", color="method",
                 color_discrete_map=METHOD_COLORS)
    return _layout(fig, showlegend=False, yaxis=dict(range=[0, 1]), yaxis_title="Mean accuracy")


def matrix_heatmap(matrix, title: str = "", diverging: bool = False) -> go.Figure:
    """Heatmap of a C x C matrix; rows are true labels, columns noisy labels."""
    arr = np.asarray(matrix, dtype=np.float64)
    labels = [str(i) for i in range(arr.shape[0])]
    if diverging:
        bound = float(np.max(np.abs(arr))) or 1.0
        scale, zmin, zmax = "RdBu", -bound, bound
    else:
        scale, zmin, zmax = "Blues", 0.0, 1.0
    fig = go.Figure(go.Heatmap(
        z=arr, x=labels, y=labels, colorscale=scale, zmin=zmin, zmax=zmax,
        text=np.round(arr, 4), texttemplate="%{text}",
    ))
    fig.update_yaxes(autorange="reversed", title="true label")
    fig.update_xaxes(title="noisy label")
    return _layout(fig, height=360, title=title)


def training_curve(history: List[dict], title: Optional[str] = None) -> go.Figure:
    """Train and validation loss per epoch from a trial's epoch history."""
    df = pd.DataFrame(history)
    df["step"] = range(len(df))
    fig = go.Figure()
    for column, color in (("train_loss", "#818CF8"), ("val_loss", "#F472B6")):
        if column in df and df[column].notna().any():
            fig.add_trace(go.Scatter(x=df["step"], y=df[column], mode="lines+markers",
                                     name=column.replace("_", " "), line=dict(color=color, width=2)))
    return _layout(fig, xaxis_title="Epoch (both stages)", yaxis_title="Loss", title=title)
