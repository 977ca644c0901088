"""Streamlit front page for browsing NoisyKit runs."""

import json

import pandas as pd
import streamlit as st
from dotenv import load_dotenv

import charts
import database as db
import settings
from ui_utils import apply_global_css, fmt_accuracy, metric_card, registry_or_stop

load_dotenv()

st.set_page_config(
    page_title="NoisyKit – Label Noise Experiments",
    page_icon="🧪",
    layout="wide",
    initial_sidebar_state="expanded",
)

apply_global_css()

st.markdown("## 🧪 NoisyKit")
st.markdown(
    "Training under class-conditional label noise: baseline, forward correction, "
    "importance reweighting and T-Revision, compared over seeded trials."
)
st.caption(f"version {settings.VERSION} · rng {settings.RNG_ALGORITHM}")
st.markdown("---")
st.markdown("### Open a report file")
uploaded = st.file_uploader("Report JSON from `train` or `compare`", type=["json"])
if uploaded is not None:
    try:
        payload = json.load(uploaded)
    except json.JSONDecodeError as e:
        st.error(f"Not a valid JSON file: {e}")
        st.stop()
    reports = payload["reports"] if "reports" in payload else {payload.get("method", "?"): payload}
    frame = pd.DataFrame([
        {"trial": t["trial_index"], "method": method, "accuracy": t["test_accuracy"]}
        for method, report in reports.items() for t in report.get("trials", [])
    ])
    if frame.empty:
        st.warning("The file holds no trial records.")
    else:
        ok = frame[frame["accuracy"].notna()]
        st.plotly_chart(charts.accuracy_by_trial(ok), use_container_width=True)
        st.plotly_chart(charts.method_summary_bars([
            {"method": m, "mean_accuracy": r.get("mean_accuracy"), "std_accuracy": r.get("std_accuracy")}
            for m, r in reports.items()
        ]), use_container_width=True)

st.markdown("---")

path = registry_or_stop()
runs = db.get_runs(limit=500, db_path=path)
summary = db.get_method_summary(db_path=path)

col1, col2, col3, col4 = st.columns(4)
with col1:
    metric_card(len(runs), "Runs")
with col2:
    metric_card(sum(1 for r in runs if r["status"] == "completed"), "Completed")
with col3:
    metric_card(sum(r["failed_trials"] or 0 for r in runs), "Failed Trials")
with col4:
    best = max(summary, key=lambda s: s["avg_accuracy"] or 0, default=None)
    metric_card(best["method"] if best else "–", "Best Method")

st.markdown("---")
st.markdown("### Accuracy by method (all completed runs)")
if summary:
    df = pd.DataFrame(summary)
    df["avg_accuracy"] = df["avg_accuracy"].map(fmt_accuracy)
    st.dataframe(df, use_container_width=True, hide_index=True)
else:
    st.info("No completed runs yet.")

st.markdown("### Recent runs")
if runs:
    st.dataframe(
        pd.DataFrame([{
            "Run": r["id"], "Command": r["command"], "Method": r["method"] or "all",
            "Mean": fmt_accuracy(r["mean_accuracy"]), "Std": fmt_accuracy(r["std_accuracy"]),
            "Failed": r["failed_trials"], "Status": r["status"], "Created": r["created_at"],
        } for r in runs[:20]]),
        use_container_width=True, hide_index=True,
    )

