"""Per-run report: accuracies per trial and per method."""

import pandas as pd
import streamlit as st

import charts
import database as db
from ui_utils import apply_global_css, fmt_accuracy, metric_card, registry_or_stop

st.set_page_config(page_title="NoisyKit – Experiment Report", page_icon="📊", layout="wide")
apply_global_css()

st.markdown("## 📊 Experiment Report")
st.markdown("---")

path = registry_or_stop()
runs = db.get_runs(limit=200, db_path=path)
if not runs:
    st.info("No runs recorded yet.")
    st.stop()

labels = {f"#{r['id']} · {r['command']} · {r['method'] or 'all methods'} · {r['created_at']}": r["id"]
          for r in runs}
run_id = labels[st.selectbox("Run", list(labels))]
run = db.get_run(run_id, db_path=path)
trials = db.get_run_trials(run_id, db_path=path)

col1, col2, col3, col4 = st.columns(4)
with col1:
    metric_card(fmt_accuracy(run["mean_accuracy"]), "Mean Accuracy")
with col2:
    metric_card(fmt_accuracy(run["std_accuracy"]), "Std (population)")
with col3:
    metric_card(len(trials), "Trials")
with col4:
    metric_card(run["failed_trials"], "Failed")

if not trials:
    st.stop()

df = pd.DataFrame([{"trial": t["trial_index"], "method": t["method"], "accuracy": t["accuracy"]}
                   for t in trials])
ok = df[df["accuracy"].notna()]

st.markdown("### Accuracy per trial")
st.plotly_chart(charts.accuracy_by_trial(ok), use_container_width=True)

st.markdown("### Mean ± std by method")
summary = [
    {"method": m, "mean_accuracy": g["accuracy"].mean(), "std_accuracy": g["accuracy"].std(ddof=0)}
    for m, g in ok.groupby("method")
]
if summary:
    st.plotly_chart(charts.method_summary_bars(summary), use_container_width=True)

with_history = {f"trial {t['trial_index']} · {t['method']}": t for t in trials if t["epoch_history"]}
if with_history:
    st.markdown("### Training curve")
    picked = with_history[st.selectbox("Trial", list(with_history))]
    st.plotly_chart(charts.training_curve(picked["epoch_history"]), use_container_width=True)

failed = [t for t in trials if t["error"]]
if failed:
    st.markdown("### Failed trials")
    st.dataframe(pd.DataFrame([{"trial": t["trial_index"], "seed": t["seed"], "method": t["method"],
                                "error": t["error"]} for t in failed]),
                 use_container_width=True, hide_index=True)

with st.expander("Resolved configuration"):
    st.json(run["config"])
with st.expander("Manifest"):
    st.json(run["manifest"])
