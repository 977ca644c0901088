"""Estimated transition matrices and learned revision slack per trial."""

import numpy as np
import streamlit as st

import charts
import database as db
import transition
from ui_utils import apply_global_css, registry_or_stop

st.set_page_config(page_title="NoisyKit – Transition Matrices", page_icon="🧮", layout="wide")
apply_global_css()

st.markdown("## 🧮 Transition Matrices")
st.markdown("---")

path = registry_or_stop()
runs = db.get_runs(limit=200, db_path=path)
run_ids = [r["id"] for r in runs]
if not run_ids:
    st.info("No runs recorded yet.")
    st.stop()

run_id = st.selectbox("Run", run_ids, format_func=lambda i: f"#{i}")
trials = [t for t in db.get_run_trials(run_id, db_path=path)
          if t["estimated_T"] or t["learned_dT"]]
if not trials:
    st.info("This run used fixed matrices; nothing was estimated or revised.")
    st.stop()

choice = st.selectbox("Trial", range(len(trials)),
                      format_func=lambda i: f"{trials[i]['method']} · trial {trials[i]['trial_index']}")
trial = trials[choice]

col1, col2 = st.columns(2)
estimated = np.array(trial["estimated_T"]["rows"]) if trial["estimated_T"] else None
with col1:
    if estimated is not None:
        st.plotly_chart(charts.matrix_heatmap(estimated, "Estimated T"), use_container_width=True)
        if trial["estimation_error"] is not None:
            st.metric("Sum-average error", f"{trial['estimation_error']:.4f}")
with col2:
    if trial["learned_dT"]:
        delta = np.array(trial["learned_dT"]["rows"])
        st.plotly_chart(charts.matrix_heatmap(delta, "Learned ΔT", diverging=True),
                        use_container_width=True)
        if estimated is not None:
            revised = estimated + transition.RevisionDelta(delta).entries
            st.plotly_chart(charts.matrix_heatmap(revised, "T + ΔT (unnormalised)"),
                            use_container_width=True)
