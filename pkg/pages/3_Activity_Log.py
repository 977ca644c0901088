"""Registry activity log."""

import pandas as pd
import streamlit as st

import database as db
from ui_utils import apply_global_css, registry_or_stop

st.set_page_config(page_title="NoisyKit – Activity Log", page_icon="📋", layout="wide")
apply_global_css()

st.markdown("# 📋 Activity Log")
st.divider()

path = registry_or_stop()

col1, col2, col3 = st.columns([2, 2, 1])
with col1:
    type_filter = st.selectbox("Filter by Type", ["All", "Run", "Trial", "Error", "General"], index=0)
with col2:
    limit = st.selectbox("Number of records", [50, 100, 200, 500], index=0)
with col3:
    if st.button("🔄 Refresh", use_container_width=True):
        st.rerun()

action_type = None if type_filter == "All" else type_filter.lower()
logs = db.get_activity_logs(limit=limit, action_type=action_type, db_path=path)

if not logs:
    st.info("No activity recorded.")
    st.stop()

st.markdown(f"### Found {len(logs)} activity records")
st.dataframe(
    pd.DataFrame([{
        "Time": log["created_at"],
        "Action": log["action"],
        "Type": log["action_type"].title(),
        "Details": log.get("details") or "—",
        "Run": log.get("run_id") or "—",
    } for log in logs]),
    use_container_width=True,
    hide_index=True,
    column_config={
        "Time": st.column_config.DatetimeColumn("Timestamp", format="DD MMM YYYY, HH:mm:ss"),
        "Details": st.column_config.TextColumn("Details", width="large"),
    },
)
