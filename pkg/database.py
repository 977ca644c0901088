"""SQLite run registry for NoisyKit experiments."""

import json
import sqlite3
from typing import Optional

import settings

DB_PATH = settings.registry_path() or settings.DEFAULT_DB_PATH


def get_connection(db_path: str = None) -> sqlite3.Connection:
    """Get a database connection with row factory."""
    conn = sqlite3.connect(db_path or DB_PATH)
    conn.row_factory = sqlite3.Row
    conn.execute("PRAGMA journal_mode=WAL")
    conn.execute("PRAGMA foreign_keys=ON")
    return conn


def init_db(db_path: str = None):
    """Initialize all database tables."""
    conn = get_connection(db_path)
    cursor = conn.cursor()
    cursor.executescript("""
        CREATE TABLE IF NOT EXISTS runs (
            id INTEGER PRIMARY KEY AUTOINCREMENT,
            command TEXT NOT NULL CHECK(command IN ('train', 'compare')),
            method TEXT,
            config_json TEXT DEFAULT '{}',
            manifest_json TEXT DEFAULT '{}',
            mean_accuracy REAL,
            std_accuracy REAL,
            failed_trials INTEGER DEFAULT 0,
            status TEXT DEFAULT 'running' CHECK(status IN ('running', 'completed', 'failed')),
            created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP
        );

        CREATE TABLE IF NOT EXISTS trials (
            id INTEGER PRIMARY KEY AUTOINCREMENT,
            run_id INTEGER NOT NULL,
            trial_index INTEGER NOT NULL,
            seed INTEGER NOT NULL,
            method TEXT NOT NULL,
            accuracy REAL,
            best_validation_loss REAL,
            estimated_t_json TEXT,
            learned_dt_json TEXT,
            estimation_error REAL,
            error TEXT,
            history_json TEXT,
            FOREIGN KEY (run_id) REFERENCES runs(id)
        );

        CREATE TABLE IF NOT EXISTS activity_logs (
            id INTEGER PRIMARY KEY AUTOINCREMENT,
            run_id INTEGER,
            action TEXT NOT NULL,
            action_type TEXT DEFAULT 'general' CHECK(action_type IN ('general', 'run', 'trial', 'error')),
            details TEXT,
            created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP,
            FOREIGN KEY (run_id) REFERENCES runs(id)
        );

        CREATE INDEX IF NOT EXISTS idx_trials_run ON trials(run_id);
        CREATE INDEX IF NOT EXISTS idx_activity_logs_run ON activity_logs(run_id);
        CREATE INDEX IF NOT EXISTS idx_activity_logs_created ON activity_logs(created_at);
    """)
    # Registries created before per-epoch history was stored
    cursor.execute("PRAGMA table_info(trials)")
    columns = [row[1] for row in cursor.fetchall()]
    if "history_json" not in columns:
        cursor.execute("ALTER TABLE trials ADD COLUMN history_json TEXT")
    conn.commit()
    conn.close()


# ---- Run Operations ----

def create_run(command: str, method: str = None, config: dict = None,
               manifest: dict = None, db_path: str = None) -> int:
    """Register a new run and return its ID."""
    conn = get_connection(db_path)
    cursor = conn.cursor()
    cursor.execute("""
        INSERT INTO runs (command, method, config_json, manifest_json)
        VALUES (?, ?, ?, ?)
    """, (command, method, json.dumps(config or {}, sort_keys=True),
          json.dumps(manifest or {}, sort_keys=True)))
    conn.commit()
    run_id = cursor.lastrowid
    conn.close()
    return run_id


def complete_run(run_id: int, mean_accuracy: Optional[float], std_accuracy: Optional[float],
                 failed_trials: int = 0, db_path: str = None):
    """Store aggregates and mark a run finished."""
    status = "completed" if mean_accuracy is not None else "failed"
    conn = get_connection(db_path)
    cursor = conn.cursor()
    cursor.execute("""
        UPDATE runs SET mean_accuracy = ?, std_accuracy = ?, failed_trials = ?, status = ?
        WHERE id = ?
    """, (mean_accuracy, std_accuracy, failed_trials, status, run_id))
    conn.commit()
    conn.close()


def save_trials(run_id: int, trials: list, db_path: str = None):
    """Store per-trial records (dicts as produced by TrialResult.to_dict)."""
    conn = get_connection(db_path)
    cursor = conn.cursor()
    cursor.executemany("""
        INSERT INTO trials (run_id, trial_index, seed, method, accuracy, best_validation_loss,
                            estimated_t_json, learned_dt_json, estimation_error, error, history_json)
        VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
    """, [
        (run_id, t["trial_index"], t["seed_used"], t["method"], t.get("test_accuracy"),
         t.get("best_validation_loss"),
         json.dumps(t["estimated_T"]) if t.get("estimated_T") else None,
         json.dumps(t["learned_dT"]) if t.get("learned_dT") else None,
         t.get("estimation_error"), t.get("error"),
         json.dumps(t["epoch_history"]) if t.get("epoch_history") else None)
        for t in trials
    ])
    conn.commit()
    conn.close()


def get_run(run_id: int, db_path: str = None) -> Optional[dict]:
    """Get a run by ID with its config and manifest decoded."""
    conn = get_connection(db_path)
    cursor = conn.cursor()
    cursor.execute("SELECT * FROM runs WHERE id = ?", (run_id,))
    row = cursor.fetchone()
    conn.close()
    if row:
        result = dict(row)
        result["config"] = json.loads(result.get("config_json") or "{}")
        result["manifest"] = json.loads(result.get("manifest_json") or "{}")
        return result
    return None


def get_runs(limit: int = 50, command: str = None, db_path: str = None) -> list:
    """Most recent runs first."""
    conn = get_connection(db_path)
    cursor = conn.cursor()
    if command:
        cursor.execute("""
            SELECT * FROM runs WHERE command = ? ORDER BY id DESC LIMIT ?
        """, (command, limit))
    else:
        cursor.execute("SELECT * FROM runs ORDER BY id DESC LIMIT ?", (limit,))
    rows = cursor.fetchall()
    conn.close()
    return [dict(r) for r in rows]


def get_run_trials(run_id: int, db_path: str = None) -> list:
    """Trials of a run ordered by method then trial index."""
    conn = get_connection(db_path)
    cursor = conn.cursor()
    cursor.execute("""
        SELECT * FROM trials WHERE run_id = ? ORDER BY method, trial_index
    """, (run_id,))
    rows = cursor.fetchall()
    conn.close()
    results = []
    for r in rows:
        d = dict(r)
        d["estimated_T"] = json.loads(d["estimated_t_json"]) if d.get("estimated_t_json") else None
        d["learned_dT"] = json.loads(d["learned_dt_json"]) if d.get("learned_dt_json") else None
        d["epoch_history"] = json.loads(d["history_json"]) if d.get("history_json") else []
        results.append(d)
    return results


def get_method_summary(db_path: str = None) -> list:
    """Mean accuracy per method over all successful trials of completed runs."""
    conn = get_connection(db_path)
    cursor = conn.cursor()
    cursor.execute("""
        SELECT t.method, COUNT(*) as trials, AVG(t.accuracy) as avg_accuracy,
               COUNT(DISTINCT t.run_id) as runs
        FROM trials t JOIN runs r ON t.run_id = r.id
        WHERE r.status = 'completed' AND t.error IS NULL
        GROUP BY t.method
        ORDER BY t.method
    """)
    rows = cursor.fetchall()
    conn.close()
    return [dict(r) for r in rows]


# ---- Activity Log Operations ----

def log_activity(action: str, action_type: str = 'general', details: str = None,
                 run_id: int = None, db_path: str = None) -> int:
    """Append an entry to the activity log."""
    conn = get_connection(db_path)
    cursor = conn.cursor()
    cursor.execute("""
        INSERT INTO activity_logs (run_id, action, action_type, details)
        VALUES (?, ?, ?, ?)
    """, (run_id, action, action_type, details))
    conn.commit()
    log_id = cursor.lastrowid
    conn.close()
    return log_id


def get_activity_logs(limit: int = 100, action_type: str = None, db_path: str = None) -> list:
    """Most recent activity first."""
    conn = get_connection(db_path)
    cursor = conn.cursor()
    if action_type:
        cursor.execute("""
            SELECT * FROM activity_logs WHERE action_type = ?
            ORDER BY id DESC LIMIT ?
        """, (action_type, limit))
    else:
        cursor.execute("SELECT * FROM activity_logs ORDER BY id DESC LIMIT ?", (limit,))
    rows = cursor.fetchall()
    conn.close()
    return [dict(r) for r in rows]
