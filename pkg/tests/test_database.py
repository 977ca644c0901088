"""Run registry: runs, trials, per-method summaries and the activity log."""

import sqlite3

import pytest

import database as db


def _trial(index, method="forward", accuracy=0.8, error=None, estimated=None):
    return {"trial_index": index, "seed_used": index, "method": method,
            "test_accuracy": accuracy, "best_validation_loss": 0.5,
            "estimated_T": estimated, "learned_dT": None, "estimation_error": None,
            "error": error}


@pytest.fixture
def registry(tmp_path):
    path = str(tmp_path / "runs.db")
    db.init_db(path)
    return path


class TestRuns:

    def test_create_and_complete(self, registry):
        run_id = db.create_run("train", "forward", {"epochs": 2}, {"command": "train"},
                               db_path=registry)
        assert db.get_run(run_id, db_path=registry)["status"] == "running"
        db.complete_run(run_id, 0.75, 0.01, 0, db_path=registry)
        run = db.get_run(run_id, db_path=registry)
        assert run["status"] == "completed"
        assert run["mean_accuracy"] == pytest.approx(0.75)
        assert run["config"] == {"epochs": 2}
        assert run["manifest"] == {"command": "train"}

    def test_no_accuracy_marks_failed(self, registry):
        run_id = db.create_run("compare", db_path=registry)
        db.complete_run(run_id, None, None, 3, db_path=registry)
        run = db.get_run(run_id, db_path=registry)
        assert run["status"] == "failed" and run["failed_trials"] == 3

    def test_unknown_command_rejected(self, registry):
        with pytest.raises(sqlite3.IntegrityError):
            db.create_run("synth", db_path=registry)

    def test_missing_run(self, registry):
        assert db.get_run(42, db_path=registry) is None

    def test_newest_first_and_filter(self, registry):
        first = db.create_run("train", "baseline", db_path=registry)
        second = db.create_run("compare", db_path=registry)
        assert [r["id"] for r in db.get_runs(db_path=registry)] == [second, first]
        assert [r["id"] for r in db.get_runs(command="train", db_path=registry)] == [first]
        assert len(db.get_runs(limit=1, db_path=registry)) == 1

    def test_init_is_idempotent(self, registry):
        run_id = db.create_run("train", db_path=registry)
        db.init_db(registry)
        assert db.get_run(run_id, db_path=registry) is not None


class TestTrials:

    def test_matrices_are_decoded(self, registry):
        run_id = db.create_run("train", "revision", db_path=registry)
        matrix = {"size": 2, "rows": [[0.9, 0.1], [0.2, 0.8]]}
        db.save_trials(run_id, [_trial(1, "revision"), _trial(0, "revision", estimated=matrix)],
                       db_path=registry)
        trials = db.get_run_trials(run_id, db_path=registry)
        assert [t["trial_index"] for t in trials] == [0, 1]
        assert trials[0]["estimated_T"] == matrix
        assert trials[1]["estimated_T"] is None and trials[1]["learned_dT"] is None

    def test_epoch_history_is_kept(self, registry):
        run_id = db.create_run("train", "revision", db_path=registry)
        history = [{"epoch": 0, "train_loss": None, "val_loss": 1.2},
                   {"epoch": 1, "train_loss": 1.0, "val_loss": 0.9, "stage": "revision"}]
        db.save_trials(run_id, [dict(_trial(0, "revision"), epoch_history=history), _trial(1)],
                       db_path=registry)
        trials = db.get_run_trials(run_id, db_path=registry)
        assert trials[0]["epoch_history"] == history
        assert trials[1]["epoch_history"] == []

    def test_old_registry_gains_history_column(self, tmp_path):
        path = str(tmp_path / "old.db")
        conn = sqlite3.connect(path)
        conn.execute("""
            CREATE TABLE trials (
                id INTEGER PRIMARY KEY AUTOINCREMENT, run_id INTEGER NOT NULL,
                trial_index INTEGER NOT NULL, seed INTEGER NOT NULL, method TEXT NOT NULL,
                accuracy REAL, best_validation_loss REAL, estimated_t_json TEXT,
                learned_dt_json TEXT, estimation_error REAL, error TEXT)
        """)
        conn.commit()
        conn.close()

        db.init_db(path)
        run_id = db.create_run("train", "forward", db_path=path)
        db.save_trials(run_id, [dict(_trial(0), epoch_history=[{"epoch": 0, "val_loss": 1.0}])],
                       db_path=path)
        assert db.get_run_trials(run_id, db_path=path)[0]["epoch_history"] == [{"epoch": 0, "val_loss": 1.0}]

    def test_method_summary_skips_failures(self, registry):
        good = db.create_run("compare", db_path=registry)
        db.save_trials(good, [_trial(0, "forward", 0.6), _trial(1, "forward", 0.8),
                              _trial(2, "forward", None, error="diverged"),
                              _trial(0, "baseline", 0.5)], db_path=registry)
        db.complete_run(good, 0.63, 0.1, 1, db_path=registry)
        pending = db.create_run("train", "forward", db_path=registry)
        db.save_trials(pending, [_trial(0, "forward", 0.1)], db_path=registry)

        summary = {row["method"]: row for row in db.get_method_summary(db_path=registry)}
        assert set(summary) == {"baseline", "forward"}
        assert summary["forward"]["trials"] == 2
        assert summary["forward"]["avg_accuracy"] == pytest.approx(0.7)
        assert summary["forward"]["runs"] == 1


class TestActivityLog:

    def test_newest_first(self, registry):
        db.log_activity("first", db_path=registry)
        db.log_activity("second", "run", "details", db_path=registry)
        logs = db.get_activity_logs(db_path=registry)
        assert [entry["action"] for entry in logs] == ["second", "first"]
        assert logs[0]["details"] == "details"

    def test_filter_by_type(self, registry):
        run_id = db.create_run("train", db_path=registry)
        db.log_activity("ok", "run", run_id=run_id, db_path=registry)
        db.log_activity("2 trial(s) failed", "error", run_id=run_id, db_path=registry)
        errors = db.get_activity_logs(action_type="error", db_path=registry)
        assert len(errors) == 1 and errors[0]["run_id"] == run_id

    def test_bad_type_rejected(self, registry):
        with pytest.raises(sqlite3.IntegrityError):
            db.log_activity("x", "login", db_path=registry)
