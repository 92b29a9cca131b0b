import sqlite3
import os
import json
import numpy as np

from src.config import DB_PATH


def get_connection(db_path=None):
    if db_path is None:
        db_path = DB_PATH
    os.makedirs(os.path.dirname(os.path.abspath(db_path)), exist_ok=True)
    conn = sqlite3.connect(db_path)
    conn.row_factory = sqlite3.Row
    return conn


def init_db(db_path=None):
    conn = get_connection(db_path)
    cur = conn.cursor()

    cur.execute("""
        CREATE TABLE IF NOT EXISTS runs (
            run_id         INTEGER PRIMARY KEY AUTOINCREMENT,
            command        TEXT,
            manifest_json  TEXT,
            result_digest  TEXT,
            created_at     TIMESTAMP DEFAULT CURRENT_TIMESTAMP
        )
    """)

    cur.execute("""
        CREATE TABLE IF NOT EXISTS certificates (
            theta        REAL,
            n            INTEGER,
            m            INTEGER,
            eta          REAL,
            min_value    REAL,
            argmin_R     REAL,
            argmin_zeta  REAL,
            certified    INTEGER,
            created_at   TIMESTAMP DEFAULT CURRENT_TIMESTAMP,
            PRIMARY KEY (theta, n, m)
        )
    """)

    cur.execute("""
        CREATE TABLE IF NOT EXISTS kernel_tables (
            table_key   TEXT PRIMARY KEY,
            n           INTEGER,
            m           INTEGER,
            payload     BLOB
        )
    """)

    conn.commit()
    return conn


def insert_run(conn, command, manifest, result_digest):
    cur = conn.execute(
        "INSERT INTO runs (command, manifest_json, result_digest) VALUES (?, ?, ?)",
        (command, json.dumps(manifest, sort_keys=True), result_digest)
    )
    conn.commit()
    return cur.lastrowid


def get_runs(conn, command=None):
    if command:
        rows = conn.execute(
            "SELECT * FROM runs WHERE command = ? ORDER BY run_id", (command,)
        ).fetchall()
    else:
        rows = conn.execute("SELECT * FROM runs ORDER BY run_id").fetchall()

    results = []
    for row in rows:
        run = dict(row)
        run["manifest"] = json.loads(run.pop("manifest_json"))
        results.append(run)
    return results


def insert_certificate(conn, cert):
    conn.execute(
        """INSERT OR REPLACE INTO certificates
           (theta, n, m, eta, min_value, argmin_R, argmin_zeta, certified)
           VALUES (?, ?, ?, ?, ?, ?, ?, ?)""",
        (
            cert.theta, cert.n, cert.m, cert.eta,
            cert.min_w.min_value, cert.min_w.argmin.R, cert.min_w.argmin.zeta,
            int(cert.certified),
        )
    )
    conn.commit()


def get_certificate(conn, theta, n, m):
    row = conn.execute(
        "SELECT * FROM certificates WHERE theta = ? AND n = ? AND m = ?",
        (theta, n, m)
    ).fetchone()
    return dict(row) if row else None


def insert_kernel_table(conn, table_key, n, m, payload):
    blob = np.asarray(payload, dtype=np.float64).tobytes()
    conn.execute(
        "INSERT OR REPLACE INTO kernel_tables (table_key, n, m, payload) VALUES (?, ?, ?, ?)",
        (table_key, n, m, blob)
    )
    conn.commit()


def get_kernel_table(conn, table_key):
    row = conn.execute(
        "SELECT payload FROM kernel_tables WHERE table_key = ?", (table_key,)
    ).fetchone()
    if row is None:
        return None
    return np.frombuffer(row["payload"], dtype=np.float64)


def clear_kernel_tables(conn):
    conn.execute("DELETE FROM kernel_tables")
    conn.commit()
