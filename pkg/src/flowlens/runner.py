"""Per-session sandboxed interpreter: ordered execution, probe demux, replay.

The runner launches the in-sandbox driver (copied into the session working
directory) as a child process and speaks the line-delimited JSON protocol over
its stdio.  Sentinel lines in captured stdout are demultiplexed into
:class:`ProbeRecord` values and removed from the user-visible output; a
malformed sentinel line becomes a protocol diagnostic, never a crash.
Successful units land on the statement log, whose deterministic replay into a
fresh interpreter stands in for context cloning.
"""

from __future__ import annotations

import json
import os
import queue
import shutil
import subprocess
import sys
import threading
import time
from dataclasses import dataclass, field
from importlib import resources

from .errors import ProtocolError, ReplayDivergenceError, SandboxError
from .graph import TableState
from .instrument import PROBE_SENTINEL, ExecUnit

DEFAULT_TIMEOUT = 30.0
DEFAULT_OUTPUT_CAP = 1 << 20

_PROBE_FIELDS = {"probe", "var", "rows", "cols", "columns"}


@dataclass(frozen=True)
class ProbeRecord:
    probe_id: str
    var: str
    rows: int
    cols: int
    columns: tuple[str, ...]

    def table_state(self) -> TableState:
        return TableState(self.rows, self.cols, self.columns)

    @classmethod
    def from_sentinel(cls, payload: dict) -> "ProbeRecord":
        if set(payload) != _PROBE_FIELDS:
            raise ProtocolError(f"probe payload fields {sorted(payload)} are not "
                                f"{sorted(_PROBE_FIELDS)}")
        record = cls(
            probe_id=payload["probe"],
            var=payload["var"],
            rows=int(payload["rows"]),
            cols=int(payload["cols"]),
            columns=tuple(str(c) for c in payload["columns"]),
        )
        if record.cols != len(record.columns):
            raise ProtocolError(
                f"probe {record.probe_id}: cols={record.cols} != "
                f"{len(record.columns)} columns"
            )
        return record


@dataclass
class ExecOutcome:
    status: str  # "ok" | "error"
    unit_id: str
    stdout: str = ""
    stderr: str = ""
    probes: list[ProbeRecord] = field(default_factory=list)
    figures: list[str] = field(default_factory=list)
    duration: float = 0.0
    error: dict | None = None
    diagnostics: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass
class LogEntry:
    unit: ExecUnit
    probe_lines: list[str]

    def as_dict(self) -> dict:
        return {"unit": self.unit.as_dict(), "probe_lines": list(self.probe_lines)}

    @classmethod
    def from_dict(cls, d: dict) -> "LogEntry":
        return cls(ExecUnit.from_dict(d["unit"]), list(d["probe_lines"]))


def demux_stdout(raw: str) -> tuple[str, list[ProbeRecord], list[str]]:
    """Split captured stdout into user text, probe records, and diagnostics."""
    user_parts: list[str] = []
    probes: list[ProbeRecord] = []
    diagnostics: list[str] = []
    for line in raw.splitlines(keepends=True):
        bare = line.rstrip("\n")
        if not bare.startswith(PROBE_SENTINEL):
            user_parts.append(line)
            continue
        try:
            payload = json.loads(bare[len(PROBE_SENTINEL):])
            probes.append(ProbeRecord.from_sentinel(payload))
        except (json.JSONDecodeError, ProtocolError, TypeError, ValueError) as exc:
            diagnostics.append(f"malformed probe line: {exc}")
    return "".join(user_parts), probes, diagnostics


def default_interpreter() -> str:
    return os.environ.get("FLOWLENS_INTERPRETER") or sys.executable


class SandboxRunner:
    """One sandboxed interpreter bound to one session working directory."""

    def __init__(self, working_dir: str, *, interpreter: str | None = None,
                 timeout: float = DEFAULT_TIMEOUT,
                 output_cap: int = DEFAULT_OUTPUT_CAP):
        self.working_dir = os.path.abspath(working_dir)
        self.interpreter = interpreter or default_interpreter()
        self.timeout = timeout
        self.output_cap = output_cap
        self.statement_log: list[LogEntry] = []
        self._request_id = 0
        self._proc: subprocess.Popen | None = None
        self._lines: queue.Queue | None = None
        self._lock = threading.Lock()
        os.makedirs(self.working_dir, exist_ok=True)
        self._install_driver()

    # ------------------------------------------------------------- lifecycle

    def _install_driver(self) -> None:
        source = resources.files("flowlens").joinpath("sandbox_driver.py").read_text()
        with open(os.path.join(self.working_dir, "driver.py"), "w") as handle:
            handle.write(source)

    def _start(self) -> None:
        stderr_path = os.path.join(self.working_dir, "driver_stderr.log")
        self._stderr_handle = open(stderr_path, "ab")
        self._proc = subprocess.Popen(
            [self.interpreter, "driver.py",
             "--output-cap-bytes", str(self.output_cap)],
            cwd=self.working_dir,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=self._stderr_handle,
            text=True,
        )
        self._lines = queue.Queue()
        thread = threading.Thread(target=self._pump, args=(self._proc, self._lines),
                                  daemon=True)
        thread.start()

    @staticmethod
    def _pump(proc: subprocess.Popen, lines: queue.Queue) -> None:
        for line in proc.stdout:
            lines.put(line)
        lines.put(None)

    def _ensure_started(self) -> None:
        if self._proc is None or self._proc.poll() is not None:
            self._start()

    def close(self) -> None:
        if self._proc is not None:
            try:
                self._proc.stdin.close()
                self._proc.wait(timeout=2)
            except Exception:
                self._proc.kill()
            self._proc = None
        self._close_stderr()

    def _kill(self) -> None:
        if self._proc is not None:
            self._proc.kill()
            self._proc.wait()
            self._proc = None
        self._close_stderr()

    def _close_stderr(self) -> None:
        handle = getattr(self, "_stderr_handle", None)
        if handle is not None and not handle.closed:
            handle.close()

    # --------------------------------------------------------------- protocol

    def _request(self, payload: dict, timeout: float | None) -> dict:
        self._ensure_started()
        self._request_id += 1
        payload = dict(payload, id=self._request_id)
        deadline = timeout if timeout is not None else self.timeout
        try:
            self._proc.stdin.write(json.dumps(payload) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise SandboxError(f"driver pipe broken: {exc}") from exc
        try:
            line = self._lines.get(timeout=deadline)
        except queue.Empty:
            raise TimeoutError(f"no response within {deadline}s")
        if line is None:
            raise SandboxError("driver exited unexpectedly")
        try:
            response = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"bad driver response line: {exc}") from exc
        if response.get("id") != self._request_id:
            raise ProtocolError(
                f"response id {response.get('id')} != request id {self._request_id}"
            )
        return response

    # ------------------------------------------------------------- operations

    def exec_unit(self, unit: ExecUnit, timeout: float | None = None) -> ExecOutcome:
        """Execute one unit in order; Ok appends it to the statement log."""
        with self._lock:
            return self._exec_unit_locked(unit, timeout)

    def _exec_unit_locked(self, unit: ExecUnit, timeout: float | None,
                          log: bool = True) -> ExecOutcome:
        started = time.monotonic()
        try:
            response = self._request({"op": "exec", "code": unit.code}, timeout)
        except TimeoutError:
            self._kill()
            outcome = ExecOutcome(
                status="error", unit_id=unit.unit_id,
                error={"type": "timeout",
                       "message": f"unit exceeded {timeout or self.timeout}s"},
                duration=time.monotonic() - started,
            )
            self._replay_locked(None)  # fresh interpreter, restore state
            return outcome
        raw_stdout = response.get("stdout", "")
        clean, probes, diagnostics = demux_stdout(raw_stdout)
        outcome = ExecOutcome(
            status=response.get("status", "error"),
            unit_id=unit.unit_id,
            stdout=clean,
            stderr=response.get("stderr", ""),
            probes=probes,
            figures=list(response.get("figures", ())),
            duration=time.monotonic() - started,
            error=response.get("error"),
            diagnostics=diagnostics,
        )
        if outcome.ok and log:
            probe_lines = [
                line.rstrip("\n") for line in raw_stdout.splitlines()
                if line.startswith(PROBE_SENTINEL)
            ]
            self.statement_log.append(LogEntry(unit, probe_lines))
        return outcome

    def replay(self, upto: int | None = None, *, truncate: bool = False) -> dict:
        """Re-execute the statement log (or a prefix) in a fresh interpreter.

        Probe records must match the originals byte for byte; the first
        difference raises :class:`ReplayDivergenceError`.  With ``truncate``
        the log is cut to the replayed prefix (re-run support).
        """
        with self._lock:
            return self._replay_locked(upto, truncate=truncate)

    def _replay_locked(self, upto: int | None, truncate: bool = False) -> dict:
        prefix = self.statement_log[: len(self.statement_log) if upto is None else upto]
        self._kill()
        self._ensure_started()
        replayed_probes = 0
        for entry in prefix:
            response = self._request({"op": "exec", "code": entry.unit.code}, None)
            raw = response.get("stdout", "")
            lines = [l.rstrip("\n") for l in raw.splitlines()
                     if l.startswith(PROBE_SENTINEL)]
            if lines != entry.probe_lines:
                index = next(
                    (i for i, (a, b) in enumerate(zip(lines, entry.probe_lines))
                     if a != b),
                    min(len(lines), len(entry.probe_lines)),
                )
                raise ReplayDivergenceError(
                    f"replay diverged at unit {entry.unit.unit_id}, probe {index}",
                    entry.unit.unit_id, index,
                )
            replayed_probes += len(lines)
        if truncate:
            self.statement_log = list(prefix)
        return {"status": "ok", "units": len(prefix), "probes": replayed_probes}

    def fetch_table_preview(self, var: str, row_limit: int = 20) -> dict:
        """First ``row_limit`` rows of a live table variable as text cells."""
        with self._lock:
            response = self._request({"op": "preview", "var": var,
                                      "limit": row_limit}, None)
        if response.get("status") != "ok":
            error = response.get("error") or {}
            raise SandboxError(error.get("message", "preview failed"))
        return response["preview"]

    def upload_file(self, name: str, source_path: str) -> str:
        """Copy a data file into the sandbox working directory."""
        dest = os.path.join(self.working_dir, os.path.basename(name))
        shutil.copyfile(source_path, dest)
        return dest

    # ------------------------------------------------------------ persistence

    def log_as_dicts(self) -> list[dict]:
        return [entry.as_dict() for entry in self.statement_log]

    def restore_log(self, entries: list[dict]) -> None:
        self.statement_log = [LogEntry.from_dict(d) for d in entries]
