"""Generic external-solver adapter.

The solver is any command line that reads an exported model and prints (or
writes) a log.  Status, objective and bound are pulled out of the log with
regular expressions; a run that yields no parseable status is a parse failure,
never an implicit success.
"""

from __future__ import annotations

import os
import re
import shlex
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

from .model import GdpError

ENV_COMMAND = "GDPQ_SOLVER_CMD"

STATUS_WORDS = {
    "optimal": "optimal",
    "feasible": "feasible-limit",
    "feasible-limit": "feasible-limit",
    "time-limit": "time-limit",
    "timelimit": "time-limit",
    "infeasible": "infeasible",
    "error": "error",
}


class SolverSpawnError(GdpError, OSError):
    pass


class ParseFailure(GdpError, ValueError):
    code = "PARSE_FAILURE"

    def __init__(self, message: str, line: str | None = None):
        self.line = line
        super().__init__(f"{self.code}: {message}" + (f" (line: {line!r})" if line is not None else ""))


@dataclass(frozen=True)
class SolverRun:
    """``command`` may use ``{model}`` and ``{log}`` placeholders; without ``{log}`` stdout is parsed."""

    command: str
    time_limit: float = 3600.0
    optimality_tolerance: float = 1e-6
    status_pattern: str = r"^\s*status\s*[:=]\s*(?P<value>.*?)\s*$"
    objective_pattern: str = r"^\s*objective\s*[:=]\s*(?P<value>.*?)\s*$"
    bound_pattern: str = r"^\s*bound\s*[:=]\s*(?P<value>.*?)\s*$"
    extra_env: dict = field(default_factory=dict)

    @classmethod
    def from_env(cls, **kw) -> SolverRun:
        cmd = os.environ.get(ENV_COMMAND)
        if not cmd:
            raise SolverSpawnError(f"no solver command: set {ENV_COMMAND} or pass a command template")
        return cls(cmd, **kw)


@dataclass(frozen=True)
class SolverResult:
    status: str  # optimal | feasible-limit | time-limit | infeasible | error
    objective: float | None
    bound: float | None
    seconds: float
    log: str = ""

    def __post_init__(self):
        if (self.objective is not None) != (self.status in ("optimal", "feasible-limit")):
            raise ParseFailure(f"objective presence inconsistent with status {self.status!r}")


def _number(m: re.Match, line: str) -> float:
    try:
        return float(m.group("value"))
    except ValueError:
        raise ParseFailure("unparseable number", line) from None


def parse_log(text: str, run: SolverRun, timed_out: bool = False, seconds: float = 0.0) -> SolverResult:
    status = objective = bound = None
    pats = [(re.compile(run.status_pattern, re.I), "status"), (re.compile(run.objective_pattern, re.I), "objective"),
            (re.compile(run.bound_pattern, re.I), "bound")]
    for line in text.splitlines():
        for pat, key in pats:
            m = pat.match(line)
            if not m:
                continue
            if key == "status":
                word = m.group("value").strip().lower()
                if word not in STATUS_WORDS:
                    raise ParseFailure(f"unknown status {word!r}", line)
                status = STATUS_WORDS[word]
            elif key == "objective":
                objective = _number(m, line)
            else:
                bound = _number(m, line)
            break
    if timed_out:
        # only a completed run may claim a solution
        return SolverResult("time-limit", None, bound, seconds, text)
    if status is None:
        last = next((ln for ln in reversed(text.splitlines()) if ln.strip()), None)
        raise ParseFailure("no status line in solver log", last)
    if status in ("optimal", "feasible-limit") and objective is None:
        raise ParseFailure(f"status {status!r} without an objective line")
    if status not in ("optimal", "feasible-limit"):
        objective = None
    return SolverResult(status, objective, bound, seconds, text)


def run_external_solver(model_path, run: SolverRun) -> SolverResult:
    """Spawn the solver on ``model_path`` and parse its log."""
    with tempfile.TemporaryDirectory() as tmp:
        log_path = Path(tmp) / "solver.log"
        cmd = run.command.format(model=shlex.quote(str(model_path)), log=shlex.quote(str(log_path)))
        env = {**os.environ, **run.extra_env}
        start = time.perf_counter()
        timed_out = False
        try:
            proc = subprocess.run(shlex.split(cmd), capture_output=True, text=True, timeout=run.time_limit, env=env)
            out = proc.stdout
        except subprocess.TimeoutExpired as exc:
            timed_out = True
            out = exc.stdout.decode() if isinstance(exc.stdout, bytes) else (exc.stdout or "")
        except OSError as exc:
            raise SolverSpawnError(f"cannot start solver: {exc}") from exc
        seconds = time.perf_counter() - start
        text = log_path.read_text() if "{log}" in run.command and log_path.exists() else out
        return parse_log(text, run, timed_out, seconds)
