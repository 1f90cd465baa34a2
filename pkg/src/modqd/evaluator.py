"""Deterministic locomotion surrogate and environments.

Displacement comes from a closed-form integral of per-joint oscillation:
each realized servo drags the robot along its outward heading in
proportion to the mass behind it and the arc its controller actually
sweeps.  Environments add walls that cap fitness unless the body can
climb them.  An external evaluator can replace the surrogate over a
line-delimited JSON pipe.
"""
from __future__ import annotations

import json
import math
import os
import select
import shlex
import subprocess
import time
from dataclasses import dataclass

from .controller import WaveParams, effective_amplitude
from .morphology import (
    Descriptor,
    LatticeRealization,
    ModuleKind,
    MorphologyTree,
    Path,
    realize_on_lattice,
    tree_to_dict,
)

EVAL_TIME = 20.0
WARMUP_TIME = 2.0
# Drag factor for joints whose subtree never touches the floor.
UNGROUNDED_FACTOR = 0.25
# A blocked robot is scored just short of the wall it failed to pass.
WALL_MARGIN = 0.01


@dataclass(frozen=True)
class Wall:
    distance: float
    height: float


@dataclass(frozen=True)
class EnvironmentSpec:
    name: str
    walls: tuple[Wall, ...] = ()
    eval_time: float = EVAL_TIME
    warmup: float = WARMUP_TIME


def flat_env() -> EnvironmentSpec:
    return EnvironmentSpec(name="flat")


def platform_env() -> EnvironmentSpec:
    return EnvironmentSpec(name="platform", walls=(Wall(distance=3.0, height=3.0),))


def circular_env() -> EnvironmentSpec:
    """Concentric ripples: every 5 units a wall, each 1.5 units taller."""
    walls = tuple(Wall(distance=5.0 * k, height=1.5 * k) for k in range(1, 9))
    return EnvironmentSpec(name="circular", walls=walls)


ENVIRONMENTS = {"flat": flat_env, "platform": platform_env, "circular": circular_env}


@dataclass(frozen=True)
class EvaluationResult:
    fitness: float
    descriptor: Descriptor
    blocked_at: int | None = None


# ---------------------------------------------------------------------------
# surrogate physics
# ---------------------------------------------------------------------------

def _realized_servos(tree: MorphologyTree, real: LatticeRealization,
                     ) -> dict[Path, WaveParams]:
    out: dict[Path, WaveParams] = {}
    for path, _, _ in real.placements:
        node = tree.node_at(path)
        if node.kind is ModuleKind.SERVO:
            out[path] = node.controller  # type: ignore[assignment]
    return out


def displacement_flat(real: LatticeRealization, controllers: dict[Path, WaveParams],
                      t0: float, t1: float) -> tuple[float, float]:
    """Net ground-plane displacement between t0 and t1.

    Every realized servo contributes along the horizontal projection of
    its heading, weighted by realized subtree size, by whether that
    subtree touches the floor, and by the controller's effective
    amplitude; the time factor is the exact integral of the wave's
    velocity.  The sum is normalized by total realized module count.
    """
    n_modules = len(real.placements)
    cells = {path: cell for path, cell, _ in real.placements}
    headings = {path: heading for path, _, heading in real.placements}
    dx = dy = 0.0
    for path in sorted(controllers):
        hx, hy, hz = headings[path]
        if hx == 0 and hy == 0:
            continue  # vertical heading: no ground-plane push
        subtree = [q for q in cells if q[: len(path)] == path]
        s = len(subtree)
        grounded = any(cells[q][2] == 0 for q in subtree)
        g = 1.0 if grounded else UNGROUNDED_FACTOR
        p = controllers[path]
        swing = math.sin(p.freq * t1 + p.phase) - math.sin(p.freq * t0 + p.phase)
        c = g * s * effective_amplitude(p) * swing
        dx += c * hx
        dy += c * hy
    return (dx / n_modules, dy / n_modules)


def climb_capability(real: LatticeRealization, controllers: dict[Path, WaveParams],
                     ) -> float:
    """Best vertical reach: max over root-to-leaf chains of summed joint sweep."""
    children: dict[Path, list[Path]] = {path: [] for path, _, _ in real.placements}
    for path, _, _ in real.placements:
        if path:
            children[path[:-1]].append(path)
    best = 0.0

    def walk(path: Path, acc: float) -> None:
        nonlocal best
        if path in controllers:
            acc += effective_amplitude(controllers[path])
        kids = children[path]
        if not kids:
            best = max(best, acc)
            return
        for k in sorted(kids):
            walk(k, acc)

    walk((), 0.0)
    return best


def evaluate(tree: MorphologyTree, env: EnvironmentSpec) -> EvaluationResult:
    """Score a genome in an environment; walls gate on climb capability."""
    real = realize_on_lattice(tree)
    controllers = _realized_servos(tree, real)
    t0 = env.warmup
    t1 = env.warmup + env.eval_time
    dx, dy = displacement_flat(real, controllers, t0, t1)
    dist = math.hypot(dx, dy)
    fitness = dist
    blocked_at: int | None = None
    if env.walls:
        reach = climb_capability(real, controllers)
        for i, wall in enumerate(env.walls):
            if reach >= wall.height:
                continue
            fitness = max(0.0, min(dist, wall.distance - WALL_MARGIN))
            blocked_at = i
            break
    m = j = 0
    for path, _, _ in real.placements:
        if path in controllers:
            j += 1
        else:
            m += 1
    return EvaluationResult(fitness=fitness, descriptor=Descriptor(m, j), blocked_at=blocked_at)


# ---------------------------------------------------------------------------
# external evaluator protocol
# ---------------------------------------------------------------------------

DEFAULT_TIMEOUT = 30.0


class ProtocolError(RuntimeError):
    """The external evaluator broke the request/response contract."""


class ExternalEvaluator:
    """Client for a fitness process speaking line-delimited JSON.

    One request per line on the child's stdin: {"id", "env", "genome"};
    one response per line on its stdout: {"id", "fitness"}.  Responses
    must echo the request id.  Descriptors are still computed locally.
    """

    def __init__(self, command: str, timeout: float = DEFAULT_TIMEOUT):
        self.command = command
        self.timeout = timeout
        self._proc = subprocess.Popen(
            shlex.split(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=False,
        )
        self._buf = b""

    def _read_line(self) -> str:
        deadline = time.monotonic() + self.timeout
        fd = self._proc.stdout.fileno()  # type: ignore[union-attr]
        while b"\n" not in self._buf:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise ProtocolError(
                    f"external evaluator timed out after {self.timeout}s")
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                continue
            chunk = os.read(fd, 65536)
            if not chunk:
                raise ProtocolError("external evaluator closed its stdout")
            self._buf += chunk
        line, _, self._buf = self._buf.partition(b"\n")
        return line.decode("utf-8", errors="replace")

    def evaluate(self, tree: MorphologyTree, env: EnvironmentSpec,
                 request_id: int) -> EvaluationResult:
        request = {"id": request_id, "env": env.name, "genome": tree_to_dict(tree)}
        line = json.dumps(request, sort_keys=True, separators=(",", ":")) + "\n"
        try:
            self._proc.stdin.write(line.encode("utf-8"))  # type: ignore[union-attr]
            self._proc.stdin.flush()  # type: ignore[union-attr]
        except (BrokenPipeError, OSError) as exc:
            raise ProtocolError(f"external evaluator pipe failed: {exc}") from exc
        raw = self._read_line()
        try:
            resp = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"malformed evaluator response line: {raw!r}") from exc
        if not isinstance(resp, dict) or "id" not in resp or "fitness" not in resp:
            raise ProtocolError(f"evaluator response missing fields: {raw!r}")
        if resp["id"] != request_id:
            raise ProtocolError(
                f"evaluator response id {resp['id']} does not match request {request_id}")
        real = realize_on_lattice(tree)
        controllers = _realized_servos(tree, real)
        m = j = 0
        for path, _, _ in real.placements:
            if path in controllers:
                j += 1
            else:
                m += 1
        return EvaluationResult(fitness=float(resp["fitness"]),
                                descriptor=Descriptor(m, j), blocked_at=None)

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()  # type: ignore[union-attr]
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5.0)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def __enter__(self) -> "ExternalEvaluator":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
