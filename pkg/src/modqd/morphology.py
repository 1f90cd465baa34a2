"""Tree-encoded modular robot bodies.

A morphology is a tree of cubic modules: non-movable bricks ("rect",
five child slots) and servo joints ("servo", three child slots, each
carrying wave-controller parameters).  Trees are bounded to MAX_MODULES
nodes and MAX_DEPTH levels.  Bodies are realized on a unit lattice;
modules that would collide or sink below the floor are pruned from the
phenotype together with their subtrees, and the morphological
descriptor (m, j) counts only what was actually realized.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, NamedTuple

import numpy as np

from .controller import WaveParams, random_params

MAX_MODULES = 20
MAX_DEPTH = 4  # root sits at depth 0
ROTATIONS = (0, 90, 180, 270)

Path = tuple[int, ...]
Vec = tuple[int, int, int]
Mat = tuple[Vec, Vec, Vec]  # row-major integer rotation matrix


class ModuleKind(Enum):
    RECT = "rect"
    SERVO = "servo"

    @property
    def movable(self) -> bool:
        return self is ModuleKind.SERVO


# Child slots as unit directions in the module's own frame.  A child's
# local -x face is its attachment to the parent, so the rect's -x slot
# can only ever realize on the root.
RECT_SLOT_DIRS: tuple[Vec, ...] = ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1))
SERVO_SLOT_DIRS: tuple[Vec, ...] = ((1, 0, 0), (0, 1, 0), (0, -1, 0))


def slot_dirs(kind: ModuleKind) -> tuple[Vec, ...]:
    return RECT_SLOT_DIRS if kind is ModuleKind.RECT else SERVO_SLOT_DIRS


class Descriptor(NamedTuple):
    """Realized module counts: m non-movable bricks, j movable joints."""

    m: int
    j: int


@dataclass
class MorphNode:
    kind: ModuleKind
    rotation: int = 0
    children: dict[int, "MorphNode"] = field(default_factory=dict)
    controller: WaveParams | None = None

    def slot_count(self) -> int:
        return len(slot_dirs(self.kind))

    def clone(self) -> "MorphNode":
        return MorphNode(
            kind=self.kind,
            rotation=self.rotation,
            children={s: c.clone() for s, c in self.children.items()},
            controller=self.controller,
        )


@dataclass
class MorphologyTree:
    root: MorphNode

    def clone(self) -> "MorphologyTree":
        return MorphologyTree(self.root.clone())

    def size(self) -> int:
        return sum(1 for _ in iter_nodes(self))

    def depth(self) -> int:
        return max(len(path) for path, _ in iter_nodes(self))

    def node_at(self, path: Path) -> MorphNode:
        node = self.root
        for slot in path:
            node = node.children[slot]
        return node


def iter_nodes(tree: MorphologyTree) -> Iterator[tuple[Path, MorphNode]]:
    """Preorder walk, children in ascending slot order."""
    stack: list[tuple[Path, MorphNode]] = [((), tree.root)]
    while stack:
        path, node = stack.pop()
        yield path, node
        for slot in sorted(node.children, reverse=True):
            stack.append((path + (slot,), node.children[slot]))


def validate(tree: MorphologyTree) -> None:
    """Assert structural invariants; used by tests and debug paths."""
    assert tree.root.kind is ModuleKind.RECT, "root must be a rect module"
    n = 0
    for path, node in iter_nodes(tree):
        n += 1
        assert len(path) <= MAX_DEPTH, f"node at depth {len(path)} exceeds {MAX_DEPTH}"
        assert node.rotation in ROTATIONS
        assert (node.controller is not None) == (node.kind is ModuleKind.SERVO)
        for slot in node.children:
            assert 0 <= slot < node.slot_count(), f"slot {slot} invalid for {node.kind}"
    assert 1 <= n <= MAX_MODULES, f"size {n} out of bounds"


# ---------------------------------------------------------------------------
# random construction and variation operators
# ---------------------------------------------------------------------------

def _new_node(kind: ModuleKind, rotation: int, rng: np.random.Generator) -> MorphNode:
    ctrl = random_params(rng) if kind is ModuleKind.SERVO else None
    return MorphNode(kind=kind, rotation=rotation, controller=ctrl)


def _open_slots(tree: MorphologyTree) -> list[tuple[MorphNode, int]]:
    """Attachment points that may legally take a child."""
    out: list[tuple[MorphNode, int]] = []
    for path, node in iter_nodes(tree):
        if len(path) >= MAX_DEPTH:
            continue
        for slot in range(node.slot_count()):
            if slot not in node.children:
                out.append((node, slot))
    return out


def random_morphology(rng: np.random.Generator, max_size: int = MAX_MODULES) -> MorphologyTree:
    """Grow a random tree of uniformly drawn size, one module at a time."""
    target = int(rng.integers(1, max_size + 1))
    tree = MorphologyTree(MorphNode(kind=ModuleKind.RECT, rotation=0))
    size = 1
    while size < target:
        candidates = _open_slots(tree)
        if not candidates:
            break
        node, slot = candidates[int(rng.integers(len(candidates)))]
        kind = ModuleKind.SERVO if rng.random() < 0.5 else ModuleKind.RECT
        rotation = ROTATIONS[int(rng.integers(4))]
        node.children[slot] = _new_node(kind, rotation, rng)
        size += 1
    return tree


def _removal_sites(tree: MorphologyTree) -> list[tuple[MorphNode, int]]:
    """(parent, slot) of every non-root node."""
    out = []
    for _, node in iter_nodes(tree):
        for slot in sorted(node.children):
            out.append((node, slot))
    return out


def mutate_morphology(tree: MorphologyTree, rng: np.random.Generator) -> MorphologyTree:
    """Apply exactly one structural edit: add, remove, or re-rotate a module.

    The operator is drawn uniformly; if the drawn one has no legal
    candidate it is re-drawn uniformly among the remaining ones, and an
    unchanged clone comes back if nothing applies.
    """
    t = tree.clone()
    ops = ["add", "remove", "rotate"]
    while ops:
        op = ops[int(rng.integers(len(ops)))]
        if op == "add":
            if t.size() < MAX_MODULES:
                candidates = _open_slots(t)
                if candidates:
                    node, slot = candidates[int(rng.integers(len(candidates)))]
                    kind = ModuleKind.SERVO if rng.random() < 0.5 else ModuleKind.RECT
                    rotation = ROTATIONS[int(rng.integers(4))]
                    node.children[slot] = _new_node(kind, rotation, rng)
                    return t
        elif op == "remove":
            sites = _removal_sites(t)
            if sites:
                parent, slot = sites[int(rng.integers(len(sites)))]
                del parent.children[slot]
                return t
        else:  # rotate
            nodes = [node for _, node in iter_nodes(t)]
            node = nodes[int(rng.integers(len(nodes)))]
            others = [r for r in ROTATIONS if r != node.rotation]
            node.rotation = others[int(rng.integers(3))]
            return t
        ops.remove(op)
    return t


@dataclass(frozen=True)
class CrossoverResult:
    child_a: MorphologyTree
    child_b: MorphologyTree
    swapped: bool  # False when either parent had no exchangeable branch


def _subtree_preorder(node: MorphNode, parent: MorphNode, slot: int, depth: int,
                      ) -> list[tuple[MorphNode, MorphNode, int, int]]:
    """(node, parent, slot, depth) tuples of a subtree in preorder."""
    out = [(node, parent, slot, depth)]
    for s in sorted(node.children):
        out.extend(_subtree_preorder(node.children[s], node, s, depth + 1))
    return out


def _repair_limits(tree: MorphologyTree, inserted: MorphNode, parent: MorphNode,
                   slot: int, depth: int) -> None:
    """Truncate an inserted subtree bottom-up until size/depth limits hold."""
    entries = _subtree_preorder(inserted, parent, slot, depth)
    for node, par, s, d in reversed(entries):
        if d > MAX_DEPTH and s in par.children and par.children[s] is node:
            del par.children[s]
    while tree.size() > MAX_MODULES:
        entries = _subtree_preorder(inserted, parent, slot, depth)
        node, par, s, _ = entries[-1]
        del par.children[s]


def crossover_branch_exchange(a: MorphologyTree, b: MorphologyTree,
                              rng: np.random.Generator) -> CrossoverResult:
    """Swap one random non-root branch between clones of the parents.

    Either parent being a lone root makes the swap impossible; the
    offspring are then plain clones and ``swapped`` is False.  Oversize
    or over-deep offspring are repaired by dropping nodes of the
    transplanted branch in reverse preorder until the limits hold.
    """
    ca, cb = a.clone(), b.clone()
    sites_a = _removal_sites(ca)
    sites_b = _removal_sites(cb)
    if not sites_a or not sites_b:
        return CrossoverResult(ca, cb, swapped=False)
    pa, sa = sites_a[int(rng.integers(len(sites_a)))]
    pb, sb = sites_b[int(rng.integers(len(sites_b)))]
    branch_a = pa.children[sa]
    branch_b = pb.children[sb]
    pa.children[sa] = branch_b
    pb.children[sb] = branch_a
    depth_a = _depth_of_site(ca, pa) + 1
    depth_b = _depth_of_site(cb, pb) + 1
    _repair_limits(ca, branch_b, pa, sa, depth_a)
    _repair_limits(cb, branch_a, pb, sb, depth_b)
    return CrossoverResult(ca, cb, swapped=True)


def _depth_of_site(tree: MorphologyTree, target: MorphNode) -> int:
    for path, node in iter_nodes(tree):
        if node is target:
            return len(path)
    raise ValueError("node not in tree")


# ---------------------------------------------------------------------------
# lattice realization
# ---------------------------------------------------------------------------

_I: Mat = ((1, 0, 0), (0, 1, 0), (0, 0, 1))


def _matvec(m: Mat, v: Vec) -> Vec:
    return (
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    )


def _matmul(a: Mat, b: Mat) -> Mat:
    return tuple(
        tuple(sum(a[i][k] * b[k][j] for k in range(3)) for j in range(3))
        for i in range(3)
    )  # type: ignore[return-value]


_ROT_X: dict[int, Mat] = {
    0: _I,
    90: ((1, 0, 0), (0, 0, -1), (0, 1, 0)),
    180: ((1, 0, 0), (0, -1, 0), (0, 0, -1)),
    270: ((1, 0, 0), (0, 0, 1), (0, -1, 0)),
}

_ROT_Z: dict[int, Mat] = {
    0: _I,
    90: ((0, -1, 0), (1, 0, 0), (0, 0, 1)),
    180: ((-1, 0, 0), (0, -1, 0), (0, 0, 1)),
    270: ((0, 1, 0), (-1, 0, 0), (0, 0, 1)),
}

# Base frame for a child hanging off a given local slot direction: the
# child's local +x is made to point along the slot (away from the parent).
_SLOT_FRAME: dict[Vec, Mat] = {
    (1, 0, 0): _I,
    (-1, 0, 0): _ROT_Z[180],
    (0, 1, 0): _ROT_Z[90],
    (0, -1, 0): _ROT_Z[270],
    (0, 0, 1): ((0, 0, -1), (0, 1, 0), (1, 0, 0)),
    (0, 0, -1): ((0, 0, 1), (0, 1, 0), (-1, 0, 0)),
}

# child frame = parent frame @ slot frame @ rotation-about-connection-axis
_CHILD_LOCAL: dict[tuple[Vec, int], Mat] = {
    (u, r): _matmul(f, _ROT_X[r]) for u, f in _SLOT_FRAME.items() for r in ROTATIONS
}


@dataclass(frozen=True)
class LatticeRealization:
    """Where each surviving module landed on the lattice.

    placements holds (tree path, lattice cell, outward heading) in
    preorder; pruned holds the paths dropped for collision or going
    below the floor (each with its whole subtree).
    """

    placements: tuple[tuple[Path, Vec, Vec], ...]
    pruned: frozenset[Path]


def realize_on_lattice(tree: MorphologyTree) -> LatticeRealization:
    """Place the tree on the unit lattice, pruning colliding or buried parts.

    The root occupies (0, 0, 0); children are visited in ascending slot
    order and claim the neighbouring cell their slot points at.  A child
    whose cell is already taken, or would lie below z = 0, is skipped
    together with its entire subtree.
    """
    placements: list[tuple[Path, Vec, Vec]] = []
    pruned: list[Path] = []
    occupied: set[Vec] = {(0, 0, 0)}
    root_frame = _ROT_Z[tree.root.rotation]
    placements.append(((), (0, 0, 0), _matvec(root_frame, (1, 0, 0))))

    def prune_all(node: MorphNode, path: Path) -> None:
        pruned.append(path)
        for s in sorted(node.children):
            prune_all(node.children[s], path + (s,))

    def visit(node: MorphNode, path: Path, cell: Vec, frame: Mat) -> None:
        dirs = slot_dirs(node.kind)
        for slot in sorted(node.children):
            child = node.children[slot]
            child_path = path + (slot,)
            u = dirs[slot]
            heading = _matvec(frame, u)
            child_cell = (cell[0] + heading[0], cell[1] + heading[1], cell[2] + heading[2])
            if child_cell in occupied or child_cell[2] < 0:
                prune_all(child, child_path)
                continue
            occupied.add(child_cell)
            child_frame = _matmul(frame, _CHILD_LOCAL[(u, child.rotation)])
            placements.append((child_path, child_cell, heading))
            visit(child, child_path, child_cell, child_frame)

    visit(tree.root, (), (0, 0, 0), root_frame)
    return LatticeRealization(placements=tuple(placements), pruned=frozenset(pruned))


def descriptor_of(tree: MorphologyTree,
                  realization: LatticeRealization | None = None) -> Descriptor:
    """Count realized non-movable (m) and movable (j) modules."""
    real = realization if realization is not None else realize_on_lattice(tree)
    m = j = 0
    for path, _, _ in real.placements:
        if tree.node_at(path).kind is ModuleKind.SERVO:
            j += 1
        else:
            m += 1
    return Descriptor(m, j)


# ---------------------------------------------------------------------------
# genome serialization
# ---------------------------------------------------------------------------

def _node_to_dict(node: MorphNode) -> dict:
    d: dict = {"kind": node.kind.value, "rotation": node.rotation}
    if node.controller is not None:
        d["controller"] = node.controller.as_dict()
    d["children"] = {str(s): _node_to_dict(c) for s, c in sorted(node.children.items())}
    return d


def _node_from_dict(d: dict) -> MorphNode:
    kind = ModuleKind(d["kind"])
    ctrl = WaveParams.from_dict(d["controller"]) if "controller" in d else None
    children = {int(s): _node_from_dict(c) for s, c in d.get("children", {}).items()}
    return MorphNode(kind=kind, rotation=int(d["rotation"]), children=children, controller=ctrl)


def tree_to_dict(tree: MorphologyTree) -> dict:
    return _node_to_dict(tree.root)


def tree_from_dict(d: dict) -> MorphologyTree:
    return MorphologyTree(_node_from_dict(d))


def tree_to_json(tree: MorphologyTree) -> str:
    return json.dumps(tree_to_dict(tree), sort_keys=True, separators=(",", ":"))


def tree_from_json(s: str) -> MorphologyTree:
    return tree_from_dict(json.loads(s))
