
import numpy as np
import pytest

from modqd.controller import WaveParams
from modqd.morphology import (
    MAX_DEPTH,
    MAX_MODULES,
    ROTATIONS,
    CrossoverResult,
    Descriptor,
    ModuleKind,
    MorphNode,
    MorphologyTree,
    _open_slots,
    crossover_branch_exchange,
    descriptor_of,
    iter_nodes,
    mutate_morphology,
    random_morphology,
    realize_on_lattice,
    tree_from_dict,
    tree_from_json,
    tree_to_dict,
    tree_to_json,
    validate,
)


def rect(rotation=0, children=None):
    return MorphNode(kind=ModuleKind.RECT, rotation=rotation, children=children or {})


def servo(rotation=0, children=None, amp=0.5, freq=1.0, phase=0.0, offset=0.0):
    return MorphNode(kind=ModuleKind.SERVO, rotation=rotation, children=children or {},
                     controller=WaveParams(amp=amp, freq=freq, phase=phase, offset=offset))


class ScriptRng:
    """Plays back a fixed list of draws; lets tests force specific operators."""

    def __init__(self, ints=(), floats=()):
        self._ints = list(ints)
        self._floats = list(floats)

    def integers(self, n):
        v = self._ints.pop(0)
        assert 0 <= v < n, f"scripted draw {v} out of range {n}"
        return v

    def random(self):
        return self._floats.pop(0)

    def uniform(self, lo, hi):
        return (lo + hi) / 2.0


# ---------------------------------------------------------------------------
# structure and traversal
# ---------------------------------------------------------------------------

def test_iter_nodes_is_preorder_ascending_slots():
    tree = MorphologyTree(rect(children={
        2: rect(),
        0: rect(children={1: rect()}),
    }))
    paths = [path for path, _ in iter_nodes(tree)]
    assert paths == [(), (0,), (0, 1), (2,)]


def test_size_depth_node_at():
    inner = servo()
    tree = MorphologyTree(rect(children={0: rect(children={3: inner})}))
    assert tree.size() == 3
    assert tree.depth() == 2
    assert tree.node_at((0, 3)) is inner
    assert tree.node_at(()) is tree.root


def test_validate_accepts_lone_root():
    validate(MorphologyTree(rect()))


def test_validate_rejects_over_depth():
    node = rect()
    tree = MorphologyTree(node)
    for _ in range(MAX_DEPTH + 1):
        child = rect()
        node.children[0] = child
        node = child
    with pytest.raises(AssertionError):
        validate(tree)


def test_validate_rejects_oversize():
    root = rect()
    for slot in range(5):
        root.children[slot] = rect()
    for slot in range(5):
        for s2 in range(5):
            root.children[slot].children[s2] = rect()
    # 1 + 5 + 25 modules
    with pytest.raises(AssertionError):
        validate(MorphologyTree(root))


def test_validate_rejects_servo_without_controller():
    bad = MorphNode(kind=ModuleKind.SERVO, rotation=0)
    with pytest.raises(AssertionError):
        validate(MorphologyTree(rect(children={0: bad})))


def test_validate_rejects_bad_slot_for_servo():
    # servos expose 3 slots; slot index 4 only exists on rects
    tree = MorphologyTree(rect(children={0: servo(children={4: rect()})}))
    with pytest.raises(AssertionError):
        validate(tree)


def test_clone_is_deep():
    tree = MorphologyTree(rect(children={0: servo(amp=0.9)}))
    copy = tree.clone()
    copy.root.children[0].rotation = 90
    copy.root.children[1] = rect()
    assert tree.root.children[0].rotation == 0
    assert 1 not in tree.root.children
    assert copy.root.children[0].controller == tree.root.children[0].controller


# ---------------------------------------------------------------------------
# random construction and mutation
# ---------------------------------------------------------------------------

def test_random_morphology_valid_and_spans_sizes():
    rng = np.random.default_rng(0)
    sizes = set()
    for _ in range(2000):
        t = random_morphology(rng)
        validate(t)
        sizes.add(t.size())
    assert min(sizes) == 1
    assert max(sizes) == MAX_MODULES


def test_random_morphology_uses_both_kinds():
    rng = np.random.default_rng(1)
    kinds = set()
    for _ in range(50):
        for _, node in iter_nodes(random_morphology(rng)):
            kinds.add(node.kind)
    assert kinds == {ModuleKind.RECT, ModuleKind.SERVO}


def test_mutate_redraws_when_remove_has_no_candidate():
    # lone root: remove has no site, the redraw lands on rotate
    tree = MorphologyTree(rect())
    out = mutate_morphology(tree, ScriptRng(ints=[1, 1, 0, 0]))
    assert out.size() == 1
    assert out.root.rotation == 90
    assert tree.root.rotation == 0  # input untouched


def test_mutate_add_refused_at_size_limit():
    tree = MorphologyTree(rect())
    while tree.size() < MAX_MODULES:
        node, slot = _open_slots(tree)[0]
        node.children[slot] = rect()
    out = mutate_morphology(tree, ScriptRng(ints=[0, 0, 0]))
    # fell through to remove, which drops the first site's whole subtree
    assert 0 not in out.root.children
    assert out.size() < MAX_MODULES
    validate(out)


def test_mutate_rotate_changes_exactly_one_rotation():
    tree = MorphologyTree(rect(children={0: rect(rotation=180)}))
    out = mutate_morphology(tree, ScriptRng(ints=[2, 1, 2]))
    # node index 1 is the child; candidate rotations are (0, 90, 270)
    assert out.root.rotation == 0
    assert out.root.children[0].rotation == 270
    assert out.size() == 2


def test_mutate_keeps_invariants_under_pressure():
    rng = np.random.default_rng(7)
    tree = random_morphology(rng)
    for _ in range(2000):
        tree = mutate_morphology(tree, rng)
        validate(tree)


# ---------------------------------------------------------------------------
# crossover
# ---------------------------------------------------------------------------

def test_crossover_swaps_single_candidate_branches():
    a = MorphologyTree(rect(children={0: servo(amp=0.3)}))
    b = MorphologyTree(rect(children={1: rect(rotation=90)}))
    before_a, before_b = tree_to_dict(a), tree_to_dict(b)
    res = crossover_branch_exchange(a, b, np.random.default_rng(0))
    assert res.swapped
    assert res.child_a.root.children[0].kind is ModuleKind.RECT
    assert res.child_a.root.children[0].rotation == 90
    assert res.child_b.root.children[1].kind is ModuleKind.SERVO
    assert res.child_b.root.children[1].controller.amp == 0.3
    # parents are never modified
    assert tree_to_dict(a) == before_a
    assert tree_to_dict(b) == before_b


def test_crossover_noop_when_parent_is_lone_root():
    a = MorphologyTree(rect())
    b = MorphologyTree(rect(children={0: rect()}))
    res = crossover_branch_exchange(a, b, np.random.default_rng(0))
    assert not res.swapped
    assert tree_to_dict(res.child_a) == tree_to_dict(a)
    assert tree_to_dict(res.child_b) == tree_to_dict(b)


def test_crossover_prunes_transplant_past_depth_limit():
    chain = rect()
    a = MorphologyTree(chain)
    node = chain
    for _ in range(MAX_DEPTH):
        child = rect()
        node.children[0] = child
        node = child
    b = MorphologyTree(rect(children={0: rect(children={0: rect()})}))
    # site 3 on a grafts at depth 4; b's two-deep branch must lose a node
    res = crossover_branch_exchange(a, b, ScriptRng(ints=[3, 0]))
    assert res.swapped
    assert res.child_a.depth() <= MAX_DEPTH
    validate(res.child_a)
    validate(res.child_b)


def test_crossover_random_children_always_valid():
    rng = np.random.default_rng(13)
    pool = [random_morphology(rng) for _ in range(40)]
    for _ in range(2000):
        a = pool[int(rng.integers(len(pool)))]
        b = pool[int(rng.integers(len(pool)))]
        res = crossover_branch_exchange(a, b, rng)
        validate(res.child_a)
        validate(res.child_b)
    assert isinstance(res, CrossoverResult)


# ---------------------------------------------------------------------------
# lattice realization
# ---------------------------------------------------------------------------

def test_realize_places_neighbours_along_slots():
    tree = MorphologyTree(rect(children={0: servo(), 2: rect(), 4: rect()}))
    real = realize_on_lattice(tree)
    by_path = {path: (cell, heading) for path, cell, heading in real.placements}
    assert by_path[()] == ((0, 0, 0), (1, 0, 0))
    assert by_path[(0,)] == ((1, 0, 0), (1, 0, 0))    # +x slot
    assert by_path[(2,)] == ((0, 1, 0), (0, 1, 0))    # +y slot
    assert by_path[(4,)] == ((0, 0, 1), (0, 0, 1))    # top slot
    assert real.pruned == frozenset()


def test_realize_root_rotation_turns_the_whole_body():
    tree = MorphologyTree(rect(rotation=90, children={0: rect()}))
    real = realize_on_lattice(tree)
    by_path = {path: (cell, heading) for path, cell, heading in real.placements}
    assert by_path[()] == ((0, 0, 0), (0, 1, 0))
    assert by_path[(0,)] == ((0, 1, 0), (0, 1, 0))


def test_realize_prunes_collision_with_subtree():
    # the grandchild folds back onto the root cell and is dropped
    grand = rect(children={0: rect()})
    tree = MorphologyTree(rect(children={0: rect(children={1: grand})}))
    real = realize_on_lattice(tree)
    paths = [p for p, _, _ in real.placements]
    assert paths == [(), (0,)]
    assert real.pruned == {(0, 1), (0, 1, 0)}


def test_realize_prunes_below_floor():
    # servo rotated 270 about the connection axis points its +y slot down
    tree = MorphologyTree(rect(children={0: servo(rotation=270, children={1: rect()})}))
    real = realize_on_lattice(tree)
    paths = [p for p, _, _ in real.placements]
    assert paths == [(), (0,)]
    assert real.pruned == {(0, 1)}


def test_realize_cells_unique_nonnegative_and_prefix_closed():
    rng = np.random.default_rng(23)
    for _ in range(500):
        tree = random_morphology(rng)
        real = realize_on_lattice(tree)
        cells = [cell for _, cell, _ in real.placements]
        paths = {p for p, _, _ in real.placements}
        assert len(set(cells)) == len(cells)
        assert all(c[2] >= 0 for c in cells)
        assert all(p[:-1] in paths for p in paths if p)
        assert not paths & real.pruned
        all_paths = {p for p, _ in iter_nodes(tree)}
        assert paths | real.pruned == all_paths


def test_descriptor_counts_realized_modules_only():
    tree = MorphologyTree(rect(children={0: servo(children={1: rect()})}))
    assert descriptor_of(tree) == Descriptor(m=2, j=1)
    # fold a branch back into the root so it is pruned away
    folded = MorphologyTree(rect(children={0: rect(children={1: servo()})}))
    assert descriptor_of(folded) == Descriptor(m=2, j=0)


def test_descriptor_invariant_under_root_rotation():
    rng = np.random.default_rng(31)
    for _ in range(300):
        tree = random_morphology(rng)
        for rot in ROTATIONS:
            turned = tree.clone()
            turned.root.rotation = rot
            assert descriptor_of(turned) == descriptor_of(tree)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def test_dict_roundtrip_preserves_everything():
    tree = MorphologyTree(rect(rotation=180, children={
        0: servo(rotation=90, amp=-0.8, freq=1.3, phase=2.0, offset=0.4),
        3: rect(children={2: servo()}),
    }))
    again = tree_from_dict(tree_to_dict(tree))
    assert tree_to_dict(again) == tree_to_dict(tree)
    assert again.node_at((0,)).controller == tree.node_at((0,)).controller


def test_json_roundtrip_and_key_types():
    rng = np.random.default_rng(5)
    for _ in range(100):
        tree = random_morphology(rng)
        s = tree_to_json(tree)
        assert tree_to_json(tree_from_json(s)) == s
    d = tree_to_dict(MorphologyTree(rect(children={4: rect()})))
    assert list(d["children"]) == ["4"]  # JSON object keys are strings


def test_json_deterministic_bytes():
    tree = MorphologyTree(rect(children={2: servo(), 0: rect()}))
    assert tree_to_json(tree) == tree_to_json(tree.clone())
