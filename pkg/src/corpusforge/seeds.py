"""Conversation-tree ingestion and seed extraction.

Trees arrive in a JSON export ({"trees": [{"tree_id", "nodes": [...]}]});
each root-to-leaf path becomes one seed conversation. Mixed-language trees
are pruned to the maximal subtree of matching nodes rooted at the root
rather than discarded, which preserves more data; the pruning is recorded
in provenance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

from .model import Conversation, Message, Origin, Role


class MalformedTree(ValueError):
    def __init__(self, tree_id: str, reason: str):
        super().__init__(f"tree {tree_id}: {reason}")
        self.tree_id = tree_id
        self.reason = reason


_ROLE_MAP = {"prompter": Role.HUMAN, "assistant": Role.ASSISTANT}


@dataclass(frozen=True)
class TreeNode:
    node_id: str
    parent_id: Optional[str]
    role: Role
    text: str
    lang: str


@dataclass(frozen=True)
class ConversationTree:
    tree_id: str
    nodes: tuple[TreeNode, ...]

    def __post_init__(self):
        by_id = {n.node_id: n for n in self.nodes}
        if len(by_id) != len(self.nodes):
            raise MalformedTree(self.tree_id, "duplicate node ids")
        roots = [n for n in self.nodes if n.parent_id is None]
        if len(roots) != 1:
            raise MalformedTree(self.tree_id, f"{len(roots)} roots, expected 1")
        for n in self.nodes:
            if n.parent_id is not None and n.parent_id not in by_id:
                raise MalformedTree(self.tree_id, f"node {n.node_id} has dangling parent {n.parent_id}")
        # Cycle/connectivity check: every node must reach the root.
        for n in self.nodes:
            seen = set()
            cur: Optional[TreeNode] = n
            while cur.parent_id is not None:
                if cur.node_id in seen:
                    raise MalformedTree(self.tree_id, f"cycle through node {cur.node_id}")
                seen.add(cur.node_id)
                cur = by_id[cur.parent_id]

    @property
    def root(self) -> TreeNode:
        return next(n for n in self.nodes if n.parent_id is None)

    def children(self, node_id: str) -> list[TreeNode]:
        # Sibling order is not guaranteed by the export; sort by node_id
        # for deterministic traversal.
        return sorted(
            (n for n in self.nodes if n.parent_id == node_id),
            key=lambda n: n.node_id,
        )

    def leaves(self) -> list[TreeNode]:
        parents = {n.parent_id for n in self.nodes if n.parent_id is not None}
        return [n for n in self.nodes if n.node_id not in parents]


def _parse_node(raw: dict, tree_id: str) -> TreeNode:
    try:
        role = _ROLE_MAP[raw["role"]]
    except KeyError:
        raise MalformedTree(tree_id, f"unknown role {raw.get('role')!r}")
    try:
        return TreeNode(
            node_id=str(raw["node_id"]),
            parent_id=str(raw["parent_id"]) if raw.get("parent_id") is not None else None,
            role=role,
            text=str(raw["text"]),
            lang=str(raw["lang"]),
        )
    except KeyError as e:
        raise MalformedTree(tree_id, f"node missing field {e}")


def prune_to_language(tree: ConversationTree, lang: str) -> Optional[ConversationTree]:
    """Maximal subtree of nodes matching lang, rooted at the original root.

    A node survives only if it matches and its whole ancestor chain does.
    Returns None when the root itself does not match.
    """
    if tree.root.lang != lang:
        return None
    by_id = {n.node_id: n for n in tree.nodes}
    surviving: dict[str, TreeNode] = {}

    def keep(node: TreeNode) -> bool:
        if node.node_id in surviving:
            return True
        if node.lang != lang:
            return False
        if node.parent_id is None or keep(by_id[node.parent_id]):
            surviving[node.node_id] = node
            return True
        return False

    for n in tree.nodes:
        keep(n)
    return ConversationTree(tree.tree_id, tuple(
        n for n in tree.nodes if n.node_id in surviving
    ))


def load_trees(path: str, lang_filter: str) -> list[ConversationTree]:
    """Load the tree export and keep only lang_filter content, pruning
    mixed-language trees to their matching subtree."""
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    trees: list[ConversationTree] = []
    for raw in data.get("trees", []):
        tree_id = str(raw.get("tree_id", "?"))
        nodes = tuple(_parse_node(n, tree_id) for n in raw.get("nodes", []))
        tree = ConversationTree(tree_id, nodes)  # validates structure
        pruned = prune_to_language(tree, lang_filter)
        if pruned is not None and pruned.nodes:
            trees.append(pruned)
    return trees


def extract_seeds(trees: list[ConversationTree]) -> list[Conversation]:
    """One seed conversation per root-to-leaf path; output count equals the
    total leaf count. Order is deterministic: tree_id, then depth-first
    with children sorted by node_id."""
    seeds: list[Conversation] = []
    for tree in sorted(trees, key=lambda t: t.tree_id):
        stack: list[list[TreeNode]] = [[tree.root]]
        while stack:
            path = stack.pop()
            kids = tree.children(path[-1].node_id)
            if not kids:
                leaf = path[-1]
                seeds.append(Conversation(
                    id=f"{tree.tree_id}/{leaf.node_id}",
                    origin=Origin.OASST,
                    messages=tuple(
                        Message(id=node.node_id, role=node.role, text=node.text)
                        for node in path
                    ),
                    provenance={
                        "tree_id": tree.tree_id,
                        "leaf_node_id": leaf.node_id,
                    },
                ))
            else:
                # Reverse so the smallest node_id is popped (emitted) first.
                for kid in reversed(kids):
                    stack.append(path + [kid])
    return seeds
