"""Plain unbalanced binary search trees used inside hash slots.

Every function takes a *holder* (any object with a ``root`` attribute) so the
same code serves first- and second-level slots.  Callers provide locking.
"""

from __future__ import annotations

from typing import List, Optional

from ..arena import Arena, NodeHeader


class TreeNode(NodeHeader):
    __slots__ = ("key", "left", "right")

    def __init__(self) -> None:
        super().__init__()
        self.key = 0
        self.left: Optional[TreeNode] = None
        self.right: Optional[TreeNode] = None


def bst_find(root: Optional[TreeNode], key: int) -> bool:
    n = root
    while n is not None:
        k = n.key
        if key == k:
            return True
        n = n.left if key < k else n.right
    return False


def bst_insert(holder, key: int, arena: Arena) -> bool:
    parent = None
    n = holder.root
    while n is not None:
        if key == n.key:
            return False
        parent = n
        n = n.left if key < n.key else n.right
    node = arena.new()
    node.key = key
    node.left = node.right = None
    if parent is None:
        holder.root = node
    elif key < parent.key:
        parent.left = node
    else:
        parent.right = node
    return True


def bst_erase(holder, key: int, arena: Arena) -> bool:
    parent = None
    n = holder.root
    while n is not None and n.key != key:
        parent = n
        n = n.left if key < n.key else n.right
    if n is None:
        return False
    if n.left is not None and n.right is not None:
        # copy the in-order successor up and delete that node instead
        sp, s = n, n.right
        while s.left is not None:
            sp, s = s, s.left
        n.key = s.key
        parent, n = sp, s
    child = n.left if n.left is not None else n.right
    if parent is None:
        holder.root = child
    elif parent.left is n:
        parent.left = child
    else:
        parent.right = child
    arena.free(n.handle)
    return True


def bst_nodes(root: Optional[TreeNode]) -> List[TreeNode]:
    """In-order node list."""
    out: List[TreeNode] = []
    stack: List[TreeNode] = []
    n = root
    while stack or n is not None:
        while n is not None:
            stack.append(n)
            n = n.left
        n = stack.pop()
        out.append(n)
        n = n.right
    return out


def bst_keys(root: Optional[TreeNode]) -> List[int]:
    return [n.key for n in bst_nodes(root)]


def bst_build(nodes: List[TreeNode]) -> Optional[TreeNode]:
    """Relink already-sorted nodes into a balanced tree."""

    def build(lo: int, hi: int) -> Optional[TreeNode]:
        if lo >= hi:
            return None
        mid = (lo + hi) // 2
        n = nodes[mid]
        n.left = build(lo, mid)
        n.right = build(mid + 1, hi)
        return n

    return build(0, len(nodes))
