"""Prefix trie over identifier token sequences.

A node reached by a sequence ending in EOS is terminal and records every
target whose identifier is exactly that sequence, so collisions stay
visible instead of overwriting each other.
"""

from __future__ import annotations

from typing import Iterator, Mapping, Sequence

from .sid.table import StructuredIdentifier


class InvalidPrefixError(KeyError):
    def __init__(self, prefix: Sequence[str]):
        self.prefix = tuple(prefix)
        super().__init__(f"prefix is not a path in the trie: {list(prefix)}")


class EmptyTrieError(ValueError):
    pass


class TrieNode:
    __slots__ = ("children", "targets")

    def __init__(self) -> None:
        self.children: dict[str, TrieNode] = {}
        self.targets: set[str] = set()


class IdTrie:
    def __init__(self) -> None:
        self.root = TrieNode()
        self._size = 0

    def add(self, tokens: Sequence[str], target_id: str) -> None:
        node = self.root
        for tok in tokens:
            node = node.children.setdefault(tok, TrieNode())
        node.targets.add(target_id)
        self._size += 1

    def __len__(self) -> int:
        """Number of (sequence, target) entries added."""
        return self._size

    def node(self, prefix: Sequence[str]) -> TrieNode:
        node = self.root
        for tok in prefix:
            child = node.children.get(tok)
            if child is None:
                raise InvalidPrefixError(prefix)
            node = child
        return node

    def valid_next(self, prefix: Sequence[str] = ()) -> frozenset[str]:
        return frozenset(self.node(prefix).children)

    def lookup(self, tokens: Sequence[str]) -> frozenset[str]:
        try:
            return frozenset(self.node(tokens).targets)
        except InvalidPrefixError:
            return frozenset()

    def contains_path(self, tokens: Sequence[str]) -> bool:
        try:
            self.node(tokens)
        except InvalidPrefixError:
            return False
        return True

    def sequences(self) -> Iterator[tuple[tuple[str, ...], frozenset[str]]]:
        """Every terminal path with its targets, in lexicographic order."""
        stack: list[tuple[tuple[str, ...], TrieNode]] = [((), self.root)]
        while stack:
            path, node = stack.pop()
            if node.targets:
                yield path, frozenset(node.targets)
            for tok in sorted(node.children, reverse=True):
                stack.append((path + (tok,), node.children[tok]))


def build_trie(sids: Mapping[str, StructuredIdentifier | Sequence[str]]) -> IdTrie:
    """Trie over identifier tokens; values may be identifiers or raw token
    sequences (which must already end with EOS)."""
    trie = IdTrie()
    for target_id, sid in sids.items():
        tokens = sid.tokens() if isinstance(sid, StructuredIdentifier) else tuple(sid)
        trie.add(tokens, target_id)
    return trie
