"""Node/edge containers shared by both environment graphs."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


@dataclass(frozen=True)
class Node:
    id: str
    kind: str
    attrs: dict = field(default_factory=dict, compare=False, hash=False)

    def to_dict(self) -> dict:
        return {"id": self.id, "kind": self.kind, "attrs": self.attrs}


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    kind: str

    def to_dict(self) -> dict:
        return {"src": self.src, "dst": self.dst, "kind": self.kind}


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Graph:
    """Immutable graph in canonical order (nodes by id then kind; edges by endpoints)."""

    layer: str
    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]
    snapshot_digest: str
    warnings: tuple[str, ...] = ()

    @classmethod
    def build(cls, layer: str, nodes: Iterable[Node], edges: Iterable[Edge],
              snapshot_digest: str, warnings: Iterable[str] = ()):
        nodes = sorted(nodes, key=lambda n: (n.id, n.kind))
        ids = [n.id for n in nodes]
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise GraphError(f"duplicate node ids: {dup}")
        known = set(ids)
        edges = sorted(set(edges), key=lambda e: (e.src, e.dst, e.kind))
        for e in edges:
            if e.src not in known or e.dst not in known:
                raise GraphError(f"dangling edge {e}")
        return cls(layer, tuple(nodes), tuple(edges), snapshot_digest, tuple(sorted(set(warnings))))

    def node(self, node_id: str) -> Optional[Node]:
        for n in self.nodes:
            if n.id == node_id:
                return n
        return None

    def nodes_of(self, kind: str) -> list[Node]:
        return [n for n in self.nodes if n.kind == kind]

    def edges_of(self, kind: str) -> list[Edge]:
        return [e for e in self.edges if e.kind == kind]

    def to_dict(self) -> dict:
        return {
            "layer": self.layer,
            "snapshot_digest": self.snapshot_digest,
            "nodes": [n.to_dict() for n in self.nodes],
            "edges": [e.to_dict() for e in self.edges],
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()

    @classmethod
    def from_dict(cls, data: dict) -> "Graph":
        return cls.build(
            data["layer"],
            (Node(n["id"], n["kind"], dict(n.get("attrs", {}))) for n in data["nodes"]),
            (Edge(e["src"], e["dst"], e["kind"]) for e in data["edges"]),
            data.get("snapshot_digest", ""),
            data.get("warnings", ()),
        )
