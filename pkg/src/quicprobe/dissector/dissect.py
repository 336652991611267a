"""Total interpreter for protocol descriptions.

Dissection never fails: malformed input turns into error leaves and
anything left over becomes an explicit ``undissected`` leaf, so the
concatenated leaf ranges always reconstruct the input byte-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .description import FieldRef, FieldSpec, ProtocolDescription

MAX_REPEAT_ITERATIONS = 100_000


@dataclass
class DissectedNode:
    name: str
    start: int
    end: int
    raw: bytes = b""
    value: int | str | None = None
    children: list["DissectedNode"] = field(default_factory=list)
    error: str | None = None

    def leaves(self) -> list["DissectedNode"]:
        if not self.children:
            return [self]
        out = []
        for child in self.children:
            out.extend(child.leaves())
        return out

    def find(self, name: str) -> "DissectedNode | None":
        if self.name == name:
            return self
        for child in self.children:
            hit = child.find(name)
            if hit is not None:
                return hit
        return None


class _Scope:
    """Backward-only name resolution: siblings first, then enclosing scopes."""

    def __init__(self, parent: "_Scope | None" = None):
        self.parent = parent
        self.values: dict[str, int] = {}

    def set(self, name: str, value: int) -> None:
        self.values[name] = value

    def get(self, name: str) -> int | None:
        scope: _Scope | None = self
        while scope is not None:
            if name in scope.values:
                return scope.values[name]
            scope = scope.parent
        return None


def dissect(data: bytes, desc: ProtocolDescription) -> DissectedNode:
    """Dissect one cleartext packet into an annotated field tree."""
    root = DissectedNode(name=desc.top, start=0, end=len(data), raw=data)
    pos = _structure(data, 0, len(data), desc.top, desc, _Scope(), root)
    if pos < len(data):
        root.children.append(
            DissectedNode(
                name="undissected",
                start=pos,
                end=len(data),
                raw=data[pos:],
                value=data[pos:].hex(),
            )
        )
    root.end = len(data)
    return root


def _error_leaf(data: bytes, pos: int, end: int, name: str, message: str) -> DissectedNode:
    return DissectedNode(
        name=name, start=pos, end=end, raw=data[pos:end], value=None, error=message
    )


def _structure(
    data: bytes,
    pos: int,
    end: int,
    struct_name: str,
    desc: ProtocolDescription,
    scope: _Scope,
    node: DissectedNode,
) -> int:
    """Parse one structure's fields into ``node.children``; returns the new
    position. On a field error, an error leaf absorbs the rest of the scope."""
    for spec in desc.structures[struct_name]:
        try:
            pos = _field(data, pos, end, spec, desc, scope, node)
        except _FieldError as exc:
            node.children.append(_error_leaf(data, pos, end, spec.name, str(exc)))
            return end
    return pos


class _FieldError(Exception):
    pass


def _resolve(ref: FieldRef, scope: _Scope, what: str) -> int:
    value = scope.get(ref.field)
    if value is None:
        raise _FieldError(f"{what}: unresolved reference to {ref.field!r}")
    return ref.apply(value)


def _field(
    data: bytes,
    pos: int,
    end: int,
    spec: FieldSpec,
    desc: ProtocolDescription,
    scope: _Scope,
    parent: DissectedNode,
) -> int:
    if spec.kind == "uint":
        width = spec.bits // 8
        if pos + width > end:
            raise _FieldError(f"need {width} bytes, {end - pos} left")
        value = int.from_bytes(data[pos : pos + width], "big")
        parent.children.append(
            DissectedNode(spec.name, pos, pos + width, data[pos : pos + width], value)
        )
        scope.set(spec.name, value)
        return pos + width

    if spec.kind == "varint":
        if pos >= end:
            raise _FieldError("empty buffer")
        size = 1 << (data[pos] >> 6)
        if pos + size > end:
            raise _FieldError(f"varint declares {size} bytes, {end - pos} left")
        value = data[pos] & 0x3F
        for i in range(1, size):
            value = (value << 8) | data[pos + i]
        parent.children.append(
            DissectedNode(spec.name, pos, pos + size, data[pos : pos + size], value)
        )
        scope.set(spec.name, value)
        return pos + size

    if spec.kind == "bytes":
        if spec.length == "rest":
            length = end - pos
        elif isinstance(spec.length, FieldRef):
            length = _resolve(spec.length, scope, spec.name)
        else:
            length = int(spec.length)
        if length < 0:
            raise _FieldError(f"negative length {length}")
        if pos + length > end:
            raise _FieldError(f"declared length {length}, {end - pos} left")
        raw = data[pos : pos + length]
        parent.children.append(DissectedNode(spec.name, pos, pos + length, raw, raw.hex()))
        return pos + length

    if spec.kind == "conditional":
        discriminator = scope.get(spec.on)
        if discriminator is None:
            raise _FieldError(f"unresolved discriminator {spec.on!r}")
        if spec.mask is not None:
            discriminator &= spec.mask
        target = spec.cases.get(discriminator, spec.default)
        if target is None:
            raise _FieldError(
                f"no case for {spec.on} = 0x{discriminator:x} and no default"
            )
        child = DissectedNode(target, pos, pos, b"")
        parent.children.append(child)
        new_pos = _structure(data, pos, end, target, desc, _Scope(scope), child)
        child.end = new_pos
        child.raw = data[pos:new_pos]
        return new_pos

    if spec.kind == "repeat":
        count = None if spec.count is None else _resolve(spec.count, scope, spec.name)
        container = DissectedNode(spec.name, pos, pos, b"")
        parent.children.append(container)
        iterations = 0
        while (count is None and pos < end) or (count is not None and iterations < count):
            if count is not None and pos >= end:
                container.children.append(
                    _error_leaf(data, pos, end, spec.structure, "count exceeds available bytes")
                )
                pos = end
                break
            iterations += 1
            if iterations > MAX_REPEAT_ITERATIONS:
                container.children.append(
                    _error_leaf(data, pos, end, spec.structure, "repeat did not terminate")
                )
                pos = end
                break
            item = DissectedNode(spec.structure, pos, pos, b"")
            container.children.append(item)
            new_pos = _structure(data, pos, end, spec.structure, desc, _Scope(scope), item)
            item.end = new_pos
            item.raw = data[pos:new_pos]
            if new_pos == pos and count is None:
                item.error = item.error or "no progress"
                container.children.append(
                    _error_leaf(data, pos, end, spec.structure, "zero-width repeat item")
                )
                pos = end
                break
            pos = new_pos
        container.end = pos
        container.raw = data[container.start : pos]
        if not container.children:
            # keep sibling ranges contiguous: an empty repeat is a zero-width leaf
            container.value = ""
        return pos

    raise _FieldError(f"unhandled kind {spec.kind}")


def coverage_ok(node: DissectedNode, data_len: int) -> bool:
    """Leaf ranges are contiguous, in order, and reconstruct [0, data_len)."""
    pos = 0
    for leaf in node.leaves():
        if leaf.start != pos or leaf.end < leaf.start:
            return False
        pos = leaf.end
    return pos == data_len
